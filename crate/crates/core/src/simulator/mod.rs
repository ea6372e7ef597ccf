//! Seeded synthetic ecosystems: a registration corpus with planted squatters,
//! transaction streams with planted common-sender events, and a manifest of
//! everything planted.
//!
//! Generation is single-threaded and driven by ChaCha8, so a seed gives the
//! same fixtures on every platform.
//!
//! Planting rules that keep the manifest exact:
//! - legitimate labels are pairwise at edit distance 3 or more, so every
//!   squat is one edit from exactly one target;
//! - fillers and decoys are never within one edit of a legitimate label;
//! - squat addresses receive only planted event traffic and typo-only noise;
//! - every planted event uses a fresh sender.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Chain, Name, Namespace, Registration, RegistrationRecord, Source};
use crate::ground_truth::{LabelKind, LabelRecord, DEFAULT_MIN_LABEL_LEN};
use crate::ingestion::{write_file, FixtureDir, IngestError};
use crate::squat_detector::CampaignStyle;
use crate::tx_analysis::{PriceTable, SenderClass, Transaction, TxOrigin, UtxoRecord};
use crate::typo_models::{damerau_distance, generate_all, within_one_edit, Alphabet, TypoModel};

const WORDLIST: &str = include_str!("wordlist.txt");

pub const UD_TLDS: [&str; 5] = ["crypto", "nft", "wallet", "x", "blockchain"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StyleFractions {
    pub single_typo: f64,
    pub multi_target_dissimilar: f64,
    pub multi_target_similar: f64,
}

impl Default for StyleFractions {
    fn default() -> Self {
        StyleFractions {
            single_typo: 0.06,
            multi_target_dissimilar: 0.06,
            multi_target_similar: 0.03,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountRange {
    pub min: u32,
    pub max: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NamespaceWeights {
    pub eth: f64,
    pub ud: f64,
    pub adah: f64,
}

impl Default for NamespaceWeights {
    fn default() -> Self {
        NamespaceWeights {
            eth: 0.6,
            ud: 0.25,
            adah: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SenderMix {
    pub coinbase: f64,
    pub other_custodial: f64,
}

impl Default for SenderMix {
    fn default() -> Self {
        SenderMix {
            coinbase: 0.2,
            other_custodial: 0.1,
        }
    }
}

/// Scenario knobs. Fractions of legitimate names are per planted style;
/// squatters of styles (ii) and (iii) each take `targets_per_squatter`
/// targets, and style (iii) squatters register two variants per target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub seed: u64,
    pub n_legit: usize,
    pub n_filler: usize,
    pub n_decoys: usize,
    pub squatter_fraction: StyleFractions,
    pub targets_per_squatter: usize,
    pub models_enabled: BTreeSet<TypoModel>,
    pub n_tx_per_legit: CountRange,
    /// Chance that a planted squat receives a common-sender event.
    pub typo_event_rate: f64,
    /// Exact number of events; overrides `typo_event_rate` when set.
    pub typo_events: Option<usize>,
    pub typo_only_senders: usize,
    pub defensive_rate: f64,
    pub predating_rate: f64,
    pub namespace_weights: NamespaceWeights,
    pub sender_mix: SenderMix,
    pub start_year: i32,
    pub end_year: i32,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            seed: 0,
            n_legit: 200,
            n_filler: 600,
            n_decoys: 100,
            squatter_fraction: StyleFractions::default(),
            targets_per_squatter: 3,
            models_enabled: TypoModel::ALL.into_iter().collect(),
            n_tx_per_legit: CountRange { min: 20, max: 60 },
            typo_event_rate: 0.3,
            typo_events: None,
            typo_only_senders: 10,
            defensive_rate: 0.05,
            predating_rate: 0.03,
            namespace_weights: NamespaceWeights::default(),
            sender_mix: SenderMix::default(),
            start_year: 2019,
            end_year: 2023,
        }
    }
}

fn unit(name: &str, v: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SimError::InvalidParams(format!("{name} must be in [0, 1], got {v}")))
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let f = &self.squatter_fraction;
        unit("squatter_fraction.single_typo", f.single_typo)?;
        unit("squatter_fraction.multi_target_dissimilar", f.multi_target_dissimilar)?;
        unit("squatter_fraction.multi_target_similar", f.multi_target_similar)?;
        if f.single_typo + f.multi_target_dissimilar + f.multi_target_similar > 1.0 + 1e-12 {
            return Err(SimError::InvalidParams("squatter fractions sum above 1".into()));
        }
        unit("typo_event_rate", self.typo_event_rate)?;
        unit("defensive_rate", self.defensive_rate)?;
        unit("predating_rate", self.predating_rate)?;
        unit("sender_mix.coinbase", self.sender_mix.coinbase)?;
        unit("sender_mix.other_custodial", self.sender_mix.other_custodial)?;
        if self.sender_mix.coinbase + self.sender_mix.other_custodial > 1.0 + 1e-12 {
            return Err(SimError::InvalidParams("sender mix sums above 1".into()));
        }
        let w = &self.namespace_weights;
        if [w.eth, w.ud, w.adah].iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.eth + w.ud + w.adah <= 0.0 {
            return Err(SimError::InvalidParams("namespace weights must be non-negative with a positive sum".into()));
        }
        if self.models_enabled.is_empty() {
            return Err(SimError::InvalidParams("models_enabled is empty".into()));
        }
        if self.targets_per_squatter < 2 {
            return Err(SimError::InvalidParams("targets_per_squatter must be at least 2".into()));
        }
        let r = self.n_tx_per_legit;
        if r.min == 0 || r.min > r.max {
            return Err(SimError::InvalidParams("n_tx_per_legit needs 1 <= min <= max".into()));
        }
        if self.start_year > self.end_year || self.start_year < 2017 || self.end_year > 2100 {
            return Err(SimError::InvalidParams("years must satisfy 2017 <= start_year <= end_year <= 2100".into()));
        }
        if self.n_legit == 0 {
            return Err(SimError::InvalidParams("n_legit must be at least 1".into()));
        }
        Ok(())
    }

    fn window(&self) -> (DateTime<Utc>, DateTime<Utc>) {
        let start = Utc.with_ymd_and_hms(self.start_year, 1, 1, 0, 0, 0).unwrap();
        let end = Utc.with_ymd_and_hms(self.end_year, 12, 31, 23, 59, 59).unwrap();
        (start, end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedSquat {
    pub display: String,
    pub model: TypoModel,
    pub owner: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedCluster {
    pub target: String,
    pub target_owner: String,
    pub style: CampaignStyle,
    pub squats: Vec<PlantedSquat>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedDefensive {
    pub target: String,
    pub display: String,
    pub model: TypoModel,
    pub owner: String,
}

/// A variant registered before its target; must never be reported.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedPredating {
    pub target: String,
    pub display: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedEvent {
    pub sender: String,
    pub sender_class: SenderClass,
    pub target: String,
    pub typo: String,
    pub legit_timestamps: Vec<DateTime<Utc>>,
    pub typo_timestamps: Vec<DateTime<Utc>>,
    pub typo_amounts: Vec<Decimal>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    /// Wallet budget that selects exactly the legitimate wallets.
    pub top_n: usize,
    pub min_label_len: usize,
    pub targets: Vec<String>,
    pub clusters: Vec<PlantedCluster>,
    pub defensive: Vec<PlantedDefensive>,
    pub predating: Vec<PlantedPredating>,
    pub decoys: Vec<String>,
    pub events: Vec<PlantedEvent>,
}

impl Manifest {
    /// Planted (target, squat) display pairs.
    pub fn squat_pairs(&self) -> BTreeSet<(String, String)> {
        self.clusters
            .iter()
            .flat_map(|c| c.squats.iter().map(move |s| (c.target.clone(), s.display.clone())))
            .collect()
    }

    pub fn defensive_pairs(&self) -> BTreeSet<(String, String)> {
        self.defensive.iter().map(|d| (d.target.clone(), d.display.clone())).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization is infallible")
    }
}

pub fn wordlist() -> Vec<&'static str> {
    WORDLIST.lines().map(str::trim).filter(|w| !w.is_empty()).collect()
}

fn pick(rng: &mut ChaCha8Rng, n: usize) -> usize {
    rng.gen_range(0..n as u64) as usize
}

fn rand_time(rng: &mut ChaCha8Rng, lo: DateTime<Utc>, hi: DateTime<Utc>) -> DateTime<Utc> {
    let (a, b) = (lo.timestamp(), hi.timestamp().max(lo.timestamp()));
    Utc.timestamp_opt(rng.gen_range(a..=b), 0).unwrap()
}

const HEX: &[u8] = b"0123456789abcdef";
const BECH32: &[u8] = b"qpzry9x8gf2tvdw0s3jn54khce6mua7l";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AddrKind {
    Evm,
    Cardano,
}

fn addr_kind(ns: &Namespace) -> AddrKind {
    match ns {
        Namespace::Adah => AddrKind::Cardano,
        _ => AddrKind::Evm,
    }
}

struct AddressBook {
    used: HashSet<String>,
}

impl AddressBook {
    fn fresh(&mut self, rng: &mut ChaCha8Rng, kind: AddrKind) -> String {
        loop {
            let (prefix, alphabet, len) = match kind {
                AddrKind::Evm => ("0x", HEX, 40),
                AddrKind::Cardano => ("addr1", BECH32, 53),
            };
            let mut s = String::from(prefix);
            for _ in 0..len {
                s.push(alphabet[pick(rng, alphabet.len())] as char);
            }
            if self.used.insert(s.clone()) {
                return s;
            }
        }
    }

    fn tx_hash(&mut self, rng: &mut ChaCha8Rng) -> String {
        let mut s = String::from("0x");
        for _ in 0..64 {
            s.push(HEX[pick(rng, 16)] as char);
        }
        s
    }
}

/// Labels indexed by length for neighbourhood checks.
#[derive(Default)]
struct LabelIndex {
    by_len: HashMap<usize, Vec<String>>,
}

impl LabelIndex {
    fn insert(&mut self, label: &str) {
        self.by_len.entry(label.chars().count()).or_default().push(label.to_string());
    }

    fn near(&self, label: &str, span: usize) -> impl Iterator<Item = &String> {
        let n = label.chars().count();
        (n.saturating_sub(span)..=n + span).flat_map(move |l| self.by_len.get(&l).into_iter().flatten())
    }

    fn within_two(&self, label: &str) -> bool {
        self.near(label, 2).any(|o| damerau_distance(o, label) <= 2)
    }

    fn within_one(&self, label: &str) -> bool {
        self.near(label, 1).any(|o| within_one_edit(o, label))
    }
}

fn draw_namespace(rng: &mut ChaCha8Rng, w: &NamespaceWeights) -> Namespace {
    let total = w.eth + w.ud + w.adah;
    let x = rng.gen::<f64>() * total;
    if x < w.eth {
        Namespace::Eth
    } else if x < w.eth + w.ud {
        Namespace::Ud(UD_TLDS[pick(rng, UD_TLDS.len())].to_string())
    } else {
        Namespace::Adah
    }
}

fn source_for(rng: &mut ChaCha8Rng, ns: &Namespace) -> Source {
    match ns {
        Namespace::Eth => Source::Ens,
        Namespace::Adah => Source::Adah,
        Namespace::Ud(_) => {
            if rng.gen_bool(0.5) {
                Source::UdEth
            } else {
                Source::UdPolygon
            }
        }
    }
}

fn chain_for(source: Source) -> Chain {
    match source {
        Source::Ens | Source::UdEth => Chain::Eth,
        Source::UdPolygon => Chain::Matic,
        Source::Adah => Chain::Ada,
    }
}

fn compound_label(rng: &mut ChaCha8Rng, words: &[&str]) -> String {
    let w = words[pick(rng, words.len())];
    match pick(rng, 10) {
        0..=3 => w.to_string(),
        4..=7 => format!("{w}{}", words[pick(rng, words.len())]),
        _ => format!("{w}{}", rng.gen_range(10..10_000u32)),
    }
}

fn filler_label(rng: &mut ChaCha8Rng, words: &[&str]) -> String {
    let w = words[pick(rng, words.len())];
    match pick(rng, 10) {
        0..=2 => format!("{w}{}", rng.gen_range(0..100u32)),
        3..=5 => format!("{w}-{}", words[pick(rng, words.len())]),
        6..=7 => format!("{}{w}", words[pick(rng, words.len())]),
        8 => w[..3].to_string(),
        _ => format!("{w}{w}"),
    }
}

struct Registrar {
    registrations: Vec<Registration>,
    displays: HashSet<String>,
}

impl Registrar {
    fn add(
        &mut self,
        name: Name,
        owner: &str,
        resolution: Option<(Chain, &str)>,
        at: DateTime<Utc>,
        source: Source,
    ) -> bool {
        if !self.displays.insert(name.display().to_string()) {
            return false;
        }
        self.registrations.push(Registration {
            name,
            owner: owner.to_string(),
            resolution: resolution.into_iter().map(|(c, a)| (c, a.to_string())).collect(),
            registered_at: at,
            source,
        });
        true
    }
}

struct Legit {
    name: Name,
    owner: String,
    at: DateTime<Utc>,
    source: Source,
}

fn group_targets(idx: Vec<usize>, size: usize) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = idx.chunks(size).map(<[usize]>::to_vec).collect();
    if groups.len() > 1 && groups.last().is_some_and(|g| g.len() == 1) {
        let last = groups.pop().unwrap();
        groups.last_mut().unwrap().extend(last);
    }
    groups
}

/// Builds the registration fixture and its manifest.
pub fn synth_corpus(params: &ScenarioParams) -> Result<(Vec<RegistrationRecord>, Manifest), SimError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let words = wordlist();
    let (start, end) = params.window();
    let mut book = AddressBook { used: HashSet::new() };
    let mut reg = Registrar {
        registrations: Vec::new(),
        displays: HashSet::new(),
    };

    let mut legit_index = LabelIndex::default();
    let mut legit: Vec<Legit> = Vec::with_capacity(params.n_legit);
    let mut attempts = 0usize;
    while legit.len() < params.n_legit {
        attempts += 1;
        if attempts > 200 * params.n_legit + 10_000 {
            return Err(SimError::InvalidParams(format!(
                "could only draw {} of {} mutually distant legitimate labels",
                legit.len(),
                params.n_legit
            )));
        }
        let label = compound_label(&mut rng, &words);
        if legit_index.within_two(&label) {
            continue;
        }
        let ns = draw_namespace(&mut rng, &params.namespace_weights);
        let lo = start.max(ns.launch_epoch() + Duration::days(30));
        let hi = end - Duration::days(120);
        if lo >= hi {
            continue;
        }
        legit_index.insert(&label);
        let name = Name::second_level(label, ns.clone());
        let owner = book.fresh(&mut rng, addr_kind(&ns));
        let source = source_for(&mut rng, &ns);
        let at = rand_time(&mut rng, lo, hi);
        reg.add(name.clone(), &owner, Some((chain_for(source), &owner)), at, source);
        legit.push(Legit { name, owner, at, source });
    }

    // Candidate variants per target, restricted to the enabled models.
    let mut pools: Vec<Vec<(String, TypoModel)>> = legit
        .iter()
        .map(|l| {
            let alphabet = Alphabet::for_name(&l.name);
            let mut v: Vec<(String, TypoModel)> = generate_all(&l.name, &alphabet)
                .into_iter()
                .filter(|v| params.models_enabled.contains(&v.model))
                .map(|v| (v.label, v.model))
                .collect();
            v.shuffle(&mut rng);
            v
        })
        .collect();

    let mut order: Vec<usize> = (0..legit.len()).collect();
    order.shuffle(&mut rng);
    let f = params.squatter_fraction;
    let n_single = (f.single_typo * legit.len() as f64).round() as usize;
    let n_dissimilar = (f.multi_target_dissimilar * legit.len() as f64).round() as usize;
    let n_similar = (f.multi_target_similar * legit.len() as f64).round() as usize;
    let total = (n_single + n_dissimilar + n_similar).min(order.len());
    let chosen: Vec<usize> = order[..total].to_vec();
    let single = chosen[..n_single.min(total)].to_vec();
    let dissimilar = chosen[n_single.min(total)..(n_single + n_dissimilar).min(total)].to_vec();
    let similar = chosen[(n_single + n_dissimilar).min(total)..].to_vec();

    let mut manifest = Manifest {
        seed: params.seed,
        top_n: legit.len(),
        min_label_len: DEFAULT_MIN_LABEL_LEN,
        targets: {
            let mut t: Vec<String> = legit.iter().map(|l| l.name.display().to_string()).collect();
            t.sort();
            t
        },
        ..Manifest::default()
    };

    let mut groups: Vec<(CampaignStyle, Vec<usize>, usize)> = single
        .iter()
        .map(|&i| (CampaignStyle::SingleTypo, vec![i], 1))
        .collect();
    for (style, set, per_target) in [
        (CampaignStyle::MultiTargetDissimilar, dissimilar, 1),
        (CampaignStyle::MultiTargetSimilar, similar, 2),
    ] {
        let (evm, ada): (Vec<usize>, Vec<usize>) = set
            .into_iter()
            .partition(|&i| addr_kind(legit[i].name.namespace()) == AddrKind::Evm);
        for g in group_targets(evm, params.targets_per_squatter)
            .into_iter()
            .chain(group_targets(ada, params.targets_per_squatter))
        {
            groups.push((style, g, per_target));
        }
    }

    let mut clusters: BTreeMap<String, PlantedCluster> = BTreeMap::new();
    for (style, targets, per_target) in groups {
        let kind = addr_kind(legit[targets[0]].name.namespace());
        let squatter = book.fresh(&mut rng, kind);
        for &t in &targets {
            let l = &legit[t];
            for v in 0..per_target {
                let Some((label, model)) = pools[t].pop() else { break };
                let at = rand_time(&mut rng, l.at + Duration::hours(1), end - Duration::days(60));
                let name = l.name.sibling(&label);
                let display = name.display().to_string();
                // Further variants of one target resolve elsewhere so each
                // planted event stays tied to a single pair.
                let resolve = if v == 0 { squatter.clone() } else { book.fresh(&mut rng, kind) };
                if !reg.add(name, &squatter, Some((chain_for(l.source), &resolve)), at, l.source) {
                    continue;
                }
                clusters
                    .entry(l.name.display().to_string())
                    .or_insert_with(|| PlantedCluster {
                        target: l.name.display().to_string(),
                        target_owner: l.owner.clone(),
                        style,
                        squats: Vec::new(),
                    })
                    .squats
                    .push(PlantedSquat {
                        display,
                        model,
                        owner: squatter.clone(),
                    });
            }
        }
    }
    manifest.clusters = clusters.into_values().collect();
    for c in &mut manifest.clusters {
        c.squats.sort_by(|a, b| a.display.cmp(&b.display));
    }

    for (t, l) in legit.iter().enumerate() {
        if rng.gen_bool(params.defensive_rate) {
            if let Some((label, model)) = pools[t].pop() {
                let name = l.name.sibling(&label);
                let at = rand_time(&mut rng, l.at, l.at + Duration::days(30));
                let display = name.display().to_string();
                if reg.add(name, &l.owner, None, at, l.source) {
                    manifest.defensive.push(PlantedDefensive {
                        target: l.name.display().to_string(),
                        display,
                        model,
                        owner: l.owner.clone(),
                    });
                }
            }
        }
        if rng.gen_bool(params.predating_rate) {
            if let Some((label, _)) = pools[t].pop() {
                let name = l.name.sibling(&label);
                let owner = book.fresh(&mut rng, addr_kind(l.name.namespace()));
                let at = rand_time(&mut rng, l.at - Duration::days(29), l.at - Duration::hours(1));
                let display = name.display().to_string();
                if reg.add(name, &owner, Some((chain_for(l.source), &owner)), at, l.source) {
                    manifest.predating.push(PlantedPredating {
                        target: l.name.display().to_string(),
                        display,
                    });
                }
            }
        }
    }

    // Decoys: two non-adjacent substitutions of a target label.
    let letters: Vec<char> = ('a'..='z').collect();
    let mut made = 0;
    let mut tries = 0;
    while made < params.n_decoys && tries < 50 * params.n_decoys + 100 {
        tries += 1;
        let l = &legit[pick(&mut rng, legit.len())];
        let mut chars: Vec<char> = l.name.label().chars().collect();
        if chars.len() < 4 {
            continue;
        }
        let i = pick(&mut rng, chars.len() - 2);
        let j = i + 2 + pick(&mut rng, chars.len() - i - 2);
        for p in [i, j] {
            let c = letters[pick(&mut rng, letters.len())];
            if c == chars[p] {
                continue;
            }
            chars[p] = c;
        }
        let label: String = chars.into_iter().collect();
        if legit_index.within_one(&label) {
            continue;
        }
        let ns = l.name.namespace().clone();
        let name = Name::second_level(label, ns.clone());
        let owner = book.fresh(&mut rng, addr_kind(&ns));
        let source = source_for(&mut rng, &ns);
        let at = rand_time(&mut rng, start.max(ns.launch_epoch()), end);
        let display = name.display().to_string();
        if reg.add(name, &owner, Some((chain_for(source), &owner)), at, source) {
            manifest.decoys.push(display);
            made += 1;
        }
    }
    manifest.decoys.sort();

    let mut made = 0;
    let mut tries = 0;
    while made < params.n_filler && tries < 50 * params.n_filler + 100 {
        tries += 1;
        let label = filler_label(&mut rng, &words);
        if legit_index.within_one(&label) {
            continue;
        }
        let ns = draw_namespace(&mut rng, &params.namespace_weights);
        let name = Name::second_level(label, ns.clone());
        let owner = book.fresh(&mut rng, addr_kind(&ns));
        let source = source_for(&mut rng, &ns);
        let at = rand_time(&mut rng, start.max(ns.launch_epoch()), end);
        if reg.add(name, &owner, Some((chain_for(source), &owner)), at, source) {
            made += 1;
        }
    }

    let mut records: Vec<RegistrationRecord> = reg.registrations.iter().map(Registration::to_record).collect();
    records.sort_by(|a, b| a.registered_at.cmp(&b.registered_at).then_with(|| a.display.cmp(&b.display)));
    manifest.defensive.sort_by(|a, b| a.display.cmp(&b.display));
    manifest.predating.sort_by(|a, b| a.display.cmp(&b.display));
    Ok((records, manifest))
}

/// Emitted transaction-side fixtures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxFixture {
    pub txs: Vec<Transaction>,
    pub utxos: Vec<UtxoRecord>,
    pub prices: PriceTable,
    pub labels: Vec<LabelRecord>,
}

fn amount(rng: &mut ChaCha8Rng, chain: Chain) -> Decimal {
    match chain {
        Chain::Eth => Decimal::new(rng.gen_range(1_000..5_000_000i64), 6),
        Chain::Matic => Decimal::new(rng.gen_range(1_000..500_000_000i64), 6),
        Chain::Ada => Decimal::new(rng.gen_range(1_000_000..2_000_000_000i64), 6),
    }
}

struct Emitter {
    txs: Vec<Transaction>,
    utxos: Vec<UtxoRecord>,
}

impl Emitter {
    fn send(
        &mut self,
        book: &mut AddressBook,
        rng: &mut ChaCha8Rng,
        inputs: &[String],
        to: &str,
        chain: Chain,
        amt: Decimal,
        at: DateTime<Utc>,
    ) {
        let hash = book.tx_hash(rng);
        if chain == Chain::Ada {
            self.utxos.push(UtxoRecord {
                hash,
                inputs: inputs.to_vec(),
                output: to.to_string(),
                amount: amt,
                timestamp: at,
            });
        } else {
            self.txs.push(Transaction {
                hash,
                sender: inputs[0].clone(),
                receiver: to.to_string(),
                amount: amt,
                asset: chain,
                timestamp: at,
                origin: TxOrigin::Account,
            });
        }
    }
}

/// Builds background traffic, planted common-sender events, typo-only
/// noise, a covering price table and custodial labels. Planted events are
/// appended to `manifest.events`.
pub fn synth_transactions(
    records: &[RegistrationRecord],
    manifest: &mut Manifest,
    params: &ScenarioParams,
) -> Result<TxFixture, SimError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x7478_5f73_7472_6561);
    let (_, end) = params.window();
    let regs: HashMap<&str, &RegistrationRecord> = records.iter().map(|r| (r.display.as_str(), r)).collect();
    let resolution = |display: &str| -> Result<(Chain, String, DateTime<Utc>), SimError> {
        let r = regs
            .get(display)
            .ok_or_else(|| SimError::InvalidParams(format!("manifest name {display} missing from corpus")))?;
        let (chain, addr) = r
            .resolution
            .iter()
            .next()
            .ok_or_else(|| SimError::InvalidParams(format!("{display} has no resolution")))?;
        let chain: Chain = chain.parse().map_err(SimError::InvalidParams)?;
        let at = DateTime::parse_from_rfc3339(&r.registered_at)
            .map_err(|e| SimError::InvalidParams(e.to_string()))?
            .with_timezone(&Utc);
        Ok((chain, addr.clone(), at))
    };

    let mut book = AddressBook {
        used: records
            .iter()
            .flat_map(|r| std::iter::once(r.owner.clone()).chain(r.resolution.values().cloned()))
            .collect(),
    };
    let mut out = Emitter {
        txs: Vec::new(),
        utxos: Vec::new(),
    };

    let pool_size = (manifest.targets.len() / 2).max(4);
    let evm_pool: Vec<String> = (0..pool_size).map(|_| book.fresh(&mut rng, AddrKind::Evm)).collect();
    let ada_pool: Vec<String> = (0..pool_size).map(|_| book.fresh(&mut rng, AddrKind::Cardano)).collect();
    let background = |rng: &mut ChaCha8Rng, chain: Chain| -> Vec<String> {
        if chain == Chain::Ada {
            let n = 1 + pick(rng, 3);
            let mut inputs: Vec<String> = ada_pool.choose_multiple(rng, n).cloned().collect();
            inputs.sort();
            inputs
        } else {
            vec![evm_pool[pick(rng, evm_pool.len())].clone()]
        }
    };

    let target_set: BTreeSet<&str> = manifest.targets.iter().map(String::as_str).collect();
    for t in &target_set {
        let (chain, addr, at) = resolution(t)?;
        let n = rng.gen_range(params.n_tx_per_legit.min..=params.n_tx_per_legit.max);
        for _ in 0..n {
            let inputs = background(&mut rng, chain);
            let when = rand_time(&mut rng, at, end);
            let amt = amount(&mut rng, chain);
            out.send(&mut book, &mut rng, &inputs, &addr, chain, amt, when);
        }
    }
    let planted: HashSet<&str> = manifest
        .clusters
        .iter()
        .flat_map(|c| c.squats.iter().map(|s| s.display.as_str()))
        .collect();
    let mut displays: Vec<&str> = records.iter().map(|r| r.display.as_str()).collect();
    displays.sort();
    for d in displays {
        if target_set.contains(d) || planted.contains(d) || regs[d].resolution.is_empty() {
            continue;
        }
        let n = pick(&mut rng, 3);
        let (chain, addr, at) = resolution(d)?;
        for _ in 0..n {
            let inputs = background(&mut rng, chain);
            let when = rand_time(&mut rng, at, end);
            let amt = amount(&mut rng, chain);
            out.send(&mut book, &mut rng, &inputs, &addr, chain, amt, when);
        }
    }

    let pairs: Vec<(String, String)> = manifest.squat_pairs().into_iter().collect();
    let k = match params.typo_events {
        Some(k) => k,
        None => pairs.iter().filter(|_| rng.gen_bool(params.typo_event_rate)).count(),
    };
    if k > 0 && pairs.is_empty() {
        return Err(SimError::InvalidParams(format!("{k} typo events requested but nothing is planted")));
    }
    let mut slots: Vec<usize> = (0..pairs.len()).collect();
    slots.shuffle(&mut rng);
    let mut labels: Vec<LabelRecord> = Vec::new();
    let mut events = Vec::with_capacity(k);
    for e in 0..k {
        let (target, typo) = &pairs[slots[e % slots.len()]];
        let (chain, legit_addr, target_at) = resolution(target)?;
        let (_, typo_addr, typo_at) = resolution(typo)?;
        let kind = if chain == Chain::Ada { AddrKind::Cardano } else { AddrKind::Evm };
        let sender = book.fresh(&mut rng, kind);
        let x = rng.gen::<f64>();
        let sender_class = if x < params.sender_mix.coinbase {
            SenderClass::CoinbaseCustodial
        } else if x < params.sender_mix.coinbase + params.sender_mix.other_custodial {
            SenderClass::OtherCustodial
        } else {
            SenderClass::NonCustodial
        };
        if sender_class != SenderClass::NonCustodial {
            labels.push(LabelRecord {
                address: sender.clone(),
                kind: LabelKind::Exchange,
                is_coinbase: sender_class == SenderClass::CoinbaseCustodial,
            });
        }
        let first_typo = rand_time(&mut rng, typo_at + Duration::hours(1), end);
        let mut typo_timestamps = vec![first_typo];
        if rng.gen_bool(0.3) {
            typo_timestamps.push(rand_time(&mut rng, first_typo, (first_typo + Duration::days(10)).min(end)));
        }
        let mut legit_timestamps = Vec::new();
        for _ in 0..1 + pick(&mut rng, 2) {
            let lo = (first_typo - Duration::days(5)).max(target_at);
            let hi = (first_typo + Duration::days(5)).min(end);
            legit_timestamps.push(rand_time(&mut rng, lo, hi));
        }
        legit_timestamps.sort();
        let inputs = vec![sender.clone()];
        for &at in &legit_timestamps {
            let amt = amount(&mut rng, chain);
            out.send(&mut book, &mut rng, &inputs, &legit_addr, chain, amt, at);
        }
        let mut typo_amounts = Vec::new();
        for &at in &typo_timestamps {
            let amt = amount(&mut rng, chain);
            typo_amounts.push(amt);
            out.send(&mut book, &mut rng, &inputs, &typo_addr, chain, amt, at);
        }
        events.push(PlantedEvent {
            sender,
            sender_class,
            target: target.clone(),
            typo: typo.clone(),
            legit_timestamps,
            typo_timestamps,
            typo_amounts,
        });
    }
    events.sort_by(|a, b| (&a.target, &a.typo, &a.sender).cmp(&(&b.target, &b.typo, &b.sender)));
    manifest.events = events;

    if !pairs.is_empty() {
        for _ in 0..params.typo_only_senders {
            let (_, typo) = &pairs[pick(&mut rng, pairs.len())];
            let (chain, addr, at) = resolution(typo)?;
            let kind = if chain == Chain::Ada { AddrKind::Cardano } else { AddrKind::Evm };
            let inputs = vec![book.fresh(&mut rng, kind)];
            let when = rand_time(&mut rng, at, end);
            let amt = amount(&mut rng, chain);
            out.send(&mut book, &mut rng, &inputs, &addr, chain, amt, when);
        }
    }

    out.txs.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.hash.cmp(&b.hash)));
    out.utxos.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.hash.cmp(&b.hash)));
    labels.sort_by(|a, b| a.address.cmp(&b.address));
    let prices = covering_prices(&mut rng, &out.txs, &out.utxos);
    Ok(TxFixture {
        txs: out.txs,
        utxos: out.utxos,
        prices,
        labels,
    })
}

/// A daily random walk per asset over every date from the first to the
/// last emitted transaction.
fn covering_prices(rng: &mut ChaCha8Rng, txs: &[Transaction], utxos: &[UtxoRecord]) -> PriceTable {
    let dates: Vec<NaiveDate> = txs
        .iter()
        .map(|t| t.timestamp.date_naive())
        .chain(utxos.iter().map(|u| u.timestamp.date_naive()))
        .collect();
    let mut table = PriceTable::new();
    let (Some(&first), Some(&last)) = (dates.iter().min(), dates.iter().max()) else {
        return table;
    };
    for (chain, start) in [
        (Chain::Eth, Decimal::new(1_500, 0)),
        (Chain::Matic, Decimal::new(9, 1)),
        (Chain::Ada, Decimal::new(5, 1)),
    ] {
        let mut rate = start;
        let floor = Decimal::new(1, 4);
        for date in first.iter_days().take_while(|d| *d <= last) {
            table.insert(date, chain, rate).expect("walk dates are unique and positive");
            let step = Decimal::new(1000 + rng.gen_range(-30..=30i64), 3);
            rate = (rate * step).round_dp(4).max(floor);
        }
    }
    table
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Simulation {
    pub records: Vec<RegistrationRecord>,
    pub fixture: TxFixture,
    pub manifest: Manifest,
}

pub fn simulate(params: &ScenarioParams) -> Result<Simulation, SimError> {
    let (records, mut manifest) = synth_corpus(params)?;
    let fixture = synth_transactions(&records, &mut manifest, params)?;
    Ok(Simulation {
        records,
        fixture,
        manifest,
    })
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENARIO_FILE: &str = "scenario.json";

/// Writes the fixture layout plus `manifest.json` and `scenario.json`.
pub fn write_simulation(dir: &Path, sim: &Simulation, params: &ScenarioParams) -> Result<(), SimError> {
    let fx = FixtureDir::new(dir);
    fx.write(
        &sim.records,
        &sim.fixture.txs,
        &sim.fixture.utxos,
        &sim.fixture.prices,
        &sim.fixture.labels,
    )?;
    write_file(&dir.join(MANIFEST_FILE), &(sim.manifest.to_json() + "\n"))?;
    let scenario = serde_json::to_string_pretty(params).expect("params serialization is infallible");
    write_file(&dir.join(SCENARIO_FILE), &(scenario + "\n"))?;
    Ok(())
}

/// Every manifest squat classified against its target, with the model the
/// manifest records.
pub fn manifest_models_consistent(manifest: &Manifest) -> bool {
    manifest.clusters.iter().all(|c| {
        let Ok(target) = Name::parse_display(&c.target) else { return false };
        let alphabet = Alphabet::for_name(&target);
        c.squats.iter().all(|s| {
            Name::parse_display(&s.display).is_ok_and(|n| {
                crate::typo_models::classify_best(n.label(), target.label(), &alphabet) == Some(s.model)
            })
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> ScenarioParams {
        ScenarioParams {
            seed,
            n_legit: 120,
            n_filler: 300,
            n_decoys: 40,
            squatter_fraction: StyleFractions {
                single_typo: 0.1,
                multi_target_dissimilar: 0.1,
                multi_target_similar: 0.1,
            },
            ..ScenarioParams::default()
        }
    }

    #[test]
    fn wordlist_shape() {
        let w = wordlist();
        assert_eq!(w.len(), 1000);
        assert!(w.iter().all(|x| x.len() >= 5 && x.chars().all(|c| c.is_ascii_lowercase())));
        assert_eq!(w.iter().collect::<BTreeSet<_>>().len(), 1000);
    }

    #[test]
    fn same_seed_same_output() {
        let a = simulate(&small(7)).unwrap();
        let b = simulate(&small(7)).unwrap();
        assert_eq!(a, b);
        let c = simulate(&small(8)).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn zero_fractions_plant_nothing() {
        let mut p = small(1);
        p.squatter_fraction = StyleFractions {
            single_typo: 0.0,
            multi_target_dissimilar: 0.0,
            multi_target_similar: 0.0,
        };
        let (_, m) = synth_corpus(&p).unwrap();
        assert!(m.clusters.is_empty());
    }

    #[test]
    fn planted_squats_follow_their_targets() {
        let (records, m) = synth_corpus(&small(3)).unwrap();
        let by: HashMap<&str, &RegistrationRecord> = records.iter().map(|r| (r.display.as_str(), r)).collect();
        assert!(manifest_models_consistent(&m));
        for c in &m.clusters {
            let t = by[c.target.as_str()];
            for s in &c.squats {
                assert!(by[s.display.as_str()].registered_at >= t.registered_at);
                assert_ne!(s.owner, c.target_owner);
            }
        }
        for d in &m.defensive {
            assert_eq!(by[d.display.as_str()].owner, by[d.target.as_str()].owner);
        }
        for p in &m.predating {
            assert!(by[p.display.as_str()].registered_at < by[p.target.as_str()].registered_at);
        }
        let targets: Vec<Name> = m.targets.iter().map(|t| Name::parse_display(t).unwrap()).collect();
        for d in &m.decoys {
            let n = Name::parse_display(d).unwrap();
            assert!(targets.iter().all(|t| damerau_distance(t.label(), n.label()) >= 2));
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = small(1);
        p.typo_event_rate = 1.5;
        assert!(p.validate().is_err());
        let mut p = small(1);
        p.squatter_fraction.single_typo = 0.9;
        p.squatter_fraction.multi_target_similar = 0.2;
        assert!(p.validate().is_err());
        let json = r#"{"seed": 4, "n_legit": 10, "bogus": 1}"#;
        assert!(serde_json::from_str::<ScenarioParams>(json).is_err());
        let json = r#"{"seed": 4, "n_legit": 10}"#;
        let p: ScenarioParams = serde_json::from_str(json).unwrap();
        assert_eq!((p.seed, p.n_legit, p.n_filler), (4, 10, 600));
    }

    #[test]
    fn exact_event_count_and_price_coverage() {
        let mut p = small(5);
        p.typo_events = Some(10);
        let sim = simulate(&p).unwrap();
        assert_eq!(sim.manifest.events.len(), 10);
        for t in &sim.fixture.txs {
            assert!(crate::tx_analysis::to_usd(t, &sim.fixture.prices).is_ok());
        }
        for u in &sim.fixture.utxos {
            for t in crate::tx_analysis::utxo_expand(u) {
                assert!(crate::tx_analysis::to_usd(&t, &sim.fixture.prices).is_ok());
            }
        }
    }
}
