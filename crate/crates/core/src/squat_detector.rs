//! Squat clusters: registered typo variants of each target, the false
//! positive filters, defensive registrations and squatter profiling.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::Datelike;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Name, Namespace, NamespaceFamily, Registration};
use crate::similarity::{SimilaritySummary, SimilarityThresholds};
use crate::typo_models::{generate_all, Alphabet, TypoModel};

#[derive(Debug, Clone, Default)]
pub struct DetectOptions {
    /// Also look variant labels up under every other UD TLD in the dataset.
    pub cross_tld: bool,
    /// Overrides the per-namespace default alphabet.
    pub alphabet: Option<Alphabet>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SquatEntry {
    pub registration: Registration,
    pub model: TypoModel,
    pub change_position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SquatCluster {
    pub target: Registration,
    pub squats: Vec<SquatEntry>,
    /// Variants held by the target's own owner.
    pub defensive: Vec<SquatEntry>,
}

impl SquatCluster {
    pub fn delta_days(&self, entry: &SquatEntry) -> f64 {
        (entry.registration.registered_at - self.target.registered_at).num_seconds() as f64 / 86_400.0
    }

    pub fn min_delta_days(&self) -> Option<f64> {
        self.squats.iter().map(|s| self.delta_days(s)).reduce(f64::min)
    }
}

fn lookup_namespaces(target: &Name, dataset_namespaces: &BTreeSet<Namespace>, cross_tld: bool) -> Vec<Namespace> {
    match target.namespace() {
        Namespace::Ud(_) if cross_tld => dataset_namespaces
            .iter()
            .filter(|ns| ns.family() == NamespaceFamily::Ud)
            .cloned()
            .collect(),
        ns => vec![ns.clone()],
    }
}

fn detect_one(
    target: &Name,
    dataset: &Dataset,
    target_set: &HashSet<&str>,
    namespaces: &BTreeSet<Namespace>,
    options: &DetectOptions,
) -> Option<SquatCluster> {
    let target_reg = dataset.get(target.display())?;
    let alphabet = options.alphabet.clone().unwrap_or_else(|| Alphabet::for_name(target));
    let mut squats = Vec::new();
    let mut defensive = Vec::new();
    let lookup = lookup_namespaces(target, namespaces, options.cross_tld);
    for variant in generate_all(target, &alphabet) {
        for ns in &lookup {
            let display = ns.display(&variant.label);
            let Some(reg) = dataset.get(&display) else { continue };
            if target_set.contains(display.as_str()) || reg.registered_at < target_reg.registered_at {
                continue;
            }
            let entry = SquatEntry {
                registration: reg.clone(),
                model: variant.model,
                change_position: variant.change_position,
            };
            if reg.owner == target_reg.owner {
                defensive.push(entry);
            } else {
                squats.push(entry);
            }
        }
    }
    if squats.is_empty() && defensive.is_empty() {
        return None;
    }
    Some(SquatCluster {
        target: target_reg.clone(),
        squats,
        defensive,
    })
}

/// Registered typo variants of every target, in target order. Variants that
/// are themselves targets or predate their target are dropped; clusters
/// with nothing left are omitted. Runs on the current rayon pool.
pub fn detect(targets: &[Name], dataset: &Dataset, options: &DetectOptions) -> Vec<SquatCluster> {
    let target_set: HashSet<&str> = targets.iter().map(Name::display).collect();
    let namespaces = dataset.namespaces();
    targets
        .par_iter()
        .map(|t| detect_one(t, dataset, &target_set, &namespaces, options))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegistrationStats {
    /// Squat registrations per calendar year, each squat name counted once.
    pub per_year: BTreeMap<i32, usize>,
    /// Days between target and squat registration, one per cluster entry.
    pub time_deltas_days: Vec<f64>,
    /// Fraction of cluster entries altered in the first character.
    pub first_char_fraction: f64,
    /// Priority-model histogram, each squat name counted once.
    pub per_model: BTreeMap<TypoModel, usize>,
    /// Number of squats per target -> number of targets.
    pub typos_per_target: BTreeMap<usize, usize>,
    pub clusters: usize,
    pub squat_entries: usize,
    pub unique_squats: usize,
    pub defensive_targets: usize,
}

pub fn registration_stats(clusters: &[SquatCluster]) -> RegistrationStats {
    let mut per_year = BTreeMap::new();
    let mut per_model: BTreeMap<TypoModel, usize> = TypoModel::ALL.iter().map(|m| (*m, 0)).collect();
    let mut typos_per_target = BTreeMap::new();
    let mut time_deltas_days = Vec::new();
    let mut seen: HashSet<&str> = HashSet::new();
    let mut at_zero = 0usize;
    let mut entries = 0usize;
    for c in clusters {
        if !c.squats.is_empty() {
            *typos_per_target.entry(c.squats.len()).or_insert(0) += 1;
        }
        for s in &c.squats {
            entries += 1;
            time_deltas_days.push(c.delta_days(s));
            if s.change_position == 0 {
                at_zero += 1;
            }
            if seen.insert(s.registration.name.display()) {
                *per_year.entry(s.registration.registered_at.year()).or_insert(0) += 1;
                *per_model.entry(s.model).or_insert(0) += 1;
            }
        }
    }
    RegistrationStats {
        per_year,
        time_deltas_days,
        first_char_fraction: if entries == 0 { 0.0 } else { at_zero as f64 / entries as f64 },
        per_model,
        typos_per_target,
        clusters: clusters.len(),
        squat_entries: entries,
        unique_squats: seen.len(),
        defensive_targets: clusters.iter().filter(|c| !c.defensive.is_empty()).count(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignStyle {
    SingleTypo,
    MultiTargetDissimilar,
    MultiTargetSimilar,
    Unclassified,
}

impl CampaignStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            CampaignStyle::SingleTypo => "single_typo",
            CampaignStyle::MultiTargetDissimilar => "multi_target_dissimilar",
            CampaignStyle::MultiTargetSimilar => "multi_target_similar",
            CampaignStyle::Unclassified => "unclassified",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SquatterProfile {
    pub wallet: String,
    pub unique_targets: usize,
    pub typo_names: usize,
    pub total_domains_owned: usize,
    pub namespaces: BTreeSet<NamespaceFamily>,
    pub campaign_style: CampaignStyle,
    /// Labels of the squat names, sorted.
    pub typo_labels: Vec<String>,
}

/// Groups squats by owner wallet. Styles start as `Unclassified` except
/// for single-typo wallets, which need no similarity input.
pub fn squatter_profiles(clusters: &[SquatCluster], dataset: &Dataset) -> Vec<SquatterProfile> {
    let mut by_owner: BTreeMap<&str, (BTreeSet<&str>, BTreeSet<&str>)> = BTreeMap::new();
    for c in clusters {
        for s in &c.squats {
            let slot = by_owner.entry(s.registration.owner.as_str()).or_default();
            slot.0.insert(c.target.name.display());
            slot.1.insert(s.registration.name.display());
        }
    }
    by_owner
        .into_iter()
        .map(|(wallet, (targets, typos))| {
            let owned: Vec<&Registration> = dataset.owned_by(wallet).collect();
            let mut typo_labels: Vec<String> = typos
                .iter()
                .filter_map(|d| dataset.get(d))
                .map(|r| r.name.label().to_string())
                .collect();
            typo_labels.sort();
            let mut profile = SquatterProfile {
                wallet: wallet.to_string(),
                unique_targets: targets.len(),
                typo_names: typos.len(),
                total_domains_owned: owned.len(),
                namespaces: owned.iter().map(|r| r.name.namespace().family()).collect(),
                campaign_style: CampaignStyle::Unclassified,
                typo_labels,
            };
            profile.campaign_style = classify_campaign(&profile, None, &SimilarityThresholds::default());
            profile
        })
        .collect()
}

/// Fraction of squatter wallets owning names in more than one family.
pub fn cross_namespace_fraction(profiles: &[SquatterProfile]) -> f64 {
    if profiles.is_empty() {
        return 0.0;
    }
    profiles.iter().filter(|p| p.namespaces.len() > 1).count() as f64 / profiles.len() as f64
}

/// Among squatter wallets holding `from` names, the fraction also holding
/// `also` names.
pub fn namespace_overlap(profiles: &[SquatterProfile], from: NamespaceFamily, also: NamespaceFamily) -> f64 {
    let holders: Vec<&SquatterProfile> = profiles.iter().filter(|p| p.namespaces.contains(&from)).collect();
    if holders.is_empty() {
        return 0.0;
    }
    holders.iter().filter(|p| p.namespaces.contains(&also)).count() as f64 / holders.len() as f64
}

pub fn classify_campaign(
    profile: &SquatterProfile,
    similarity: Option<&SimilaritySummary>,
    thresholds: &SimilarityThresholds,
) -> CampaignStyle {
    if profile.typo_names == 1 && profile.total_domains_owned == 1 {
        return CampaignStyle::SingleTypo;
    }
    match similarity {
        None => CampaignStyle::Unclassified,
        Some(s) if s.many_to_many_avg >= thresholds.high => CampaignStyle::MultiTargetSimilar,
        Some(s) if s.many_to_many_avg < thresholds.low => CampaignStyle::MultiTargetDissimilar,
        Some(_) => CampaignStyle::Unclassified,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{normalize_name, Chain, Source};
    use crate::similarity::SimilarityBucket;
    use crate::typo_models::classify;
    use chrono::{DateTime, TimeZone, Utc};

    fn at(y: i32, m: u32, d: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
    }

    fn reg(label: &str, owner: &str, when: DateTime<Utc>) -> Registration {
        Registration {
            name: normalize_name(label, &Namespace::Eth).unwrap(),
            owner: owner.into(),
            resolution: BTreeMap::from([(Chain::Eth, owner.to_string())]),
            registered_at: when,
            source: Source::Ens,
        }
    }

    fn name(label: &str) -> Name {
        normalize_name(label, &Namespace::Eth).unwrap()
    }

    #[test]
    fn predating_variants_are_dropped() {
        let ds = Dataset::from_registrations([
            reg("vitalik", "0xv", at(2020, 1, 1)),
            reg("vitalikk", "0xs", at(2019, 6, 1)),
        ]);
        assert!(detect(&[name("vitalik")], &ds, &DetectOptions::default()).is_empty());
    }

    #[test]
    fn same_owner_is_defensive() {
        let ds = Dataset::from_registrations([
            reg("vitalik", "0xv", at(2020, 1, 1)),
            reg("vitalikk", "0xv", at(2020, 2, 1)),
            reg("vitalki", "0xs", at(2020, 3, 1)),
        ]);
        let c = detect(&[name("vitalik")], &ds, &DetectOptions::default());
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].defensive.len(), 1);
        assert_eq!(c[0].defensive[0].registration.name.label(), "vitalikk");
        assert_eq!(c[0].squats.len(), 1);
        assert_eq!(c[0].squats[0].model, TypoModel::Swapping);
    }

    #[test]
    fn targets_are_excluded_from_each_other() {
        let ds = Dataset::from_registrations([
            reg("horse", "0xa", at(2020, 1, 1)),
            reg("horses", "0xb", at(2020, 2, 1)),
        ]);
        let both = detect(&[name("horse"), name("horses")], &ds, &DetectOptions::default());
        assert!(both.is_empty());
        let one = detect(&[name("horse")], &ds, &DetectOptions::default());
        assert_eq!(one[0].squats[0].model, TypoModel::Pluralization);
    }

    #[test]
    fn planted_cluster_matches_pairwise_oracle() {
        let regs = vec![
            reg("walgreens", "0xw", at(2020, 1, 1)),
            reg("walgreen", "0x1", at(2020, 5, 1)),
            reg("wallgreens", "0x2", at(2020, 6, 1)),
            reg("walgreems", "0x3", at(2021, 1, 1)),
            reg("walgrens4", "0x4", at(2021, 1, 1)),
            reg("unrelated", "0x5", at(2021, 1, 1)),
        ];
        let ds = Dataset::from_registrations(regs.clone());
        let got = detect(&[name("walgreens")], &ds, &DetectOptions::default());
        let detected: BTreeSet<&str> = got[0].squats.iter().map(|s| s.registration.name.display()).collect();
        let alphabet = Alphabet::for_family(NamespaceFamily::Eth);
        let oracle: BTreeSet<&str> = regs
            .iter()
            .filter(|r| !classify(r.name.label(), "walgreens", &alphabet).is_empty())
            .map(|r| r.name.display())
            .collect();
        assert_eq!(detected, oracle);
        assert_eq!(detected.len(), 3);
    }

    #[test]
    fn cross_tld_lookup_is_opt_in() {
        let ud = |label: &str, tld: &str, owner: &str| Registration {
            name: normalize_name(label, &Namespace::Ud(tld.into())).unwrap(),
            owner: owner.into(),
            resolution: BTreeMap::new(),
            registered_at: at(2021, 1, 1),
            source: Source::UdPolygon,
        };
        let ds = Dataset::from_registrations([ud("metascan", "nft", "0xa"), ud("metascann", "crypto", "0xb")]);
        let target = [normalize_name("metascan.nft", &Namespace::Ud("nft".into())).unwrap()];
        assert!(detect(&target, &ds, &DetectOptions::default()).is_empty());
        let opts = DetectOptions {
            cross_tld: true,
            ..Default::default()
        };
        assert_eq!(detect(&target, &ds, &opts)[0].squats.len(), 1);
    }

    #[test]
    fn stats_deltas_and_histograms() {
        let ds = Dataset::from_registrations([
            reg("vitalik", "0xv", at(2017, 5, 10)),
            reg("vitalikb", "0xa", at(2017, 5, 14)),
            reg("italik", "0xb", at(2017, 8, 18)),
            reg("vitalki", "0xc", at(2022, 12, 1)),
        ]);
        let clusters = detect(&[name("vitalik")], &ds, &DetectOptions::default());
        let st = registration_stats(&clusters);
        let min = st.time_deltas_days.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(min, 4.0);
        assert_eq!(st.time_deltas_days.iter().filter(|d| **d == 100.0).count(), 1);
        assert_eq!(st.per_year, BTreeMap::from([(2017, 2), (2022, 1)]));
        assert_eq!(st.per_model.values().sum::<usize>(), 3);
        assert_eq!(st.per_model[&TypoModel::Addition], 1);
        assert_eq!(st.per_model[&TypoModel::Removal], 1);
        assert_eq!(st.per_model[&TypoModel::Swapping], 1);
        assert_eq!(st.typos_per_target, BTreeMap::from([(3, 1)]));
        // italik (removal at 0) is the only first-character change
        assert!((st.first_char_fraction - 1.0 / 3.0).abs() < 1e-12);
    }

    fn profile(typos: usize, total: usize) -> SquatterProfile {
        SquatterProfile {
            wallet: "w".into(),
            unique_targets: 1,
            typo_names: typos,
            total_domains_owned: total,
            namespaces: BTreeSet::from([NamespaceFamily::Eth]),
            campaign_style: CampaignStyle::Unclassified,
            typo_labels: vec![],
        }
    }

    fn summary(avg: f64) -> SimilaritySummary {
        SimilaritySummary {
            wallet: "w".into(),
            one_to_many_avg: avg,
            many_to_many_avg: avg,
            bucket: SimilarityBucket::from_score(avg, &SimilarityThresholds::default()),
        }
    }

    #[test]
    fn campaign_styles() {
        let th = SimilarityThresholds::default();
        assert_eq!(classify_campaign(&profile(1, 1), None, &th), CampaignStyle::SingleTypo);
        assert_eq!(classify_campaign(&profile(1, 4), None, &th), CampaignStyle::Unclassified);
        assert_eq!(
            classify_campaign(&profile(6, 179), Some(&summary(0.9)), &th),
            CampaignStyle::MultiTargetSimilar
        );
        assert_eq!(
            classify_campaign(&profile(3, 20), Some(&summary(0.2)), &th),
            CampaignStyle::MultiTargetDissimilar
        );
        assert_eq!(classify_campaign(&profile(3, 20), Some(&summary(0.6)), &th), CampaignStyle::Unclassified);
        assert_eq!(
            classify_campaign(&profile(3, 20), Some(&summary(0.75)), &th),
            CampaignStyle::MultiTargetSimilar
        );
        assert_eq!(classify_campaign(&profile(3, 20), Some(&summary(0.5)), &th), CampaignStyle::Unclassified);
    }

    #[test]
    fn profiles_count_targets_typos_and_holdings() {
        let mut regs = vec![
            reg("alphabet", "0xt1", at(2020, 1, 1)),
            reg("baseball", "0xt2", at(2020, 1, 1)),
            reg("alphabeth", "0xs", at(2021, 1, 1)),
            reg("alphabte", "0xs", at(2021, 1, 1)),
            reg("basebal", "0xs", at(2021, 1, 1)),
            reg("lonely", "0xq", at(2020, 1, 1)),
            reg("alpabet", "0xq", at(2021, 1, 1)),
        ];
        for i in 0..7 {
            regs.push(reg(&format!("filler{i}name"), "0xs", at(2021, 2, 1)));
        }
        let ds = Dataset::from_registrations(regs);
        let clusters = detect(&[name("alphabet"), name("baseball")], &ds, &DetectOptions::default());
        let profiles = squatter_profiles(&clusters, &ds);
        let s = profiles.iter().find(|p| p.wallet == "0xs").unwrap();
        assert_eq!((s.unique_targets, s.typo_names, s.total_domains_owned), (2, 3, 10));
        let q = profiles.iter().find(|p| p.wallet == "0xq").unwrap();
        assert_eq!((q.unique_targets, q.typo_names, q.total_domains_owned), (1, 1, 2));
        assert_eq!(q.campaign_style, CampaignStyle::Unclassified);
        assert_eq!(cross_namespace_fraction(&profiles), 0.0);
    }
}
