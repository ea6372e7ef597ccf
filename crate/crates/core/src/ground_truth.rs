//! Popularity ranking of resolution wallets and selection of the legitimate
//! target set.
//!
//! Each resolution address is scored by its transaction count divided by the
//! number of names resolving to it. Ranking compares scores as exact
//! rationals, so ties are real ties and get broken deterministically.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_address, Dataset, Name, NamespaceFamily};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GroundTruthError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("address {0} carries conflicting labels")]
    LabelConflict(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddressFlag {
    Exchange,
    TokenContract,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WalletStats {
    pub address: String,
    /// Transactions touching the address.
    pub tx_count: u64,
    /// Distinct names resolving to the address.
    pub domain_count: u64,
    pub flags: BTreeSet<AddressFlag>,
}

impl WalletStats {
    pub fn score(&self) -> f64 {
        self.tx_count as f64 / self.domain_count as f64
    }

    /// Ranking order: score descending, then `tx_count` descending, then
    /// address ascending.
    pub fn rank_cmp(&self, other: &WalletStats) -> Ordering {
        let lhs = u128::from(self.tx_count) * u128::from(other.domain_count);
        let rhs = u128::from(other.tx_count) * u128::from(self.domain_count);
        rhs.cmp(&lhs)
            .then_with(|| other.tx_count.cmp(&self.tx_count))
            .then_with(|| self.address.cmp(&other.address))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Exchange,
    TokenContract,
}

/// One line of the address label file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub address: String,
    pub kind: LabelKind,
    #[serde(default)]
    pub is_coinbase: bool,
}

/// Known exchange wallets and token contracts. Coinbase wallets are a
/// subset of the exchange wallets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AddressLabelSet {
    exchange: HashSet<String>,
    token_contracts: HashSet<String>,
    coinbase: HashSet<String>,
}

impl AddressLabelSet {
    pub fn new() -> AddressLabelSet {
        AddressLabelSet::default()
    }

    pub fn insert(&mut self, record: &LabelRecord) -> Result<(), GroundTruthError> {
        let addr = normalize_address(&record.address);
        match record.kind {
            LabelKind::Exchange => {
                if self.token_contracts.contains(&addr) {
                    return Err(GroundTruthError::LabelConflict(addr));
                }
                if record.is_coinbase {
                    self.coinbase.insert(addr.clone());
                }
                self.exchange.insert(addr);
            }
            LabelKind::TokenContract => {
                if record.is_coinbase || self.exchange.contains(&addr) {
                    return Err(GroundTruthError::LabelConflict(addr));
                }
                self.token_contracts.insert(addr);
            }
        }
        Ok(())
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a LabelRecord>) -> Result<Self, GroundTruthError> {
        let mut set = AddressLabelSet::new();
        for r in records {
            set.insert(r)?;
        }
        Ok(set)
    }

    pub fn load_jsonl<R: BufRead>(reader: R) -> Result<AddressLabelSet, GroundTruthError> {
        let mut set = AddressLabelSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| GroundTruthError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LabelRecord = serde_json::from_str(&line).map_err(|e| GroundTruthError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            set.insert(&rec)?;
        }
        Ok(set)
    }

    pub fn is_empty(&self) -> bool {
        self.exchange.is_empty() && self.token_contracts.is_empty()
    }

    pub fn is_exchange(&self, address: &str) -> bool {
        self.exchange.contains(address)
    }

    pub fn is_coinbase(&self, address: &str) -> bool {
        self.coinbase.contains(address)
    }

    pub fn is_token_contract(&self, address: &str) -> bool {
        self.token_contracts.contains(address)
    }

    pub fn flags_for(&self, address: &str) -> BTreeSet<AddressFlag> {
        let mut flags = BTreeSet::new();
        if self.is_exchange(address) {
            flags.insert(AddressFlag::Exchange);
        }
        if self.is_token_contract(address) {
            flags.insert(AddressFlag::TokenContract);
        }
        flags
    }

    /// Records in a stable order, for writing the label file back out.
    pub fn to_records(&self) -> Vec<LabelRecord> {
        let mut out: Vec<LabelRecord> = self
            .exchange
            .iter()
            .map(|a| LabelRecord {
                address: a.clone(),
                kind: LabelKind::Exchange,
                is_coinbase: self.coinbase.contains(a),
            })
            .chain(self.token_contracts.iter().map(|a| LabelRecord {
                address: a.clone(),
                kind: LabelKind::TokenContract,
                is_coinbase: false,
            }))
            .collect();
        out.sort_by(|a, b| a.address.cmp(&b.address));
        out
    }
}

/// One entry per distinct resolution address, sorted by address. Addresses
/// missing from `tx_index` count zero transactions.
pub fn compute_wallet_stats(dataset: &Dataset, tx_index: &HashMap<String, u64>) -> Vec<WalletStats> {
    dataset
        .resolution_addresses()
        .into_iter()
        .map(|addr| WalletStats {
            address: addr.to_string(),
            tx_count: tx_index.get(addr).copied().unwrap_or(0),
            domain_count: dataset.domain_count(addr) as u64,
            flags: BTreeSet::new(),
        })
        .collect()
}

/// Copies label flags onto the stats for reporting.
pub fn annotate(stats: &mut [WalletStats], labels: &AddressLabelSet) {
    for s in stats {
        s.flags = labels.flags_for(&s.address);
    }
}

/// Drops exchange wallets and token contracts.
pub fn filter_labeled(stats: &[WalletStats], labels: &AddressLabelSet) -> Vec<WalletStats> {
    stats
        .iter()
        .filter(|s| !labels.is_exchange(&s.address) && !labels.is_token_contract(&s.address))
        .cloned()
        .collect()
}

pub fn rank(stats: &mut [WalletStats]) {
    stats.sort_by(WalletStats::rank_cmp);
}

/// Default wallet budget per naming system.
pub fn default_top_n(family: NamespaceFamily) -> usize {
    match family {
        NamespaceFamily::Adah => 1_000,
        NamespaceFamily::Eth | NamespaceFamily::Ud => 10_000,
    }
}

pub const DEFAULT_MIN_LABEL_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InsufficientWallets {
    pub requested: usize,
    pub available: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSelection {
    /// Target names in rank order.
    pub names: Vec<Name>,
    /// The ranked wallets that were taken.
    pub wallets: Vec<WalletStats>,
    /// Set when fewer than `top_n` wallets were available.
    pub insufficient: Option<InsufficientWallets>,
}

/// Ranks wallets and emits every second-level name of the `top_n` best
/// wallets whose label has at least `min_label_len` characters.
pub fn select_targets(
    stats: &[WalletStats],
    dataset: &Dataset,
    top_n: usize,
    min_label_len: usize,
) -> Result<TargetSelection, GroundTruthError> {
    if top_n == 0 {
        return Err(GroundTruthError::InvalidParameter("top_n must be at least 1".into()));
    }
    if min_label_len == 0 {
        return Err(GroundTruthError::InvalidParameter("min_label_len must be at least 1".into()));
    }
    let mut ranked = stats.to_vec();
    rank(&mut ranked);
    let insufficient = (ranked.len() < top_n).then(|| {
        log::warn!("only {} wallets available, {} requested", ranked.len(), top_n);
        InsufficientWallets {
            requested: top_n,
            available: ranked.len(),
        }
    });
    ranked.truncate(top_n);

    let mut seen: HashSet<&str> = HashSet::new();
    let mut names = Vec::new();
    for wallet in &ranked {
        let mut wallet_names: Vec<&Name> = dataset
            .resolving_to(&wallet.address)
            .map(|r| &r.name)
            .filter(|n| !n.is_subdomain() && n.label().chars().count() >= min_label_len)
            .collect();
        wallet_names.sort_by(|a, b| a.display().cmp(b.display()));
        for n in wallet_names {
            if seen.insert(n.display()) {
                names.push(n.clone());
            }
        }
    }
    Ok(TargetSelection {
        names,
        wallets: ranked,
        insufficient,
    })
}
