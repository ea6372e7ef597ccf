//! Transaction analysis: UTXO expansion, sender classification, common
//! senders across legitimate/typo pairs, USD conversion and time deltas.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Read};

use chrono::{DateTime, NaiveDate, Utc};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::corpus::{format_timestamp, normalize_address, parse_timestamp, Chain, Name, Registration};
use crate::ground_truth::AddressLabelSet;
use crate::squat_detector::SquatCluster;

/// Fractional digits kept by UTXO value splitting.
pub const UTXO_SCALE: u32 = 9;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TxError {
    #[error("no closing rate for {asset} on {date}")]
    MissingRate { date: NaiveDate, asset: Chain },
    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("invalid price table: {0}")]
    InvalidPrice(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxOrigin {
    Account,
    UtxoExpanded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub hash: String,
    pub sender: String,
    pub receiver: String,
    pub amount: Decimal,
    pub asset: Chain,
    pub timestamp: DateTime<Utc>,
    pub origin: TxOrigin,
}

impl Transaction {
    pub fn to_json_line(&self) -> String {
        let rec = TransactionRecord {
            hash: self.hash.clone(),
            sender: self.sender.clone(),
            receiver: self.receiver.clone(),
            amount: self.amount.normalize().to_string(),
            asset: self.asset.as_str().to_string(),
            timestamp: format_timestamp(&self.timestamp),
            origin: Some(self.origin),
        };
        serde_json::to_string(&rec).expect("record serialization is infallible")
    }
}

/// Account-model fixture line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub hash: String,
    pub sender: String,
    pub receiver: String,
    pub amount: String,
    pub asset: String,
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<TxOrigin>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtxoRecord {
    pub hash: String,
    pub inputs: Vec<String>,
    pub output: String,
    pub amount: Decimal,
    pub timestamp: DateTime<Utc>,
}

impl UtxoRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "hash": self.hash,
            "inputs": self.inputs,
            "output": self.output,
            "amount": self.amount.normalize().to_string(),
            "timestamp": format_timestamp(&self.timestamp),
        })
        .to_string()
    }
}

fn field_err(line: usize, field: &str, message: impl Into<String>) -> TxError {
    TxError::Parse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn get_str<'a>(obj: &'a Map<String, Value>, key: &str, line: usize) -> Result<&'a str, TxError> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(field_err(line, key, "expected a string")),
        None => Err(field_err(line, key, "missing field")),
    }
}

fn get_amount(obj: &Map<String, Value>, key: &str, line: usize) -> Result<Decimal, TxError> {
    let raw = match obj.get(key) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(field_err(line, key, "expected a decimal")),
        None => return Err(field_err(line, key, "missing field")),
    };
    let amount = raw
        .trim()
        .parse::<Decimal>()
        .or_else(|_| Decimal::from_scientific(raw.trim()))
        .map_err(|e| field_err(line, key, format!("invalid decimal {raw:?}: {e}")))?;
    if amount.is_sign_negative() && !amount.is_zero() {
        return Err(field_err(line, key, "amount must be non-negative"));
    }
    Ok(amount)
}

fn get_address(obj: &Map<String, Value>, key: &str, line: usize) -> Result<String, TxError> {
    let addr = normalize_address(get_str(obj, key, line)?);
    if addr.is_empty() {
        return Err(field_err(line, key, "address must be non-empty"));
    }
    Ok(addr)
}

fn parse_object(text: &str, line: usize) -> Result<Map<String, Value>, TxError> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(field_err(line, "<json>", "expected a JSON object")),
        Err(e) => Err(field_err(line, "<json>", e.to_string())),
    }
}

fn ts(obj: &Map<String, Value>, line: usize) -> Result<DateTime<Utc>, TxError> {
    let raw = get_str(obj, "timestamp", line)?;
    parse_timestamp(raw, line, "timestamp").map_err(|e| field_err(line, "timestamp", e.to_string()))
}

pub fn parse_transaction_line(text: &str, line: usize) -> Result<Transaction, TxError> {
    let obj = parse_object(text, line)?;
    let asset: Chain = get_str(&obj, "asset", line)?
        .parse()
        .map_err(|e: String| field_err(line, "asset", e))?;
    let origin = match obj.get("origin") {
        None | Some(Value::Null) => TxOrigin::Account,
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| field_err(line, "origin", e.to_string()))?,
    };
    Ok(Transaction {
        hash: get_str(&obj, "hash", line)?.to_string(),
        sender: get_address(&obj, "sender", line)?,
        receiver: get_address(&obj, "receiver", line)?,
        amount: get_amount(&obj, "amount", line)?,
        asset,
        timestamp: ts(&obj, line)?,
        origin,
    })
}

pub fn parse_utxo_line(text: &str, line: usize) -> Result<UtxoRecord, TxError> {
    let obj = parse_object(text, line)?;
    let inputs = match obj.get("inputs") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(normalize_address)
                    .filter(|a| !a.is_empty())
                    .ok_or_else(|| field_err(line, "inputs", "input addresses must be non-empty strings"))
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(field_err(line, "inputs", "expected an array")),
        None => return Err(field_err(line, "inputs", "missing field")),
    };
    if inputs.is_empty() {
        return Err(field_err(line, "inputs", "at least one input address required"));
    }
    Ok(UtxoRecord {
        hash: get_str(&obj, "hash", line)?.to_string(),
        inputs,
        output: get_address(&obj, "output", line)?,
        amount: get_amount(&obj, "amount", line)?,
        timestamp: ts(&obj, line)?,
    })
}

/// One transaction per input address, each carrying an equal share of the
/// output value. Shares are rounded to [`UTXO_SCALE`] digits and the
/// rounding residue goes to the first input, so shares re-sum exactly.
pub fn utxo_expand(record: &UtxoRecord) -> Vec<Transaction> {
    let n = record.inputs.len();
    if n == 0 {
        return Vec::new();
    }
    let share = (record.amount / Decimal::from(n as u64)).round_dp(UTXO_SCALE);
    let first = record.amount - share * Decimal::from((n - 1) as u64);
    record
        .inputs
        .iter()
        .enumerate()
        .map(|(i, input)| Transaction {
            hash: record.hash.clone(),
            sender: input.clone(),
            receiver: record.output.clone(),
            amount: if i == 0 { first } else { share },
            asset: Chain::Ada,
            timestamp: record.timestamp,
            origin: TxOrigin::UtxoExpanded,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxDirection {
    /// Count transactions sent and received.
    Both,
    Incoming,
}

/// Immutable transaction store indexed by sender and receiver.
#[derive(Debug, Clone, Default)]
pub struct TxStore {
    txs: Vec<Transaction>,
    by_receiver: HashMap<String, Vec<usize>>,
    by_sender: HashMap<String, Vec<usize>>,
}

impl TxStore {
    pub fn new(txs: impl IntoIterator<Item = Transaction>) -> TxStore {
        let mut txs: Vec<Transaction> = txs.into_iter().collect();
        txs.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.hash.cmp(&b.hash))
                .then_with(|| a.sender.cmp(&b.sender))
                .then_with(|| a.receiver.cmp(&b.receiver))
        });
        let mut by_receiver: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_sender: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, tx) in txs.iter().enumerate() {
            by_receiver.entry(tx.receiver.clone()).or_default().push(i);
            by_sender.entry(tx.sender.clone()).or_default().push(i);
        }
        TxStore {
            txs,
            by_receiver,
            by_sender,
        }
    }

    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.txs.iter()
    }

    /// Transactions received by `receiver` in `asset`, oldest first.
    pub fn received<'a>(&'a self, receiver: &str, asset: Chain) -> impl Iterator<Item = &'a Transaction> + 'a {
        self.by_receiver
            .get(receiver)
            .into_iter()
            .flatten()
            .map(move |&i| &self.txs[i])
            .filter(move |t| t.asset == asset)
    }

    pub fn sent<'a>(&'a self, sender: &str) -> impl Iterator<Item = &'a Transaction> + 'a {
        self.by_sender.get(sender).into_iter().flatten().map(move |&i| &self.txs[i])
    }

    /// Per-address transaction counts.
    pub fn activity_counts(&self, direction: TxDirection) -> HashMap<String, u64> {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for tx in &self.txs {
            *counts.entry(tx.receiver.clone()).or_insert(0) += 1;
            if direction == TxDirection::Both && tx.sender != tx.receiver {
                *counts.entry(tx.sender.clone()).or_insert(0) += 1;
            }
        }
        counts
    }
}

/// Reads account-model lines and UTXO lines into one store.
pub fn load_tx_store<A: BufRead, U: BufRead>(account: A, utxo: U) -> Result<TxStore, TxError> {
    let mut txs = Vec::new();
    for (i, line) in account.lines().enumerate() {
        let line = line.map_err(|e| TxError::Io(e.to_string()))?;
        if !line.trim().is_empty() {
            txs.push(parse_transaction_line(&line, i + 1)?);
        }
    }
    for (i, line) in utxo.lines().enumerate() {
        let line = line.map_err(|e| TxError::Io(e.to_string()))?;
        if !line.trim().is_empty() {
            txs.extend(utxo_expand(&parse_utxo_line(&line, i + 1)?));
        }
    }
    Ok(TxStore::new(txs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SenderClass {
    CoinbaseCustodial,
    OtherCustodial,
    NonCustodial,
}

impl SenderClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SenderClass::CoinbaseCustodial => "coinbase_custodial",
            SenderClass::OtherCustodial => "other_custodial",
            SenderClass::NonCustodial => "non_custodial",
        }
    }
}

pub fn classify_sender(address: &str, labels: &AddressLabelSet) -> SenderClass {
    if labels.is_coinbase(address) {
        SenderClass::CoinbaseCustodial
    } else if labels.is_exchange(address) {
        SenderClass::OtherCustodial
    } else {
        SenderClass::NonCustodial
    }
}

/// Drops transactions sent from custodial wallets that cannot resolve
/// names. Returns the kept transactions and the dropped fraction.
pub fn filter_non_resolving_custodial(txs: &[Transaction], labels: &AddressLabelSet) -> (Vec<Transaction>, f64) {
    let kept: Vec<Transaction> = txs
        .iter()
        .filter(|t| classify_sender(&t.sender, labels) != SenderClass::OtherCustodial)
        .cloned()
        .collect();
    let dropped = if txs.is_empty() {
        0.0
    } else {
        (txs.len() - kept.len()) as f64 / txs.len() as f64
    };
    (kept, dropped)
}

/// Daily closing USD rate per asset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PriceTable {
    rates: BTreeMap<(NaiveDate, Chain), Decimal>,
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    date: String,
    asset: String,
    usd_close: String,
}

impl PriceTable {
    pub fn new() -> PriceTable {
        PriceTable::default()
    }

    pub fn insert(&mut self, date: NaiveDate, asset: Chain, rate: Decimal) -> Result<(), TxError> {
        if rate <= Decimal::ZERO {
            return Err(TxError::InvalidPrice(format!("non-positive rate for {asset} on {date}")));
        }
        if self.rates.insert((date, asset), rate).is_some() {
            return Err(TxError::InvalidPrice(format!("duplicate rate for {asset} on {date}")));
        }
        Ok(())
    }

    pub fn rate(&self, date: NaiveDate, asset: Chain) -> Option<Decimal> {
        self.rates.get(&(date, asset)).copied()
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Reads the `date,asset,usd_close` CSV (header required).
    pub fn load_csv<R: Read>(reader: R) -> Result<PriceTable, TxError> {
        let mut table = PriceTable::new();
        let mut rdr = csv::Reader::from_reader(reader);
        for (i, row) in rdr.deserialize::<PriceRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| field_err(line, "<csv>", e.to_string()))?;
            let date = NaiveDate::parse_from_str(row.date.trim(), "%Y-%m-%d")
                .map_err(|e| field_err(line, "date", e.to_string()))?;
            let asset: Chain = row.asset.parse().map_err(|e: String| field_err(line, "asset", e))?;
            let rate: Decimal = row
                .usd_close
                .trim()
                .parse()
                .map_err(|e| field_err(line, "usd_close", format!("{e}")))?;
            table.insert(date, asset, rate)?;
        }
        Ok(table)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,asset,usd_close\n");
        for ((date, asset), rate) in &self.rates {
            out.push_str(&format!("{},{},{}\n", date.format("%Y-%m-%d"), asset, rate.normalize()));
        }
        out
    }
}

/// Amount times the closing rate of the transaction's UTC calendar day.
pub fn to_usd(tx: &Transaction, prices: &PriceTable) -> Result<Decimal, TxError> {
    let date = tx.timestamp.date_naive();
    let rate = prices.rate(date, tx.asset).ok_or(TxError::MissingRate { date, asset: tx.asset })?;
    Ok(tx.amount * rate)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UsdStats {
    pub count: usize,
    pub total: Decimal,
    pub mean: Option<Decimal>,
    pub median: Option<Decimal>,
}

/// Mean and median of `values`; even-length medians average the middle two.
pub fn usd_stats(values: &[Decimal]) -> UsdStats {
    let total: Decimal = values.iter().copied().sum();
    if values.is_empty() {
        return UsdStats {
            count: 0,
            total,
            mean: None,
            median: None,
        };
    }
    let mut sorted = values.to_vec();
    sorted.sort();
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / Decimal::TWO
    };
    UsdStats {
        count: n,
        total,
        mean: Some(total / Decimal::from(n as u64)),
        median: Some(median),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairTotal {
    pub target: Name,
    pub typo: Name,
    pub senders: usize,
    pub usd: Decimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FundsSummary {
    pub per_transaction: UsdStats,
    pub per_pair: Vec<PairTotal>,
}

/// Per-transaction USD statistics over the typo-side transactions of
/// `records`, plus per-pair totals.
pub fn funds_summary(records: &[CommonSenderRecord], prices: &PriceTable) -> Result<FundsSummary, TxError> {
    let mut values = Vec::new();
    let mut pairs: BTreeMap<(&str, &str), (Name, Name, usize, Decimal)> = BTreeMap::new();
    for r in records {
        let mut pair_usd = Decimal::ZERO;
        for tx in &r.typo_txs {
            let usd = to_usd(tx, prices)?;
            values.push(usd);
            pair_usd += usd;
        }
        let slot = pairs
            .entry((r.target.display(), r.typo.display()))
            .or_insert_with(|| (r.target.clone(), r.typo.clone(), 0, Decimal::ZERO));
        slot.2 += 1;
        slot.3 += pair_usd;
    }
    Ok(FundsSummary {
        per_transaction: usd_stats(&values),
        per_pair: pairs
            .into_values()
            .map(|(target, typo, senders, usd)| PairTotal {
                target,
                typo,
                senders,
                usd,
            })
            .collect(),
    })
}

/// Per-transaction USD statistics over arbitrary transactions.
pub fn funds_summary_txs(txs: &[Transaction], prices: &PriceTable) -> Result<UsdStats, TxError> {
    let values = txs.iter().map(|t| to_usd(t, prices)).collect::<Result<Vec<_>, _>>()?;
    Ok(usd_stats(&values))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommonSenderRecord {
    pub sender: String,
    pub sender_class: SenderClass,
    pub target: Name,
    pub typo: Name,
    pub legit_txs: Vec<Transaction>,
    pub typo_txs: Vec<Transaction>,
    pub usd_to_typo: Decimal,
}

impl CommonSenderRecord {
    /// Earliest typo transaction minus the legit transaction nearest to it,
    /// in days.
    pub fn delta_days(&self) -> f64 {
        let Some(first_typo) = self.typo_txs.iter().map(|t| t.timestamp).min() else {
            return 0.0;
        };
        let nearest = self
            .legit_txs
            .iter()
            .map(|t| t.timestamp)
            .min_by_key(|t| ((first_typo - *t).num_milliseconds().abs(), *t));
        match nearest {
            Some(t) => (first_typo - t).num_milliseconds() as f64 / 86_400_000.0,
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairWarning {
    /// The two names share no chain with a resolution address on both sides.
    MissingResolution { target: Name, typo: Name },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CommonSenderScan {
    pub records: Vec<CommonSenderRecord>,
    pub warnings: Vec<PairWarning>,
}

impl CommonSenderScan {
    pub fn by_class(&self) -> BTreeMap<SenderClass, usize> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry(r.sender_class).or_insert(0) += 1;
        }
        m
    }
}

fn common_chains<'a>(a: &'a Registration, b: &'a Registration) -> Vec<(Chain, &'a str, &'a str)> {
    a.resolution
        .iter()
        .filter_map(|(chain, addr_a)| b.resolution.get(chain).map(|addr_b| (*chain, addr_a.as_str(), addr_b.as_str())))
        .collect()
}

/// Senders that transacted with both the target's and a squat's resolution
/// address, one record per (pair, sender). Pairs only resolvable on
/// different chains are skipped with a warning.
pub fn common_senders(
    cluster: &SquatCluster,
    store: &TxStore,
    labels: &AddressLabelSet,
    prices: &PriceTable,
) -> Result<CommonSenderScan, TxError> {
    let mut scan = CommonSenderScan::default();
    let target = &cluster.target;
    for squat in &cluster.squats {
        let typo = &squat.registration;
        let chains = common_chains(target, typo);
        if chains.is_empty() {
            log::warn!("{} / {}: no common resolution chain; pair skipped", target.name, typo.name);
            scan.warnings.push(PairWarning::MissingResolution {
                target: target.name.clone(),
                typo: typo.name.clone(),
            });
            continue;
        }
        let mut legit: BTreeMap<&str, Vec<Transaction>> = BTreeMap::new();
        let mut squatted: BTreeMap<&str, Vec<Transaction>> = BTreeMap::new();
        for (chain, legit_addr, typo_addr) in &chains {
            for tx in store.received(legit_addr, *chain) {
                legit.entry(tx.sender.as_str()).or_default().push(tx.clone());
            }
            for tx in store.received(typo_addr, *chain) {
                squatted.entry(tx.sender.as_str()).or_default().push(tx.clone());
            }
        }
        for (sender, typo_txs) in squatted {
            let Some(legit_txs) = legit.get(sender) else { continue };
            let usd_to_typo = typo_txs
                .iter()
                .map(|t| to_usd(t, prices))
                .sum::<Result<Decimal, _>>()?;
            scan.records.push(CommonSenderRecord {
                sender: sender.to_string(),
                sender_class: classify_sender(sender, labels),
                target: target.name.clone(),
                typo: typo.name.clone(),
                legit_txs: legit_txs.clone(),
                typo_txs,
                usd_to_typo,
            });
        }
    }
    Ok(scan)
}

pub fn time_deltas(records: &[CommonSenderRecord]) -> Vec<f64> {
    records.iter().map(CommonSenderRecord::delta_days).collect()
}

/// Traffic to one typo name from all senders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AllSendersRow {
    pub target: Name,
    pub typo: Name,
    pub unique_senders: usize,
    pub transactions: usize,
    /// Transactions dropped as sent from non-resolving custodial wallets.
    pub dropped_custodial: usize,
    pub usd: Decimal,
}

/// Counts every transaction to each squat, after dropping non-resolving
/// custodial senders. Unique senders and transactions are reported side by
/// side.
pub fn all_senders(
    cluster: &SquatCluster,
    store: &TxStore,
    labels: &AddressLabelSet,
    prices: &PriceTable,
) -> Result<Vec<AllSendersRow>, TxError> {
    let mut rows = Vec::new();
    for squat in &cluster.squats {
        let typo = &squat.registration;
        let txs: Vec<Transaction> = typo
            .resolution
            .iter()
            .flat_map(|(chain, addr)| store.received(addr, *chain))
            .cloned()
            .collect();
        let (kept, _) = filter_non_resolving_custodial(&txs, labels);
        let senders: BTreeSet<&str> = kept.iter().map(|t| t.sender.as_str()).collect();
        let usd = kept.iter().map(|t| to_usd(t, prices)).sum::<Result<Decimal, _>>()?;
        rows.push(AllSendersRow {
            target: cluster.target.name.clone(),
            typo: typo.name.clone(),
            unique_senders: senders.len(),
            transactions: kept.len(),
            dropped_custodial: txs.len() - kept.len(),
            usd,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{normalize_name, Namespace, Source};
    use crate::ground_truth::{LabelKind, LabelRecord};
    use crate::squat_detector::SquatEntry;
    use crate::typo_models::TypoModel;
    use chrono::{Duration, TimeZone};
    use std::str::FromStr;

    fn dec(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2022, 3, 1, 12, 0, 0).unwrap()
    }

    fn utxo(inputs: &[&str], amount: &str) -> UtxoRecord {
        UtxoRecord {
            hash: "h".into(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            output: "addr_out".into(),
            amount: dec(amount),
            timestamp: t0(),
        }
    }

    fn tx(sender: &str, receiver: &str, amount: &str, at: DateTime<Utc>) -> Transaction {
        Transaction {
            hash: format!("{sender}-{receiver}-{}", at.timestamp()),
            sender: sender.into(),
            receiver: receiver.into(),
            amount: dec(amount),
            asset: Chain::Eth,
            timestamp: at,
            origin: TxOrigin::Account,
        }
    }

    fn labels() -> AddressLabelSet {
        AddressLabelSet::from_records(&[
            LabelRecord {
                address: "cb".into(),
                kind: LabelKind::Exchange,
                is_coinbase: true,
            },
            LabelRecord {
                address: "binance".into(),
                kind: LabelKind::Exchange,
                is_coinbase: false,
            },
        ])
        .unwrap()
    }

    #[test]
    fn utxo_examples() {
        let one = utxo_expand(&utxo(&["a"], "10"));
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].amount, dec("10"));
        assert_eq!(one[0].origin, TxOrigin::UtxoExpanded);

        let two = utxo_expand(&utxo(&["a", "b"], "10"));
        assert!(two.iter().all(|t| t.amount == dec("5")));

        let three = utxo_expand(&utxo(&["a", "b", "c"], "10"));
        assert_eq!(three.len(), 3);
        let sum: Decimal = three.iter().map(|t| t.amount).sum();
        assert_eq!(sum, dec("10"));
        for t in &three {
            let third = 10.0 / 3.0;
            let got: f64 = t.amount.to_string().parse().unwrap();
            assert!((got - third).abs() < 1e-8);
        }
    }

    #[test]
    fn sender_classes() {
        let l = labels();
        assert_eq!(classify_sender("cb", &l), SenderClass::CoinbaseCustodial);
        assert_eq!(classify_sender("binance", &l), SenderClass::OtherCustodial);
        assert_eq!(classify_sender("someone", &l), SenderClass::NonCustodial);
    }

    #[test]
    fn custodial_filter() {
        let l = labels();
        let base = vec![tx("x", "r", "1", t0()), tx("y", "r", "1", t0())];
        let (kept, frac) = filter_non_resolving_custodial(&base, &l);
        assert_eq!((kept.len(), frac), (2, 0.0));
        let mixed = vec![
            tx("x", "r", "1", t0()),
            tx("binance", "r", "1", t0()),
            tx("cb", "r", "1", t0()),
            tx("y", "r", "1", t0()),
        ];
        let (kept, frac) = filter_non_resolving_custodial(&mixed, &l);
        assert_eq!((kept.len(), frac), (3, 0.25));
    }

    #[test]
    fn usd_conversion() {
        let mut prices = PriceTable::new();
        prices.insert(t0().date_naive(), Chain::Eth, dec("1500")).unwrap();
        assert_eq!(to_usd(&tx("a", "b", "2", t0()), &prices).unwrap(), dec("3000"));
        assert_eq!(to_usd(&tx("a", "b", "0", t0()), &prices).unwrap(), Decimal::ZERO);
        let later = tx("a", "b", "1", t0() + Duration::days(1));
        assert!(matches!(to_usd(&later, &prices), Err(TxError::MissingRate { .. })));
        assert!(prices.insert(t0().date_naive(), Chain::Eth, dec("1")).is_err());
        assert!(prices.insert(t0().date_naive(), Chain::Ada, dec("0")).is_err());
    }

    #[test]
    fn price_csv_round_trip() {
        let csv = "date,asset,usd_close\n2022-03-01,ETH,2921.5\n2022-03-01,ADA,0.95\n";
        let table = PriceTable::load_csv(csv.as_bytes()).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(PriceTable::load_csv(table.to_csv().as_bytes()).unwrap(), table);
        assert!(PriceTable::load_csv("date,asset,usd_close\n2022-03-01,ETH,-1\n".as_bytes()).is_err());
    }

    #[test]
    fn stats_small_lists() {
        let s = usd_stats(&[dec("100")]);
        assert_eq!((s.mean, s.median), (Some(dec("100")), Some(dec("100"))));
        let s = usd_stats(&[dec("100"), dec("300")]);
        assert_eq!((s.mean, s.median), (Some(dec("200")), Some(dec("200"))));
        let s = usd_stats(&[]);
        assert_eq!(s.mean, None);
    }

    #[test]
    fn time_delta_sign_and_nearest() {
        let target = normalize_name("alpha.eth", &Namespace::Eth).unwrap();
        let typo = normalize_name("alpah.eth", &Namespace::Eth).unwrap();
        let rec = |legit: Vec<DateTime<Utc>>, typos: Vec<DateTime<Utc>>| CommonSenderRecord {
            sender: "s".into(),
            sender_class: SenderClass::NonCustodial,
            target: target.clone(),
            typo: typo.clone(),
            legit_txs: legit.into_iter().map(|t| tx("s", "l", "1", t)).collect(),
            typo_txs: typos.into_iter().map(|t| tx("s", "t", "1", t)).collect(),
            usd_to_typo: Decimal::ZERO,
        };
        assert_eq!(rec(vec![t0()], vec![t0() + Duration::hours(36)]).delta_days(), 1.5);
        assert!(rec(vec![t0()], vec![t0() - Duration::hours(12)]).delta_days() < 0.0);

        let legit = vec![t0(), t0() + Duration::days(10), t0() + Duration::days(20)];
        let typos = vec![t0() + Duration::days(30), t0() + Duration::days(12)];
        let r = rec(legit.clone(), typos.clone());
        let first = *typos.iter().min().unwrap();
        let oracle = legit
            .iter()
            .map(|l| (first - *l).num_seconds() as f64 / 86_400.0)
            .min_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
            .unwrap();
        assert_eq!(r.delta_days(), oracle);
        assert_eq!(oracle, 2.0);
    }

    fn registration(label: &str, owner: &str, resolution: &[(Chain, &str)]) -> Registration {
        Registration {
            name: normalize_name(label, &Namespace::Eth).unwrap(),
            owner: owner.into(),
            resolution: resolution.iter().map(|(c, a)| (*c, a.to_string())).collect(),
            registered_at: Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap(),
            source: Source::Ens,
        }
    }

    fn cluster(target: Registration, squats: Vec<Registration>) -> SquatCluster {
        SquatCluster {
            target,
            squats: squats
                .into_iter()
                .map(|r| SquatEntry {
                    registration: r,
                    model: TypoModel::Substitution,
                    change_position: 1,
                })
                .collect(),
            defensive: vec![],
        }
    }

    #[test]
    fn common_sender_detection() {
        let mut prices = PriceTable::new();
        prices.insert(t0().date_naive(), Chain::Eth, dec("1000")).unwrap();
        let c = cluster(
            registration("alpha", "0xl", &[(Chain::Eth, "0xl")]),
            vec![registration("alpah", "0xs", &[(Chain::Eth, "0xs")])],
        );
        let store = TxStore::new([
            tx("only-legit", "0xl", "1", t0()),
            tx("both", "0xl", "1", t0()),
            tx("both", "0xs", "0.5", t0()),
            tx("cb", "0xl", "1", t0()),
            tx("cb", "0xs", "0.25", t0()),
        ]);
        let scan = common_senders(&c, &store, &labels(), &prices).unwrap();
        assert_eq!(scan.records.len(), 2);
        let both = scan.records.iter().find(|r| r.sender == "both").unwrap();
        assert_eq!(both.sender_class, SenderClass::NonCustodial);
        assert_eq!(both.usd_to_typo, dec("500"));
        let cb = scan.records.iter().find(|r| r.sender == "cb").unwrap();
        assert_eq!(cb.sender_class, SenderClass::CoinbaseCustodial);
        for r in &scan.records {
            assert!(store.received("0xl", Chain::Eth).any(|t| t.sender == r.sender));
            assert!(store.received("0xs", Chain::Eth).any(|t| t.sender == r.sender));
        }
    }

    #[test]
    fn mismatched_chains_are_skipped() {
        let prices = PriceTable::new();
        let c = cluster(
            registration("alpha", "0xl", &[(Chain::Eth, "0xl")]),
            vec![
                registration("alpah", "0xs", &[(Chain::Matic, "0xs")]),
                registration("alpho", "0xq", &[]),
            ],
        );
        let scan = common_senders(&c, &TxStore::default(), &labels(), &prices).unwrap();
        assert!(scan.records.is_empty());
        assert_eq!(scan.warnings.len(), 2);
        assert!(matches!(scan.warnings[0], PairWarning::MissingResolution { .. }));
    }

    #[test]
    fn transaction_line_parsing() {
        let line = r#"{"hash":"0x1","sender":"0xAB","receiver":"0xcd","amount":"1.25","asset":"ETH","timestamp":"2022-03-01T12:00:00Z"}"#;
        let t = parse_transaction_line(line, 1).unwrap();
        assert_eq!(t.sender, "0xab");
        assert_eq!(t.amount, dec("1.25"));
        assert_eq!(parse_transaction_line(&t.to_json_line(), 1).unwrap(), t);
        let numeric = line.replace("\"1.25\"", "1.25");
        assert_eq!(parse_transaction_line(&numeric, 1).unwrap().amount, dec("1.25"));
        let neg = line.replace("\"1.25\"", "\"-1\"");
        assert!(matches!(
            parse_transaction_line(&neg, 3),
            Err(TxError::Parse { line: 3, ref field, .. }) if field == "amount"
        ));
        let u = r#"{"hash":"u","inputs":[],"output":"addr1","amount":"3","timestamp":"2022-03-01T12:00:00Z"}"#;
        assert!(parse_utxo_line(u, 1).is_err());
    }

    #[test]
    fn activity_counts_directions() {
        let store = TxStore::new([tx("a", "b", "1", t0()), tx("b", "c", "1", t0())]);
        let both = store.activity_counts(TxDirection::Both);
        assert_eq!(both["b"], 2);
        let inc = store.activity_counts(TxDirection::Incoming);
        assert_eq!(inc["b"], 1);
        assert!(!inc.contains_key("a"));
    }
}
