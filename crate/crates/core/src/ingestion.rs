//! Paged record sources, draining with a failure ceiling, request-rate
//! limiting and the on-disk fixture layout.
//!
//! A fixture directory looks like
//!
//! ```text
//! registrations/*.jsonl
//! txs/*.jsonl
//! utxos/*.jsonl
//! prices.csv
//! labels.jsonl
//! ```
//!
//! Files inside each subdirectory are read in lexicographic order.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde_json::Value;

use crate::corpus::{parse_registration_line, Chain, Dataset, Registration, RegistrationRecord};
use crate::ground_truth::{AddressLabelSet, LabelRecord};
use crate::tx_analysis::{parse_transaction_line, parse_utxo_line, utxo_expand, PriceTable, Transaction, TxStore, UtxoRecord};

pub const DEFAULT_FAILURE_CEILING: f64 = 0.01;
pub const DEFAULT_PAGE_SIZE: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("source exhausted abnormally: {reason}")]
    SourceExhaustedAbnormally { reason: String },
    #[error("invalid cursor {0:?}")]
    InvalidCursor(String),
    #[error("missing fixture file {0}")]
    MissingFile(PathBuf),
    #[error("{0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(String),
}

fn io_err(path: &Path, e: std::io::Error) -> IngestError {
    IngestError::Io(format!("{}: {e}", path.display()))
}

/// Opaque pagination token.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cursor(pub String);

/// A raw record and where it came from, e.g. `txs/a.jsonl:17`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub origin: String,
    pub line: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page {
    pub records: Vec<RawRecord>,
    pub next: Option<Cursor>,
}

/// A source read front to back in pages. Implementations must tolerate
/// concurrent `fetch_page` calls.
pub trait PagedSource: Send + Sync {
    fn fetch_page(&self, cursor: Option<&Cursor>) -> Result<Page, IngestError>;
}

/// Registration records.
pub trait NameSource: PagedSource {}

/// Transactions touching one address, in either direction.
pub trait TxSource: Send + Sync {
    fn fetch(&self, address: &str, cursor: Option<&Cursor>) -> Result<Page, IngestError>;
}

pub trait PriceSource: Send + Sync {
    fn rate(&self, date: NaiveDate, asset: Chain) -> Option<Decimal>;
}

impl PriceSource for PriceTable {
    fn rate(&self, date: NaiveDate, asset: Chain) -> Option<Decimal> {
        PriceTable::rate(self, date, asset)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DrainCounts {
    pub fetched: usize,
    pub parsed: usize,
    pub failed: usize,
}

impl DrainCounts {
    pub fn failure_rate(&self) -> f64 {
        if self.fetched == 0 {
            0.0
        } else {
            self.failed as f64 / self.fetched as f64
        }
    }
}

/// Follows pagination until the cursor runs out, parsing each record and
/// handing successes to `sink`. Parse failures are counted; the drain only
/// fails if their share exceeds `ceiling` or the source repeats a cursor.
pub fn drain_pages<T, E: std::fmt::Display>(
    mut fetch: impl FnMut(Option<&Cursor>) -> Result<Page, IngestError>,
    parse: impl Fn(&RawRecord) -> Result<T, E>,
    mut sink: impl FnMut(T),
    ceiling: f64,
) -> Result<DrainCounts, IngestError> {
    let mut counts = DrainCounts::default();
    let mut seen: HashSet<Cursor> = HashSet::new();
    let mut cursor: Option<Cursor> = None;
    loop {
        let page = fetch(cursor.as_ref())?;
        for rec in &page.records {
            counts.fetched += 1;
            match parse(rec) {
                Ok(v) => {
                    counts.parsed += 1;
                    sink(v);
                }
                Err(e) => {
                    counts.failed += 1;
                    log::warn!("{}:{}: {e}", rec.origin, rec.line);
                }
            }
        }
        match page.next {
            None => break,
            Some(next) => {
                if !seen.insert(next.clone()) {
                    return Err(IngestError::SourceExhaustedAbnormally {
                        reason: format!("cursor {:?} repeated", next.0),
                    });
                }
                cursor = Some(next);
            }
        }
    }
    if counts.failure_rate() > ceiling {
        return Err(IngestError::SourceExhaustedAbnormally {
            reason: format!(
                "{} of {} records failed to parse ({:.2}% > {:.2}%)",
                counts.failed,
                counts.fetched,
                counts.failure_rate() * 100.0,
                ceiling * 100.0
            ),
        });
    }
    Ok(counts)
}

pub fn drain<T, E: std::fmt::Display>(
    source: &dyn PagedSource,
    parse: impl Fn(&RawRecord) -> Result<T, E>,
    sink: impl FnMut(T),
    ceiling: f64,
) -> Result<DrainCounts, IngestError> {
    drain_pages(|c| source.fetch_page(c), parse, sink, ceiling)
}

fn parse_offset(cursor: Option<&Cursor>, len: usize) -> Result<usize, IngestError> {
    match cursor {
        None => Ok(0),
        Some(c) => match c.0.parse::<usize>() {
            Ok(n) if n <= len => Ok(n),
            _ => Err(IngestError::InvalidCursor(c.0.clone())),
        },
    }
}

fn page_of(records: &[RawRecord], offset: usize, page_size: usize) -> Page {
    let end = (offset + page_size).min(records.len());
    Page {
        records: records[offset..end].to_vec(),
        next: (end < records.len()).then(|| Cursor(end.to_string())),
    }
}

/// Non-blank lines of one or more JSONL files, served in fixed-size pages.
/// The cursor is the index of the next record.
#[derive(Debug, Clone)]
pub struct JsonlSource {
    records: Vec<RawRecord>,
    page_size: usize,
}

impl JsonlSource {
    pub fn from_text(origin: &str, text: &str, page_size: usize) -> JsonlSource {
        let mut src = JsonlSource {
            records: Vec::new(),
            page_size: page_size.max(1),
        };
        src.push_text(origin, text);
        src
    }

    fn push_text(&mut self, origin: &str, text: &str) {
        for (i, line) in text.lines().enumerate() {
            if !line.trim().is_empty() {
                self.records.push(RawRecord {
                    origin: origin.to_string(),
                    line: i + 1,
                    text: line.to_string(),
                });
            }
        }
    }

    pub fn open_files(paths: &[PathBuf], page_size: usize) -> Result<JsonlSource, IngestError> {
        let mut src = JsonlSource::from_text("", "", page_size);
        for p in paths {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            src.push_text(&p.display().to_string(), &text);
        }
        Ok(src)
    }

    /// All `*.jsonl` files of `dir`, sorted by file name. A missing
    /// directory is an empty source.
    pub fn open_dir(dir: &Path, page_size: usize) -> Result<JsonlSource, IngestError> {
        JsonlSource::open_files(&jsonl_files(dir)?, page_size)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl PagedSource for JsonlSource {
    fn fetch_page(&self, cursor: Option<&Cursor>) -> Result<Page, IngestError> {
        let offset = parse_offset(cursor, self.records.len())?;
        Ok(page_of(&self.records, offset, self.page_size))
    }
}

impl NameSource for JsonlSource {}

pub fn jsonl_files(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

/// Transaction and UTXO fixture lines indexed by every address they touch.
#[derive(Debug, Clone, Default)]
pub struct FixtureTxSource {
    by_address: HashMap<String, Vec<RawRecord>>,
    page_size: usize,
}

impl FixtureTxSource {
    pub fn new(records: impl IntoIterator<Item = RawRecord>, page_size: usize) -> FixtureTxSource {
        let mut by_address: HashMap<String, Vec<RawRecord>> = HashMap::new();
        for rec in records {
            let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(&rec.text) else {
                continue;
            };
            let mut addrs: Vec<String> = ["sender", "receiver", "output"]
                .iter()
                .filter_map(|k| obj.get(*k).and_then(Value::as_str))
                .map(crate::corpus::normalize_address)
                .collect();
            if let Some(Value::Array(inputs)) = obj.get("inputs") {
                addrs.extend(inputs.iter().filter_map(Value::as_str).map(crate::corpus::normalize_address));
            }
            addrs.sort();
            addrs.dedup();
            for a in addrs {
                by_address.entry(a).or_default().push(rec.clone());
            }
        }
        FixtureTxSource {
            by_address,
            page_size: page_size.max(1),
        }
    }
}

impl TxSource for FixtureTxSource {
    fn fetch(&self, address: &str, cursor: Option<&Cursor>) -> Result<Page, IngestError> {
        let records = self.by_address.get(address).map(Vec::as_slice).unwrap_or(&[]);
        let offset = parse_offset(cursor, records.len())?;
        Ok(page_of(records, offset, self.page_size))
    }
}

/// Caps calls to at most `budget` per sliding `interval` and keeps a log
/// of call instants for auditing.
#[derive(Debug)]
pub struct RateLimited<S> {
    inner: S,
    budget: usize,
    interval: Duration,
    window: Mutex<VecDeque<Instant>>,
    log: Mutex<Vec<Instant>>,
}

impl<S> RateLimited<S> {
    pub fn new(inner: S, budget: usize, interval: Duration) -> RateLimited<S> {
        assert!(budget > 0, "rate budget must be positive");
        RateLimited {
            inner,
            budget,
            interval,
            window: Mutex::new(VecDeque::new()),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    fn acquire(&self) {
        loop {
            let wait = {
                let mut window = self.window.lock().expect("rate window poisoned");
                let now = Instant::now();
                while window.front().is_some_and(|t| now.duration_since(*t) >= self.interval) {
                    window.pop_front();
                }
                if window.len() < self.budget {
                    window.push_back(now);
                    self.log.lock().expect("rate log poisoned").push(now);
                    return;
                }
                self.interval - now.duration_since(window[0])
            };
            thread::sleep(wait);
        }
    }

    /// Call instants in order of admission.
    pub fn audit_log(&self) -> Vec<Instant> {
        self.log.lock().expect("rate log poisoned").clone()
    }
}

/// Largest number of `log` entries falling inside any half-open window of
/// length `interval`.
pub fn max_in_window(log: &[Instant], interval: Duration) -> usize {
    let mut sorted = log.to_vec();
    sorted.sort();
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..sorted.len() {
        while sorted[hi].duration_since(sorted[lo]) >= interval {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best
}

impl<S: PagedSource> PagedSource for RateLimited<S> {
    fn fetch_page(&self, cursor: Option<&Cursor>) -> Result<Page, IngestError> {
        self.acquire();
        self.inner.fetch_page(cursor)
    }
}

impl<S: NameSource> NameSource for RateLimited<S> {}

impl<S: TxSource> TxSource for RateLimited<S> {
    fn fetch(&self, address: &str, cursor: Option<&Cursor>) -> Result<Page, IngestError> {
        self.acquire();
        self.inner.fetch(address, cursor)
    }
}

/// Paths of a fixture directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureDir {
    pub root: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub registrations: DrainCounts,
    pub transactions: DrainCounts,
    pub utxos: DrainCounts,
}

impl FixtureDir {
    pub fn new(root: impl Into<PathBuf>) -> FixtureDir {
        FixtureDir { root: root.into() }
    }

    pub fn registrations_dir(&self) -> PathBuf {
        self.root.join("registrations")
    }

    pub fn txs_dir(&self) -> PathBuf {
        self.root.join("txs")
    }

    pub fn utxos_dir(&self) -> PathBuf {
        self.root.join("utxos")
    }

    pub fn prices_path(&self) -> PathBuf {
        self.root.join("prices.csv")
    }

    pub fn labels_path(&self) -> PathBuf {
        self.root.join("labels.jsonl")
    }

    pub fn load_registrations(&self, ceiling: f64) -> Result<(Vec<Registration>, DrainCounts), IngestError> {
        let src = JsonlSource::open_dir(&self.registrations_dir(), DEFAULT_PAGE_SIZE)?;
        let mut out = Vec::new();
        let counts = drain(&src, |r| parse_registration_line(&r.text, r.line), |v| out.push(v), ceiling)?;
        Ok((out, counts))
    }

    pub fn load_dataset(&self, ceiling: f64) -> Result<(Dataset, DrainCounts), IngestError> {
        let (regs, counts) = self.load_registrations(ceiling)?;
        Ok((Dataset::from_registrations(regs), counts))
    }

    /// Account transactions plus expanded UTXO records.
    pub fn load_transactions(&self, ceiling: f64) -> Result<(Vec<Transaction>, DrainCounts, DrainCounts), IngestError> {
        let mut txs = Vec::new();
        let src = JsonlSource::open_dir(&self.txs_dir(), DEFAULT_PAGE_SIZE)?;
        let tx_counts = drain(&src, |r| parse_transaction_line(&r.text, r.line), |t| txs.push(t), ceiling)?;
        let src = JsonlSource::open_dir(&self.utxos_dir(), DEFAULT_PAGE_SIZE)?;
        let utxo_counts = drain(
            &src,
            |r| parse_utxo_line(&r.text, r.line),
            |u| txs.extend(utxo_expand(&u)),
            ceiling,
        )?;
        Ok((txs, tx_counts, utxo_counts))
    }

    pub fn load_tx_store(&self, ceiling: f64) -> Result<(TxStore, DrainCounts, DrainCounts), IngestError> {
        let (txs, a, b) = self.load_transactions(ceiling)?;
        Ok((TxStore::new(txs), a, b))
    }

    /// The price table; a missing file is an empty table.
    pub fn load_prices(&self) -> Result<PriceTable, IngestError> {
        let path = self.prices_path();
        if !path.exists() {
            return Ok(PriceTable::new());
        }
        let file = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
        PriceTable::load_csv(file).map_err(|e| IngestError::Data(format!("{}: {e}", path.display())))
    }

    /// The address label set; a missing file is an empty set.
    pub fn load_labels(&self) -> Result<AddressLabelSet, IngestError> {
        let path = self.labels_path();
        if !path.exists() {
            return Ok(AddressLabelSet::new());
        }
        let file = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
        AddressLabelSet::load_jsonl(BufReader::new(file)).map_err(|e| IngestError::Data(format!("{}: {e}", path.display())))
    }

    /// Writes a complete fixture, replacing any files of the same names.
    pub fn write(
        &self,
        registrations: &[RegistrationRecord],
        txs: &[Transaction],
        utxos: &[UtxoRecord],
        prices: &PriceTable,
        labels: &[LabelRecord],
    ) -> Result<(), IngestError> {
        for d in [self.registrations_dir(), self.txs_dir(), self.utxos_dir()] {
            fs::create_dir_all(&d).map_err(|e| io_err(&d, e))?;
        }
        let lines = |items: Vec<String>| {
            let mut s = String::new();
            for l in items {
                s.push_str(&l);
                s.push('\n');
            }
            s
        };
        write_file(
            &self.registrations_dir().join("registrations.jsonl"),
            &lines(registrations.iter().map(RegistrationRecord::to_json_line).collect()),
        )?;
        write_file(&self.txs_dir().join("txs.jsonl"), &lines(txs.iter().map(Transaction::to_json_line).collect()))?;
        write_file(&self.utxos_dir().join("utxos.jsonl"), &lines(utxos.iter().map(UtxoRecord::to_json_line).collect()))?;
        write_file(&self.prices_path(), &prices.to_csv())?;
        write_file(
            &self.labels_path(),
            &lines(
                labels
                    .iter()
                    .map(|l| serde_json::to_string(l).expect("label serialization is infallible"))
                    .collect(),
            ),
        )?;
        Ok(())
    }
}

/// Writes via a temporary sibling and a rename.
pub fn write_file(path: &Path, contents: &str) -> Result<(), IngestError> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}
