use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};

use namesquat::corpus::NamespaceFamily;
use namesquat::ground_truth::default_top_n;
use namesquat::similarity::SimilarityThresholds;

use crate::error::CliError;

pub const MAX_MIN_LABEL_LEN: usize = 64;
pub const MAX_WORKERS: usize = 256;

#[derive(Debug, Parser)]
#[command(name = "namesquat", version, about = "Typosquatting analysis for blockchain naming systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic fixture directory into --data-dir.
    Simulate {
        /// Scenario JSON; defaults apply to missing fields.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Read the fixture directory and write normalized records.
    Ingest,
    /// Rank wallets and select typo targets.
    Score,
    /// Find registered typo variants of every target.
    Detect,
    /// Common senders, all-sender counts, USD totals and time deltas.
    AnalyzeTx,
    /// Plot-ready summary series.
    Report,
    /// Check a recipient name against history and cold lists.
    GuardCheck {
        /// Recipient display form, e.g. `vitalikk.eth` or `$handle`.
        #[arg(long)]
        recipient: String,
        /// Send history, JSON lines.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Blocklisted names, one per line.
        #[arg(long)]
        blocklist: Option<PathBuf>,
        /// Popular names, one per line.
        #[arg(long)]
        popular: Option<PathBuf>,
        /// Warn on blocklisted names even when they are in the history.
        #[arg(long)]
        strict: bool,
        /// Record the send in the history file after checking.
        #[arg(long, requires = "history")]
        record: bool,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Flags {
    /// Fixture directory (input of ingest, output of simulate).
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// eth, ud, adah or all; a comma-separated list selects several.
    #[arg(long, global = true, default_value = "all")]
    pub namespace: String,
    /// Wallets selected as targets, ranked across the selected namespaces.
    /// Defaults to the sum of 10000 (eth, ud) and 1000 (adah).
    #[arg(long, global = true)]
    pub top_n: Option<usize>,
    #[arg(long, global = true, default_value_t = namesquat::ground_truth::DEFAULT_MIN_LABEL_LEN)]
    pub min_label_len: usize,
    /// Also look for variants under other UD TLDs.
    #[arg(long, global = true)]
    pub cross_tld: bool,
    /// Similarity bucket edges as `low,high`.
    #[arg(long, global = true, default_value = "0.5,0.75")]
    pub sim_thresholds: String,
    /// Artifact directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// RFC 3339 instant used instead of the wall clock.
    #[arg(long, global = true)]
    pub fixed_clock: Option<String>,
    /// Overrides the scenario seed for simulate.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Count only incoming transactions toward wallet activity.
    #[arg(long, global = true)]
    pub incoming_only: bool,
    /// Largest tolerated share of unparseable fixture records.
    #[arg(long, global = true, default_value_t = namesquat::ingestion::DEFAULT_FAILURE_CEILING)]
    pub max_failure_rate: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub namespaces: BTreeSet<NamespaceFamily>,
    pub top_n: usize,
    pub min_label_len: usize,
    pub cross_tld: bool,
    pub thresholds: SimilarityThresholds,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub clock: Option<DateTime<Utc>>,
    pub seed: Option<u64>,
    pub incoming_only: bool,
    pub max_failure_rate: f64,
}

fn parse_namespaces(raw: &str) -> Result<BTreeSet<NamespaceFamily>, CliError> {
    let mut set = BTreeSet::new();
    for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part == "all" {
            set.extend(NamespaceFamily::ALL);
        } else {
            set.insert(
                part.parse::<NamespaceFamily>()
                    .map_err(|e| CliError::Config(format!("--namespace: {e}")))?,
            );
        }
    }
    if set.is_empty() {
        return Err(CliError::Config("--namespace selects nothing".into()));
    }
    Ok(set)
}

fn parse_thresholds(raw: &str) -> Result<SimilarityThresholds, CliError> {
    let bad = || CliError::Config(format!("--sim-thresholds expects `low,high` with 0 <= low <= high <= 1, got {raw:?}"));
    let (lo, hi) = raw.split_once(',').ok_or_else(bad)?;
    let low: f64 = lo.trim().parse().map_err(|_| bad())?;
    let high: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(0.0..=1.0).contains(&low) || !(0.0..=1.0).contains(&high) || low > high {
        return Err(bad());
    }
    Ok(SimilarityThresholds { low, high })
}

impl RunConfig {
    pub fn from_flags(f: &Flags) -> Result<RunConfig, CliError> {
        let namespaces = parse_namespaces(&f.namespace)?;
        let top_n = match f.top_n {
            Some(0) => return Err(CliError::Config("--top-n must be at least 1".into())),
            Some(n) => n,
            None => namespaces.iter().map(|ns| default_top_n(*ns)).sum(),
        };
        if f.min_label_len == 0 || f.min_label_len > MAX_MIN_LABEL_LEN {
            return Err(CliError::Config(format!("--min-label-len must be in 1..={MAX_MIN_LABEL_LEN}")));
        }
        if let Some(w) = f.workers {
            if w == 0 || w > MAX_WORKERS {
                return Err(CliError::Config(format!("--workers must be in 1..={MAX_WORKERS}")));
            }
        }
        if !(0.0..=1.0).contains(&f.max_failure_rate) {
            return Err(CliError::Config("--max-failure-rate must be in [0, 1]".into()));
        }
        let clock = match &f.fixed_clock {
            None => None,
            Some(raw) => Some(
                DateTime::parse_from_rfc3339(raw)
                    .map_err(|e| CliError::Config(format!("--fixed-clock: {e}")))?
                    .with_timezone(&Utc),
            ),
        };
        Ok(RunConfig {
            data_dir: f.data_dir.clone(),
            namespaces,
            top_n,
            min_label_len: f.min_label_len,
            cross_tld: f.cross_tld,
            thresholds: parse_thresholds(&f.sim_thresholds)?,
            out: f.out.clone(),
            workers: f.workers,
            clock,
            seed: f.seed,
            incoming_only: f.incoming_only,
            max_failure_rate: f.max_failure_rate,
        })
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.unwrap_or_else(Utc::now)
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out.as_deref().ok_or_else(|| CliError::Config("--out is required".into()))
    }

    pub fn data_dir(&self) -> Result<&Path, CliError> {
        self.data_dir.as_deref().ok_or_else(|| CliError::Config("--data-dir is required".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(args: &[&str]) -> Result<RunConfig, CliError> {
        let mut all = vec!["namesquat", "score"];
        all.extend_from_slice(args);
        RunConfig::from_flags(&Cli::try_parse_from(all).unwrap().flags)
    }

    #[test]
    fn defaults() {
        let c = flags(&[]).unwrap();
        assert_eq!(c.top_n, 21_000);
        assert_eq!(c.min_label_len, 5);
        assert_eq!((c.thresholds.low, c.thresholds.high), (0.5, 0.75));
        let c = flags(&["--namespace", "adah"]).unwrap();
        assert_eq!(c.top_n, 1_000);
    }

    #[test]
    fn rejects_bad_knobs() {
        for bad in [
            vec!["--top-n", "0"],
            vec!["--min-label-len", "0"],
            vec!["--sim-thresholds", "0.8,0.5"],
            vec!["--sim-thresholds", "half"],
            vec!["--namespace", "btc"],
            vec!["--workers", "0"],
            vec!["--fixed-clock", "yesterday"],
        ] {
            assert!(matches!(flags(&bad), Err(CliError::Config(_))), "{bad:?}");
        }
    }
}
