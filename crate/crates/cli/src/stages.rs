//! Pipeline stages. Each reads the artifacts of earlier stages from the
//! output directory and writes its own subdirectory atomically.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufReader;
use std::path::Path;

use rayon::prelude::*;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use namesquat::corpus::{format_timestamp, load_registrations, Dataset, Registration};
use namesquat::ground_truth::{annotate, compute_wallet_stats, filter_labeled, select_targets, AddressLabelSet};
use namesquat::ingestion::FixtureDir;
use namesquat::similarity::{wallet_similarity, SimilarityError, TrigramProvider};
use namesquat::simulator::{simulate, write_simulation, ScenarioParams};
use namesquat::squat_detector::{
    classify_campaign, cross_namespace_fraction, detect, registration_stats, squatter_profiles, DetectOptions,
    SquatCluster, SquatEntry,
};
use namesquat::tx_analysis::{
    all_senders, common_senders, parse_transaction_line, usd_stats, PairWarning, PriceTable, SenderClass, TxDirection,
    TxStore,
};
use namesquat::typo_models::TypoModel;

use crate::artifacts::{read, require, StageWriter};
use crate::config::RunConfig;
use crate::error::{data, internal, CliError};

pub const INGEST: &str = "ingest";
pub const SCORE: &str = "score";
pub const DETECT: &str = "detect";
pub const ANALYZE: &str = "analyze";
pub const REPORT: &str = "report";

fn fmt_f64(x: f64) -> String {
    format!("{x:.6}")
}

fn fmt_dec(d: Decimal) -> String {
    d.round_dp(6).normalize().to_string()
}

fn with_pool<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match cfg.workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(internal)?;
            Ok(pool.install(f))
        }
    }
}

pub fn run_simulate(cfg: &RunConfig, scenario: Option<&Path>) -> Result<serde_json::Value, CliError> {
    let dir = cfg.data_dir()?;
    let mut params = match scenario {
        None => ScenarioParams::default(),
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
    };
    if let Some(seed) = cfg.seed {
        params.seed = seed;
    }
    params.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let sim = simulate(&params).map_err(data)?;
    std::fs::create_dir_all(dir).map_err(internal)?;
    write_simulation(dir, &sim, &params).map_err(internal)?;
    Ok(json!({
        "stage": "simulate",
        "registrations": sim.records.len(),
        "transactions": sim.fixture.txs.len(),
        "utxo_records": sim.fixture.utxos.len(),
        "planted_clusters": sim.manifest.clusters.len(),
        "planted_events": sim.manifest.events.len(),
        "top_n": sim.manifest.top_n,
    }))
}

pub fn run_ingest(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let data_dir = cfg.data_dir()?;
    if !data_dir.is_dir() {
        return Err(CliError::Config(format!("--data-dir {} is not a directory", data_dir.display())));
    }
    let fx = FixtureDir::new(data_dir);
    let (regs, reg_counts) = fx.load_registrations(cfg.max_failure_rate)?;
    let total = regs.len();
    let dataset =
        Dataset::from_registrations(regs.into_iter().filter(|r| cfg.namespaces.contains(&r.name.namespace().family())));
    let (txs, tx_counts, utxo_counts) = fx.load_transactions(cfg.max_failure_rate)?;
    let store = TxStore::new(txs);
    let prices = fx.load_prices()?;
    let labels = fx.load_labels()?;

    let mut records = dataset.to_records();
    records.sort_by(|a, b| a.display.cmp(&b.display));
    let w = StageWriter::new(cfg.out_dir()?, INGEST)?;
    w.write_lines("registrations.jsonl", records.iter().map(|r| r.to_json_line()))?;
    w.write_lines("transactions.jsonl", store.iter().map(|t| t.to_json_line()))?;
    w.write("prices.csv", prices.to_csv().as_bytes())?;
    w.write_jsonl("labels.jsonl", labels.to_records())?;
    let counts = |c: namesquat::ingestion::DrainCounts| json!({"fetched": c.fetched, "parsed": c.parsed, "failed": c.failed});
    let report = json!({
        "registrations": counts(reg_counts),
        "registrations_kept": dataset.len(),
        "registrations_outside_namespace": total - dataset.len(),
        "duplicate_displays": dataset.duplicate_warnings(),
        "transactions": counts(tx_counts),
        "utxo_records": counts(utxo_counts),
        "expanded_transactions": store.len(),
        "price_rows": prices.len(),
        "namespaces": cfg.namespaces,
    });
    w.write_json("report.json", &report)?;
    w.commit()?;
    Ok(json!({"stage": INGEST, "registrations": dataset.len(), "transactions": store.len()}))
}

struct Ingested {
    dataset: Dataset,
    store: TxStore,
    prices: PriceTable,
    labels: AddressLabelSet,
}

fn load_dataset(out: &Path, stage: &'static str) -> Result<Dataset, CliError> {
    let p = require(out.join(INGEST).join("registrations.jsonl"), stage, "ingest")?;
    let file = std::fs::File::open(&p).map_err(internal)?;
    load_registrations(BufReader::new(file)).map_err(|e| data(format!("{}: {e}", p.display())))
}

fn load_ingested(out: &Path, stage: &'static str) -> Result<Ingested, CliError> {
    let dataset = load_dataset(out, stage)?;
    let dir = out.join(INGEST);
    let tx_path = require(dir.join("transactions.jsonl"), stage, "ingest")?;
    let mut txs = Vec::new();
    for (i, line) in read(&tx_path)?.lines().enumerate() {
        if !line.trim().is_empty() {
            txs.push(parse_transaction_line(line, i + 1).map_err(|e| data(format!("{}: {e}", tx_path.display())))?);
        }
    }
    let prices_path = require(dir.join("prices.csv"), stage, "ingest")?;
    let prices = PriceTable::load_csv(read(&prices_path)?.as_bytes()).map_err(data)?;
    let labels_path = require(dir.join("labels.jsonl"), stage, "ingest")?;
    let labels = AddressLabelSet::load_jsonl(read(&labels_path)?.as_bytes()).map_err(data)?;
    Ok(Ingested {
        dataset,
        store: TxStore::new(txs),
        prices,
        labels,
    })
}

#[derive(Debug, Serialize)]
struct WalletRow<'a> {
    rank: usize,
    address: &'a str,
    tx_count: u64,
    domain_count: u64,
    score: String,
    selected: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct TargetRow {
    display: String,
    wallet: String,
    wallet_rank: usize,
}

pub fn run_score(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let out = cfg.out_dir()?;
    let ing = load_ingested(out, SCORE)?;
    let dataset = ing
        .dataset
        .filtered(|r| cfg.namespaces.contains(&r.name.namespace().family()));
    let direction = if cfg.incoming_only {
        TxDirection::Incoming
    } else {
        TxDirection::Both
    };
    let mut stats = compute_wallet_stats(&dataset, &ing.store.activity_counts(direction));
    annotate(&mut stats, &ing.labels);
    let kept = filter_labeled(&stats, &ing.labels);
    let sel = select_targets(&kept, &dataset, cfg.top_n, cfg.min_label_len).map_err(|e| CliError::Config(e.to_string()))?;

    let mut ranked = kept.clone();
    namesquat::ground_truth::rank(&mut ranked);
    let rank_of: BTreeMap<&str, usize> = ranked.iter().enumerate().map(|(i, s)| (s.address.as_str(), i + 1)).collect();
    let selected: BTreeSet<&str> = sel.wallets.iter().map(|w| w.address.as_str()).collect();
    let wallet_rows = ranked.iter().enumerate().map(|(i, s)| WalletRow {
        rank: i + 1,
        address: &s.address,
        tx_count: s.tx_count,
        domain_count: s.domain_count,
        score: fmt_f64(s.score()),
        selected: selected.contains(s.address.as_str()),
    });
    let mut targets = Vec::with_capacity(sel.names.len());
    for n in &sel.names {
        let reg = dataset.get(n.display()).expect("selected names come from the dataset");
        let wallet = reg
            .resolution
            .values()
            .filter(|a| selected.contains(a.as_str()))
            .min_by_key(|a| rank_of[a.as_str()])
            .expect("selected names resolve to a selected wallet");
        targets.push(TargetRow {
            display: n.display().to_string(),
            wallet: wallet.clone(),
            wallet_rank: rank_of[wallet.as_str()],
        });
    }

    let w = StageWriter::new(out, SCORE)?;
    w.write_csv("wallets.csv", wallet_rows)?;
    w.write_csv("targets.csv", &targets)?;
    w.write_json(
        "report.json",
        &json!({
            "top_n": cfg.top_n,
            "min_label_len": cfg.min_label_len,
            "activity": if cfg.incoming_only { "incoming" } else { "both" },
            "wallets": stats.len(),
            "excluded_labeled": stats.len() - kept.len(),
            "selected_wallets": sel.wallets.len(),
            "targets": targets.len(),
            "insufficient": sel.insufficient,
        }),
    )?;
    w.commit()?;
    Ok(json!({"stage": SCORE, "selected_wallets": sel.wallets.len(), "targets": targets.len()}))
}

#[derive(Debug, Serialize, Deserialize)]
struct EntryLine {
    display: String,
    owner: String,
    model: TypoModel,
    change_position: usize,
    registered_at: String,
    delta_days: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClusterLine {
    target: String,
    target_owner: String,
    target_registered_at: String,
    squats: Vec<EntryLine>,
    defensive: Vec<EntryLine>,
}

fn entry_line(c: &SquatCluster, e: &SquatEntry) -> EntryLine {
    EntryLine {
        display: e.registration.name.display().to_string(),
        owner: e.registration.owner.clone(),
        model: e.model,
        change_position: e.change_position,
        registered_at: format_timestamp(&e.registration.registered_at),
        delta_days: c.delta_days(e),
    }
}

fn lookup<'a>(dataset: &'a Dataset, display: &str) -> Result<&'a Registration, CliError> {
    dataset
        .get(display)
        .ok_or_else(|| data(format!("{display} is not in the ingested registrations; re-run earlier stages")))
}

fn load_clusters(out: &Path, dataset: &Dataset, stage: &'static str) -> Result<Vec<SquatCluster>, CliError> {
    let p = require(out.join(DETECT).join("clusters.jsonl"), stage, "detect")?;
    let mut clusters = Vec::new();
    for (i, line) in read(&p)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c: ClusterLine = serde_json::from_str(line).map_err(|e| data(format!("{}:{}: {e}", p.display(), i + 1)))?;
        let entries = |v: &[EntryLine]| -> Result<Vec<SquatEntry>, CliError> {
            v.iter()
                .map(|e| {
                    Ok(SquatEntry {
                        registration: lookup(dataset, &e.display)?.clone(),
                        model: e.model,
                        change_position: e.change_position,
                    })
                })
                .collect()
        };
        clusters.push(SquatCluster {
            target: lookup(dataset, &c.target)?.clone(),
            squats: entries(&c.squats)?,
            defensive: entries(&c.defensive)?,
        });
    }
    Ok(clusters)
}

#[derive(Debug, Serialize)]
struct SquatterRow<'a> {
    wallet: &'a str,
    unique_targets: usize,
    typo_names: usize,
    total_domains_owned: usize,
    namespaces: String,
}

pub fn run_detect(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let out = cfg.out_dir()?;
    let targets_path = require(out.join(SCORE).join("targets.csv"), DETECT, "score")?;
    let dataset = load_dataset(out, DETECT)?;
    let text = read(&targets_path)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut targets = Vec::new();
    for row in rdr.deserialize::<TargetRow>() {
        let row = row.map_err(|e| data(format!("{}: {e}", targets_path.display())))?;
        targets.push(lookup(&dataset, &row.display)?.name.clone());
    }
    let options = DetectOptions {
        cross_tld: cfg.cross_tld,
        alphabet: None,
    };
    let clusters = with_pool(cfg, || detect(&targets, &dataset, &options))?;
    let stats = registration_stats(&clusters);
    let profiles = squatter_profiles(&clusters, &dataset);

    let w = StageWriter::new(out, DETECT)?;
    w.write_jsonl(
        "clusters.jsonl",
        clusters.iter().map(|c| ClusterLine {
            target: c.target.name.display().to_string(),
            target_owner: c.target.owner.clone(),
            target_registered_at: format_timestamp(&c.target.registered_at),
            squats: c.squats.iter().map(|e| entry_line(c, e)).collect(),
            defensive: c.defensive.iter().map(|e| entry_line(c, e)).collect(),
        }),
    )?;
    w.write_csv(
        "squatters.csv",
        profiles.iter().map(|p| SquatterRow {
            wallet: &p.wallet,
            unique_targets: p.unique_targets,
            typo_names: p.typo_names,
            total_domains_owned: p.total_domains_owned,
            namespaces: p.namespaces.iter().map(|n| n.as_str()).collect::<Vec<_>>().join(";"),
        }),
    )?;
    w.write_json(
        "summary.json",
        &json!({
            "targets": targets.len(),
            "cross_tld": cfg.cross_tld,
            "stats": stats,
            "squatter_wallets": profiles.len(),
            "cross_namespace_fraction": cross_namespace_fraction(&profiles),
        }),
    )?;
    w.commit()?;
    Ok(json!({"stage": DETECT, "clusters": clusters.len(), "unique_squats": stats.unique_squats}))
}

#[derive(Debug, Serialize)]
struct CommonRow<'a> {
    target: &'a str,
    typo: &'a str,
    sender: &'a str,
    sender_class: &'static str,
    legit_txs: usize,
    typo_txs: usize,
    usd_to_typo: String,
    delta_days: String,
}

#[derive(Debug, Serialize)]
struct AllSendersCsv<'a> {
    target: &'a str,
    typo: &'a str,
    unique_senders: usize,
    transactions: usize,
    dropped_custodial: usize,
    usd: String,
}

pub fn run_analyze(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let out = cfg.out_dir()?;
    let ing = load_ingested(out, ANALYZE)?;
    let clusters = load_clusters(out, &ing.dataset, ANALYZE)?;
    type PerCluster = (namesquat::tx_analysis::CommonSenderScan, Vec<namesquat::tx_analysis::AllSendersRow>);
    let results: Vec<PerCluster> = with_pool(cfg, || {
        clusters
            .par_iter()
            .map(|c| {
                Ok((
                    common_senders(c, &ing.store, &ing.labels, &ing.prices).map_err(data)?,
                    all_senders(c, &ing.store, &ing.labels, &ing.prices).map_err(data)?,
                ))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })??;

    let mut records = Vec::new();
    let mut warnings: Vec<PairWarning> = Vec::new();
    let mut all_rows = Vec::new();
    for (scan, rows) in results {
        records.extend(scan.records);
        warnings.extend(scan.warnings);
        all_rows.extend(rows);
    }
    let funds = namesquat::tx_analysis::funds_summary(&records, &ing.prices).map_err(data)?;
    let non_custodial: Vec<_> = records
        .iter()
        .filter(|r| r.sender_class == SenderClass::NonCustodial)
        .cloned()
        .collect();
    let funds_nc = namesquat::tx_analysis::funds_summary(&non_custodial, &ing.prices).map_err(data)?;
    let mut by_class: BTreeMap<&str, usize> = BTreeMap::new();
    for class in [
        SenderClass::CoinbaseCustodial,
        SenderClass::OtherCustodial,
        SenderClass::NonCustodial,
    ] {
        by_class.insert(class.as_str(), 0);
    }
    for r in &records {
        *by_class.get_mut(r.sender_class.as_str()).expect("all classes present") += 1;
    }
    let all_tx: usize = all_rows.iter().map(|r| r.transactions).sum();
    let dropped: usize = all_rows.iter().map(|r| r.dropped_custodial).sum();
    let all_usd: Vec<Decimal> = all_rows.iter().map(|r| r.usd).collect();

    let stats_json = |s: &namesquat::tx_analysis::UsdStats| {
        json!({
            "count": s.count,
            "total_usd": fmt_dec(s.total),
            "mean_usd": s.mean.map(fmt_dec),
            "median_usd": s.median.map(fmt_dec),
        })
    };
    let funds_json = json!({
        "common_senders": {
            "records": records.len(),
            "records_by_class": by_class,
            "per_transaction": stats_json(&funds.per_transaction),
            "per_transaction_non_custodial": stats_json(&funds_nc.per_transaction),
        },
        "all_senders": {
            "typo_names": all_rows.len(),
            "transactions": all_tx,
            "unique_senders": all_rows.iter().map(|r| r.unique_senders).sum::<usize>(),
            "dropped_custodial": dropped,
            "dropped_custodial_fraction": fmt_f64(if all_tx + dropped == 0 { 0.0 } else { dropped as f64 / (all_tx + dropped) as f64 }),
            "per_typo_usd": stats_json(&usd_stats(&all_usd)),
        },
        "skipped_pairs": warnings.len(),
    });

    let w = StageWriter::new(out, ANALYZE)?;
    w.write_csv(
        "common_senders.csv",
        records.iter().map(|r| CommonRow {
            target: r.target.display(),
            typo: r.typo.display(),
            sender: &r.sender,
            sender_class: r.sender_class.as_str(),
            legit_txs: r.legit_txs.len(),
            typo_txs: r.typo_txs.len(),
            usd_to_typo: fmt_dec(r.usd_to_typo),
            delta_days: fmt_f64(r.delta_days()),
        }),
    )?;
    w.write_csv(
        "all_senders.csv",
        all_rows.iter().map(|r| AllSendersCsv {
            target: r.target.display(),
            typo: r.typo.display(),
            unique_senders: r.unique_senders,
            transactions: r.transactions,
            dropped_custodial: r.dropped_custodial,
            usd: fmt_dec(r.usd),
        }),
    )?;
    w.write_table(
        "pair_totals.csv", &["target", "typo", "senders", "usd"],
        funds.per_pair.iter().map(|p| {
            [
                p.target.display().to_string(),
                p.typo.display().to_string(),
                p.senders.to_string(),
                fmt_dec(p.usd),
            ]
        }),
    )?;
    w.write_json("funds_summary.json", &funds_json)?;
    w.write_jsonl("warnings.jsonl", &warnings)?;
    w.commit()?;
    Ok(json!({"stage": "analyze-tx", "common_sender_records": records.len(), "skipped_pairs": warnings.len()}))
}


#[derive(Debug, Serialize)]
struct ClusterSummaryRow<'a> {
    target: &'a str,
    squats: usize,
    defensive: usize,
    min_delta_days: String,
    models: String,
}

#[derive(Debug, Serialize)]
struct CampaignRow<'a> {
    wallet: &'a str,
    unique_targets: usize,
    typo_names: usize,
    total_domains_owned: usize,
    one_to_many_avg: String,
    many_to_many_avg: String,
    bucket: String,
    campaign_style: &'static str,
}

pub fn run_report(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let out = cfg.out_dir()?;
    let dataset = load_dataset(out, REPORT)?;
    let clusters = load_clusters(out, &dataset, REPORT)?;
    let funds_path = require(out.join(ANALYZE).join("funds_summary.json"), REPORT, "analyze-tx")?;
    let funds: serde_json::Value = serde_json::from_str(&read(&funds_path)?).map_err(data)?;
    let stats = registration_stats(&clusters);
    let profiles = squatter_profiles(&clusters, &dataset);
    let provider = TrigramProvider::default();

    let mut campaigns = Vec::with_capacity(profiles.len());
    for p in &profiles {
        let names: Vec<String> = dataset.owned_by(&p.wallet).map(|r| r.name.label().to_string()).collect();
        let summary = match wallet_similarity(&p.wallet, &names, &p.typo_labels, &provider, &cfg.thresholds) {
            Ok(s) => Some(s),
            Err(SimilarityError::InsufficientNames { .. }) => None,
            Err(e) => return Err(data(e)),
        };
        let style = classify_campaign(p, summary.as_ref(), &cfg.thresholds);
        campaigns.push((p, summary, style));
    }
    let mut style_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, _, s) in &campaigns {
        *style_counts.entry(s.as_str()).or_insert(0) += 1;
    }
    let mut positions: BTreeMap<usize, usize> = BTreeMap::new();
    for c in &clusters {
        for s in &c.squats {
            *positions.entry(s.change_position).or_insert(0) += 1;
        }
    }

    let w = StageWriter::new(out, REPORT)?;
    w.write_csv(
        "cluster_summary.csv",
        clusters.iter().map(|c| ClusterSummaryRow {
            target: c.target.name.display(),
            squats: c.squats.len(),
            defensive: c.defensive.len(),
            min_delta_days: c.min_delta_days().map(fmt_f64).unwrap_or_default(),
            models: c
                .squats
                .iter()
                .map(|s| s.model)
                .collect::<BTreeSet<_>>()
                .iter()
                .map(|m| m.as_str())
                .collect::<Vec<_>>()
                .join(";"),
        }),
    )?;
    w.write_table(
        "model_histogram.csv", &["model", "count"],
        stats
            .per_model
            .iter()
            .map(|(m, n)| [m.as_str().to_string(), n.to_string()]),
    )?;
    w.write_table(
        "yearly_counts.csv", &["year", "count"],
        stats
            .per_year
            .iter()
            .map(|(y, n)| [y.to_string(), n.to_string()]),
    )?;
    w.write_table(
        "typos_per_target.csv", &["typos", "targets"],
        stats
            .typos_per_target
            .iter()
            .map(|(k, n)| [k.to_string(), n.to_string()]),
    )?;
    w.write_table(
        "change_positions.csv", &["position", "count"],
        positions
            .iter()
            .map(|(k, n)| [k.to_string(), n.to_string()]),
    )?;
    let by_class = funds["common_senders"]["records_by_class"].as_object().cloned().unwrap_or_default();
    w.write_table(
        "common_senders_by_class.csv", &["sender_class", "records"],
        by_class
            .iter()
            .map(|(k, v)| [k.clone(), v.to_string()]),
    )?;
    w.write_csv(
        "campaigns.csv",
        campaigns.iter().map(|(p, s, style)| CampaignRow {
            wallet: &p.wallet,
            unique_targets: p.unique_targets,
            typo_names: p.typo_names,
            total_domains_owned: p.total_domains_owned,
            one_to_many_avg: s.as_ref().map(|s| fmt_f64(s.one_to_many_avg)).unwrap_or_default(),
            many_to_many_avg: s.as_ref().map(|s| fmt_f64(s.many_to_many_avg)).unwrap_or_default(),
            bucket: s
                .as_ref()
                .map(|s| serde_json::to_value(s.bucket).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default())
                .unwrap_or_default(),
            campaign_style: style.as_str(),
        }),
    )?;
    w.write_json("funds_summary.json", &funds)?;
    w.write_json(
        "run.json",
        &json!({
            "generated_at": format_timestamp(&cfg.now()),
            "sim_thresholds": cfg.thresholds,
            "clusters": stats.clusters,
            "squat_entries": stats.squat_entries,
            "unique_squats": stats.unique_squats,
            "defensive_targets": stats.defensive_targets,
            "first_char_fraction": fmt_f64(stats.first_char_fraction),
            "campaign_styles": style_counts,
        }),
    )?;
    w.commit()?;
    Ok(json!({"stage": REPORT, "clusters": stats.clusters, "squatter_wallets": profiles.len()}))
}
