use std::collections::{BTreeMap, BTreeSet};

use namesquat::corpus::{Dataset, Name};
use namesquat::ground_truth::{compute_wallet_stats, filter_labeled, select_targets};
use namesquat::ingestion::{FixtureDir, DEFAULT_FAILURE_CEILING};
use namesquat::simulator::{simulate, write_simulation, ScenarioParams, StyleFractions};
use namesquat::squat_detector::{detect, DetectOptions, SquatCluster};
use namesquat::tx_analysis::{common_senders, SenderClass, TxDirection, TxStore};
use namesquat::typo_models::{classify_best, Alphabet};

fn params(seed: u64, events: usize) -> ScenarioParams {
    ScenarioParams {
        seed,
        n_legit: 300,
        n_filler: 900,
        n_decoys: 150,
        squatter_fraction: StyleFractions {
            single_typo: 0.1,
            multi_target_dissimilar: 0.1,
            multi_target_similar: 0.05,
        },
        typo_events: Some(events),
        ..ScenarioParams::default()
    }
}

struct Loaded {
    dataset: Dataset,
    store: TxStore,
    fx: FixtureDir,
}

fn load(dir: &std::path::Path) -> Loaded {
    let fx = FixtureDir::new(dir);
    let (dataset, counts) = fx.load_dataset(DEFAULT_FAILURE_CEILING).unwrap();
    assert_eq!(counts.failed, 0);
    let (store, _, _) = fx.load_tx_store(DEFAULT_FAILURE_CEILING).unwrap();
    Loaded { dataset, store, fx }
}

fn pairs(clusters: &[SquatCluster]) -> (BTreeSet<(String, String)>, BTreeSet<(String, String)>) {
    let mut squats = BTreeSet::new();
    let mut defensive = BTreeSet::new();
    for c in clusters {
        for s in &c.squats {
            squats.insert((c.target.name.display().to_string(), s.registration.name.display().to_string()));
        }
        for s in &c.defensive {
            defensive.insert((c.target.name.display().to_string(), s.registration.name.display().to_string()));
        }
    }
    (squats, defensive)
}

/// Every (target, registration) pair that passes the detection filters,
/// found by exhaustive comparison.
fn oracle(targets: &[Name], dataset: &Dataset) -> (BTreeSet<(String, String)>, BTreeSet<(String, String)>) {
    let target_set: BTreeSet<&str> = targets.iter().map(Name::display).collect();
    let mut squats = BTreeSet::new();
    let mut defensive = BTreeSet::new();
    for t in targets {
        let treg = dataset.get(t.display()).unwrap();
        let alphabet = Alphabet::for_name(t);
        for r in dataset.iter() {
            let n = &r.name;
            if n.namespace() != t.namespace() || n.is_subdomain() || target_set.contains(n.display()) {
                continue;
            }
            if classify_best(n.label(), t.label(), &alphabet).is_none() || r.registered_at < treg.registered_at {
                continue;
            }
            let pair = (t.display().to_string(), n.display().to_string());
            if r.owner == treg.owner {
                defensive.insert(pair);
            } else {
                squats.insert(pair);
            }
        }
    }
    (squats, defensive)
}

#[test]
fn detection_matches_manifest_and_oracle() {
    let p = params(11, 10);
    let sim = simulate(&p).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_simulation(dir.path(), &sim, &p).unwrap();
    let l = load(dir.path());
    let labels = l.fx.load_labels().unwrap();

    let stats = compute_wallet_stats(&l.dataset, &l.store.activity_counts(TxDirection::Both));
    let stats = filter_labeled(&stats, &labels);
    let sel = select_targets(&stats, &l.dataset, sim.manifest.top_n, sim.manifest.min_label_len).unwrap();
    let selected: BTreeSet<String> = sel.names.iter().map(|n| n.display().to_string()).collect();
    assert_eq!(selected, sim.manifest.targets.iter().cloned().collect());

    let clusters = detect(&sel.names, &l.dataset, &DetectOptions::default());
    let (squats, defensive) = pairs(&clusters);
    assert_eq!(squats, sim.manifest.squat_pairs());
    assert_eq!(defensive, sim.manifest.defensive_pairs());
    assert_eq!((squats.clone(), defensive.clone()), oracle(&sel.names, &l.dataset));

    let reported: BTreeSet<&str> = squats.iter().map(|(_, s)| s.as_str()).collect();
    for d in &sim.manifest.decoys {
        assert!(!reported.contains(d.as_str()));
    }
    for pre in &sim.manifest.predating {
        assert!(!reported.contains(pre.display.as_str()));
    }

    let prices = l.fx.load_prices().unwrap();
    let mut found: BTreeMap<(String, String, String), SenderClass> = BTreeMap::new();
    for c in &clusters {
        for r in common_senders(c, &l.store, &labels, &prices).unwrap().records {
            found.insert(
                (r.target.display().to_string(), r.typo.display().to_string(), r.sender.clone()),
                r.sender_class,
            );
        }
    }
    let planted: BTreeMap<(String, String, String), SenderClass> = sim
        .manifest
        .events
        .iter()
        .map(|e| ((e.target.clone(), e.typo.clone(), e.sender.clone()), e.sender_class))
        .collect();
    assert_eq!(found, planted);
}

#[test]
fn no_events_no_common_senders() {
    let p = params(12, 0);
    let sim = simulate(&p).unwrap();
    assert!(sim.manifest.events.is_empty());
    let dataset = Dataset::from_registrations(
        sim.records
            .iter()
            .map(|r| namesquat::corpus::parse_registration_line(&r.to_json_line(), 1).unwrap()),
    );
    let mut txs = sim.fixture.txs.clone();
    txs.extend(sim.fixture.utxos.iter().flat_map(namesquat::tx_analysis::utxo_expand));
    let store = TxStore::new(txs);
    let labels = namesquat::ground_truth::AddressLabelSet::from_records(&sim.fixture.labels).unwrap();
    let targets: Vec<Name> = sim.manifest.targets.iter().map(|t| Name::parse_display(t).unwrap()).collect();
    let clusters = detect(&targets, &dataset, &DetectOptions::default());
    assert!(!clusters.is_empty());
    for c in &clusters {
        assert!(common_senders(c, &store, &labels, &sim.fixture.prices).unwrap().records.is_empty());
    }
}

#[test]
fn written_fixtures_are_byte_identical() {
    let p = params(13, 5);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_simulation(a.path(), &simulate(&p).unwrap(), &p).unwrap();
    write_simulation(b.path(), &simulate(&p).unwrap(), &p).unwrap();
    for rel in [
        "registrations/registrations.jsonl",
        "txs/txs.jsonl",
        "utxos/utxos.jsonl",
        "prices.csv",
        "labels.jsonl",
        "manifest.json",
        "scenario.json",
    ] {
        let x = std::fs::read(a.path().join(rel)).unwrap();
        let y = std::fs::read(b.path().join(rel)).unwrap();
        assert_eq!(x, y, "{rel} differs");
    }
}
