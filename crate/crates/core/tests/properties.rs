use std::collections::BTreeSet;
use std::str::FromStr;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use rust_decimal::Decimal;

use namesquat::corpus::{normalize_name, Name, Namespace, NamespaceFamily};
use namesquat::ground_truth::{rank, WalletStats};
use namesquat::ingestion::{drain, JsonlSource, RawRecord};
use namesquat::similarity::{cosine, default_embed, wallet_similarity, SimilarityThresholds, TrigramProvider};
use namesquat::tx_analysis::{usd_stats, utxo_expand, UtxoRecord};
use namesquat::typo_models::{classify, damerau_distance, generate, generate_all, within_one_edit, Alphabet, TypoModel};
use namesquat::typoguard::{Decision, Guard, GuardHistory, GuardPolicy, NameList};

fn label() -> impl Strategy<Value = String> {
    "[a-z0-9]{1}[a-z0-9-]{3,18}[a-z0-9]{1}"
}

fn eth(label: &str) -> Name {
    normalize_name(&format!("{label}.eth"), &Namespace::Eth).unwrap()
}

proptest! {
    #[test]
    fn variants_are_one_edit_away(l in label()) {
        let t = eth(&l);
        let alphabet = Alphabet::for_family(NamespaceFamily::Eth);
        for v in generate_all(&t, &alphabet) {
            prop_assert_eq!(damerau_distance(&v.label, &l), 1, "{} -> {}", l, v.label);
            prop_assert_ne!(&v.label, &l);
        }
    }

    #[test]
    fn generate_and_classify_agree(l in label(), edit_pos in 0usize..24, c in "[a-z0-9_.-]") {
        let t = eth(&l);
        let alphabet = Alphabet::for_family(NamespaceFamily::Eth);
        let all: BTreeSet<String> = generate_all(&t, &alphabet).into_iter().map(|v| v.label).collect();
        for m in TypoModel::ALL {
            for v in generate(&t, m, &alphabet) {
                prop_assert!(classify(&v.label, &l, &alphabet).contains(&m), "{} {:?} {}", l, m, v.label);
            }
        }
        // arbitrary nearby strings classify only if generated
        let chars: Vec<char> = l.chars().collect();
        let c = c.chars().next().unwrap();
        let p = edit_pos % (chars.len() + 1);
        let mut candidates = Vec::new();
        let mut ins = chars.clone();
        ins.insert(p, c);
        candidates.push(ins);
        if p < chars.len() {
            let mut sub = chars.clone();
            sub[p] = c;
            candidates.push(sub);
            let mut del = chars.clone();
            del.remove(p);
            candidates.push(del);
        }
        if p + 1 < chars.len() {
            let mut sw = chars.clone();
            sw.swap(p, p + 1);
            candidates.push(sw);
        }
        for cand in candidates {
            let cand: String = cand.into_iter().collect();
            if !classify(&cand, &l, &alphabet).is_empty() {
                prop_assert!(all.contains(&cand), "{} classified against {} but not generated", cand, l);
            }
        }
    }

    #[test]
    fn linear_edit_check_matches_distance(a in "[a-c]{0,7}", b in "[a-c]{0,7}") {
        prop_assert_eq!(within_one_edit(&a, &b), damerau_distance(&a, &b) <= 1);
    }

    #[test]
    fn ranking_is_scale_invariant(
        rows in prop::collection::vec((0u64..10_000, 1u64..50), 1..60),
        k in 2u64..1000,
        top in 1usize..20,
    ) {
        let stats: Vec<WalletStats> = rows
            .iter()
            .enumerate()
            .map(|(i, (t, d))| WalletStats { address: format!("w{i:03}"), tx_count: *t, domain_count: *d, flags: BTreeSet::new() })
            .collect();
        let mut a = stats.clone();
        rank(&mut a);
        let mut b: Vec<WalletStats> = stats.iter().map(|s| WalletStats { tx_count: s.tx_count * k, ..s.clone() }).collect();
        rank(&mut b);
        let sa: BTreeSet<&str> = a.iter().take(top).map(|s| s.address.as_str()).collect();
        let sb: BTreeSet<&str> = b.iter().take(top).map(|s| s.address.as_str()).collect();
        prop_assert_eq!(sa, sb);
    }

    #[test]
    fn more_domains_strictly_lower_score(t in 1u64..1_000_000, d in 1u64..1000, extra in 1u64..1000) {
        let base = WalletStats { address: "a".into(), tx_count: t, domain_count: d, flags: BTreeSet::new() };
        let more = WalletStats { domain_count: d + extra, ..base.clone() };
        prop_assert!(more.score() < base.score());
        prop_assert_eq!(base.rank_cmp(&more), std::cmp::Ordering::Less);
    }

    #[test]
    fn utxo_expansion_conserves_value(n in 1usize..40, units in 0i64..1_000_000_000_000, scale in 0u32..9) {
        let amount = Decimal::new(units, scale);
        let rec = UtxoRecord {
            hash: "h".into(),
            inputs: (0..n).map(|i| format!("addr_in{i}")).collect(),
            output: "addr_out".into(),
            amount,
            timestamp: Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap(),
        };
        let txs = utxo_expand(&rec);
        prop_assert_eq!(txs.len(), n);
        let sum: Decimal = txs.iter().map(|t| t.amount).sum();
        prop_assert_eq!(sum, amount);
        prop_assert!(txs.iter().all(|t| t.receiver == "addr_out" && !t.amount.is_sign_negative()));
    }

    #[test]
    fn usd_stats_match_sorting_oracle(values in prop::collection::vec(0i64..10_000_000, 1..50)) {
        let ds: Vec<Decimal> = values.iter().map(|v| Decimal::new(*v, 2)).collect();
        let s = usd_stats(&ds);
        let mut sorted = values.clone();
        sorted.sort();
        let n = sorted.len();
        let median = if n % 2 == 1 { sorted[n / 2] as f64 } else { (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0 } / 100.0;
        let mean = values.iter().sum::<i64>() as f64 / n as f64 / 100.0;
        let got_median = f64::from_str(&s.median.unwrap().to_string()).unwrap();
        let got_mean = f64::from_str(&s.mean.unwrap().to_string()).unwrap();
        prop_assert!((got_median - median).abs() <= 1e-9 * median.abs().max(1.0));
        prop_assert!((got_mean - mean).abs() <= 1e-9 * mean.abs().max(1.0));
    }

    #[test]
    fn cosine_is_symmetric(a in "[a-z]{1,12}", b in "[a-z]{1,12}") {
        let (u, v) = (default_embed(&a), default_embed(&b));
        prop_assert_eq!(cosine(&u, &v).unwrap(), cosine(&v, &u).unwrap());
        prop_assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn many_to_many_ignores_order(mut names in prop::collection::btree_set("[a-z]{3,10}", 2..12), seed in 0u64..1000) {
        let provider = TrigramProvider::default();
        let th = SimilarityThresholds::default();
        let mut list: Vec<String> = std::mem::take(&mut names).into_iter().collect();
        let typo = vec![list[0].clone()];
        let a = wallet_similarity("w", &list, &typo, &provider, &th).unwrap();
        let k = (seed as usize) % list.len();
        list.rotate_left(k);
        list.reverse();
        let b = wallet_similarity("w", &list, &typo, &provider, &th).unwrap();
        prop_assert!((a.many_to_many_avg - b.many_to_many_avg).abs() < 1e-12);
        prop_assert_eq!(a.bucket, b.bucket);
    }

    #[test]
    fn guard_invariants(history in prop::collection::btree_set(label(), 1..15), pick in 0usize..1000) {
        let at = Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap();
        let mut h = GuardHistory::new();
        let names: Vec<Name> = history.iter().map(|l| eth(l)).collect();
        for n in &names {
            h.record_send(n, at);
        }
        let alphabet = Alphabet::for_family(NamespaceFamily::Eth);
        let empty = NameList::default();
        let guard = Guard::new(&h, &empty, &empty, GuardPolicy::default());
        for n in &names {
            prop_assert_eq!(guard.check(n, &alphabet).decision, Decision::Allow);
        }
        let target = &names[pick % names.len()];
        for v in generate_all(target, &alphabet) {
            let n = v.name();
            if h.contains(&n) {
                continue;
            }
            let verdict = guard.check(&n, &alphabet);
            prop_assert_eq!(verdict.decision, Decision::Warn, "{}", n.display());
            prop_assert_eq!(verdict.clone(), guard.check(&n, &alphabet));
        }
    }

    #[test]
    fn pagination_is_lossless(n in 0usize..300, page in 1usize..40) {
        let text: String = (0..n).map(|i| format!("{{\"i\":{i}}}\n")).collect();
        let src = JsonlSource::from_text("f", &text, page);
        let mut seen = Vec::new();
        let counts = drain(&src, |r: &RawRecord| Ok::<_, String>(r.text.clone()), |t| seen.push(t), 0.0).unwrap();
        prop_assert_eq!(counts.fetched, n);
        let expected: Vec<String> = text.lines().map(str::to_string).collect();
        prop_assert_eq!(seen, expected);
    }
}
