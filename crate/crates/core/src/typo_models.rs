//! The seven single-edit typo models, their generators, a structural
//! classifier, and the optimal-string-alignment distance used to check them.
//!
//! Every generated variant is exactly one Damerau edit away from its target.
//! When a variant label is reachable under several models, [`generate_all`]
//! labels it once following [`TypoModel::PRIORITY`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Name, NamespaceFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypoModel {
    Duplication,
    Addition,
    Removal,
    Swapping,
    Substitution,
    Hyphenation,
    Pluralization,
}

impl TypoModel {
    pub const ALL: [TypoModel; 7] = [
        TypoModel::Duplication,
        TypoModel::Addition,
        TypoModel::Removal,
        TypoModel::Swapping,
        TypoModel::Substitution,
        TypoModel::Hyphenation,
        TypoModel::Pluralization,
    ];

    /// Most specific first.
    pub const PRIORITY: [TypoModel; 7] = [
        TypoModel::Duplication,
        TypoModel::Swapping,
        TypoModel::Substitution,
        TypoModel::Removal,
        TypoModel::Hyphenation,
        TypoModel::Pluralization,
        TypoModel::Addition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TypoModel::Duplication => "duplication",
            TypoModel::Addition => "addition",
            TypoModel::Removal => "removal",
            TypoModel::Swapping => "swapping",
            TypoModel::Substitution => "substitution",
            TypoModel::Hyphenation => "hyphenation",
            TypoModel::Pluralization => "pluralization",
        }
    }

    pub fn priority_rank(self) -> usize {
        TypoModel::PRIORITY.iter().position(|m| *m == self).unwrap_or(usize::MAX)
    }

    /// Highest-priority member of `models`.
    pub fn best_of(models: &BTreeSet<TypoModel>) -> Option<TypoModel> {
        models.iter().copied().min_by_key(|m| m.priority_rank())
    }
}

impl fmt::Display for TypoModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TypoModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TypoModel::ALL
            .iter()
            .copied()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown typo model {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("alphabet must contain at least one character")]
pub struct EmptyAlphabet;

/// Character set used by insertion and substitution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    chars: Vec<char>,
}

impl Alphabet {
    pub fn new(chars: impl IntoIterator<Item = char>) -> Result<Alphabet, EmptyAlphabet> {
        let set: BTreeSet<char> = chars.into_iter().collect();
        if set.is_empty() {
            return Err(EmptyAlphabet);
        }
        Ok(Alphabet {
            chars: set.into_iter().collect(),
        })
    }

    /// `a-z`, `0-9` and `-`; ADA handles additionally allow `_` and `.`.
    pub fn for_family(family: NamespaceFamily) -> Alphabet {
        let mut chars: Vec<char> = ('a'..='z').chain('0'..='9').collect();
        chars.push('-');
        if family == NamespaceFamily::Adah {
            chars.push('_');
            chars.push('.');
        }
        Alphabet::new(chars).expect("non-empty")
    }

    pub fn for_name(name: &Name) -> Alphabet {
        Alphabet::for_family(name.namespace().family())
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn contains(&self, c: char) -> bool {
        self.chars.binary_search(&c).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TypoVariant {
    pub target: Name,
    pub label: String,
    pub model: TypoModel,
    /// 0-based index of the change in the target label; the label length
    /// for pluralization.
    pub change_position: usize,
}

impl TypoVariant {
    pub fn display(&self) -> String {
        self.target.namespace().display(&self.label)
    }

    pub fn name(&self) -> Name {
        self.target.sibling(&self.label)
    }
}

/// Variants may not be empty, nor start or end with `-` or `.`.
pub fn is_valid_variant_label(label: &[char]) -> bool {
    match (label.first(), label.last()) {
        (Some(first), Some(last)) => !matches!(first, '-' | '.') && !matches!(last, '-' | '.'),
        _ => false,
    }
}

/// Variant label -> smallest change position producing it.
fn raw_variants(target: &[char], model: TypoModel, alphabet: &Alphabet) -> BTreeMap<String, usize> {
    let n = target.len();
    let mut out: BTreeMap<String, usize> = BTreeMap::new();
    let mut emit = |chars: Vec<char>, pos: usize| {
        if chars.as_slice() == target || !is_valid_variant_label(&chars) {
            return;
        }
        let label: String = chars.into_iter().collect();
        out.entry(label).and_modify(|p| *p = (*p).min(pos)).or_insert(pos);
    };

    match model {
        TypoModel::Duplication => {
            for i in 0..n {
                let mut v = target.to_vec();
                v.insert(i, target[i]);
                emit(v, i);
            }
        }
        TypoModel::Addition => {
            for i in 0..=n {
                for &c in alphabet.chars() {
                    let mut v = target.to_vec();
                    v.insert(i, c);
                    emit(v, i);
                }
            }
        }
        TypoModel::Removal => {
            for i in 0..n {
                let mut v = target.to_vec();
                v.remove(i);
                emit(v, i);
            }
        }
        TypoModel::Swapping => {
            for i in 0..n.saturating_sub(1) {
                if target[i] != target[i + 1] {
                    let mut v = target.to_vec();
                    v.swap(i, i + 1);
                    emit(v, i);
                }
            }
        }
        TypoModel::Substitution => {
            for i in 0..n {
                for &c in alphabet.chars() {
                    if c != target[i] {
                        let mut v = target.to_vec();
                        v[i] = c;
                        emit(v, i);
                    }
                }
            }
        }
        TypoModel::Hyphenation => {
            for i in 1..n {
                let mut v = target.to_vec();
                v.insert(i, '-');
                emit(v, i);
            }
        }
        TypoModel::Pluralization => {
            if n > 0 && target[n - 1] != 's' {
                let mut v = target.to_vec();
                v.push('s');
                emit(v, n);
            }
        }
    }
    out
}

/// All variants of `target` under one model, sorted by label.
pub fn generate(target: &Name, model: TypoModel, alphabet: &Alphabet) -> Vec<TypoVariant> {
    let chars: Vec<char> = target.label().chars().collect();
    raw_variants(&chars, model, alphabet)
        .into_iter()
        .map(|(label, change_position)| TypoVariant {
            target: target.clone(),
            label,
            model,
            change_position,
        })
        .collect()
}

/// Union over the seven models, each label once under its priority model.
pub fn generate_all(target: &Name, alphabet: &Alphabet) -> Vec<TypoVariant> {
    let chars: Vec<char> = target.label().chars().collect();
    let mut labeled: BTreeMap<String, (TypoModel, usize)> = BTreeMap::new();
    for model in TypoModel::PRIORITY {
        for (label, pos) in raw_variants(&chars, model, alphabet) {
            labeled.entry(label).or_insert((model, pos));
        }
    }
    labeled
        .into_iter()
        .map(|(label, (model, change_position))| TypoVariant {
            target: target.clone(),
            label,
            model,
            change_position,
        })
        .collect()
}

/// Every model under which `candidate` is a variant of `target`.
///
/// Decides membership structurally from the shape of the single edit; no
/// variants are materialized.
pub fn classify(candidate: &str, target: &str, alphabet: &Alphabet) -> BTreeSet<TypoModel> {
    let v: Vec<char> = candidate.chars().collect();
    let t: Vec<char> = target.chars().collect();
    classify_chars(&v, &t, alphabet)
}

pub(crate) fn classify_chars(v: &[char], t: &[char], alphabet: &Alphabet) -> BTreeSet<TypoModel> {
    let mut models = BTreeSet::new();
    if v == t || !is_valid_variant_label(v) {
        return models;
    }
    let n = t.len();
    let first_diff = v.iter().zip(t).position(|(a, b)| a != b);

    if v.len() == n + 1 {
        let i = first_diff.unwrap_or(n);
        if v[i + 1..] != t[i..] {
            return models;
        }
        let x = v[i];
        if alphabet.contains(x) {
            models.insert(TypoModel::Addition);
        }
        if i > 0 && t[i - 1] == x {
            models.insert(TypoModel::Duplication);
        }
        // a valid variant never carries the hyphen at either end, so any
        // hyphen insertion producing it is internal
        if x == '-' && n >= 2 {
            models.insert(TypoModel::Hyphenation);
        }
        if i == n && x == 's' && t[n - 1] != 's' {
            models.insert(TypoModel::Pluralization);
        }
    } else if v.len() + 1 == n {
        let i = first_diff.unwrap_or(v.len());
        if v[i..] == t[i + 1..] {
            models.insert(TypoModel::Removal);
        }
    } else if v.len() == n {
        let diffs: Vec<usize> = (0..n).filter(|&k| v[k] != t[k]).take(3).collect();
        match diffs.as_slice() {
            [k] if alphabet.contains(v[*k]) => {
                models.insert(TypoModel::Substitution);
            }
            [a, b] if *b == a + 1 && v[*a] == t[*b] && v[*b] == t[*a] => {
                models.insert(TypoModel::Swapping);
            }
            _ => {}
        }
    }
    models
}

/// Highest-priority model relating `candidate` to `target`, if any.
pub fn classify_best(candidate: &str, target: &str, alphabet: &Alphabet) -> Option<TypoModel> {
    TypoModel::best_of(&classify(candidate, target, alphabet))
}

/// Optimal-string-alignment distance: insertions, deletions, substitutions
/// and adjacent transpositions each cost one.
pub fn damerau_distance(a: &str, b: &str) -> usize {
    if a.is_ascii() && b.is_ascii() {
        osa(a.as_bytes(), b.as_bytes())
    } else {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        osa(&a, &b)
    }
}

const STACK_ROW: usize = 64;

fn osa<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (n, m) = (a.len(), b.len());
    if n == 0 {
        return m;
    }
    if m == 0 {
        return n;
    }
    // three rolling rows: i-2, i-1, i
    let width = m + 1;
    let mut stack = [0usize; 3 * (STACK_ROW + 1)];
    let mut heap = Vec::new();
    let rows: &mut [usize] = if m <= STACK_ROW {
        &mut stack[..3 * width]
    } else {
        heap.resize(3 * width, 0);
        &mut heap
    };
    for (j, cell) in rows[width..2 * width].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        let (pp, rest) = rows.split_at_mut(width);
        let (prev, cur) = rest.split_at_mut(width);
        cur[0] = i;
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut best = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(pp[j - 2] + 1);
            }
            cur[j] = best;
        }
        rows.rotate_left(width);
    }
    rows[width + m]
}

/// True when the OSA distance between `a` and `b` is at most one. Linear
/// time; used where full distances are not needed.
pub fn within_one_edit(a: &str, b: &str) -> bool {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    match long.len() - short.len() {
        0 => {
            let diffs: Vec<usize> = (0..short.len()).filter(|&k| short[k] != long[k]).take(3).collect();
            match diffs.as_slice() {
                [] | [_] => true,
                [x, y] => *y == x + 1 && short[*x] == long[*y] && short[*y] == long[*x],
                _ => false,
            }
        }
        1 => {
            let i = short.iter().zip(long.iter()).position(|(p, q)| p != q).unwrap_or(short.len());
            short[i..] == long[i + 1..]
        }
        _ => false,
    }
}

/// Fraction of variants whose change sits at position 0.
pub fn change_position_stats(variants: &[TypoVariant]) -> f64 {
    if variants.is_empty() {
        return 0.0;
    }
    let at_zero = variants.iter().filter(|v| v.change_position == 0).count();
    at_zero as f64 / variants.len() as f64
}

pub fn change_position_histogram(variants: &[TypoVariant]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for v in variants {
        *hist.entry(v.change_position).or_insert(0) += 1;
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{normalize_name, Namespace};

    fn eth(label: &str) -> Name {
        normalize_name(label, &Namespace::Eth).unwrap()
    }

    fn labels(vs: &[TypoVariant]) -> BTreeSet<String> {
        vs.iter().map(|v| v.label.clone()).collect()
    }

    fn az() -> Alphabet {
        Alphabet::for_family(NamespaceFamily::Eth)
    }

    #[test]
    fn table_exemplars() {
        let t = eth("johndoe");
        let a = az();
        let expect = [
            (TypoModel::Duplication, "jjohndoe"),
            (TypoModel::Addition, "johndoew"),
            (TypoModel::Removal, "johndo"),
            (TypoModel::Swapping, "johnode"),
            (TypoModel::Substitution, "nohndoe"),
            (TypoModel::Hyphenation, "john-doe"),
            (TypoModel::Pluralization, "johndoes"),
        ];
        for (model, label) in expect {
            assert!(labels(&generate(&t, model, &a)).contains(label), "{model} {label}");
        }
        assert_eq!(
            labels(&generate(&t, TypoModel::Pluralization, &a)),
            BTreeSet::from(["johndoes".to_string()])
        );
    }

    #[test]
    fn removal_enumeration() {
        let got = labels(&generate(&eth("abcde"), TypoModel::Removal, &az()));
        let want: BTreeSet<String> = ["bcde", "acde", "abde", "abce", "abcd"].iter().map(|s| s.to_string()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn vitalik_variants() {
        let t = eth("vitalik");
        assert!(labels(&generate(&t, TypoModel::Swapping, &az())).contains("vitalki"));
        let all = generate_all(&t, &az());
        let kk = all.iter().find(|v| v.label == "vitalikk").unwrap();
        assert_eq!(kk.model, TypoModel::Duplication);
        assert!(!labels(&all).contains("vitalik"));
    }

    #[test]
    fn hyphenation_internal_only() {
        let a = az();
        assert!(generate(&eth("a"), TypoModel::Hyphenation, &a).is_empty());
        let aa = generate_all(&eth("aa"), &a);
        assert!(!labels(&aa).contains("aa"));
        assert!(!labels(&aa).contains("-aa"));
        assert!(!labels(&aa).contains("aa-"));
        let hy: Vec<_> = aa.iter().filter(|v| v.model == TypoModel::Hyphenation).collect();
        assert_eq!(hy.len(), 1);
        assert_eq!(hy[0].label, "a-a");
    }

    #[test]
    fn duplication_dedups_within_runs() {
        let v = generate(&eth("aab"), TypoModel::Duplication, &az());
        assert_eq!(labels(&v), BTreeSet::from(["aaab".to_string(), "aabb".to_string()]));
        assert_eq!(v.iter().find(|x| x.label == "aaab").unwrap().change_position, 0);
        // swapping identical neighbours yields the target itself
        assert_eq!(
            labels(&generate(&eth("aab"), TypoModel::Swapping, &az())),
            BTreeSet::from(["aba".to_string()])
        );
    }

    #[test]
    fn pluralization_skips_trailing_s() {
        assert!(generate(&eth("kings"), TypoModel::Pluralization, &az()).is_empty());
        assert_eq!(
            generate(&eth("johndoe"), TypoModel::Pluralization, &az())[0].change_position,
            7
        );
    }

    #[test]
    fn classify_examples() {
        let a = az();
        assert_eq!(classify("vitalki", "vitalik", &a), BTreeSet::from([TypoModel::Swapping]));
        assert!(classify("vitalik", "vitalik", &a).is_empty());
        assert_eq!(
            classify("vitaliks", "vitalik", &a),
            BTreeSet::from([TypoModel::Pluralization, TypoModel::Addition])
        );
        assert_eq!(
            classify("vitalikk", "vitalik", &a),
            BTreeSet::from([TypoModel::Duplication, TypoModel::Addition])
        );
        assert_eq!(
            classify("v-italik", "vitalik", &a),
            BTreeSet::from([TypoModel::Hyphenation, TypoModel::Addition])
        );
        assert_eq!(classify("italik", "vitalik", &a), BTreeSet::from([TypoModel::Removal]));
        assert_eq!(classify("vitqlik", "vitalik", &a), BTreeSet::from([TypoModel::Substitution]));
        assert!(classify("vitalik", "vitqlikk", &a).is_empty());
        assert!(classify("-vitalik", "vitalik", &a).is_empty());
        assert!(classify("vitaliK", "vitalik", &a).is_empty(), "K is outside the alphabet");
    }

    #[test]
    fn classify_best_uses_priority() {
        assert_eq!(classify_best("vitaliks", "vitalik", &az()), Some(TypoModel::Pluralization));
        assert_eq!(classify_best("vitalik", "vitalik", &az()), None);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(damerau_distance("vitalik", "vitalik"), 0);
        assert_eq!(damerau_distance("vitalik", "vitalki"), 1);
        assert_eq!(damerau_distance("abc", ""), 3);
        assert_eq!(damerau_distance("", "abc"), 3);
        assert_eq!(damerau_distance("ca", "abc"), 3);
        assert_eq!(damerau_distance("kitten", "sitting"), 3);
    }

    #[test]
    fn within_one_agrees_with_distance() {
        let words = ["abc", "acb", "abd", "ab", "abcd", "xabc", "bac", "cab", "", "a", "abdc", "badc"];
        for a in words {
            for b in words {
                assert_eq!(within_one_edit(a, b), damerau_distance(a, b) <= 1, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn position_stats() {
        let t = eth("abcdef");
        assert_eq!(change_position_stats(&[]), 0.0);
        let v0 = TypoVariant {
            target: t.clone(),
            label: "bbcdef".into(),
            model: TypoModel::Substitution,
            change_position: 0,
        };
        let v3 = TypoVariant {
            change_position: 3,
            label: "abcxef".into(),
            ..v0.clone()
        };
        assert_eq!(change_position_stats(&[v0, v3]), 0.5);
    }

    #[test]
    fn model_names_round_trip() {
        for m in TypoModel::ALL {
            assert_eq!(m.as_str().parse::<TypoModel>().unwrap(), m);
        }
        assert!(Alphabet::new([]).is_err());
    }
}
