//! Pre-send typo warnings: cold checks against a global blocklist and a
//! popular-name list, warm checks against the user's own send history.
//!
//! The guard is advisory. `check` is read-only and may run concurrently
//! as long as no thread is mutating the history.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{format_timestamp, parse_timestamp, CorpusError, Name, Namespace};
use crate::typo_models::{classify, Alphabet, TypoModel};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GuardError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub first_used: DateTime<Utc>,
    pub last_used: DateTime<Utc>,
    pub send_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct HistoryLine {
    display: String,
    first_used: String,
    last_used: String,
    send_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GuardHistory {
    entries: BTreeMap<Name, HistoryEntry>,
}

impl GuardHistory {
    pub fn new() -> GuardHistory {
        GuardHistory::default()
    }

    pub fn record_send(&mut self, name: &Name, at: DateTime<Utc>) {
        self.entries
            .entry(name.clone())
            .and_modify(|e| {
                e.send_count += 1;
                e.first_used = e.first_used.min(at);
                e.last_used = e.last_used.max(at);
            })
            .or_insert(HistoryEntry {
                first_used: at,
                last_used: at,
                send_count: 1,
            });
    }

    pub fn get(&self, name: &Name) -> Option<&HistoryEntry> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &Name) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &Name> {
        self.entries.keys()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (name, e) in &self.entries {
            let line = HistoryLine {
                display: name.display().to_string(),
                first_used: format_timestamp(&e.first_used),
                last_used: format_timestamp(&e.last_used),
                send_count: e.send_count,
            };
            out.push_str(&serde_json::to_string(&line).expect("history serialization is infallible"));
            out.push('\n');
        }
        out
    }

    pub fn load_jsonl<R: BufRead>(reader: R) -> Result<GuardHistory, GuardError> {
        let mut history = GuardHistory::new();
        for (i, line) in reader.lines().enumerate() {
            let n = i + 1;
            let line = line.map_err(|e| GuardError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let perr = |message: String| GuardError::Parse { line: n, message };
            let rec: HistoryLine = serde_json::from_str(&line).map_err(|e| perr(e.to_string()))?;
            let name = Name::parse_display(&rec.display).map_err(|e| perr(e.to_string()))?;
            let ts = |raw: &str, field: &str| parse_timestamp(raw, n, field).map_err(|e: CorpusError| perr(e.to_string()));
            let entry = HistoryEntry {
                first_used: ts(&rec.first_used, "first_used")?,
                last_used: ts(&rec.last_used, "last_used")?,
                send_count: rec.send_count,
            };
            if entry.send_count == 0 {
                return Err(perr("send_count must be at least 1".into()));
            }
            if entry.last_used < entry.first_used {
                return Err(perr("last_used precedes first_used".into()));
            }
            if history.entries.insert(name, entry).is_some() {
                return Err(perr(format!("duplicate entry {}", rec.display)));
            }
        }
        Ok(history)
    }
}

/// A set of names indexed by namespace for variant scans.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NameList {
    names: BTreeSet<Name>,
    by_namespace: HashMap<Namespace, Vec<Name>>,
}

impl NameList {
    pub fn new(names: impl IntoIterator<Item = Name>) -> NameList {
        let names: BTreeSet<Name> = names.into_iter().collect();
        let mut by_namespace: HashMap<Namespace, Vec<Name>> = HashMap::new();
        for n in &names {
            by_namespace.entry(n.namespace().clone()).or_default().push(n.clone());
        }
        NameList { names, by_namespace }
    }

    pub fn contains(&self, name: &Name) -> bool {
        self.names.contains(name)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Name> {
        self.names.iter()
    }

    fn in_namespace(&self, ns: &Namespace) -> &[Name] {
        self.by_namespace.get(ns).map(Vec::as_slice).unwrap_or(&[])
    }

    /// One display per line; blank lines and `#` comments are ignored.
    pub fn load<R: BufRead>(reader: R) -> Result<NameList, GuardError> {
        let mut names = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| GuardError::Io(e.to_string()))?;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            names.push(Name::parse_display(content).map_err(|e| GuardError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(NameList::new(names))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Decision {
    Allow,
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarnReason {
    None,
    ColdBlocklist,
    ColdVariantOfPopular,
    WarmVariantOfHistory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GuardVerdict {
    pub decision: Decision,
    pub reason: WarnReason,
    pub matched_target: Option<Name>,
    pub model: Option<TypoModel>,
}

impl GuardVerdict {
    pub fn allow() -> GuardVerdict {
        GuardVerdict {
            decision: Decision::Allow,
            reason: WarnReason::None,
            matched_target: None,
            model: None,
        }
    }

    fn warn(reason: WarnReason, matched_target: Option<Name>, model: Option<TypoModel>) -> GuardVerdict {
        GuardVerdict {
            decision: Decision::Warn,
            reason,
            matched_target,
            model,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardPolicy {
    /// When set, blocklisted names warn even if they are in the history.
    pub blocklist_overrides_history: bool,
}

/// Best (model, target) over `candidates` by model priority, then display.
fn best_match<'a>(recipient: &Name, candidates: &'a [Name], alphabet: &Alphabet) -> Option<(TypoModel, &'a Name)> {
    candidates
        .iter()
        .filter(|c| c.subdomain() == recipient.subdomain() && *c != recipient)
        .filter_map(|c| TypoModel::best_of(&classify(recipient.label(), c.label(), alphabet)).map(|m| (m, c)))
        .min_by(|(ma, a), (mb, b)| {
            ma.priority_rank()
                .cmp(&mb.priority_rank())
                .then_with(|| a.display().cmp(b.display()))
        })
}

pub struct Guard<'a> {
    pub history: &'a GuardHistory,
    pub blocklist: &'a NameList,
    pub popular: &'a NameList,
    pub policy: GuardPolicy,
    history_index: HashMap<Namespace, Vec<Name>>,
}

impl<'a> Guard<'a> {
    pub fn new(history: &'a GuardHistory, blocklist: &'a NameList, popular: &'a NameList, policy: GuardPolicy) -> Self {
        let mut history_index: HashMap<Namespace, Vec<Name>> = HashMap::new();
        for n in history.names() {
            history_index.entry(n.namespace().clone()).or_default().push(n.clone());
        }
        Guard {
            history,
            blocklist,
            popular,
            policy,
            history_index,
        }
    }

    pub fn check(&self, recipient: &Name, alphabet: &Alphabet) -> GuardVerdict {
        let blocked = self.blocklist.contains(recipient);
        if blocked && self.policy.blocklist_overrides_history {
            return GuardVerdict::warn(WarnReason::ColdBlocklist, None, None);
        }
        if self.history.contains(recipient) {
            return GuardVerdict::allow();
        }
        if blocked {
            return GuardVerdict::warn(WarnReason::ColdBlocklist, None, None);
        }
        let ns = recipient.namespace();
        if let Some((model, target)) = best_match(recipient, self.popular.in_namespace(ns), alphabet) {
            return GuardVerdict::warn(WarnReason::ColdVariantOfPopular, Some(target.clone()), Some(model));
        }
        let history = self.history_index.get(ns).map(Vec::as_slice).unwrap_or(&[]);
        if let Some((model, target)) = best_match(recipient, history, alphabet) {
            return GuardVerdict::warn(WarnReason::WarmVariantOfHistory, Some(target.clone()), Some(model));
        }
        GuardVerdict::allow()
    }
}

/// One-shot check; builds the history index on every call.
pub fn check(
    history: &GuardHistory,
    blocklist: &NameList,
    popular: &NameList,
    recipient: &Name,
    alphabet: &Alphabet,
) -> GuardVerdict {
    Guard::new(history, blocklist, popular, GuardPolicy::default()).check(recipient, alphabet)
}
