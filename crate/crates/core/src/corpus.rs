//! Names, registrations and the immutable dataset index every analysis
//! queries.
//!
//! All matching happens on the ASCII (punycode) form of a label. Subdomains
//! such as `funds.johndoe.eth` are kept in the dataset but carry their
//! parent label separately so that typo targeting can skip them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("label is empty after normalization")]
    EmptyLabel,
    #[error("unknown namespace {0:?}")]
    UnknownNamespace(String),
    #[error("name {raw:?} does not belong to namespace {namespace}")]
    NamespaceMismatch { raw: String, namespace: String },
    #[error("label {0:?} contains a namespace separator")]
    InvalidLabel(String),
    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Naming system family. Unstoppable Domains spans several TLDs that all
/// belong to the `Ud` family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamespaceFamily {
    Eth,
    Ud,
    Adah,
}

impl NamespaceFamily {
    pub const ALL: [NamespaceFamily; 3] = [NamespaceFamily::Eth, NamespaceFamily::Ud, NamespaceFamily::Adah];

    pub fn as_str(self) -> &'static str {
        match self {
            NamespaceFamily::Eth => "eth",
            NamespaceFamily::Ud => "ud",
            NamespaceFamily::Adah => "adah",
        }
    }
}

impl fmt::Display for NamespaceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NamespaceFamily {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eth" | "ens" => Ok(NamespaceFamily::Eth),
            "ud" => Ok(NamespaceFamily::Ud),
            "adah" => Ok(NamespaceFamily::Adah),
            other => Err(CorpusError::UnknownNamespace(other.to_string())),
        }
    }
}

/// A concrete namespace: `eth`, `ud:<tld>` or `adah`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Namespace {
    Eth,
    Ud(String),
    Adah,
}

impl Namespace {
    pub fn family(&self) -> NamespaceFamily {
        match self {
            Namespace::Eth => NamespaceFamily::Eth,
            Namespace::Ud(_) => NamespaceFamily::Ud,
            Namespace::Adah => NamespaceFamily::Adah,
        }
    }

    /// Full display form of `label` in this namespace.
    pub fn display(&self, label: &str) -> String {
        match self {
            Namespace::Eth => format!("{label}.eth"),
            Namespace::Ud(tld) => format!("{label}.{tld}"),
            Namespace::Adah => format!("${label}"),
        }
    }

    /// Earliest plausible registration time for the namespace.
    pub fn launch_epoch(&self) -> DateTime<Utc> {
        let (y, m, d) = match self {
            Namespace::Eth => (2017, 5, 1),
            Namespace::Ud(_) => (2018, 1, 1),
            Namespace::Adah => (2021, 1, 1),
        };
        Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
    }
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Namespace::Eth => f.write_str("eth"),
            Namespace::Ud(tld) => write!(f, "ud:{tld}"),
            Namespace::Adah => f.write_str("adah"),
        }
    }
}

impl FromStr for Namespace {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "eth" => return Ok(Namespace::Eth),
            "adah" => return Ok(Namespace::Adah),
            _ => {}
        }
        if let Some(tld) = s.strip_prefix("ud:") {
            if !tld.is_empty() && tld.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
                return Ok(Namespace::Ud(tld.to_string()));
            }
        }
        Err(CorpusError::UnknownNamespace(s))
    }
}

impl Serialize for Namespace {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Namespace {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A normalized name within a namespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Name {
    label: String,
    namespace: Namespace,
    subdomain: Option<String>,
    display: String,
}

impl Name {
    /// The mutable part squatters work on, e.g. `johndoe`.
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn namespace(&self) -> &Namespace {
        &self.namespace
    }

    /// Leading subdomain labels, e.g. `funds` for `funds.johndoe.eth`.
    pub fn subdomain(&self) -> Option<&str> {
        self.subdomain.as_deref()
    }

    pub fn is_subdomain(&self) -> bool {
        self.subdomain.is_some()
    }

    pub fn display(&self) -> &str {
        &self.display
    }

    /// Builds the second-level name `label` in the same namespace as `self`.
    pub fn sibling(&self, label: &str) -> Name {
        Name::second_level(label.to_string(), self.namespace.clone())
    }

    pub(crate) fn second_level(label: String, namespace: Namespace) -> Name {
        let display = namespace.display(&label);
        Name {
            label,
            namespace,
            subdomain: None,
            display,
        }
    }

    /// Parses a full display form, inferring the namespace from its shape:
    /// `$label` is an ADA handle, `label.eth` is ENS, anything else with a
    /// dot is a UD name under its last label.
    pub fn parse_display(display: &str) -> Result<Name, CorpusError> {
        let trimmed = display.trim();
        if trimmed.starts_with('$') {
            return normalize_name(trimmed, &Namespace::Adah);
        }
        let lower = trimmed.to_lowercase();
        match lower.rsplit_once('.') {
            Some((_, "eth")) => normalize_name(trimmed, &Namespace::Eth),
            Some((_, tld)) if !tld.is_empty() => {
                let ns = Namespace::Ud(ascii_part(tld));
                normalize_name(trimmed, &ns)
            }
            _ => Err(CorpusError::UnknownNamespace(trimmed.to_string())),
        }
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display)
    }
}

impl Serialize for Name {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.display)
    }
}

impl<'de> Deserialize<'de> for Name {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Name::parse_display(&s).map_err(serde::de::Error::custom)
    }
}

fn ascii_part(part: &str) -> String {
    if part.is_ascii() {
        part.to_string()
    } else {
        // encode_str only fails on overflow, which needs labels far beyond
        // any registrable length.
        let encoded = idna::punycode::encode_str(part).unwrap_or_default();
        format!("xn--{encoded}")
    }
}

/// Normalizes a raw name into its canonical ASCII form for `namespace`.
pub fn normalize_name(raw: &str, namespace: &Namespace) -> Result<Name, CorpusError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(CorpusError::EmptyLabel);
    }
    let lower = trimmed.to_lowercase();

    let (label, subdomain) = match namespace {
        Namespace::Adah => {
            let stripped = lower.strip_prefix('$').unwrap_or(&lower);
            if stripped.contains('$') {
                return Err(CorpusError::InvalidLabel(stripped.to_string()));
            }
            (ascii_part(stripped), None)
        }
        Namespace::Eth | Namespace::Ud(_) => {
            let tld = match namespace {
                Namespace::Ud(tld) => tld.as_str(),
                _ => "eth",
            };
            let mut parts: Vec<String> = lower.split('.').map(ascii_part).collect();
            if parts.len() > 1 {
                if parts.last().map(String::as_str) != Some(tld) {
                    return Err(CorpusError::NamespaceMismatch {
                        raw: trimmed.to_string(),
                        namespace: namespace.to_string(),
                    });
                }
                parts.pop();
            }
            if parts.iter().any(|p| p.is_empty()) {
                return Err(CorpusError::EmptyLabel);
            }
            let label = parts.pop().unwrap_or_default();
            let subdomain = if parts.is_empty() { None } else { Some(parts.join(".")) };
            (label, subdomain)
        }
    };

    if label.is_empty() {
        return Err(CorpusError::EmptyLabel);
    }
    let display = match &subdomain {
        Some(sub) => format!("{sub}.{}", namespace.display(&label)),
        None => namespace.display(&label),
    };
    Ok(Name {
        label,
        namespace: namespace.clone(),
        subdomain,
        display,
    })
}

/// Canonical address form: hex addresses are case-folded, others kept.
pub fn normalize_address(raw: &str) -> String {
    let t = raw.trim();
    if t.starts_with("0x") || t.starts_with("0X") {
        t.to_ascii_lowercase()
    } else {
        t.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Chain {
    #[serde(rename = "ETH")]
    Eth,
    #[serde(rename = "MATIC")]
    Matic,
    #[serde(rename = "ADA")]
    Ada,
}

impl Chain {
    pub fn as_str(self) -> &'static str {
        match self {
            Chain::Eth => "ETH",
            Chain::Matic => "MATIC",
            Chain::Ada => "ADA",
        }
    }
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Chain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ETH" => Ok(Chain::Eth),
            "MATIC" | "POL" => Ok(Chain::Matic),
            "ADA" => Ok(Chain::Ada),
            other => Err(format!("unknown chain symbol {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "ens")]
    Ens,
    #[serde(rename = "ud-eth")]
    UdEth,
    #[serde(rename = "ud-polygon")]
    UdPolygon,
    #[serde(rename = "adah")]
    Adah,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Ens => "ens",
            Source::UdEth => "ud-eth",
            Source::UdPolygon => "ud-polygon",
            Source::Adah => "adah",
        }
    }

    pub fn family(self) -> NamespaceFamily {
        match self {
            Source::Ens => NamespaceFamily::Eth,
            Source::UdEth | Source::UdPolygon => NamespaceFamily::Ud,
            Source::Adah => NamespaceFamily::Adah,
        }
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "ens" => Ok(Source::Ens),
            "ud-eth" => Ok(Source::UdEth),
            "ud-polygon" => Ok(Source::UdPolygon),
            "adah" => Ok(Source::Adah),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Registration {
    pub name: Name,
    pub owner: String,
    pub resolution: BTreeMap<Chain, String>,
    pub registered_at: DateTime<Utc>,
    pub source: Source,
}

impl Registration {
    pub fn to_record(&self) -> RegistrationRecord {
        RegistrationRecord {
            display: self.name.display().to_string(),
            namespace: self.name.namespace().to_string(),
            owner: self.owner.clone(),
            resolution: self
                .resolution
                .iter()
                .map(|(c, a)| (c.as_str().to_string(), a.clone()))
                .collect(),
            registered_at: format_timestamp(&self.registered_at),
            source: self.source.as_str().to_string(),
        }
    }

    pub fn resolution_on(&self, chain: Chain) -> Option<&str> {
        self.resolution.get(&chain).map(String::as_str)
    }
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// One line of the registration fixture format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationRecord {
    pub display: String,
    pub namespace: String,
    pub owner: String,
    #[serde(default)]
    pub resolution: BTreeMap<String, String>,
    pub registered_at: String,
    pub source: String,
}

impl RegistrationRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }
}

fn field_err(line: usize, field: &str, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn str_field<'a>(obj: &'a Map<String, Value>, key: &str, line: usize) -> Result<&'a str, CorpusError> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(field_err(line, key, "expected a string")),
        None => Err(field_err(line, key, "missing field")),
    }
}

pub(crate) fn parse_timestamp(raw: &str, line: usize, field: &str) -> Result<DateTime<Utc>, CorpusError> {
    DateTime::parse_from_rfc3339(raw.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| field_err(line, field, format!("invalid ISO-8601 timestamp {raw:?}: {e}")))
}

/// Parses one fixture line (1-based `line` for error reporting).
pub fn parse_registration_line(text: &str, line: usize) -> Result<Registration, CorpusError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| field_err(line, "<json>", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| field_err(line, "<json>", "expected a JSON object"))?;

    let display = str_field(obj, "display", line)?;
    let ns_raw = str_field(obj, "namespace", line)?;
    let namespace = if ns_raw.trim().eq_ignore_ascii_case("ud") {
        // bare "ud" takes the TLD from the display form
        match display.trim().rsplit_once('.') {
            Some((_, tld)) => Namespace::Ud(ascii_part(&tld.to_lowercase())),
            None => return Err(field_err(line, "namespace", "cannot infer UD TLD from display")),
        }
    } else {
        ns_raw
            .parse::<Namespace>()
            .map_err(|e| field_err(line, "namespace", e.to_string()))?
    };
    let name = normalize_name(display, &namespace).map_err(|e| field_err(line, "display", e.to_string()))?;

    let owner = normalize_address(str_field(obj, "owner", line)?);
    if owner.is_empty() {
        return Err(field_err(line, "owner", "owner must be non-empty"));
    }

    let mut resolution = BTreeMap::new();
    match obj.get("resolution") {
        None | Some(Value::Null) => {}
        Some(Value::Object(map)) => {
            for (symbol, addr) in map {
                let chain: Chain = symbol.parse().map_err(|e: String| field_err(line, "resolution", e))?;
                let addr = addr
                    .as_str()
                    .ok_or_else(|| field_err(line, "resolution", "address must be a string"))?;
                let addr = normalize_address(addr);
                if !addr.is_empty() {
                    resolution.insert(chain, addr);
                }
            }
        }
        Some(_) => return Err(field_err(line, "resolution", "expected an object")),
    }

    let registered_at = parse_timestamp(str_field(obj, "registered_at", line)?, line, "registered_at")?;
    if registered_at < namespace.launch_epoch() {
        return Err(field_err(
            line,
            "registered_at",
            format!("{} predates the {} launch epoch", format_timestamp(&registered_at), namespace),
        ));
    }

    let source: Source = str_field(obj, "source", line)?
        .parse()
        .map_err(|e: String| field_err(line, "source", e))?;
    if source.family() != namespace.family() {
        return Err(field_err(
            line,
            "source",
            format!("source {} does not match namespace {}", source.as_str(), namespace),
        ));
    }

    Ok(Registration {
        name,
        owner,
        resolution,
        registered_at,
        source,
    })
}

/// Immutable in-memory index over a set of registrations.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    registrations: Vec<Registration>,
    by_display: HashMap<String, usize>,
    by_resolution: HashMap<String, BTreeSet<usize>>,
    by_owner: HashMap<String, BTreeSet<usize>>,
    duplicate_warnings: usize,
}

impl Dataset {
    /// Builds the dataset; a repeated display replaces the earlier entry.
    pub fn from_registrations(registrations: impl IntoIterator<Item = Registration>) -> Dataset {
        let mut out: Vec<Registration> = Vec::new();
        let mut by_display: HashMap<String, usize> = HashMap::new();
        let mut duplicate_warnings = 0;
        for reg in registrations {
            match by_display.get(reg.name.display()) {
                Some(&idx) => {
                    log::warn!("duplicate registration for {}; keeping the later record", reg.name);
                    duplicate_warnings += 1;
                    out[idx] = reg;
                }
                None => {
                    by_display.insert(reg.name.display().to_string(), out.len());
                    out.push(reg);
                }
            }
        }

        let mut by_resolution: HashMap<String, BTreeSet<usize>> = HashMap::new();
        let mut by_owner: HashMap<String, BTreeSet<usize>> = HashMap::new();
        for (idx, reg) in out.iter().enumerate() {
            for addr in reg.resolution.values() {
                by_resolution.entry(addr.clone()).or_default().insert(idx);
            }
            by_owner.entry(reg.owner.clone()).or_default().insert(idx);
        }

        Dataset {
            registrations: out,
            by_display,
            by_resolution,
            by_owner,
            duplicate_warnings,
        }
    }

    pub fn len(&self) -> usize {
        self.registrations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.registrations.is_empty()
    }

    pub fn duplicate_warnings(&self) -> usize {
        self.duplicate_warnings
    }

    pub fn iter(&self) -> impl Iterator<Item = &Registration> {
        self.registrations.iter()
    }

    pub fn get(&self, display: &str) -> Option<&Registration> {
        self.by_display.get(display).map(|&i| &self.registrations[i])
    }

    pub fn contains(&self, display: &str) -> bool {
        self.by_display.contains_key(display)
    }

    pub fn resolving_to<'a>(&'a self, address: &str) -> impl Iterator<Item = &'a Registration> + 'a {
        self.by_resolution
            .get(address)
            .into_iter()
            .flat_map(move |set| set.iter().map(move |&i| &self.registrations[i]))
    }

    /// Number of distinct names resolving to `address`.
    pub fn domain_count(&self, address: &str) -> usize {
        self.by_resolution.get(address).map_or(0, BTreeSet::len)
    }

    pub fn owned_by<'a>(&'a self, owner: &str) -> impl Iterator<Item = &'a Registration> + 'a {
        self.by_owner
            .get(owner)
            .into_iter()
            .flat_map(move |set| set.iter().map(move |&i| &self.registrations[i]))
    }

    pub fn owned_count(&self, owner: &str) -> usize {
        self.by_owner.get(owner).map_or(0, BTreeSet::len)
    }

    /// Distinct resolution addresses, sorted.
    pub fn resolution_addresses(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.by_resolution.keys().map(String::as_str).collect();
        v.sort_unstable();
        v
    }

    pub fn owners(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.by_owner.keys().map(String::as_str).collect();
        v.sort_unstable();
        v
    }

    pub fn namespaces(&self) -> BTreeSet<Namespace> {
        self.registrations.iter().map(|r| r.name.namespace().clone()).collect()
    }

    /// Sub-dataset of registrations matching `keep`.
    pub fn filtered(&self, keep: impl Fn(&Registration) -> bool) -> Dataset {
        Dataset::from_registrations(self.registrations.iter().filter(|r| keep(r)).cloned())
    }

    pub fn to_records(&self) -> Vec<RegistrationRecord> {
        self.registrations.iter().map(Registration::to_record).collect()
    }
}

/// Loads a registration fixture stream (JSON lines; blank lines skipped).
pub fn load_registrations<R: BufRead>(reader: R) -> Result<Dataset, CorpusError> {
    let mut regs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        regs.push(parse_registration_line(&line, i + 1)?);
    }
    Ok(Dataset::from_registrations(regs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(display: &str, owner: &str, addr: Option<&str>, at: &str) -> String {
        let resolution = match addr {
            Some(a) => format!(r#"{{"ETH":"{a}"}}"#),
            None => "{}".to_string(),
        };
        format!(
            r#"{{"display":"{display}","namespace":"eth","owner":"{owner}","resolution":{resolution},"registered_at":"{at}","source":"ens"}}"#
        )
    }

    #[test]
    fn normalize_folds_case_and_strips_suffix() {
        let n = normalize_name("JohnDoe.eth", &Namespace::Eth).unwrap();
        assert_eq!(n.label(), "johndoe");
        assert_eq!(n.display(), "johndoe.eth");
        assert!(!n.is_subdomain());
    }

    #[test]
    fn normalize_adah_punycode_passthrough() {
        let n = normalize_name("$xn--bs8h", &Namespace::Adah).unwrap();
        assert_eq!(n.label(), "xn--bs8h");
        assert_eq!(n.display(), "$xn--bs8h");
    }

    #[test]
    fn normalize_emoji_to_punycode() {
        // reference value from an independent RFC 3492 encoder
        let n = normalize_name("$🎯", &Namespace::Adah).unwrap();
        assert_eq!(n.label(), "xn--gl8h");
    }

    #[test]
    fn normalize_errors() {
        assert_eq!(normalize_name("   ", &Namespace::Eth), Err(CorpusError::EmptyLabel));
        assert_eq!(normalize_name("$", &Namespace::Adah), Err(CorpusError::EmptyLabel));
        assert_eq!(normalize_name(".eth", &Namespace::Eth), Err(CorpusError::EmptyLabel));
        assert!(matches!(
            "ud:".parse::<Namespace>(),
            Err(CorpusError::UnknownNamespace(_))
        ));
        assert!(matches!(
            "dns".parse::<Namespace>(),
            Err(CorpusError::UnknownNamespace(_))
        ));
        assert!(matches!(
            normalize_name("foo.crypto", &Namespace::Eth),
            Err(CorpusError::NamespaceMismatch { .. })
        ));
    }

    #[test]
    fn subdomains_keep_parent_label() {
        let n = normalize_name("funds.JohnDoe.eth", &Namespace::Eth).unwrap();
        assert_eq!(n.label(), "johndoe");
        assert_eq!(n.subdomain(), Some("funds"));
        assert_eq!(n.display(), "funds.johndoe.eth");
    }

    #[test]
    fn parse_display_infers_namespace() {
        assert_eq!(Name::parse_display("$ada_astronaut").unwrap().namespace(), &Namespace::Adah);
        assert_eq!(Name::parse_display("vitalik.eth").unwrap().namespace(), &Namespace::Eth);
        assert_eq!(
            Name::parse_display("metascan.nft").unwrap().namespace(),
            &Namespace::Ud("nft".into())
        );
        assert!(Name::parse_display("bare").is_err());
    }

    #[test]
    fn load_empty() {
        let ds = load_registrations("".as_bytes()).unwrap();
        assert!(ds.is_empty());
        assert!(ds.resolution_addresses().is_empty());
        assert!(ds.owners().is_empty());
    }

    #[test]
    fn duplicates_last_wins() {
        let text = [
            record("alpha.eth", "0xA", Some("0x1"), "2020-01-01T00:00:00Z"),
            record("ALPHA.eth", "0xB", Some("0x2"), "2021-01-01T00:00:00Z"),
        ]
        .join("\n");
        let ds = load_registrations(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.duplicate_warnings(), 1);
        assert_eq!(ds.get("alpha.eth").unwrap().owner, "0xb");
        assert_eq!(ds.domain_count("0x1"), 0);
        assert_eq!(ds.domain_count("0x2"), 1);
    }

    #[test]
    fn shared_resolution_address() {
        let text = [
            record("alpha.eth", "0xa", Some("0xaa"), "2020-01-01T00:00:00Z"),
            record("bravo.eth", "0xb", Some("0xaa"), "2020-01-01T00:00:00Z"),
            record("charlie.eth", "0xc", Some("0xcc"), "2020-01-01T00:00:00Z"),
        ]
        .join("\n");
        let ds = load_registrations(text.as_bytes()).unwrap();
        let linear = ds.iter().filter(|r| r.resolution.values().any(|a| a == "0xaa")).count();
        assert_eq!(ds.domain_count("0xaa"), linear);
        assert_eq!(linear, 2);
    }

    #[test]
    fn parse_errors_carry_line_and_field() {
        let good = record("alpha.eth", "0xa", None, "2020-01-01T00:00:00Z");
        let bad = r#"{"display":"bravo.eth","namespace":"eth","resolution":{},"registered_at":"2020-01-01T00:00:00Z","source":"ens"}"#;
        let text = format!("{good}\n{bad}\n");
        match load_registrations(text.as_bytes()) {
            Err(CorpusError::Parse { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "owner");
            }
            other => panic!("unexpected {other:?}"),
        }
        let early = record("alpha.eth", "0xa", None, "2016-01-01T00:00:00Z");
        assert!(matches!(
            parse_registration_line(&early, 1),
            Err(CorpusError::Parse { field, .. }) if field == "registered_at"
        ));
    }

    #[test]
    fn record_round_trip() {
        let line = record("alpha.eth", "0xA", Some("0xBB"), "2020-01-01T00:00:00Z");
        let reg = parse_registration_line(&line, 1).unwrap();
        let again = parse_registration_line(&reg.to_record().to_json_line(), 1).unwrap();
        assert_eq!(reg, again);
    }
}
