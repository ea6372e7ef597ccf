//! Python bindings. Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use chrono::{DateTime, Utc};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyString};
use serde_json::{json, Value};

use namesquat::corpus::{normalize_name, Name, Namespace};
use namesquat::ground_truth::{annotate, compute_wallet_stats, filter_labeled, select_targets, DEFAULT_MIN_LABEL_LEN};
use namesquat::ingestion::{FixtureDir, DEFAULT_FAILURE_CEILING};
use namesquat::squat_detector::{detect as detect_squats, DetectOptions};
use namesquat::tx_analysis::TxDirection;
use namesquat::typo_models::{self, Alphabet, TypoModel};
use namesquat::typoguard::{GuardHistory, GuardPolicy, NameList};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for x in items {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let d = PyDict::new(py);
            for (k, x) in map {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn parse(display: &str) -> PyResult<Name> {
    Name::parse_display(display).map_err(err)
}

fn parse_time(raw: Option<&str>) -> PyResult<DateTime<Utc>> {
    match raw {
        None => Ok(Utc::now()),
        Some(s) => Ok(DateTime::parse_from_rfc3339(s).map_err(err)?.with_timezone(&Utc)),
    }
}

/// A normalized name.
#[pyclass(name = "Name", frozen, from_py_object)]
#[derive(Clone)]
struct PyName {
    inner: Name,
}

#[pymethods]
impl PyName {
    #[new]
    fn new(display: &str) -> PyResult<Self> {
        Ok(PyName { inner: parse(display)? })
    }

    #[getter]
    fn label(&self) -> &str {
        self.inner.label()
    }

    #[getter]
    fn namespace(&self) -> String {
        self.inner.namespace().to_string()
    }

    #[getter]
    fn display(&self) -> &str {
        self.inner.display()
    }

    #[getter]
    fn subdomain(&self) -> Option<&str> {
        self.inner.subdomain()
    }

    fn __repr__(&self) -> String {
        format!("Name({:?})", self.inner.display())
    }

    fn __str__(&self) -> &str {
        self.inner.display()
    }

    fn __eq__(&self, other: &PyName) -> bool {
        self.inner == other.inner
    }

    fn __hash__(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.inner.hash(&mut h);
        h.finish()
    }
}

/// Normalizes `raw` under `namespace` (e.g. "eth", "crypto", "adah") and
/// returns the display form.
#[pyfunction]
fn normalize(raw: &str, namespace: &str) -> PyResult<String> {
    let ns: Namespace = namespace.parse().map_err(err)?;
    Ok(normalize_name(raw, &ns).map_err(err)?.display().to_string())
}

/// Typo variants of a target as dicts with label, display, model and
/// change_position.
#[pyfunction]
#[pyo3(signature = (target, model=None))]
fn generate<'py>(py: Python<'py>, target: &str, model: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let name = parse(target)?;
    let alphabet = Alphabet::for_name(&name);
    let variants = match model {
        None => typo_models::generate_all(&name, &alphabet),
        Some(m) => typo_models::generate(&name, m.parse::<TypoModel>().map_err(err)?, &alphabet),
    };
    let rows: Vec<Value> = variants
        .iter()
        .map(|v| {
            json!({
                "label": v.label,
                "display": v.display(),
                "model": v.model.as_str(),
                "change_position": v.change_position,
            })
        })
        .collect();
    to_py(py, &Value::Array(rows))
}

/// Models that turn the target's label into `candidate`, in priority order.
#[pyfunction]
fn classify(candidate: &str, target: &str) -> PyResult<Vec<&'static str>> {
    let name = parse(target)?;
    let alphabet = Alphabet::for_name(&name);
    let mut models: Vec<TypoModel> = typo_models::classify(candidate, name.label(), &alphabet).into_iter().collect();
    models.sort_by_key(|m| m.priority_rank());
    Ok(models.into_iter().map(TypoModel::as_str).collect())
}

#[pyfunction]
fn distance(a: &str, b: &str) -> usize {
    typo_models::damerau_distance(a, b)
}

/// Loads a fixture directory, selects targets and returns the squat clusters.
#[pyfunction]
#[pyo3(signature = (fixture_dir, top_n, min_label_len=DEFAULT_MIN_LABEL_LEN, cross_tld=false))]
fn detect<'py>(
    py: Python<'py>,
    fixture_dir: PathBuf,
    top_n: usize,
    min_label_len: usize,
    cross_tld: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let fx = FixtureDir::new(fixture_dir);
    let (dataset, _) = fx.load_dataset(DEFAULT_FAILURE_CEILING).map_err(err)?;
    let (store, _, _) = fx.load_tx_store(DEFAULT_FAILURE_CEILING).map_err(err)?;
    let labels = fx.load_labels().map_err(err)?;
    let mut stats = compute_wallet_stats(&dataset, &store.activity_counts(TxDirection::Both));
    annotate(&mut stats, &labels);
    let kept = filter_labeled(&stats, &labels);
    let sel = select_targets(&kept, &dataset, top_n, min_label_len).map_err(err)?;
    let options = DetectOptions {
        cross_tld,
        alphabet: None,
    };
    let entry = |e: &namesquat::squat_detector::SquatEntry| {
        json!({
            "display": e.registration.name.display(),
            "owner": e.registration.owner,
            "model": e.model.as_str(),
            "change_position": e.change_position,
        })
    };
    let clusters: Vec<Value> = detect_squats(&sel.names, &dataset, &options)
        .iter()
        .map(|c| {
            json!({
                "target": c.target.name.display(),
                "target_owner": c.target.owner,
                "squats": c.squats.iter().map(entry).collect::<Vec<_>>(),
                "defensive": c.defensive.iter().map(entry).collect::<Vec<_>>(),
            })
        })
        .collect();
    to_py(py, &Value::Array(clusters))
}

/// Send history plus cold lists.
#[pyclass(name = "TypoGuard")]
struct PyTypoGuard {
    history: GuardHistory,
    blocklist: NameList,
    popular: NameList,
    strict: bool,
}

#[pymethods]
impl PyTypoGuard {
    #[new]
    #[pyo3(signature = (blocklist=Vec::new(), popular=Vec::new(), strict=false))]
    fn new(blocklist: Vec<String>, popular: Vec<String>, strict: bool) -> PyResult<Self> {
        let list = |v: Vec<String>| -> PyResult<NameList> {
            Ok(NameList::new(v.iter().map(|d| parse(d)).collect::<PyResult<Vec<_>>>()?))
        };
        Ok(PyTypoGuard {
            history: GuardHistory::new(),
            blocklist: list(blocklist)?,
            popular: list(popular)?,
            strict,
        })
    }

    /// Records a send; `at` is RFC 3339 and defaults to now.
    #[pyo3(signature = (recipient, at=None))]
    fn record_send(&mut self, recipient: &str, at: Option<&str>) -> PyResult<()> {
        let name = parse(recipient)?;
        self.history.record_send(&name, parse_time(at)?);
        Ok(())
    }

    fn check<'py>(&self, py: Python<'py>, recipient: &str) -> PyResult<Bound<'py, PyAny>> {
        let name = parse(recipient)?;
        let policy = GuardPolicy {
            blocklist_overrides_history: self.strict,
        };
        let verdict = namesquat::typoguard::Guard::new(&self.history, &self.blocklist, &self.popular, policy)
            .check(&name, &Alphabet::for_name(&name));
        let mut v = serde_json::to_value(&verdict).map_err(err)?;
        v["recipient"] = json!(name.display());
        to_py(py, &v)
    }

    fn history_jsonl(&self) -> String {
        self.history.to_jsonl()
    }

    fn __len__(&self) -> usize {
        self.history.len()
    }
}

/// Writes a simulated fixture directory and returns its manifest.
#[pyfunction]
#[pyo3(signature = (out_dir, seed=0, scenario_json=None))]
fn simulate<'py>(
    py: Python<'py>,
    out_dir: PathBuf,
    seed: u64,
    scenario_json: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    use namesquat::simulator::{simulate as run, write_simulation, ScenarioParams};
    let mut params: ScenarioParams = match scenario_json {
        None => ScenarioParams::default(),
        Some(s) => serde_json::from_str(s).map_err(err)?,
    };
    params.seed = seed;
    params.validate().map_err(err)?;
    let sim = run(&params).map_err(err)?;
    std::fs::create_dir_all(&out_dir).map_err(err)?;
    write_simulation(&out_dir, &sim, &params).map_err(err)?;
    to_py(py, &serde_json::to_value(&sim.manifest).map_err(err)?)
}

#[pymodule]
fn namesquat_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyName>()?;
    m.add_class::<PyTypoGuard>()?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
