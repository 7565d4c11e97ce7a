//! Python bindings: `import keydyn`.

use std::fs::File;
use std::io::BufReader;

use keydyn::eval::{self, ProtocolConfig};
use keydyn::features::{FeatureMatrix as CoreMatrix, FeatureSchema};
use keydyn::ingest::{parse_events, InputFormat, RawEvent, SourceContext};
use keydyn::keyboard::{default_qwerty, KeyboardLayout};
use keydyn::learner::{self, ForestConfig, GbmConfig};
use keydyn::matrix::Matrix;
use keydyn::pipeline::{extract, ExtractConfig};
use keydyn::selection::{self, SelectionPolicy};
use keydyn::synth::{generate_cohort, CohortSpec};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn err(e: keydyn::Error) -> PyErr {
    match e {
        keydyn::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn layout(path: Option<&str>) -> PyResult<KeyboardLayout> {
    match path {
        Some(p) => KeyboardLayout::from_json_file(p.as_ref()).map_err(err),
        None => Ok(default_qwerty()),
    }
}

/// Rounded key distance between two keys on the layout (built-in QWERTY by
/// default).
#[pyfunction]
#[pyo3(signature = (a, b, layout_path=None))]
fn key_distance(a: &str, b: &str, layout_path: Option<&str>) -> PyResult<u32> {
    layout(layout_path)?.key_distance(a, b).map_err(err)
}

/// "LL", "RR" or "LR" for two letter keys.
#[pyfunction]
fn hand_class(a: &str, b: &str) -> PyResult<String> {
    Ok(default_qwerty().hand_class(a, b).map_err(err)?.to_string())
}

/// The 69 feature names in column order.
#[pyfunction]
fn feature_names() -> Vec<String> {
    FeatureSchema::full().names().to_vec()
}

/// `(user, device, key, kind, ts)`.
type EventTuple = (String, String, String, String, i64);

/// Raw key events from a file, as `(user, device, key, kind, ts)` tuples.
#[pyfunction]
#[pyo3(signature = (path, format="jsonl", user="", device="unknown"))]
fn read_events(path: &str, format: &str, user: &str, device: &str) -> PyResult<Vec<EventTuple>> {
    let events = load_events(path, format, user, device)?;
    Ok(events
        .into_iter()
        .map(|e| {
            let kind = format!("{:?}", e.kind).to_lowercase();
            (e.user, e.device.to_string(), e.key, kind, e.ts)
        })
        .collect())
}

fn load_events(path: &str, format: &str, user: &str, device: &str) -> PyResult<Vec<RawEvent>> {
    let format: InputFormat = format.parse().map_err(err)?;
    let ctx = SourceContext { user: user.to_string(), device: device.parse().map_err(err)? };
    let file = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
    parse_events(BufReader::new(file), format, &ctx).map_err(err)
}

/// Write a synthetic cohort as JSON lines and return the number of events.
#[pyfunction]
#[pyo3(signature = (path, n_users=10, windows_per_user=40, seed=42, signal="distinct"))]
fn synth_cohort(path: &str, n_users: usize, windows_per_user: usize, seed: u64, signal: &str) -> PyResult<usize> {
    let spec = CohortSpec { n_users, windows_per_user, seed, signal: signal.parse().map_err(err)? };
    let events = generate_cohort(&spec).map_err(err)?;
    let file = File::create(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
    keydyn::ingest::write_json_lines(std::io::BufWriter::new(file), &events).map_err(err)?;
    Ok(events.len())
}

/// Per-window feature rows. Missing values are `None`.
#[pyclass(module = "keydyn", frozen)]
struct FeatureMatrix {
    inner: CoreMatrix,
}

#[pymethods]
impl FeatureMatrix {
    /// Read a feature CSV written by `to_csv` or the command-line tool.
    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        Ok(Self { inner: CoreMatrix::read_csv(BufReader::new(file)).map_err(err)? })
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.schema.names().to_vec()
    }

    #[getter]
    fn users(&self) -> Vec<String> {
        self.inner.users()
    }

    /// `(user, device, window)` per row.
    fn keys(&self) -> Vec<(String, String, usize)> {
        self.inner.rows.iter().map(|r| (r.user.clone(), r.device.to_string(), r.window)).collect()
    }

    fn values(&self) -> Vec<Vec<Option<f64>>> {
        self.inner.rows.iter().map(|r| r.values.clone()).collect()
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        let file = File::create(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        self.inner.write_csv(std::io::BufWriter::new(file)).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "FeatureMatrix({} rows, {} features, {} users)",
            self.inner.len(),
            self.inner.schema.len(),
            self.inner.users().len()
        )
    }
}

/// Pair, window and featurize an event file.
#[pyfunction]
#[pyo3(signature = (path, format="jsonl", window_len=100, max_flight_ms=5000, device=None, user="", layout_path=None))]
fn extract_features(
    path: &str,
    format: &str,
    window_len: usize,
    max_flight_ms: i64,
    device: Option<&str>,
    user: &str,
    layout_path: Option<&str>,
) -> PyResult<FeatureMatrix> {
    let events = load_events(path, format, user, "unknown")?;
    let cfg = ExtractConfig {
        window_len,
        features: keydyn::features::FeatureConfig { max_abs_flight_ms: max_flight_ms },
        device: device.map(str::parse).transpose().map_err(err)?,
    };
    let (inner, _) = extract(&events, &layout(layout_path)?, &cfg).map_err(err)?;
    Ok(FeatureMatrix { inner })
}

/// Random-forest importance report with the selected subset marked.
#[pyclass(module = "keydyn", frozen)]
struct ImportanceReport {
    inner: selection::ImportanceReport,
}

#[pymethods]
impl ImportanceReport {
    #[getter]
    fn selected(&self) -> Vec<String> {
        self.inner.selected()
    }

    /// `(name, family, importance)` in column order.
    #[getter]
    fn importances(&self) -> Vec<(String, String, f64)> {
        self.inner.features.iter().map(|f| (f.name.clone(), f.family.as_str().to_string(), f.importance)).collect()
    }

    #[getter]
    fn family_counts(&self) -> Vec<(String, usize)> {
        self.inner.family_counts.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }
}

/// Split 70/30 per user, rank features on the training part and apply the
/// policy (`"mass:<p>"` or `"top-k:<k>"`).
#[pyfunction]
#[pyo3(signature = (matrix, policy="mass:0.95", seed=42, n_trees=200, max_depth=12))]
fn select_features(
    matrix: &FeatureMatrix,
    policy: &str,
    seed: u64,
    n_trees: usize,
    max_depth: usize,
) -> PyResult<ImportanceReport> {
    let policy: SelectionPolicy = policy.parse().map_err(err)?;
    let split = selection::split_70_30(&matrix.inner, keydyn::seed::derive_label(seed, "split"));
    let forest = ForestConfig { n_trees, max_depth, seed: keydyn::seed::derive_label(seed, "forest"), parallel: true };
    let mut inner = selection::rf_importance(&split.train, &forest).map_err(err)?;
    inner.seed = seed;
    inner.apply(policy).map_err(err)?;
    Ok(ImportanceReport { inner })
}

/// Cross-validated one-vs-rest results.
#[pyclass(module = "keydyn", frozen)]
struct EvalReport {
    inner: eval::EvalReport,
}

#[pymethods]
impl EvalReport {
    #[getter]
    fn auc(&self) -> f64 {
        self.inner.aggregate.auc.mean
    }

    #[getter]
    fn eer(&self) -> f64 {
        self.inner.aggregate.eer.mean
    }

    #[getter]
    fn accuracy(&self) -> f64 {
        self.inner.aggregate.accuracy.mean
    }

    #[getter]
    fn f1(&self) -> f64 {
        self.inner.aggregate.f1.mean
    }

    /// `(user, auc, eer)` per evaluated user.
    fn per_user(&self) -> Vec<(String, f64, f64)> {
        self.inner.users.iter().map(|u| (u.user.clone(), u.summary.auc.mean, u.summary.eer.mean)).collect()
    }

    #[getter]
    fn skipped(&self) -> Vec<String> {
        self.inner.skipped.iter().map(|s| s.user.clone()).collect()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("EvalReport(users={}, auc={:.4}, eer={:.4})", self.inner.users.len(), self.auc(), self.eer())
    }
}

#[pyfunction]
#[pyo3(signature = (matrix, features, folds=5, seed=42, n_trees=100, max_depth=4, learning_rate=0.1, smote_k=5, label="model"))]
#[allow(clippy::too_many_arguments)]
fn evaluate(
    py: Python<'_>,
    matrix: &FeatureMatrix,
    features: Vec<String>,
    folds: usize,
    seed: u64,
    n_trees: usize,
    max_depth: usize,
    learning_rate: f64,
    smote_k: usize,
    label: &str,
) -> PyResult<EvalReport> {
    let cfg = ProtocolConfig {
        folds,
        seed,
        smote_k,
        gbm: GbmConfig { n_trees, max_depth, learning_rate, parallel: false, ..GbmConfig::default() },
        label: label.to_string(),
        ..ProtocolConfig::default()
    };
    let inner = py.detach(|| eval::run_protocol(&matrix.inner, &features, &cfg)).map_err(err)?;
    Ok(EvalReport { inner })
}

/// `(auc, eer)` of scores where higher means more likely genuine.
#[pyfunction]
fn roc_auc_eer(scores: Vec<f64>, genuine: Vec<bool>) -> PyResult<(f64, f64)> {
    let curve = eval::roc_curve(&scores, &genuine).map_err(err)?;
    Ok((eval::auc(&curve), eval::eer(&curve)))
}

/// Boosted trees for binary labels.
#[pyclass(module = "keydyn", frozen)]
struct GbmModel {
    inner: learner::GbmModel,
}

#[pymethods]
impl GbmModel {
    #[staticmethod]
    #[pyo3(signature = (x, y, features, n_trees=100, max_depth=4, learning_rate=0.1, reg_lambda=1.0))]
    fn train(
        x: Vec<Vec<f64>>,
        y: Vec<bool>,
        features: Vec<String>,
        n_trees: usize,
        max_depth: usize,
        learning_rate: f64,
        reg_lambda: f64,
    ) -> PyResult<Self> {
        let x = Matrix::from_rows(&x).map_err(err)?;
        let cfg = GbmConfig { n_trees, max_depth, learning_rate, lambda: reg_lambda, ..GbmConfig::default() };
        Ok(Self { inner: learner::train_gbm(&x, &y, &features, &cfg).map_err(err)? })
    }

    fn predict_proba(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        x.iter().map(|row| self.inner.predict_proba(row).map_err(err)).collect()
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.inner.trees.len()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: learner::GbmModel::from_json(text).map_err(err)? })
    }
}

#[pymodule]
#[pyo3(name = "keydyn")]
fn keydyn_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", keydyn::VERSION)?;
    m.add_function(wrap_pyfunction!(key_distance, m)?)?;
    m.add_function(wrap_pyfunction!(hand_class, m)?)?;
    m.add_function(wrap_pyfunction!(feature_names, m)?)?;
    m.add_function(wrap_pyfunction!(read_events, m)?)?;
    m.add_function(wrap_pyfunction!(synth_cohort, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(select_features, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc_eer, m)?)?;
    m.add_class::<FeatureMatrix>()?;
    m.add_class::<ImportanceReport>()?;
    m.add_class::<EvalReport>()?;
    m.add_class::<GbmModel>()?;
    Ok(())
}
