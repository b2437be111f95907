//! Python bindings. Structured values cross the boundary as plain Python
//! dicts and lists (through JSON), so they mirror the on-disk formats.

use std::collections::BTreeMap;
use std::path::PathBuf;

use jitlab::curation::{LabelRequest, LabelStore as CoreStore, RuleCatalog, Verdict};
use jitlab::eval::{self, Normalization, Scheme};
use jitlab::metrics::{ChangeMetrics, Property};
use jitlab::model::{build_model, ModelConfig, ModelReport, RedundancyScale};
use jitlab::pipeline::{self, io::read_records, Pipeline, PipelineConfig as CoreConfig, RunOptions, StageName};
use jitlab::stats;
use jitlab::szz::IssueRecord;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: jitlab::Error) -> PyErr {
    if e.is_data_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_py<T: Serialize + ?Sized>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn json_value(obj: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    from_py(obj)
}

fn parse<T: std::str::FromStr<Err = jitlab::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

/// Area under the ROC curve.
#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    eval::auc(&scores, &labels).map_err(err)
}

/// Mean squared error of probabilities against 0/1 outcomes.
#[pyfunction]
fn brier(probs: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    eval::brier(&probs, &labels).map_err(err)
}

#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    stats::spearman(&x, &y).map_err(err)
}

#[pyfunction]
fn skewness(values: Vec<f64>) -> PyResult<f64> {
    stats::skewness(&values).map_err(err)
}

/// Returns `{"h", "df", "p_value"}`.
#[pyfunction]
fn kruskal_wallis(py: Python<'_>, groups: Vec<Vec<f64>>) -> PyResult<Py<PyAny>> {
    to_py(py, &stats::kruskal_wallis(&groups).map_err(err)?)
}

/// Returns `{"u", "p_value", "method"}`.
#[pyfunction]
#[pyo3(signature = (a, b, exact_max = stats::DEFAULT_EXACT_MAX))]
fn wilcoxon_rank_sum(py: Python<'_>, a: Vec<f64>, b: Vec<f64>, exact_max: usize) -> PyResult<Py<PyAny>> {
    to_py(py, &stats::wilcoxon_rank_sum_with(&a, &b, exact_max).map_err(err)?)
}

/// Nominal alpha; `ratings[r][i]` is rater r's value for item i or None.
#[pyfunction]
fn krippendorff_alpha(ratings: Vec<Vec<Option<String>>>) -> PyResult<f64> {
    stats::krippendorff_alpha(&ratings).map_err(err)
}

/// Reads a metrics CSV into a list of dicts.
#[pyfunction]
fn read_metrics(py: Python<'_>, path: PathBuf) -> PyResult<Py<PyAny>> {
    let file = std::fs::File::open(&path).map_err(|e| PyValueError::new_err(format!("{}: {e}", path.display())))?;
    to_py(py, &jitlab::metrics::read_metrics_csv(file).map_err(err)?)
}

fn rows_from(obj: &Bound<'_, PyAny>) -> PyResult<Vec<ChangeMetrics>> {
    let items: Vec<serde_json::Value> = from_py(obj)?;
    items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            let mut base = serde_json::to_value(ChangeMetrics::empty(format!("row{i}"), 0))
                .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
            let (Some(b), serde_json::Value::Object(fields)) = (base.as_object_mut(), item) else {
                return Err(PyValueError::new_err("rows must be dicts"));
            };
            b.extend(fields);
            serde_json::from_value(base).map_err(|e| PyValueError::new_err(format!("row {i}: {e}")))
        })
        .collect()
}

/// A pruned, spline-expanded logistic model.
#[pyclass(module = "jitlab")]
struct Model {
    report: ModelReport,
}

#[pymethods]
impl Model {
    /// Fits `is_bic` on `rows` (dicts keyed by property acronym; missing
    /// properties default to 0).
    #[staticmethod]
    #[pyo3(signature = (rows, properties = None, collinearity_threshold = 0.7, redundancy_threshold = 0.9, spline_df = 3, redundancy_scale = "rank"))]
    fn fit(
        py: Python<'_>,
        rows: &Bound<'_, PyAny>,
        properties: Option<Vec<String>>,
        collinearity_threshold: f64,
        redundancy_threshold: f64,
        spline_df: usize,
        redundancy_scale: &str,
    ) -> PyResult<Self> {
        let rows = rows_from(rows)?;
        let candidates = match properties {
            Some(names) => names
                .iter()
                .map(|n| Property::from_acronym(n).ok_or_else(|| PyValueError::new_err(format!("unknown property `{n}`"))))
                .collect::<PyResult<Vec<_>>>()?,
            None => Property::ALL.to_vec(),
        };
        let config = ModelConfig {
            collinearity_threshold,
            redundancy_threshold,
            redundancy_scale: match redundancy_scale {
                "rank" => RedundancyScale::Rank,
                "raw" => RedundancyScale::Raw,
                other => return Err(PyValueError::new_err(format!("unknown scale `{other}`"))),
            },
            spline_df,
        };
        let report = py.detach(|| build_model(&rows, &candidates, &config)).map_err(err)?;
        Ok(Self { report })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let report = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { report })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn predict(&self, rows: &Bound<'_, PyAny>) -> PyResult<Vec<f64>> {
        let rows = rows_from(rows)?;
        self.report.model.predict_rows(&rows).map_err(err)
    }

    #[getter]
    fn terms(&self) -> Vec<String> {
        self.report.model.terms.clone()
    }

    /// Intercept first.
    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.report.model.coefficients.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.report.model.converged
    }

    /// Properties that survived pruning.
    #[getter]
    fn properties(&self) -> Vec<String> {
        self.report.model.properties().iter().map(|p| p.acronym().to_string()).collect()
    }

    /// Pruning decisions and the fitted model as a dict.
    fn report(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.report)
    }

    /// Wald chi-square per family.
    #[pyo3(signature = (period = 1, scheme = "short", normalization = "family_sum"))]
    fn importance(&self, py: Python<'_>, period: u32, scheme: &str, normalization: &str) -> PyResult<Py<PyAny>> {
        let scheme: Scheme = parse(scheme)?;
        let normalization = match normalization {
            "family_sum" => Normalization::FamilySum,
            "joint_total" => Normalization::JointTotal,
            other => return Err(PyValueError::new_err(format!("unknown normalization `{other}`"))),
        };
        to_py(py, &eval::family_importance(&self.report.model, period, scheme, normalization).map_err(err)?)
    }
}

/// Rater labels with an optional append-only audit log.
#[pyclass(module = "jitlab")]
struct LabelStore {
    inner: CoreStore,
}

#[pymethods]
impl LabelStore {
    /// `issues` is a CSV/newline-JSON path or a list of issue dicts.
    #[new]
    #[pyo3(signature = (issues, log = None))]
    fn new(issues: &Bound<'_, PyAny>, log: Option<PathBuf>) -> PyResult<Self> {
        let records: Vec<IssueRecord> = match issues.extract::<PathBuf>() {
            Ok(path) => read_records(&path).map_err(err)?,
            Err(_) => from_py(issues)?,
        };
        let inner = match log {
            Some(path) => CoreStore::open(&path, records, RuleCatalog::standard()).map_err(err)?,
            None => CoreStore::new(records, RuleCatalog::standard()),
        };
        Ok(Self { inner })
    }

    #[pyo3(signature = (issue_id, rater, verdict, rule_id, rationale = String::new(), revision = None))]
    fn record_label(
        &mut self,
        py: Python<'_>,
        issue_id: &str,
        rater: &str,
        verdict: &str,
        rule_id: &str,
        rationale: String,
        revision: Option<u64>,
    ) -> PyResult<Py<PyAny>> {
        let mut req = LabelRequest::new(issue_id, rater, parse::<Verdict>(verdict)?, rule_id);
        req.rationale = rationale;
        req.revision = revision;
        to_py(py, &self.inner.record_label(req).map_err(err)?)
    }

    #[pyo3(signature = (issue_id, verdict, rule_id, resolved_by, note = ""))]
    fn resolve(
        &mut self,
        py: Python<'_>,
        issue_id: &str,
        verdict: &str,
        rule_id: &str,
        resolved_by: &str,
        note: &str,
    ) -> PyResult<Py<PyAny>> {
        let verdict: Verdict = parse(verdict)?;
        to_py(py, &self.inner.resolve(issue_id, verdict, rule_id, note, resolved_by).map_err(err)?)
    }

    fn agreement_report(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.agreement_report().map_err(err)?)
    }

    fn disagreements(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.disagreements())
    }

    fn progress(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.progress())
    }

    fn final_verdicts(&self) -> PyResult<BTreeMap<String, String>> {
        Ok(self
            .inner
            .final_verdicts()
            .map_err(err)?
            .into_iter()
            .map(|(k, v)| (k, v.name().to_string()))
            .collect())
    }

    fn labels(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.labels().collect::<Vec<_>>())
    }

    fn rules(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.catalog().rules)
    }
}

/// Pipeline configuration; attribute-style access goes through `get`,
/// `set` and `to_dict`.
#[pyclass(module = "jitlab", skip_from_py_object)]
#[derive(Clone)]
struct PipelineConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PipelineConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut c = Self {
            inner: CoreConfig::default(),
        };
        if let Some(kw) = kwargs {
            c.update(kw)?;
        }
        Ok(c)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CoreConfig::load(&path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CoreConfig::from_toml_str(text).map_err(err)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(err)
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }

    fn get(&self, py: Python<'_>, key: &str) -> PyResult<Py<PyAny>> {
        let v = serde_json::to_value(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let field = v
            .get(key)
            .ok_or_else(|| PyValueError::new_err(format!("unknown config key `{key}`")))?;
        to_py(py, field)
    }

    /// Replaces the given keys; the result is validated.
    fn update(&mut self, values: &Bound<'_, PyDict>) -> PyResult<()> {
        let mut v = serde_json::to_value(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let updates = json_value(values.as_any())?;
        if let (Some(obj), serde_json::Value::Object(new)) = (v.as_object_mut(), updates) {
            obj.extend(new);
        }
        let next: CoreConfig = serde_json::from_value(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
        next.validate().map_err(err)?;
        self.inner = next;
        Ok(())
    }

    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let d = PyDict::new(value.py());
        d.set_item(key, value)?;
        self.update(&d)
    }

    fn __repr__(&self) -> String {
        format!("PipelineConfig(output={:?})", self.inner.output)
    }
}

/// Runs the pipeline and returns the manifest dict. `until` stops after a
/// stage; `force_from` recomputes a stage and its dependents.
#[pyfunction]
#[pyo3(signature = (config, until = None, force_from = None))]
fn run_pipeline(
    py: Python<'_>,
    config: &PipelineConfig,
    until: Option<&str>,
    force_from: Option<&str>,
) -> PyResult<Py<PyAny>> {
    let options = RunOptions {
        until: until.map(parse::<StageName>).transpose()?,
        force_from: force_from.map(parse::<StageName>).transpose()?,
    };
    let inner = config.inner.clone();
    let summary = py
        .detach(move || Pipeline::new(inner).and_then(|mut p| p.run(&options)))
        .map_err(err)?;
    to_py(py, &summary.manifest)
}

/// Writes the deterministic demo corpus under `dir` and returns its config.
#[pyfunction]
#[pyo3(signature = (dir, seed = 7))]
fn demo_corpus(py: Python<'_>, dir: PathBuf, seed: u64) -> PyResult<PipelineConfig> {
    let options = jitlab::fixture::DemoOptions {
        seed,
        ..Default::default()
    };
    let corpus = py
        .detach(|| jitlab::fixture::demo_corpus(&dir, &options))
        .map_err(err)?;
    Ok(PipelineConfig { inner: corpus.config })
}

#[pymodule]
#[pyo3(name = "jitlab")]
fn jitlab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("MANIFEST_FILE", pipeline::MANIFEST_FILE)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(brier, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(skewness, m)?)?;
    m.add_function(wrap_pyfunction!(kruskal_wallis, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon_rank_sum, m)?)?;
    m.add_function(wrap_pyfunction!(krippendorff_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(read_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(demo_corpus, m)?)?;
    m.add_class::<Model>()?;
    m.add_class::<LabelStore>()?;
    m.add_class::<PipelineConfig>()?;
    Ok(())
}
