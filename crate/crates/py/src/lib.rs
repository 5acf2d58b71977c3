//! Python bindings: method and training configs, task data, training runs,
//! transport solvers, scorers, and report tables.

use std::collections::BTreeMap;
use std::path::Path;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

use pdabench::datagen::{gen_partial_blobs, Domain, LabeledSet, PartialShiftSpec};
use pdabench::diffcore::Tensor;
use pdabench::harness::{generate_dataset, load_dataset, run_protocol, ProtocolConfig, ReportTable};
use pdabench::methods::{train_run, MethodConfig, RunRecord, TaskData, TrainConfig};
use pdabench::ot::{partial_ot_entropic, sinkhorn, sinkhorn_uot, uniform, TransportPlan};
use pdabench::selection::{dev_risk, score_ent, score_snd, select_checkpoint, ScorerKind, SND_TEMPERATURE};

pub fn to_py_err(e: pdabench::Error) -> PyErr {
    match e {
        pdabench::Error::Numeric { .. } => PyArithmeticError::new_err(e.to_string()),
        pdabench::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Row-major matrix from nested lists.
pub fn matrix(rows: &[Vec<f64>]) -> PyResult<Tensor> {
    Tensor::from_rows(rows).map_err(to_py_err)
}

pub fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn parse_scorer(name: &str) -> PyResult<ScorerKind> {
    name.parse().map_err(to_py_err)
}

fn parse_scorers(names: Option<Vec<String>>) -> PyResult<Vec<ScorerKind>> {
    match names {
        None => Ok(ScorerKind::ALL.to_vec()),
        Some(v) => v.iter().map(|s| parse_scorer(s)).collect(),
    }
}

#[pyclass(name = "MethodConfig", module = "pdabench_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyMethodConfig {
    pub inner: MethodConfig,
}

#[pymethods]
impl PyMethodConfig {
    #[new]
    #[pyo3(signature = (method, hp = None))]
    fn new(method: &str, hp: Option<BTreeMap<String, f64>>) -> PyResult<Self> {
        let inner = MethodConfig::from_hp(method, &hp.unwrap_or_default()).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn tag(&self) -> &'static str {
        self.inner.tag()
    }

    #[getter]
    fn hp(&self) -> BTreeMap<String, f64> {
        self.inner.hp_map()
    }

    fn hp_key(&self) -> String {
        self.inner.hp_key()
    }

    fn __repr__(&self) -> String {
        format!("MethodConfig({})", self.inner.hp_key())
    }
}

#[pyclass(name = "TrainConfig", module = "pdabench_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyTrainConfig {
    pub inner: TrainConfig,
}

#[pymethods]
impl PyTrainConfig {
    #[new]
    #[pyo3(signature = (total_iters = 5000, eval_interval = 500, batch_size = 36, seed = 2020, hidden = None, bottleneck = 256, mu0 = 0.01))]
    fn new(
        total_iters: usize,
        eval_interval: usize,
        batch_size: usize,
        seed: u64,
        hidden: Option<Vec<usize>>,
        bottleneck: usize,
        mu0: f64,
    ) -> PyResult<Self> {
        let base = TrainConfig::default();
        let mut inner = TrainConfig {
            total_iters,
            eval_interval,
            batch_size,
            seed,
            hidden: hidden.unwrap_or(base.hidden.clone()),
            bottleneck,
            ..base
        };
        inner.schedule.mu0 = mu0;
        inner.schedule.total_iters = total_iters;
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: TrainConfig = serde_json::from_str(text).map_err(json_err)?;
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[getter]
    fn total_iters(&self) -> usize {
        self.inner.total_iters
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
}

/// A prepared task: source train/validation split, target set, and labeled
/// target subsets.
#[pyclass(name = "TaskData", module = "pdabench_py")]
pub struct PyTaskData {
    pub inner: TaskData,
}

#[pymethods]
impl PyTaskData {
    /// Synthetic partial-shift task. `spec_json` overrides fields of the
    /// default recipe.
    #[staticmethod]
    #[pyo3(signature = (seed = 2020, data_seed = 0, spec_json = None))]
    fn synthetic(seed: u64, data_seed: u64, spec_json: Option<&str>) -> PyResult<Self> {
        let spec: PartialShiftSpec = match spec_json {
            Some(t) => serde_json::from_str(t).map_err(json_err)?,
            None => PartialShiftSpec::default(),
        };
        let (s, t) = gen_partial_blobs(&spec, data_seed).map_err(to_py_err)?;
        let inner = TaskData::prepare("S2T", &s, &t, seed).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    /// Task from raw arrays; target labels are only used for evaluation.
    #[staticmethod]
    #[pyo3(signature = (task_id, source_x, source_y, target_x, target_y, k_universe, seed = 2020))]
    fn from_arrays(
        task_id: &str,
        source_x: Vec<Vec<f64>>,
        source_y: Vec<usize>,
        target_x: Vec<Vec<f64>>,
        target_y: Vec<usize>,
        k_universe: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let s = LabeledSet::new(matrix(&source_x)?, source_y, Domain::Source, k_universe).map_err(to_py_err)?;
        let t = LabeledSet::new(matrix(&target_x)?, target_y, Domain::Target, k_universe).map_err(to_py_err)?;
        let inner = TaskData::prepare(task_id, &s, &t, seed).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn task_id(&self) -> String {
        self.inner.task_id.clone()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.source_train.dim()
    }

    #[getter]
    fn n_source_train(&self) -> usize {
        self.inner.source_train.len()
    }

    #[getter]
    fn n_source_val(&self) -> usize {
        self.inner.source_val.len()
    }

    #[getter]
    fn n_target(&self) -> usize {
        self.inner.target.len()
    }

    #[getter]
    fn target_classes(&self) -> Vec<usize> {
        self.inner.target.classes()
    }
}

#[pyclass(name = "RunRecord", module = "pdabench_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyRunRecord {
    pub inner: RunRecord,
}

#[pymethods]
impl PyRunRecord {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(json_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn is_ok(&self) -> bool {
        self.inner.is_ok()
    }

    #[getter]
    fn iterations(&self) -> Vec<usize> {
        self.inner.checkpoints.iter().map(|c| c.iteration).collect()
    }

    #[getter]
    fn target_acc(&self) -> Vec<f64> {
        self.inner.checkpoints.iter().map(|c| c.target_acc).collect()
    }

    #[getter]
    fn src_val_acc(&self) -> Vec<f64> {
        self.inner.checkpoints.iter().map(|c| c.src_val_acc).collect()
    }

    /// Scorer values along training.
    fn scores(&self, scorer: &str) -> PyResult<Vec<f64>> {
        let k = parse_scorer(scorer)?;
        self.inner
            .checkpoints
            .iter()
            .map(|c| {
                c.scores
                    .get(&k)
                    .copied()
                    .ok_or_else(|| PyValueError::new_err(format!("no {k} score at iteration {}", c.iteration)))
            })
            .collect()
    }

    /// Iteration of the checkpoint `scorer` selects.
    fn select_checkpoint(&self, scorer: &str) -> PyResult<usize> {
        select_checkpoint(&self.inner, parse_scorer(scorer)?).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("RunRecord({} seed={} {:?})", self.inner.hp_key(), self.inner.seed, self.inner.status)
    }
}

#[pyclass(name = "ReportTable", module = "pdabench_py")]
pub struct PyReportTable {
    pub inner: ReportTable,
}

#[pymethods]
impl PyReportTable {
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ReportTable::from_csv(text).map_err(to_py_err)?,
        })
    }

    fn to_csv(&self) -> PyResult<String> {
        self.inner.to_csv().map_err(to_py_err)
    }

    fn to_markdown(&self) -> String {
        self.inner.to_markdown()
    }

    #[getter]
    fn tasks(&self) -> Vec<String> {
        self.inner.tasks.clone()
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    /// Mean accuracy over tasks and seeds for one (method, scorer) row, or
    /// `None` when a seed failed.
    fn average(&self, method: &str, scorer: &str) -> PyResult<Option<f64>> {
        let k = parse_scorer(scorer)?;
        Ok(self.inner.average(method, k).and_then(|c| c.mean()))
    }
}

/// Plan, row sums, column sums and convergence flag of a transport solve.
type PlanTuple = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, bool);

fn plan_tuple(p: TransportPlan) -> PlanTuple {
    let (r, c) = (p.row_sums(), p.col_sums());
    (rows(&p.pi), r, c, p.converged)
}

fn weights(w: Option<Vec<f64>>, n: usize) -> Vec<f64> {
    w.unwrap_or_else(|| uniform(n))
}

#[pyfunction]
#[pyo3(signature = (cost, eps, a = None, b = None, max_iter = 1000, tol = 1e-9))]
fn balanced_sinkhorn(
    cost: Vec<Vec<f64>>,
    eps: f64,
    a: Option<Vec<f64>>,
    b: Option<Vec<f64>>,
    max_iter: usize,
    tol: f64,
) -> PyResult<PlanTuple> {
    let c = matrix(&cost)?;
    let (a, b) = (weights(a, c.rows()), weights(b, c.cols()));
    sinkhorn(&c, &a, &b, eps, max_iter, tol).map(plan_tuple).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (cost, tau, eta, a = None, b = None, max_iter = 1000, tol = 1e-9))]
fn unbalanced_sinkhorn(
    cost: Vec<Vec<f64>>,
    tau: f64,
    eta: f64,
    a: Option<Vec<f64>>,
    b: Option<Vec<f64>>,
    max_iter: usize,
    tol: f64,
) -> PyResult<PlanTuple> {
    let c = matrix(&cost)?;
    let (a, b) = (weights(a, c.rows()), weights(b, c.cols()));
    sinkhorn_uot(&c, &a, &b, tau, eta, max_iter, tol).map(plan_tuple).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (cost, mass, eps, a = None, b = None, max_iter = 1000, tol = 1e-9))]
fn partial_ot(
    cost: Vec<Vec<f64>>,
    mass: f64,
    eps: f64,
    a: Option<Vec<f64>>,
    b: Option<Vec<f64>>,
    max_iter: usize,
    tol: f64,
) -> PyResult<PlanTuple> {
    let c = matrix(&cost)?;
    let (a, b) = (weights(a, c.rows()), weights(b, c.cols()));
    partial_ot_entropic(&c, &a, &b, mass, eps, max_iter, tol)
        .map(plan_tuple)
        .map_err(to_py_err)
}

/// Mean prediction entropy of a logit matrix.
#[pyfunction]
fn entropy_score(logits: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(score_ent(&matrix(&logits)?))
}

/// Soft neighbourhood density of a feature matrix.
#[pyfunction]
#[pyo3(signature = (features, temperature = SND_TEMPERATURE))]
fn snd_score(features: Vec<Vec<f64>>, temperature: f64) -> PyResult<f64> {
    score_snd(&matrix(&features)?, temperature).map_err(to_py_err)
}

/// Control-variate importance-weighted risk from per-sample losses and weights.
#[pyfunction]
fn dev_score(losses: Vec<f64>, weights: Vec<f64>) -> PyResult<f64> {
    dev_risk(&losses, &weights).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (method, config, data, scorers = None))]
fn train(
    py: Python<'_>,
    method: &PyMethodConfig,
    config: &PyTrainConfig,
    data: &PyTaskData,
    scorers: Option<Vec<String>>,
) -> PyResult<PyRunRecord> {
    let scorers = parse_scorers(scorers)?;
    let (m, c, d) = (&method.inner, &config.inner, &data.inner);
    let inner = py.detach(|| train_run(m, c, d, &scorers)).map_err(to_py_err)?;
    Ok(PyRunRecord { inner })
}

/// Runs the full protocol from a JSON config, on synthetic data or on the
/// embedding dataset directory `embeddings`.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir, embeddings = None))]
fn protocol(py: Python<'_>, config_json: &str, out_dir: &str, embeddings: Option<&str>) -> PyResult<PyReportTable> {
    let cfg: ProtocolConfig = serde_json::from_str(config_json).map_err(json_err)?;
    let out = py
        .detach(|| {
            let tasks = match embeddings {
                Some(dir) => load_dataset(Path::new(dir))?,
                None => generate_dataset(&cfg.dataset)?,
            };
            run_protocol(&cfg, &tasks, Path::new(out_dir))
        })
        .map_err(to_py_err)?;
    Ok(PyReportTable { inner: out.table })
}

#[pyfunction]
fn scorer_names() -> Vec<&'static str> {
    ScorerKind::ALL.iter().map(|k| k.name()).collect()
}

/// Adds every class and function to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMethodConfig>()?;
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<PyTaskData>()?;
    m.add_class::<PyRunRecord>()?;
    m.add_class::<PyReportTable>()?;
    m.add_function(wrap_pyfunction!(balanced_sinkhorn, m)?)?;
    m.add_function(wrap_pyfunction!(unbalanced_sinkhorn, m)?)?;
    m.add_function(wrap_pyfunction!(partial_ot, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_score, m)?)?;
    m.add_function(wrap_pyfunction!(snd_score, m)?)?;
    m.add_function(wrap_pyfunction!(dev_score, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(protocol, m)?)?;
    m.add_function(wrap_pyfunction!(scorer_names, m)?)?;
    Ok(())
}

#[pymodule]
fn pdabench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
