//! Python bindings: the embedding container, the similarity kernel, and
//! the selection operations, mirroring the core library's surface.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use std::fs;
use std::path::PathBuf;

use divsel_core as core;
use divsel_core::{EmbeddingFormat, Error, ObjectiveConfig, SetRole};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_role(role: &str) -> PyResult<SetRole> {
    match role {
        "corpus" => Ok(SetRole::Corpus),
        "query" => Ok(SetRole::Query),
        other => Err(PyValueError::new_err(format!(
            "unknown role `{other}` (expected `corpus` or `query`)"
        ))),
    }
}

fn parse_format(format: &str) -> PyResult<EmbeddingFormat> {
    format.parse().map_err(to_py)
}

/// A validated, dimension-consistent embedding collection.
#[pyclass(name = "EmbeddingSet", skip_from_py_object)]
#[derive(Clone)]
struct PyEmbeddingSet {
    inner: core::EmbeddingSet,
}

#[pymethods]
impl PyEmbeddingSet {
    /// Build from `(id, label_or_None, vector)` triples.
    #[staticmethod]
    #[pyo3(signature = (records, role = "corpus"))]
    fn from_records(
        records: Vec<(String, Option<String>, Vec<f32>)>,
        role: &str,
    ) -> PyResult<Self> {
        let inner = core::EmbeddingSet::from_raw(parse_role(role)?, records).map_err(to_py)?;
        Ok(PyEmbeddingSet { inner })
    }

    /// Load from disk; `format` is `"text"` or `"binary"`.
    #[staticmethod]
    #[pyo3(signature = (path, format = "text", role = "corpus"))]
    fn load(path: PathBuf, format: &str, role: &str) -> PyResult<Self> {
        let file = fs::File::open(&path).map_err(|e| to_py(Error::from(e).in_file(&path)))?;
        let inner = core::load_embeddings(file, parse_format(format)?, parse_role(role)?)
            .map_err(|e| to_py(e.in_file(&path)))?;
        Ok(PyEmbeddingSet { inner })
    }

    #[pyo3(signature = (path, format = "text"))]
    fn save(&self, path: PathBuf, format: &str) -> PyResult<()> {
        let mut buf = Vec::new();
        core::save_embeddings(&mut buf, &self.inner, parse_format(format)?).map_err(to_py)?;
        fs::write(&path, buf).map_err(|e| to_py(Error::from(e).in_file(&path)))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn dimension(&self) -> Option<usize> {
        self.inner.dimension()
    }

    fn ids(&self) -> Vec<String> {
        self.inner.records().iter().map(|r| r.id.clone()).collect()
    }

    fn labels(&self) -> Vec<Option<String>> {
        self.inner.records().iter().map(|r| r.label.clone()).collect()
    }

    fn norms(&self) -> Vec<f64> {
        self.inner.records().iter().map(|r| r.norm).collect()
    }

    /// Unit vector of record `i`.
    fn unit(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.len() {
            return Err(PyValueError::new_err(format!("record {i} out of range")));
        }
        Ok(self.inner.record(i).unit.clone())
    }
}

/// Dense symmetric cosine-similarity matrix.
#[pyclass(name = "SimilarityKernel", skip_from_py_object)]
#[derive(Clone)]
struct PyKernel {
    inner: core::SimilarityKernel,
}

#[pymethods]
impl PyKernel {
    fn size(&self) -> usize {
        self.inner.size()
    }

    fn sim(&self, i: usize, j: usize) -> PyResult<f64> {
        let n = self.inner.size();
        if i >= n || j >= n {
            return Err(PyValueError::new_err(format!("index ({i}, {j}) out of range")));
        }
        Ok(self.inner.sim(i, j))
    }

    fn row(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.size() {
            return Err(PyValueError::new_err(format!("row {i} out of range")));
        }
        Ok(self.inner.row(i).to_vec())
    }

    fn ids(&self) -> Vec<String> {
        self.inner.ids().to_vec()
    }
}

/// Objective knobs: trade-off weight, budgets, floors, tie handling.
#[pyclass(name = "SelectionConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ObjectiveConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (lambda_ = 0.1, k1 = 100, k = 3, residual_floor = 1e-12, allow_negative_gain = false))]
    fn new(
        lambda_: f64,
        k1: usize,
        k: usize,
        residual_floor: f64,
        allow_negative_gain: bool,
    ) -> PyResult<Self> {
        let mut inner = ObjectiveConfig::default();
        inner.lambda = lambda_;
        inner.k1 = k1;
        inner.k = k;
        inner.residual_floor = residual_floor;
        inner.allow_negative_gain = allow_negative_gain;
        inner.validate().map_err(to_py)?;
        Ok(PyConfig { inner })
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn k1(&self) -> usize {
        self.inner.k1
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }
}

fn config_or_default(config: Option<&PyConfig>) -> ObjectiveConfig {
    config.map(|c| c.inner).unwrap_or_default()
}

fn universe_or_default(universe: Option<Vec<usize>>, kernel: &PyKernel) -> Vec<usize> {
    universe.unwrap_or_else(|| (0..kernel.inner.size()).collect())
}

/// Cosine kernel over one set, or over `a ++ b` when `b` is given.
#[pyfunction]
#[pyo3(signature = (set_a, set_b = None))]
fn cosine_kernel(set_a: &PyEmbeddingSet, set_b: Option<&PyEmbeddingSet>) -> PyResult<PyKernel> {
    let inner =
        core::cosine_kernel(&set_a.inner, set_b.map(|b| &b.inner)).map_err(to_py)?;
    Ok(PyKernel { inner })
}

#[pyfunction]
#[pyo3(signature = (kernel, subset, config = None))]
fn dispersion_stats<'py>(
    py: Python<'py>,
    kernel: &PyKernel,
    subset: Vec<usize>,
    config: Option<&PyConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let stats = core::dispersion_stats(&kernel.inner, &subset, &config_or_default(config))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("mean_pairwise_sim", stats.mean_pairwise_sim)?;
    out.set_item("min_pairwise_sim", stats.min_pairwise_sim)?;
    out.set_item("logdet", stats.logdet)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (kernel, s, universe = None))]
fn coverage(kernel: &PyKernel, s: Vec<usize>, universe: Option<Vec<usize>>) -> PyResult<f64> {
    let u = universe_or_default(universe, kernel);
    core::coverage(&kernel.inner, &u, &s).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (kernel, s, config = None))]
fn log_det_diversity(
    kernel: &PyKernel,
    s: Vec<usize>,
    config: Option<&PyConfig>,
) -> PyResult<f64> {
    core::log_det_diversity(&kernel.inner, &s, &config_or_default(config)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (kernel, s, universe = None, config = None))]
fn objective_value<'py>(
    py: Python<'py>,
    kernel: &PyKernel,
    s: Vec<usize>,
    universe: Option<Vec<usize>>,
    config: Option<&PyConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let u = universe_or_default(universe, kernel);
    let v = core::objective_value(&kernel.inner, &u, &s, &config_or_default(config))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("f", v.f)?;
    out.set_item("coverage", v.coverage)?;
    out.set_item("diversity", v.diversity)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (kernel_union, q, x, universe = None, config = None))]
fn conditional_gain(
    kernel_union: &PyKernel,
    q: Vec<usize>,
    x: usize,
    universe: Option<Vec<usize>>,
    config: Option<&PyConfig>,
) -> PyResult<f64> {
    let u = universe_or_default(universe, kernel_union);
    core::conditional_gain(&kernel_union.inner, &q, x, &u, &config_or_default(config))
        .map_err(to_py)
}

fn stage1_to_dict<'py>(
    py: Python<'py>,
    outcome: &core::Stage1Outcome,
) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("selected", outcome.selected.clone())?;
    let steps = PyList::empty(py);
    for s in &outcome.steps {
        let step = PyDict::new(py);
        step.set_item("index", s.index)?;
        step.set_item("id", s.id.clone())?;
        step.set_item("gain", s.gain)?;
        step.set_item("coverage_delta", s.coverage_delta)?;
        step.set_item("diversity_delta", s.diversity_delta)?;
        steps.append(step)?;
    }
    out.set_item("steps", steps)?;
    out.set_item("objective_trace", outcome.objective_trace.clone())?;
    out.set_item("warnings", outcome.warnings.clone())?;
    Ok(out)
}

/// Stage 1: lazy-greedy retrieval of the candidate pool.
#[pyfunction]
#[pyo3(signature = (kernel, universe = None, config = None))]
fn retrieve_stage1<'py>(
    py: Python<'py>,
    kernel: &PyKernel,
    universe: Option<Vec<usize>>,
    config: Option<&PyConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let u = universe_or_default(universe, kernel);
    let outcome =
        core::retrieve_stage1(&kernel.inner, &u, &config_or_default(config)).map_err(to_py)?;
    stage1_to_dict(py, &outcome)
}

#[pyfunction]
#[pyo3(signature = (kernel, universe = None, config = None))]
fn naive_greedy(
    kernel: &PyKernel,
    universe: Option<Vec<usize>>,
    config: Option<&PyConfig>,
) -> PyResult<Vec<usize>> {
    let u = universe_or_default(universe, kernel);
    core::naive_greedy(&kernel.inner, &u, &config_or_default(config)).map_err(to_py)
}

/// Stage 2: rank the pool by singleton conditional gains against the
/// query indices (positions in the union kernel).
#[pyfunction]
#[pyo3(signature = (kernel_union, s_star, q, universe = None, config = None))]
fn rank_stage2<'py>(
    py: Python<'py>,
    kernel_union: &PyKernel,
    s_star: Vec<usize>,
    q: Vec<usize>,
    universe: Option<Vec<usize>>,
    config: Option<&PyConfig>,
) -> PyResult<Bound<'py, PyList>> {
    let u = universe_or_default(universe, kernel_union);
    let steps =
        core::rank_stage2(&kernel_union.inner, &s_star, &q, &u, &config_or_default(config))
            .map_err(to_py)?;
    let out = PyList::empty(py);
    for s in steps {
        let step = PyDict::new(py);
        step.set_item("index", s.index)?;
        step.set_item("id", s.id)?;
        step.set_item("gain", s.gain)?;
        out.append(step)?;
    }
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (kernel, universe = None, config = None, trials = 500, seed = 0))]
fn lambda_bound_probe<'py>(
    py: Python<'py>,
    kernel: &PyKernel,
    universe: Option<Vec<usize>>,
    config: Option<&PyConfig>,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let u = universe_or_default(universe, kernel);
    let probe =
        core::lambda_bound_probe(&kernel.inner, &u, &config_or_default(config), trials, seed)
            .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("max_valid_lambda_estimate", probe.max_valid_lambda_estimate)?;
    out.set_item("trials", probe.trials)?;
    out.set_item("skipped_trials", probe.skipped_trials)?;
    let violations = PyList::empty(py);
    for v in probe.violations {
        let item = PyDict::new(py);
        item.set_item("s", v.s)?;
        item.set_item("x", v.x)?;
        item.set_item("coverage_delta", v.coverage_delta)?;
        item.set_item("diversity_drop", v.diversity_drop)?;
        item.set_item("combined_gain", v.combined_gain)?;
        violations.append(item)?;
    }
    out.set_item("violations", violations)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (kernel, budget, universe = None, config = None))]
fn brute_force_optimum(
    kernel: &PyKernel,
    budget: usize,
    universe: Option<Vec<usize>>,
    config: Option<&PyConfig>,
) -> PyResult<(Vec<usize>, f64)> {
    let u = universe_or_default(universe, kernel);
    let opt = core::brute_force_optimum(&kernel.inner, &u, budget, &config_or_default(config))
        .map_err(to_py)?;
    Ok((opt.s_opt, opt.f_opt))
}

/// Render a demonstration prompt; `template` defaults to the built-in one.
#[pyfunction]
#[pyo3(signature = (task_description, demos, query, template = None))]
fn assemble_prompt(
    task_description: &str,
    demos: Vec<(String, String)>,
    query: &str,
    template: Option<&str>,
) -> PyResult<String> {
    core::assemble_prompt(
        template.unwrap_or(core::DEFAULT_TEMPLATE),
        task_description,
        &demos,
        query,
    )
    .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (items, limit = 720))]
fn enumerate_permutations(items: Vec<String>, limit: u64) -> PyResult<Vec<Vec<String>>> {
    core::enumerate_permutations(&items, limit).map_err(to_py)
}

/// Clustered synthetic corpus (cluster id recorded in the labels).
#[pyfunction]
#[pyo3(signature = (n, d, clusters, noise = 0.1, seed = 0))]
fn generate_synthetic(
    n: usize,
    d: usize,
    clusters: usize,
    noise: f64,
    seed: u64,
) -> PyResult<PyEmbeddingSet> {
    let inner = core::synth::clustered_instance(seed, n, d, clusters, noise).map_err(to_py)?;
    Ok(PyEmbeddingSet { inner })
}

/// Full two-stage run; writes artifacts under `output_dir` and returns the
/// report as a JSON string.
#[pyfunction]
#[pyo3(signature = (corpus, queries, output_dir, config_file = None, **options))]
fn run_select(
    corpus: PathBuf,
    queries: PathBuf,
    output_dir: PathBuf,
    config_file: Option<PathBuf>,
    options: Option<&Bound<'_, PyDict>>,
) -> PyResult<String> {
    let mut overrides = core::RunOverrides {
        corpus_path: Some(corpus),
        query_path: Some(queries),
        output_dir: Some(output_dir),
        ..Default::default()
    };
    if let Some(opts) = options {
        for (key, value) in opts.iter() {
            let key: String = key.extract()?;
            let text: String = value.str()?.extract()?;
            let line = format!("{key} = {text}");
            let layer = core::RunOverrides::from_config_text(&line).map_err(to_py)?;
            overrides = overrides.over(layer);
        }
    }
    if let Some(path) = config_file {
        let text =
            fs::read_to_string(&path).map_err(|e| to_py(Error::from(e).in_file(&path)))?;
        let layer = core::RunOverrides::from_config_text(&text).map_err(to_py)?;
        overrides = overrides.over(layer);
    }
    let config = overrides.finalize().map_err(to_py)?;
    let report = core::run_select(&config).map_err(to_py)?;
    Ok(report.to_json())
}

#[pymodule]
fn divsel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEmbeddingSet>()?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(cosine_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(dispersion_stats, m)?)?;
    m.add_function(wrap_pyfunction!(coverage, m)?)?;
    m.add_function(wrap_pyfunction!(log_det_diversity, m)?)?;
    m.add_function(wrap_pyfunction!(objective_value, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_gain, m)?)?;
    m.add_function(wrap_pyfunction!(retrieve_stage1, m)?)?;
    m.add_function(wrap_pyfunction!(naive_greedy, m)?)?;
    m.add_function(wrap_pyfunction!(rank_stage2, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_bound_probe, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_optimum, m)?)?;
    m.add_function(wrap_pyfunction!(assemble_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_permutations, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_select, m)?)?;
    m.add("DEFAULT_TEMPLATE", core::DEFAULT_TEMPLATE)?;
    Ok(())
}
