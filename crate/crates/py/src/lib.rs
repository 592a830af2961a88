//! Python bindings: label matrices, label models, synthetic votes and the
//! end-to-end pipeline.

use std::path::PathBuf;

use autolabel::labelmodel::{self, EmOptions, LabelModelKind};
use autolabel::pipeline::{run_pipeline, RunConfig};
use autolabel::synth::{self, PlantedLf, PlantedSpec};
use autolabel::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// N×M matrix of LF votes; -1 means abstain.
#[pyclass(name = "LabelMatrix", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyLabelMatrix {
    inner: labelmodel::LabelMatrix,
}

#[pymethods]
impl PyLabelMatrix {
    #[new]
    fn new(rows: Vec<Vec<i32>>, num_classes: usize) -> PyResult<Self> {
        let inner = labelmodel::LabelMatrix::from_rows(&rows, num_classes)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyLabelMatrix { inner })
    }

    #[staticmethod]
    fn load_csv(path: PathBuf, num_classes: usize) -> PyResult<Self> {
        Ok(PyLabelMatrix {
            inner: labelmodel::LabelMatrix::load_csv(&path, num_classes).map_err(to_py)?,
        })
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_lfs(&self) -> usize {
        self.inner.n_lfs()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn lf_ids(&self) -> Vec<String> {
        self.inner.lf_ids().to_vec()
    }

    fn row(&self, j: usize) -> PyResult<Vec<i32>> {
        if j >= self.inner.n_rows() {
            return Err(PyValueError::new_err(format!("row {j} out of range")));
        }
        Ok(self.inner.row(j).to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "LabelMatrix(n_rows={}, n_lfs={}, num_classes={})",
            self.inner.n_rows(),
            self.inner.n_lfs(),
            self.inner.num_classes()
        )
    }
}

/// Aggregated labels as `(probs, label, score, abstained)` tuples.
type Rows = Vec<(Vec<f64>, usize, f64, bool)>;

fn rows(probs: labelmodel::ProbLabels) -> Rows {
    probs
        .rows
        .into_iter()
        .map(|r| (r.probs, r.label, r.score, r.abstained))
        .collect()
}

/// Aggregates with `model` in {"mv", "ds", "fs", "dawid_skene", "flyingsquid"}.
#[pyfunction]
#[pyo3(signature = (matrix, model, prior, max_iter = 100, tol = 1e-6))]
fn aggregate(
    matrix: &PyLabelMatrix,
    model: &str,
    prior: Vec<f64>,
    max_iter: usize,
    tol: f64,
) -> PyResult<Rows> {
    let kind: LabelModelKind = model.parse().map_err(to_py)?;
    if prior.len() != matrix.inner.num_classes() {
        return Err(PyValueError::new_err("prior length must equal num_classes"));
    }
    let probs = labelmodel::aggregate(kind, &matrix.inner, &prior, EmOptions { max_iter, tol })
        .map_err(to_py)?;
    Ok(rows(probs))
}

/// Posterior rows, log-likelihood trace, class prior and confusion matrices.
type DsFit = (Rows, Vec<f64>, Vec<f64>, Vec<Vec<Vec<f64>>>);

/// Fits Dawid–Skene; returns `(rows, log_likelihood_trace, class_prior, confusion)`.
#[pyfunction]
#[pyo3(signature = (matrix, max_iter = 100, tol = 1e-6))]
fn dawid_skene(
    matrix: &PyLabelMatrix,
    max_iter: usize,
    tol: f64,
) -> PyResult<DsFit> {
    let fit = labelmodel::dawid_skene(&matrix.inner, EmOptions { max_iter, tol }).map_err(to_py)?;
    Ok((
        rows(fit.probs),
        fit.log_likelihood,
        fit.params.class_prior,
        fit.params.confusion,
    ))
}

/// Triplet-method accuracy estimates, indexed `[class][lf]`.
#[pyfunction]
fn triplet_accuracies(matrix: &PyLabelMatrix, class_balance: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    Ok(
        labelmodel::triplet_accuracies(&matrix.inner, &class_balance)
            .map_err(to_py)?
            .accuracies,
    )
}

/// Samples votes from `(accuracy, coverage)` voters; returns `(matrix, truth)`.
#[pyfunction]
fn generate_votes(
    num_classes: usize,
    n: usize,
    class_balance: Vec<f64>,
    lfs: Vec<(f64, f64)>,
    seed: u64,
) -> PyResult<(PyLabelMatrix, Vec<usize>)> {
    let planted: Vec<PlantedLf> = lfs
        .into_iter()
        .map(|(accuracy, coverage)| PlantedLf { accuracy, coverage })
        .collect();
    if class_balance.len() != num_classes || num_classes < 2 {
        return Err(PyValueError::new_err(
            "class_balance must have num_classes ≥ 2 entries",
        ));
    }
    let (inner, truth) =
        synth::generate_votes(num_classes, n, &class_balance, &planted, seed).map_err(to_py)?;
    Ok((PyLabelMatrix { inner }, truth))
}

/// Writes the bundled toy corpus layout (and its config.toml) to `out`.
#[pyfunction]
#[pyo3(signature = (out, seed = 0, labeled_per_class = 50, n_unlabeled = 2000))]
fn write_toy_corpus(
    out: PathBuf,
    seed: u64,
    labeled_per_class: usize,
    n_unlabeled: usize,
) -> PyResult<()> {
    let mut spec = PlantedSpec::toy(seed);
    spec.labeled_per_class = labeled_per_class;
    spec.n_unlabeled = n_unlabeled;
    let corpus = synth::generate_synthetic(&spec).map_err(to_py)?;
    synth::write_corpus(&corpus, &out).map_err(to_py)
}

/// Runs the pipeline from a TOML config; returns the report as JSON text.
#[pyfunction]
#[pyo3(signature = (config, out = None, seed = None))]
fn run(
    py: Python<'_>,
    config: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> PyResult<String> {
    let mut cfg = RunConfig::load(&config).map_err(to_py)?;
    if out.is_some() {
        cfg.out = out;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let report = py
        .detach(|| run_pipeline(&cfg))
        .map_err(|f| to_py(f.error))?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    autolabel::features::tokenize(text)
}

#[pymodule]
fn autolabel_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLabelMatrix>()?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(dawid_skene, m)?)?;
    m.add_function(wrap_pyfunction!(triplet_accuracies, m)?)?;
    m.add_function(wrap_pyfunction!(generate_votes, m)?)?;
    m.add_function(wrap_pyfunction!(write_toy_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
