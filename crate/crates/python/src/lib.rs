//! Python bindings. Label sets are passed as lists of label indices and the
//! label count is taken from the propensities.

use std::cell::RefCell;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pslosses_core::binary::{binary_upper_bound, binary_upper_bound_gradient, ps_gradient, ps_operator};
use pslosses_core::data::{load_xmc, Example};
use pslosses_core::eval;
use pslosses_core::multilabel;
use pslosses_core::oracle::MaskDistribution;
use pslosses_core::propensity::{self, EmpiricalModelParams};
use pslosses_core::simulate::{recall_variance_sweep, RecallSweepOptions, SyntheticSpec};
use pslosses_core::{
    BinaryLoss, Error, LinearModel, Propensities, Reduction, ScoreVector, SparseDataset, SparseLabels, UpperBoundForm,
    TrainConfig, Variant,
};

create_exception!(pslosses, DivergenceError, pyo3::exceptions::PyArithmeticError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        Error::Divergence { .. } => DivergenceError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for pslosses_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Per-label propensities in (0, 1].
#[pyclass(name = "Propensities", module = "pslosses", frozen)]
struct PyPropensities(Propensities);

#[pymethods]
impl PyPropensities {
    #[new]
    fn new(values: Vec<f64>) -> PyResult<Self> {
        Ok(Self(Propensities::new(values).py()?))
    }

    #[staticmethod]
    fn uniform(num_labels: usize, p: f64) -> PyResult<Self> {
        Ok(Self(Propensities::uniform(num_labels, p).py()?))
    }

    /// Empirical model `1 / (1 + c (n_j + b)^-a)` from label counts.
    #[staticmethod]
    fn empirical(counts: Vec<u64>, a: f64, b: f64, n: u64) -> PyResult<Self> {
        let params = EmpiricalModelParams::new(a, b, n).py()?;
        Ok(Self(propensity::empirical_propensity(&params, &counts).py()?))
    }

    /// Inverse propensity rising linearly from `top` to `bottom` with the
    /// frequency rank of each label.
    #[staticmethod]
    fn linear_inverse(counts: Vec<u64>, top: f64, bottom: f64) -> PyResult<Self> {
        Ok(Self(propensity::linear_inverse_by_frequency(&counts, top, bottom).py()?))
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.as_slice().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Propensities({:?})", self.0.as_slice())
    }
}

impl PyPropensities {
    fn labels(&self, indices: Vec<usize>) -> PyResult<SparseLabels> {
        SparseLabels::new(indices, self.0.len()).py()
    }
}

fn binary_value(base: BinaryLoss, variant: Variant, p: f64, y: bool, s: f64) -> pslosses_core::Result<f64> {
    match variant {
        Variant::Vanilla => base.value(y, s),
        Variant::Unbiased => ps_operator(base, p, y, s),
        Variant::UpperBound => binary_upper_bound(base, p, y, s),
    }
}

/// Binary loss of one observed label `y` with propensity `p` and score `s`.
#[pyfunction]
#[pyo3(signature = (base, variant, p, y, s))]
fn binary_loss(base: &str, variant: &str, p: f64, y: bool, s: f64) -> PyResult<f64> {
    binary_value(base.parse().py()?, variant.parse().py()?, p, y, s).py()
}

/// Derivative of `binary_loss` with respect to the score.
#[pyfunction]
#[pyo3(signature = (base, variant, p, y, s))]
fn binary_gradient(base: &str, variant: &str, p: f64, y: bool, s: f64) -> PyResult<f64> {
    let base: BinaryLoss = base.parse().py()?;
    match variant.parse().py()? {
        Variant::Vanilla => base.grad(y, s),
        Variant::Unbiased => ps_gradient(base, p, y, s),
        Variant::UpperBound => binary_upper_bound_gradient(base, p, y, s),
    }
    .py()
}

/// A multilabel loss given as `"<reduction>-<base>/<variant>"`, e.g.
/// `"ova-bce/unbiased"` or `"pal_n-cce/upper_bound"`.
#[pyclass(name = "Reduction", module = "pslosses", frozen)]
struct PyReduction(Reduction);

#[pymethods]
impl PyReduction {
    #[new]
    #[pyo3(signature = (spec, include_all = false))]
    fn new(spec: &str, include_all: bool) -> PyResult<Self> {
        let mut r: Reduction = spec.parse().py()?;
        if include_all {
            r.upper_bound_form = UpperBoundForm::IncludeAll;
        }
        Ok(Self(r))
    }

    fn loss(&self, p: &PyPropensities, labels: Vec<usize>, scores: Vec<f64>) -> PyResult<f64> {
        self.0.loss(&p.0, &p.labels(labels)?, &ScoreVector::new(scores)).py()
    }

    fn gradient(&self, p: &PyPropensities, labels: Vec<usize>, scores: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.gradient(&p.0, &p.labels(labels)?, &ScoreVector::new(scores)).py()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Reduction('{}')", self.0)
    }
}

/// Runs `body` with a Rust closure that calls the Python loss `f(labels,
/// scores)`; the first Python exception is re-raised afterwards.
fn with_python_loss<T>(
    f: &Bound<'_, PyAny>,
    body: impl FnOnce(&dyn Fn(&[usize], &[f64]) -> f64) -> pslosses_core::Result<T>,
) -> PyResult<T> {
    let failure: RefCell<Option<PyErr>> = RefCell::new(None);
    let call = |labels: &[usize], scores: &[f64]| -> f64 {
        match f.call1((labels.to_vec(), scores.to_vec())).and_then(|v| v.extract::<f64>()) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let result = body(&call);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    result.py()
}

/// Unbiased estimate of an arbitrary loss `f(labels, scores)` from the
/// observed labels.
#[pyfunction]
fn unbiased_general(f: &Bound<'_, PyAny>, p: &PyPropensities, labels: Vec<usize>, scores: Vec<f64>) -> PyResult<f64> {
    let y = p.labels(labels)?;
    let s = ScoreVector::new(scores);
    with_python_loss(f, |loss| multilabel::unbiased_general(&loss, &p.0, &y, &s))
}

/// Exact expectation of `f(observed)` over every masking of `truth`.
#[pyfunction]
fn mask_expectation(f: &Bound<'_, PyAny>, p: &PyPropensities, truth: Vec<usize>) -> PyResult<f64> {
    let dist = MaskDistribution::new(p.labels(truth)?, p.0.clone()).py()?;
    let mut failure = None;
    let value = dist.expect(|y| match f.call1((y.indices().to_vec(),)).and_then(|v| v.extract::<f64>()) {
        Ok(v) => Ok(v),
        Err(e) => {
            failure.get_or_insert(e);
            Ok(f64::NAN)
        }
    });
    match failure {
        Some(e) => Err(e),
        None => value.py(),
    }
}

/// Propensity-scored recall of a predicted label set.
#[pyfunction]
fn ps_recall(p: &PyPropensities, labels: Vec<usize>, predicted: Vec<usize>) -> PyResult<f64> {
    multilabel::ps_recall(&p.0, &p.labels(labels)?, &p.labels(predicted)?).py()
}

/// Unbiased weights replacing `1 / |y|`, as `{label: weight}`.
#[pyfunction]
fn normalized_weights(p: &PyPropensities, labels: Vec<usize>) -> PyResult<Vec<(usize, f64)>> {
    Ok(multilabel::unbiased_weights(&p.0, &p.labels(labels)?).py()?.iter().collect())
}

#[pyfunction]
#[pyo3(signature = (labels, scores, k, p = None))]
fn precision_at_k(labels: Vec<usize>, scores: Vec<f64>, k: usize, p: Option<&PyPropensities>) -> PyResult<f64> {
    let y = SparseLabels::new(labels, scores.len()).py()?;
    let s = ScoreVector::new(scores);
    match p {
        Some(p) => eval::ps_precision_at_k(&p.0, &y, &s, k),
        None => eval::precision_at_k(&y, &s, k),
    }
    .py()
}

#[pyfunction]
#[pyo3(signature = (labels, scores, k, p = None))]
fn recall_at_k(labels: Vec<usize>, scores: Vec<f64>, k: usize, p: Option<&PyPropensities>) -> PyResult<f64> {
    let y = SparseLabels::new(labels, scores.len()).py()?;
    let s = ScoreVector::new(scores);
    match p {
        Some(p) => eval::ps_recall_at_k(&p.0, &y, &s, k),
        None => eval::recall_at_k(&y, &s, k),
    }
    .py()
}

/// Recall estimators under repeated masking; one dict per (p, estimator).
#[pyfunction]
#[pyo3(signature = (p_grid, reps = 100, num_labels = 100, label_prob = 0.1, num_examples = 10_000, seed = 0, skip_empty = false))]
#[allow(clippy::too_many_arguments)]
fn simulate_recall<'py>(
    py: Python<'py>,
    p_grid: Vec<f64>,
    reps: usize,
    num_labels: usize,
    label_prob: f64,
    num_examples: usize,
    seed: u64,
    skip_empty: bool,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let spec = SyntheticSpec { num_labels, label_prob, num_examples, seed };
    let opts = RecallSweepOptions { skip_empty, ..Default::default() };
    let rows = py.detach(|| recall_variance_sweep(&spec, &p_grid, reps, &opts)).py()?;
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("p", r.p)?;
            d.set_item("estimator", r.estimator.name())?;
            d.set_item("mean", r.mean)?;
            d.set_item("std", r.std)?;
            d.set_item("true_recall", r.true_recall)?;
            Ok(d)
        })
        .collect()
}

/// A sparse multilabel dataset.
#[pyclass(name = "Dataset", module = "pslosses", frozen)]
struct PyDataset(SparseDataset);

#[pymethods]
impl PyDataset {
    /// `features[i]` is a list of `(feature, value)` pairs and `labels[i]` a
    /// list of label indices.
    #[new]
    fn new(
        num_features: usize,
        num_labels: usize,
        features: Vec<Vec<(usize, f64)>>,
        labels: Vec<Vec<usize>>,
    ) -> PyResult<Self> {
        if features.len() != labels.len() {
            return Err(PyValueError::new_err("features and labels differ in length"));
        }
        let examples = features
            .into_iter()
            .zip(labels)
            .map(|(f, l)| Ok(Example { features: f, labels: SparseLabels::new(l, num_labels)? }))
            .collect::<pslosses_core::Result<Vec<_>>>()
            .py()?;
        Ok(Self(SparseDataset::new(num_features, num_labels, examples).py()?))
    }

    /// Reads the XMC text format.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self(load_xmc(path).py()?))
    }

    #[getter]
    fn num_examples(&self) -> usize {
        self.0.num_examples()
    }

    #[getter]
    fn num_features(&self) -> usize {
        self.0.num_features()
    }

    #[getter]
    fn num_labels(&self) -> usize {
        self.0.num_labels()
    }

    fn labels(&self) -> Vec<Vec<usize>> {
        self.0.labels().map(|y| y.indices().to_vec()).collect()
    }

    fn label_counts(&self) -> Vec<u64> {
        self.0.label_counts()
    }
}

/// Linear multilabel scorer.
#[pyclass(name = "LinearModel", module = "pslosses", frozen)]
struct PyLinearModel(LinearModel);

#[pymethods]
impl PyLinearModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = std::fs::File::open(&path).map_err(|e| PyOSError::new_err(e.to_string()))?;
        Ok(Self(LinearModel::read(std::io::BufReader::new(file)).py()?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path).map_err(|e| PyOSError::new_err(e.to_string()))?;
        self.0.write(std::io::BufWriter::new(file)).py()
    }

    #[getter]
    fn num_features(&self) -> usize {
        self.0.num_features()
    }

    #[getter]
    fn num_labels(&self) -> usize {
        self.0.num_labels()
    }

    /// Feature-major weights, `num_features * num_labels` values.
    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    #[getter]
    fn bias(&self) -> Vec<f64> {
        self.0.bias().to_vec()
    }

    fn scores(&self, features: Vec<(usize, f64)>) -> PyResult<Vec<f64>> {
        if let Some(&(f, _)) = features.iter().find(|&&(f, _)| f >= self.0.num_features()) {
            return Err(PyValueError::new_err(format!("feature {f} out of range")));
        }
        Ok(self.0.scores(&features))
    }
}

/// Trains a linear model with Adam and the two-phase learning-rate schedule.
#[pyfunction]
#[pyo3(signature = (data, p, loss = "ova-bce/unbiased", l2 = 0.0, epochs_phase1 = 15, lr_phase1 = 1e-4,
                    epochs_phase2 = 5, lr_phase2 = 1e-5, batch_size = 512, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    data: &PyDataset,
    p: &PyPropensities,
    loss: &str,
    l2: f64,
    epochs_phase1: usize,
    lr_phase1: f64,
    epochs_phase2: usize,
    lr_phase2: f64,
    batch_size: usize,
    seed: u64,
) -> PyResult<PyLinearModel> {
    let cfg = TrainConfig {
        l2,
        epochs_phase1,
        lr_phase1,
        epochs_phase2,
        lr_phase2,
        batch_size,
        seed,
        ..TrainConfig::new(loss.parse().py()?)
    };
    let model = py.detach(|| pslosses_core::train::train(&data.0, &p.0, &cfg)).py()?;
    Ok(PyLinearModel(model))
}

#[pymodule]
fn pslosses(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("DivergenceError", m.py().get_type::<DivergenceError>())?;
    m.add_class::<PyPropensities>()?;
    m.add_class::<PyReduction>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyLinearModel>()?;
    m.add_function(wrap_pyfunction!(binary_loss, m)?)?;
    m.add_function(wrap_pyfunction!(binary_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(unbiased_general, m)?)?;
    m.add_function(wrap_pyfunction!(mask_expectation, m)?)?;
    m.add_function(wrap_pyfunction!(ps_recall, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_weights, m)?)?;
    m.add_function(wrap_pyfunction!(precision_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(recall_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_recall, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
