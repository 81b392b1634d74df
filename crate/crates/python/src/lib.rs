use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use autoaug::config::parse_config_str;
use autoaug::cost::cost_iterations as core_cost_iterations;
use autoaug::data::{read_records, RecordShape, SplitTag};
use autoaug::engine::Search as CoreSearch;
use autoaug::image::ImageBuffer;
use autoaug::kernels::{apply_operation, AugOperation, Sign, NUM_OPERATIONS};
use autoaug::learner::load_checkpoint;
use autoaug::policy::{self, PolicyParams, SampleCounts, Sampler};
use autoaug::policy_optim::{adam_ascent_step, reinforce_gradient as core_reinforce, AdamState};
use autoaug::rng::stream_rng;
use autoaug::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn params(theta: Vec<f64>) -> PyResult<PolicyParams> {
    PolicyParams::new(theta).map_err(py_err)
}

/// Normalized-sigmoid probabilities for a logit vector.
#[pyfunction]
fn probabilities(theta: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(policy::probabilities(&params(theta)?))
}

/// Entropy of the distribution in nats.
#[pyfunction]
fn entropy(theta: Vec<f64>) -> PyResult<f64> {
    Ok(policy::entropy(&params(theta)?))
}

/// Marginal probability of each first element; needs 1296 logits.
#[pyfunction]
fn marginal_first_element(theta: Vec<f64>) -> PyResult<Vec<f64>> {
    policy::marginal_first_element(&params(theta)?).map_err(py_err)
}

/// Draws `n` operation indices with a seeded generator.
#[pyfunction]
fn sample(theta: Vec<f64>, n: usize, seed: u64) -> PyResult<Vec<usize>> {
    let sampler = Sampler::new(&params(theta)?);
    let mut rng = stream_rng(seed, &[]);
    Ok((0..n).map(|_| sampler.sample(&mut rng)).collect())
}

/// Gradient of the log-likelihood of a count vector with respect to the logits.
#[pyfunction]
fn log_prob_gradient(theta: Vec<f64>, counts: Vec<u64>) -> PyResult<Vec<f64>> {
    policy::log_prob_gradient(&params(theta)?, &SampleCounts::from_counts(counts)).map_err(py_err)
}

/// Mean-baseline REINFORCE gradient over trajectories.
#[pyfunction]
fn reinforce_gradient(theta: Vec<f64>, counts: Vec<Vec<u64>>, accs: Vec<f64>) -> PyResult<Vec<f64>> {
    let counts: Vec<SampleCounts> = counts.into_iter().map(SampleCounts::from_counts).collect();
    core_reinforce(&params(theta)?, &counts, &accs).map_err(py_err)
}

/// Search cost in normalized iterations.
#[pyfunction]
#[pyo3(signature = (models, images, epochs, ref_batch = 1024))]
fn cost_iterations(models: u64, images: u64, epochs: u64, ref_batch: u64) -> PyResult<f64> {
    core_cost_iterations(models, images, epochs, ref_batch).map_err(py_err)
}

fn sign(s: i32) -> PyResult<Sign> {
    match s {
        1 => Ok(Sign::Plus),
        -1 => Ok(Sign::Minus),
        _ => Err(PyValueError::new_err(format!("sign must be 1 or -1, got {s}"))),
    }
}

/// Applies operation `index` to an 8-bit HWC image and returns the new pixels.
#[pyfunction]
#[pyo3(signature = (pixels, height, width, channels, index, signs = (1, 1)))]
fn apply(
    py: Python<'_>,
    pixels: Vec<u8>,
    height: usize,
    width: usize,
    channels: usize,
    index: usize,
    signs: (i32, i32),
) -> PyResult<Py<PyBytes>> {
    let img = ImageBuffer::new(height, width, channels, pixels).map_err(py_err)?;
    let op = AugOperation::from_index(index, true).map_err(py_err)?;
    let out = apply_operation(&img, &op, [sign(signs.0)?, sign(signs.1)?]);
    Ok(PyBytes::new(py, out.pixels()).unbind())
}

/// Human-readable name of an operation.
#[pyfunction]
fn operation_label(index: usize) -> PyResult<String> {
    let op = AugOperation::from_index(index, true).map_err(py_err)?;
    Ok(format!("{} + {}", op.first.label(), op.second.label()))
}

/// Adam optimizer in the ascent direction.
#[pyclass]
struct Adam {
    state: AdamState,
}

#[pymethods]
impl Adam {
    #[new]
    #[pyo3(signature = (k, lr = 0.05, beta1 = 0.5, beta2 = 0.999, eps = 1e-8))]
    fn new(k: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            state: AdamState::new(k, lr, beta1, beta2, eps),
        }
    }

    /// Returns the updated logits.
    fn step(&mut self, theta: Vec<f64>, grad: Vec<f64>) -> PyResult<Vec<f64>> {
        let mut p = params(theta)?;
        adam_ascent_step(&mut p, &grad, &mut self.state).map_err(py_err)?;
        Ok(p.theta().to_vec())
    }

    #[getter]
    fn t(&self) -> u64 {
        self.state.t
    }
}

/// A policy search driven one outer step at a time.
#[pyclass]
struct Search {
    inner: CoreSearch,
}

#[pymethods]
impl Search {
    /// Builds a search from TOML config text.
    #[new]
    fn new(py: Python<'_>, config: &str) -> PyResult<Self> {
        let cfg = parse_config_str(config).map_err(py_err)?;
        let inner = py.detach(|| CoreSearch::new(cfg)).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Runs one outer step and returns its metrics record as a JSON string.
    fn step(&mut self, py: Python<'_>) -> PyResult<String> {
        if self.inner.is_done() {
            return Err(PyValueError::new_err("search already finished"));
        }
        let inner = &mut self.inner;
        py.detach(|| inner.step().map(|r| r.to_json_line())).map_err(py_err)
    }

    /// Runs the remaining outer steps; returns one JSON line per step.
    fn run(&mut self, py: Python<'_>) -> PyResult<Vec<String>> {
        let inner = &mut self.inner;
        py.detach(|| {
            let mut lines = Vec::new();
            while !inner.is_done() {
                lines.push(inner.step()?.to_json_line());
            }
            Ok(lines)
        })
        .map_err(py_err)
    }

    fn is_done(&self) -> bool {
        self.inner.is_done()
    }

    #[getter]
    fn t(&self) -> usize {
        self.inner.state().t
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.state().theta.theta().to_vec()
    }

    fn save_checkpoint(&self, path: PathBuf) -> PyResult<()> {
        autoaug::learner::save_checkpoint(&path, &self.inner.checkpoint()).map_err(py_err)
    }
}

/// Accuracy of a saved checkpoint on a labelled record file.
#[pyfunction]
fn evaluate(py: Python<'_>, checkpoint: PathBuf, records: PathBuf) -> PyResult<f64> {
    py.detach(|| {
        let ckpt = load_checkpoint(&checkpoint)?;
        let net = ckpt.network()?;
        let shape = RecordShape {
            height: ckpt.input.height,
            width: ckpt.input.width,
            channels: ckpt.input.channels,
            classes: ckpt.classes,
        };
        let ds = read_records(&records, shape, SplitTag::Test)?;
        let batch = ckpt.standardizer.batch(&ds.images, &ds.labels)?;
        net.evaluate_accuracy(&ckpt.weights, &batch)
    })
    .map_err(py_err)
}

#[pymodule]
fn autoaug_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NUM_OPERATIONS", NUM_OPERATIONS)?;
    m.add_function(wrap_pyfunction!(probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(marginal_first_element, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(log_prob_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(reinforce_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(cost_iterations, m)?)?;
    m.add_function(wrap_pyfunction!(apply, m)?)?;
    m.add_function(wrap_pyfunction!(operation_label, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_class::<Adam>()?;
    m.add_class::<Search>()?;
    Ok(())
}
