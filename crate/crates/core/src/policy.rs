//! The augmentation distribution: `p_k = sigmoid(theta_k) / sum_i sigmoid(theta_i)`.
//!
//! Unlike a softmax, adding a constant to every logit changes the
//! distribution. Gradients of the trajectory log-likelihood are accumulated
//! through per-operation sample counts.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{AugOperation, NUM_ELEMENTS, NUM_OPERATIONS};

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    theta: Vec<f64>,
}

impl PolicyParams {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::InvalidArgument("empty parameter vector".into()));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("policy parameters"));
        }
        Ok(Self { theta })
    }

    /// All-zero logits over `k` outcomes, i.e. the uniform distribution.
    pub fn uniform(k: usize) -> Self {
        Self {
            theta: vec![0.0; k.max(1)],
        }
    }

    /// Uniform distribution over all 1296 operations.
    pub fn uniform_operations() -> Self {
        Self::uniform(NUM_OPERATIONS)
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Adds `delta` to the logits, rejecting non-finite results.
    pub fn apply_delta(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.theta.len() {
            return Err(Error::Shape(format!(
                "delta of length {} for {} parameters",
                delta.len(),
                self.theta.len()
            )));
        }
        let next: Vec<f64> = self.theta.iter().zip(delta).map(|(t, d)| t + d).collect();
        if next.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("policy parameters"));
        }
        self.theta = next;
        Ok(())
    }

    fn sigmoids(&self) -> Vec<f64> {
        self.theta.iter().map(|&t| sigmoid(t)).collect()
    }
}

pub fn probabilities(p: &PolicyParams) -> Vec<f64> {
    let s = p.sigmoids();
    let total: f64 = s.iter().sum();
    s.into_iter().map(|v| v / total).collect()
}

/// Shannon entropy in nats.
pub fn entropy(p: &PolicyParams) -> f64 {
    -probabilities(p)
        .into_iter()
        .filter(|&q| q > 0.0)
        .map(|q| q * q.ln())
        .sum::<f64>()
}

/// Row sums of the 36x36 reshaped operation probabilities: the probability
/// that each element is drawn as the first half of an operation.
pub fn marginal_first_element(p: &PolicyParams) -> Result<Vec<f64>> {
    if p.len() != NUM_OPERATIONS {
        return Err(Error::Shape(format!(
            "marginal needs {NUM_OPERATIONS} parameters, got {}",
            p.len()
        )));
    }
    Ok(probabilities(p)
        .chunks_exact(NUM_ELEMENTS)
        .map(|row| row.iter().sum())
        .collect())
}

/// Inverse-CDF sampler over a frozen copy of the distribution.
#[derive(Clone, Debug)]
pub struct Sampler {
    cumulative: Vec<f64>,
}

impl Sampler {
    pub fn new(p: &PolicyParams) -> Self {
        let mut acc = 0.0;
        let cumulative = p
            .sigmoids()
            .into_iter()
            .map(|s| {
                acc += s;
                acc
            })
            .collect();
        Self { cumulative }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Draws one operation index from the distribution.
pub fn sample_operation<R: Rng + ?Sized>(p: &PolicyParams, rng: &mut R) -> usize {
    Sampler::new(p).sample(rng)
}

/// Per-operation counts of what a trajectory sampled during one period.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleCounts {
    counts: Vec<u64>,
    total: u64,
}

impl SampleCounts {
    pub fn new(k: usize) -> Self {
        Self {
            counts: vec![0; k],
            total: 0,
        }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn record(&mut self, k: usize) {
        self.counts[k] += 1;
        self.total += 1;
    }

    pub fn reset(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.total = 0;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Gradient of `sum_k c_k log p_k` with respect to the logits.
///
/// Component `j` is `c_j (1 - s_j) - total * s_j (1 - s_j) / S` with
/// `s = sigmoid(theta)` and `S = sum(s)`.
pub fn log_prob_gradient(p: &PolicyParams, c: &SampleCounts) -> Result<Vec<f64>> {
    if c.len() != p.len() {
        return Err(Error::Shape(format!(
            "{} counts for {} parameters",
            c.len(),
            p.len()
        )));
    }
    if c.total() == 0 {
        return Err(Error::InvalidArgument(
            "log-probability gradient of an empty trajectory".into(),
        ));
    }
    let s = p.sigmoids();
    let total_s: f64 = s.iter().sum();
    let n = c.total() as f64;
    Ok(s.iter()
        .zip(c.counts())
        .map(|(&sj, &cj)| cj as f64 * (1.0 - sj) - n * sj * (1.0 - sj) / total_s)
        .collect())
}

/// Writes logits as `index,theta` CSV.
pub fn write_theta_csv(path: &Path, p: &PolicyParams) -> Result<()> {
    let mut out = String::from("index,theta\n");
    for (i, t) in p.theta().iter().enumerate() {
        writeln!(out, "{i},{t}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_theta_csv(path: &Path) -> Result<PolicyParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let values = read_indexed_column(&text, "theta", "index,theta")?;
    PolicyParams::new(values)
}

/// Writes `index,first,second,probability` rows for all operations.
pub fn write_probabilities_csv(path: &Path, p: &PolicyParams) -> Result<()> {
    if p.len() != NUM_OPERATIONS {
        return Err(Error::Shape(format!(
            "probability export needs {NUM_OPERATIONS} parameters, got {}",
            p.len()
        )));
    }
    let mut out = String::from("index,first,second,probability\n");
    for (k, q) in probabilities(p).iter().enumerate() {
        let op = AugOperation::from_index(k, true)?;
        writeln!(out, "{k},{},{},{q}", op.first.label(), op.second.label()).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_probabilities_csv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_indexed_column(&text, "probabilities", "index,first,second,probability")
}

/// Writes `index,element,probability` rows of the first-element marginal.
pub fn write_marginal_csv(path: &Path, p: &PolicyParams) -> Result<()> {
    let marginal = marginal_first_element(p)?;
    let mut out = String::from("index,element,probability\n");
    for (i, q) in marginal.iter().enumerate() {
        let e = crate::kernels::AugElement::from_index(i, true)?;
        writeln!(out, "{i},{},{q}", e.label()).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parses a CSV whose first column is a 0-based index and whose last column
/// is a float.
fn read_indexed_column(text: &str, what: &'static str, header: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        other => {
            return Err(Error::format(
                what,
                format!("expected header {header:?}, found {other:?}"),
            ))
        }
    }
    let mut values = Vec::new();
    for (row, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        let index: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::format(what, format!("line {}: bad index", row + 2)))?;
        if index != values.len() {
            return Err(Error::format(
                what,
                format!("line {}: index {index} out of sequence", row + 2),
            ));
        }
        let value: f64 = fields
            .last()
            .unwrap()
            .trim()
            .parse()
            .map_err(|_| Error::format(what, format!("line {}: bad value", row + 2)))?;
        values.push(value);
    }
    if values.is_empty() {
        return Err(Error::format(what, "no rows"));
    }
    Ok(values)
}
