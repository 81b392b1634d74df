//! Outer-loop update of the policy logits: a REINFORCE estimate of the
//! validation-accuracy gradient followed by one Adam ascent step.

use crate::error::{Error, Result};
use crate::policy::{log_prob_gradient, PolicyParams, SampleCounts};

/// How trajectory accuracies are turned into REINFORCE weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Baseline {
    /// Subtract the population mean accuracy (zero-mean weights).
    #[default]
    Mean,
    /// Use raw accuracies. The only mode that learns with a single trajectory.
    None,
}

/// `(1/N) sum_n w_n * grad log p(trajectory_n)` with `w_n` the (optionally
/// mean-centred) accuracy of trajectory `n`.
pub fn score_gradient(
    p: &PolicyParams,
    counts_per_traj: &[SampleCounts],
    accs: &[f64],
    baseline: Baseline,
) -> Result<Vec<f64>> {
    if counts_per_traj.len() != accs.len() {
        return Err(Error::Shape(format!(
            "{} trajectories but {} accuracies",
            counts_per_traj.len(),
            accs.len()
        )));
    }
    if accs.is_empty() {
        return Err(Error::InvalidArgument("no trajectories".into()));
    }
    let n = accs.len() as f64;
    let mut grad = vec![0.0; p.len()];
    for (counts, &acc) in counts_per_traj.iter().zip(accs) {
        // acc - mean(accs), summed as pairwise differences so that a common
        // shift of all accuracies cancels exactly.
        let weight = match baseline {
            Baseline::Mean => accs.iter().map(|&other| acc - other).sum::<f64>() / n,
            Baseline::None => acc,
        };
        if weight == 0.0 {
            continue;
        }
        let g = log_prob_gradient(p, counts)?;
        for (acc_j, gj) in grad.iter_mut().zip(g) {
            *acc_j += weight * gj;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(grad)
}

/// Mean-baseline REINFORCE gradient. Identically zero for a single trajectory.
pub fn reinforce_gradient(
    p: &PolicyParams,
    counts_per_traj: &[SampleCounts],
    accs: &[f64],
) -> Result<Vec<f64>> {
    score_gradient(p, counts_per_traj, accs, Baseline::Mean)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(k: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: vec![0.0; k],
            v: vec![0.0; k],
            t: 0,
            lr,
            beta1,
            beta2,
            eps,
        }
    }

    /// lr 0.05, betas (0.5, 0.999), eps 1e-8.
    pub fn with_defaults(k: usize) -> Self {
        Self::new(k, 0.05, 0.5, 0.999, 1e-8)
    }
}

/// One bias-corrected Adam step in the *ascent* direction.
pub fn adam_ascent_step(p: &mut PolicyParams, grad: &[f64], s: &mut AdamState) -> Result<()> {
    if grad.len() != p.len() || s.m.len() != p.len() {
        return Err(Error::Shape(format!(
            "gradient {} / moments {} for {} parameters",
            grad.len(),
            s.m.len(),
            p.len()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("policy gradient"));
    }
    s.t += 1;
    let bc1 = 1.0 - s.beta1.powf(s.t as f64);
    let bc2 = 1.0 - s.beta2.powf(s.t as f64);
    let mut delta = vec![0.0; grad.len()];
    for (j, &g) in grad.iter().enumerate() {
        s.m[j] = s.beta1 * s.m[j] + (1.0 - s.beta1) * g;
        s.v[j] = s.beta2 * s.v[j] + (1.0 - s.beta2) * g * g;
        let m_hat = s.m[j] / bc1;
        let v_hat = s.v[j] / bc2;
        delta[j] = s.lr * m_hat / (v_hat.sqrt() + s.eps);
    }
    p.apply_delta(&delta)
}
