//! Scalar references for the policy, optimizer and loss.

use autoaug::learner::{Batch, ModelWeights, Network};

pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// The part of `sum_k c_k log p_k` that depends on `theta_j`, with
/// `p_k = sigmoid(theta_k) / sum sigmoid`. Dropping the constant terms keeps
/// the difference quotient free of cancellation for large K.
pub fn log_likelihood_in(theta: &[f64], counts: &[u64], j: usize, theta_j: f64) -> f64 {
    let rest: f64 = theta
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != j)
        .map(|(_, &t)| sigmoid(t))
        .sum();
    let total: u64 = counts.iter().sum();
    counts[j] as f64 * sigmoid(theta_j).ln() - total as f64 * (rest + sigmoid(theta_j)).ln()
}

/// Central difference of [`log_likelihood_in`] at `theta_j`.
pub fn log_likelihood_slope(theta: &[f64], counts: &[u64], j: usize) -> f64 {
    let h = 1e-5;
    let f = |t: f64| log_likelihood_in(theta, counts, j, t);
    (f(theta[j] + h) - f(theta[j] - h)) / (2.0 * h)
}

/// Plain scalar Adam in ascent form with lr 0.05, betas (0.5, 0.999), eps 1e-8.
pub fn scalar_adam(theta: f64, grads: &[f64]) -> f64 {
    let (lr, b1, b2, eps) = (0.05, 0.5, 0.999, 1e-8);
    let (mut th, mut m, mut v) = (theta, 0.0, 0.0);
    for (i, g) in grads.iter().enumerate() {
        let t = (i + 1) as i32;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t));
        let v_hat = v / (1.0 - b2.powi(t));
        th += lr * m_hat / (v_hat.sqrt() + eps);
    }
    th
}

/// Mean softmax cross-entropy from the network's raw scores.
pub fn cross_entropy(net: &Network, w: &ModelWeights, batch: &Batch) -> f64 {
    let scores = net.scores(w, batch).unwrap();
    let c = net.classes();
    let mut total = 0.0;
    for (i, &label) in batch.labels().iter().enumerate() {
        let row = &scores[i * c..(i + 1) * c];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + row.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        total += log_z - row[label];
    }
    total / batch.len() as f64
}

/// Largest `|fd - analytic| / max|analytic|` over every weight.
pub fn backprop_error(net: &Network, w: &ModelWeights, batch: &Batch) -> f64 {
    let (loss, grad) = net.loss_and_grad(w, batch).unwrap();
    assert!((loss - cross_entropy(net, w, batch)).abs() < 1e-12);
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-8);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for j in 0..w.len() {
        let mut up = w.clone();
        up.values_mut()[j] += h;
        let mut down = w.clone();
        down.values_mut()[j] -= h;
        let fd = (cross_entropy(net, &up, batch) - cross_entropy(net, &down, batch)) / (2.0 * h);
        worst = worst.max((fd - grad[j]).abs() / scale);
    }
    worst
}
