//! The inner-loop student: network, SGD with momentum and coupled weight
//! decay, warmup plus cosine learning rate, input standardization and
//! checkpoints.

mod checkpoint;
mod network;
mod standardize;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use network::{
    argmax, Architecture, Batch, Forward, InputShape, ModelWeights, Network, ParamShape,
};
pub use standardize::Standardizer;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHyper {
    pub base_lr: f64,
    /// Learning rate at step 0 when a warmup is configured.
    pub warmup_start_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            base_lr: 0.2,
            warmup_start_lr: 0.0,
            momentum: 0.9,
            weight_decay: 5e-4,
            warmup_steps: 0,
            total_steps: 1,
            batch_size: 256,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            problems.push(format!("base_lr must be > 0, got {}", self.base_lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            problems.push(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            problems.push(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(self.warmup_start_lr >= 0.0 && self.warmup_start_lr.is_finite()) {
            problems.push(format!(
                "warmup_start_lr must be >= 0, got {}",
                self.warmup_start_lr
            ));
        }
        if self.warmup_steps > self.total_steps {
            problems.push(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            ));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// `v <- momentum * v + (grad + weight_decay * w)`, then `w <- w - lr * v`.
pub fn sgd_step(
    w: &mut ModelWeights,
    grad: &[f64],
    velocity: &mut [f64],
    lr: f64,
    hyper: &TrainHyper,
) -> Result<()> {
    if grad.len() != w.len() || velocity.len() != w.len() {
        return Err(Error::Shape(format!(
            "gradient {} / velocity {} for {} weights",
            grad.len(),
            velocity.len(),
            w.len()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    for ((wi, &g), v) in w.values_mut().iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = hyper.momentum * *v + (g + hyper.weight_decay * *wi);
        *wi -= lr * *v;
    }
    Ok(())
}

/// Linear warmup from `warmup_start_lr` to `base_lr`, then half-cosine decay
/// over the remaining steps.
pub fn cosine_lr(step: usize, hyper: &TrainHyper) -> Result<f64> {
    if step >= hyper.total_steps {
        return Err(Error::InvalidArgument(format!(
            "step {step} outside schedule of {} steps",
            hyper.total_steps
        )));
    }
    if step < hyper.warmup_steps {
        let frac = step as f64 / hyper.warmup_steps as f64;
        return Ok(hyper.warmup_start_lr + (hyper.base_lr - hyper.warmup_start_lr) * frac);
    }
    let decay_steps = (hyper.total_steps - hyper.warmup_steps) as f64;
    let progress = (step - hyper.warmup_steps) as f64 / decay_steps;
    Ok(hyper.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}
