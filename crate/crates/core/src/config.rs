//! Run configuration: a flat TOML file of typed keys. Unknown keys are
//! rejected. Keys left out take defaults; keys whose default depends on the
//! dataset are resolved by [`RunConfig::resolve`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{PreprocSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::kernels::ElementKind;
use crate::learner::{Architecture, TrainHyper};
use crate::policy_optim::Baseline;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Thread count for trajectory workers; 0 means one per trajectory.
    pub workers: usize,
    pub output_dir: PathBuf,
    /// Write a distribution snapshot after every outer step.
    pub export_snapshots: bool,
    /// Record wall-clock time in the metrics log (makes logs non-reproducible).
    pub log_wall_time: bool,

    /// "synthetic" or "cifar10".
    pub dataset: String,
    pub data_dir: Option<PathBuf>,
    pub val_size: Option<usize>,
    /// Evaluate on a fixed random subset of this many validation images; 0 uses all.
    pub val_subsample: usize,

    pub synthetic_size: usize,
    pub synthetic_samples: usize,
    pub synthetic_offset: f64,
    pub synthetic_jitter: f64,
    pub synthetic_cross_jitter: f64,
    pub synthetic_amplitude: f64,
    pub synthetic_spot_sigma: f64,
    pub synthetic_noise: f64,
    pub destructive_kind: String,

    /// "mlp" or "smallcnn".
    pub model: String,
    pub hidden: usize,

    pub base_lr: f64,
    pub warmup_start_lr: f64,
    pub warmup_steps: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub zero_velocity_on_broadcast: bool,

    pub trajectories: usize,
    /// Inner steps per outer step; 0 means one epoch of the training split.
    pub inner_steps: usize,
    pub outer_steps: usize,
    pub policy_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Use raw accuracies instead of mean-centred ones (required for one trajectory).
    pub no_baseline: bool,
    /// Sample and apply policy operations during training.
    pub augment: bool,
    /// Randomize the direction of geometric elements.
    pub signed_geometry: bool,

    pub flip: Option<bool>,
    pub flip_prob: f64,
    pub crop: Option<bool>,
    pub pad: usize,
    pub crop_size: Option<usize>,
    pub cutout: Option<bool>,
    pub cutout_size: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let syn = SyntheticSpec::default();
        Self {
            seed: 0,
            workers: 0,
            output_dir: PathBuf::from("runs/default"),
            export_snapshots: false,
            log_wall_time: false,
            dataset: "synthetic".into(),
            data_dir: None,
            val_size: None,
            val_subsample: 0,
            synthetic_size: syn.size,
            synthetic_samples: syn.samples,
            synthetic_offset: syn.offset,
            synthetic_jitter: syn.jitter,
            synthetic_cross_jitter: syn.cross_jitter,
            synthetic_amplitude: syn.amplitude,
            synthetic_spot_sigma: syn.spot_sigma,
            synthetic_noise: syn.noise,
            destructive_kind: syn.destructive.name().into(),
            model: "mlp".into(),
            hidden: 64,
            base_lr: 0.2,
            warmup_start_lr: 0.0,
            warmup_steps: 0,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 256,
            zero_velocity_on_broadcast: true,
            trajectories: 8,
            inner_steps: 0,
            outer_steps: 300,
            policy_lr: 0.05,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            no_baseline: false,
            augment: true,
            signed_geometry: true,
            flip: None,
            flip_prob: 0.5,
            crop: None,
            pad: 4,
            crop_size: None,
            cutout: None,
            cutout_size: None,
        }
    }
}

/// 1-based line of the first `key = ...` assignment in `src`.
fn line_of(src: &str, key: &str) -> Option<usize> {
    src.lines().position(|l| {
        l.trim_start()
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

pub fn parse_config_str(src: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(src).map_err(|e| Error::Config(vec![e.to_string()]))?;
    cfg.resolve().map_err(|e| match e {
        Error::Config(problems) => Error::Config(
            problems
                .into_iter()
                .map(|p| {
                    let key = p.split([' ', ':']).next().unwrap_or("");
                    match line_of(src, key) {
                        Some(line) => format!("line {line}: {p}"),
                        None => p,
                    }
                })
                .collect(),
        ),
        other => other,
    })
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&src)
}

impl RunConfig {
    fn is_synthetic(&self) -> bool {
        self.dataset == "synthetic"
    }

    fn image_side(&self) -> usize {
        if self.is_synthetic() {
            self.synthetic_size
        } else {
            32
        }
    }

    /// Fills dataset-dependent defaults and validates. Problems are reported
    /// together, each starting with the offending key.
    pub fn resolve(mut self) -> Result<Self> {
        let synthetic = self.is_synthetic();
        let side = self.image_side();
        // The synthetic label is a spatial position: flips and crops destroy it.
        self.flip.get_or_insert(!synthetic);
        self.crop.get_or_insert(!synthetic);
        self.cutout.get_or_insert(!synthetic);
        self.crop_size.get_or_insert(side);
        self.cutout_size.get_or_insert(side / 2);
        self.val_size
            .get_or_insert(if synthetic { self.synthetic_samples / 4 } else { 5000 });
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        match self.dataset.as_str() {
            "synthetic" => {
                if let Err(Error::Config(v)) = self.synthetic_spec_unchecked().validate() {
                    p.extend(v);
                }
                if ElementKind::from_name(&self.destructive_kind).is_none() {
                    p.push(format!("destructive_kind: unknown element kind {:?}", self.destructive_kind));
                }
            }
            "cifar10" => match &self.data_dir {
                None => p.push("data_dir: required for dataset \"cifar10\"".into()),
                Some(d) if !d.is_dir() => {
                    p.push(format!("data_dir: {} is not a directory", d.display()))
                }
                Some(_) => {}
            },
            other => p.push(format!("dataset: unknown dataset {other:?} (synthetic, cifar10)")),
        }
        if !matches!(self.model.as_str(), "mlp" | "smallcnn") {
            p.push(format!("model: unknown model {:?} (mlp, smallcnn)", self.model));
        }
        if self.model == "mlp" && self.hidden == 0 {
            p.push("hidden: must be positive".into());
        }
        if self.trajectories == 0 {
            p.push("trajectories: must be at least 1".into());
        } else if self.trajectories == 1 && !self.no_baseline {
            p.push(
                "trajectories: 1 makes the mean-baseline gradient identically zero; \
                 set no_baseline = true or use at least 2"
                    .into(),
            );
        }
        if self.outer_steps == 0 {
            p.push("outer_steps: must be positive".into());
        }
        if !(self.policy_lr >= 0.0 && self.policy_lr.is_finite()) {
            p.push(format!("policy_lr: {} must be finite and >= 0", self.policy_lr));
        }
        for (k, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                p.push(format!("{k}: {v} outside [0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0) {
            p.push("adam_eps: must be positive".into());
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            p.push(format!("base_lr: {} must be positive", self.base_lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            p.push(format!("momentum: {} outside [0, 1)", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            p.push("weight_decay: must be >= 0".into());
        }
        if !(self.warmup_start_lr >= 0.0) {
            p.push("warmup_start_lr: must be >= 0".into());
        }
        if self.batch_size == 0 {
            p.push("batch_size: must be positive".into());
        }
        let n_samples = if self.is_synthetic() { Some(self.synthetic_samples) } else { Some(50_000) };
        if let (Some(v), Some(n)) = (self.val_size, n_samples) {
            if v == 0 || v >= n {
                p.push(format!("val_size: {v} must be in 1..{n}"));
            }
        }
        if let Ok(total) = self.total_inner_steps() {
            if self.warmup_steps > total {
                p.push(format!("warmup_steps: {} exceeds {total} total inner steps", self.warmup_steps));
            }
        }
        let side = self.image_side();
        if self.crop == Some(true) && self.crop_size != Some(side) {
            p.push(format!(
                "crop_size: must equal the image side {side} (validation images are not cropped)"
            ));
        }
        if let Err(Error::Config(v)) = self.preproc().validate(side, side) {
            p.extend(v);
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    fn synthetic_spec_unchecked(&self) -> SyntheticSpec {
        SyntheticSpec {
            size: self.synthetic_size,
            samples: self.synthetic_samples,
            seed: self.seed,
            destructive: ElementKind::from_name(&self.destructive_kind)
                .unwrap_or(ElementKind::HorizontalTranslate),
            offset: self.synthetic_offset,
            jitter: self.synthetic_jitter,
            cross_jitter: self.synthetic_cross_jitter,
            amplitude: self.synthetic_amplitude,
            spot_sigma: self.synthetic_spot_sigma,
            noise: self.synthetic_noise,
        }
    }

    pub fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        let spec = self.synthetic_spec_unchecked();
        spec.validate()?;
        Ok(spec)
    }

    pub fn architecture(&self) -> Architecture {
        match self.model.as_str() {
            "smallcnn" => Architecture::SmallCnn,
            _ => Architecture::Mlp {
                hidden: self.hidden,
            },
        }
    }

    pub fn baseline(&self) -> Baseline {
        if self.no_baseline {
            Baseline::None
        } else {
            Baseline::Mean
        }
    }

    pub fn preproc(&self) -> PreprocSpec {
        let side = self.image_side();
        PreprocSpec {
            flip: self.flip.unwrap_or(false),
            flip_prob: self.flip_prob,
            crop: self.crop.unwrap_or(false),
            pad: self.pad,
            crop_size: self.crop_size.unwrap_or(side),
            cutout: self.cutout.unwrap_or(false),
            cutout_size: self.cutout_size.unwrap_or(side / 2),
        }
    }

    /// Number of training-split records after the validation split.
    pub fn train_len(&self) -> usize {
        let n = if self.is_synthetic() { self.synthetic_samples } else { 50_000 };
        n.saturating_sub(self.val_size.unwrap_or(0))
    }

    pub fn inner_steps_resolved(&self) -> usize {
        if self.inner_steps > 0 {
            self.inner_steps
        } else {
            self.train_len().div_ceil(self.batch_size.max(1)).max(1)
        }
    }

    fn total_inner_steps(&self) -> Result<usize> {
        self.inner_steps_resolved()
            .checked_mul(self.outer_steps)
            .ok_or_else(|| Error::Config(vec!["outer_steps: too large".into()]))
    }

    pub fn train_hyper(&self) -> TrainHyper {
        TrainHyper {
            base_lr: self.base_lr,
            warmup_start_lr: self.warmup_start_lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            warmup_steps: self.warmup_steps,
            total_steps: self.total_inner_steps().unwrap_or(usize::MAX),
            batch_size: self.batch_size,
        }
    }

    pub fn worker_count(&self) -> usize {
        if self.workers == 0 {
            self.trajectories.max(1)
        } else {
            self.workers
        }
    }

    /// SHA-256 over every key that can change search results, as hex. Worker
    /// count, output location and logging toggles are excluded.
    pub fn hash(&self) -> String {
        let mut relevant = self.clone();
        relevant.workers = 0;
        relevant.output_dir = PathBuf::new();
        relevant.export_snapshots = false;
        relevant.log_wall_time = false;
        let json = serde_json::to_string(&relevant).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// The config with every default materialized, as TOML, headed by the rng
    /// derivation rule.
    pub fn render_resolved(&self) -> String {
        let body = toml::to_string(self).expect("config serializes");
        format!(
            "# resolved configuration, hash {}\n# rng streams: {}\n{body}",
            self.hash(),
            rng::DERIVATION_RULE
        )
    }
}
