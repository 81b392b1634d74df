//! A two-class task built so that a single augmentation kind destroys the
//! label.
//!
//! Each image is a flat gray field with pixel noise and one Gaussian spot of
//! random polarity. Class 0 puts the spot slightly before the midline of the
//! destructive kind's axis, class 1 slightly after it. A translation along that
//! axis (applied unsigned, i.e. always forwards) carries class-0 spots into
//! class-1 territory, so training on it teaches the wrong label. Every other
//! element leaves the spot's side of the midline intact.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::{to_u8, ImageBuffer};
use crate::kernels::ElementKind;
use crate::rng::{stream, stream_rng};

use super::{Dataset, SplitTag};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    /// Side length of the square single-channel images.
    pub size: usize,
    /// Must be even; labels alternate 0, 1, 0, ...
    pub samples: usize,
    pub seed: u64,
    /// HorizontalTranslate or VerticalTranslate.
    pub destructive: ElementKind,
    /// Mean distance of the spot centre from the midline, in pixels.
    pub offset: f64,
    /// Standard deviation of the spot position along the label axis.
    pub jitter: f64,
    /// Standard deviation of the spot position across the label axis.
    pub cross_jitter: f64,
    pub amplitude: f64,
    pub spot_sigma: f64,
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            size: 8,
            samples: 4096,
            seed: 0,
            destructive: ElementKind::HorizontalTranslate,
            offset: 0.6,
            jitter: 0.3,
            cross_jitter: 0.5,
            amplitude: 90.0,
            spot_sigma: 0.8,
            noise: 8.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.size < 4 {
            problems.push(format!("synthetic size {} below 4", self.size));
        }
        if self.samples == 0 || self.samples % 2 != 0 {
            problems.push(format!(
                "synthetic samples {} must be positive and even",
                self.samples
            ));
        }
        if !matches!(
            self.destructive,
            ElementKind::HorizontalTranslate | ElementKind::VerticalTranslate
        ) {
            problems.push(format!(
                "destructive kind {} unsupported (HorizontalTranslate or VerticalTranslate)",
                self.destructive
            ));
        }
        for (name, v) in [
            ("offset", self.offset),
            ("jitter", self.jitter),
            ("cross_jitter", self.cross_jitter),
            ("amplitude", self.amplitude),
            ("spot_sigma", self.spot_sigma),
            ("noise", self.noise),
        ] {
            if !v.is_finite() || v < 0.0 {
                problems.push(format!("synthetic {name} must be finite and non-negative"));
            }
        }
        if self.spot_sigma == 0.0 {
            problems.push("synthetic spot_sigma must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

pub fn synthetic_bandit_dataset(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, &[stream::SYNTHETIC]);
    let mid = (spec.size as f64 - 1.0) / 2.0;
    let horizontal = spec.destructive == ElementKind::HorizontalTranslate;
    let two_s2 = 2.0 * spec.spot_sigma * spec.spot_sigma;
    let mut images = Vec::with_capacity(spec.samples);
    let mut labels = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let label = i % 2;
        let side = if label == 0 { -1.0 } else { 1.0 };
        let z: f64 = rng.sample(StandardNormal);
        let along = mid + side * spec.offset + spec.jitter * z;
        let z: f64 = rng.sample(StandardNormal);
        let across = mid + spec.cross_jitter * z;
        let polarity = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let (sx, sy) = if horizontal { (along, across) } else { (across, along) };
        let mut noise = Vec::with_capacity(spec.size * spec.size);
        for _ in 0..spec.size * spec.size {
            noise.push(rng.sample::<f64, _>(StandardNormal) * spec.noise);
        }
        let img = ImageBuffer::from_fn(spec.size, spec.size, 1, |y, x, _| {
            let r2 = (x as f64 - sx).powi(2) + (y as f64 - sy).powi(2);
            let spot = polarity * spec.amplitude * (-r2 / two_s2).exp();
            to_u8(128.0 + spot + noise[y * spec.size + x])
        })?;
        images.push(img);
        labels.push(label);
    }
    Dataset::new(images, labels, 2, SplitTag::Train)
}
