//! Training-time pre-processing. Order: (standardization is deferred to model
//! input), horizontal flip, zero pad and random crop, the sampled policy
//! operation, Cutout.

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::kernels::{apply_operation, AugOperation, Sign, FILL};

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocSpec {
    pub flip: bool,
    pub flip_prob: f64,
    pub crop: bool,
    pub pad: usize,
    pub crop_size: usize,
    pub cutout: bool,
    pub cutout_size: usize,
}

impl Default for PreprocSpec {
    fn default() -> Self {
        Self {
            flip: true,
            flip_prob: 0.5,
            crop: true,
            pad: 4,
            crop_size: 32,
            cutout: true,
            cutout_size: 16,
        }
    }
}

impl PreprocSpec {
    pub fn disabled() -> Self {
        Self {
            flip: false,
            crop: false,
            cutout: false,
            ..Self::default()
        }
    }

    /// Checks the spec against an input image size.
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        let mut problems = Vec::new();
        if !(0.0..=1.0).contains(&self.flip_prob) {
            problems.push(format!("flip_prob {} outside [0, 1]", self.flip_prob));
        }
        let (mut oh, mut ow) = (height, width);
        if self.crop {
            if self.crop_size == 0 || self.crop_size > height.min(width) + 2 * self.pad {
                problems.push(format!(
                    "crop {} does not fit {height}x{width} padded by {}",
                    self.crop_size, self.pad
                ));
            }
            oh = self.crop_size;
            ow = self.crop_size;
        }
        if self.cutout && (self.cutout_size == 0 || self.cutout_size > oh.min(ow)) {
            problems.push(format!(
                "cutout {} larger than the {oh}x{ow} crop",
                self.cutout_size
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// Bookkeeping only: statistics are applied when the batch is built.
    Standardize,
    Flip,
    PadCrop,
    Policy,
    Cutout,
}

pub fn flip_horizontal(img: &ImageBuffer) -> ImageBuffer {
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                out.set(y, x, c, img.get(y, w - 1 - x, c));
            }
        }
    }
    out
}

/// Crops `size x size` at offset `(oy, ox)` of the image zero-padded by `pad`.
pub fn pad_crop_at(img: &ImageBuffer, pad: usize, size: usize, oy: usize, ox: usize) -> ImageBuffer {
    let ch = img.channels();
    ImageBuffer::from_fn(size, size, ch, |y, x, c| {
        let (sy, sx) = ((y + oy) as i64 - pad as i64, (x + ox) as i64 - pad as i64);
        if sy < 0 || sx < 0 || sy >= img.height() as i64 || sx >= img.width() as i64 {
            0
        } else {
            img.get(sy as usize, sx as usize, c)
        }
    })
    .expect("crop size validated")
}

/// Fills a `size x size` square centred at `(cy, cx)` with 128, clipped to the
/// image.
pub fn cutout_at(img: &ImageBuffer, cy: usize, cx: usize, size: usize) -> ImageBuffer {
    let (h, w, ch) = (img.height() as i64, img.width() as i64, img.channels());
    let half = (size / 2) as i64;
    let (y0, x0) = (cy as i64 - half, cx as i64 - half);
    let mut out = img.clone();
    for y in y0.max(0)..(y0 + size as i64).min(h) {
        for x in x0.max(0)..(x0 + size as i64).min(w) {
            for c in 0..ch {
                out.set(y as usize, x as usize, c, FILL as u8);
            }
        }
    }
    out
}

/// Runs the pipeline. `rng` drives flip, crop and Cutout; the policy operation
/// and its signs are drawn by the caller.
pub fn apply_pipeline<R: Rng + ?Sized>(
    img: &ImageBuffer,
    spec: &PreprocSpec,
    policy: Option<(&AugOperation, [Sign; 2])>,
    rng: &mut R,
) -> ImageBuffer {
    apply_pipeline_traced(img, spec, policy, rng).0
}

/// [`apply_pipeline`] plus the list of stages that ran, in order.
pub fn apply_pipeline_traced<R: Rng + ?Sized>(
    img: &ImageBuffer,
    spec: &PreprocSpec,
    policy: Option<(&AugOperation, [Sign; 2])>,
    rng: &mut R,
) -> (ImageBuffer, Vec<Stage>) {
    let mut trace = vec![Stage::Standardize];
    let mut out = img.clone();
    if spec.flip && rng.random::<f64>() < spec.flip_prob {
        out = flip_horizontal(&out);
        trace.push(Stage::Flip);
    }
    if spec.crop {
        let oy = rng.random_range(0..=out.height() + 2 * spec.pad - spec.crop_size);
        let ox = rng.random_range(0..=out.width() + 2 * spec.pad - spec.crop_size);
        out = pad_crop_at(&out, spec.pad, spec.crop_size, oy, ox);
        trace.push(Stage::PadCrop);
    }
    if let Some((op, signs)) = policy {
        out = apply_operation(&out, op, signs);
        trace.push(Stage::Policy);
    }
    if spec.cutout {
        let cy = rng.random_range(0..out.height());
        let cx = rng.random_range(0..out.width());
        out = cutout_at(&out, cy, cx, spec.cutout_size);
        trace.push(Stage::Cutout);
    }
    (out, trace)
}
