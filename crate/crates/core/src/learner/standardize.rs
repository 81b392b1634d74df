use crate::error::{Error, Result};
use crate::image::ImageBuffer;

use super::network::Batch;

/// Per-channel standardization applied at model input. Output is channel-planar.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Channel statistics over a set of images. Zero-variance channels get a
    /// unit scale.
    pub fn fit(images: &[ImageBuffer]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidArgument("no images to fit statistics".into()))?;
        let ch = first.channels();
        let mut sum = vec![0.0; ch];
        let mut sq = vec![0.0; ch];
        let mut n = 0usize;
        for img in images {
            if img.channels() != ch {
                return Err(Error::Shape("mixed channel counts".into()));
            }
            for px in img.pixels().chunks_exact(ch) {
                for (c, &v) in px.iter().enumerate() {
                    sum[c] += v as f64;
                    sq[c] += (v as f64) * (v as f64);
                }
            }
            n += img.height() * img.width();
        }
        let n = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let var = (s / n - m * m).max(0.0);
                if var > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_into(&self, img: &ImageBuffer, out: &mut Vec<f64>) {
        let (h, w, ch) = (img.height(), img.width(), img.channels());
        let px = img.pixels();
        for c in 0..ch {
            let (m, s) = (self.mean[c], self.std[c]);
            for i in 0..h * w {
                out.push((px[i * ch + c] as f64 - m) / s);
            }
        }
    }

    pub fn batch(&self, images: &[ImageBuffer], labels: &[usize]) -> Result<Batch> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        if first.channels() != self.channels() {
            return Err(Error::Shape(format!(
                "{}-channel images for {}-channel statistics",
                first.channels(),
                self.channels()
            )));
        }
        let len = first.pixels().len();
        let mut inputs = Vec::with_capacity(len * images.len());
        for img in images {
            if !img.same_shape(first) {
                return Err(Error::Shape("images of different shapes in one batch".into()));
            }
            self.apply_into(img, &mut inputs);
        }
        Batch::new(inputs, labels.to_vec(), len)
    }
}
