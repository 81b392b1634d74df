//! Datasets: CIFAR-10 binary batches, a synthetic task with one
//! label-destroying augmentation kind, train/validation splitting and the
//! fixed pre-processing pipeline.

mod cifar;
mod pipeline;
mod synthetic;

pub use cifar::{
    load_cifar10, parse_records, read_records, serialize_records, write_records, RecordShape,
    CIFAR_RECORD_LEN, CIFAR_TEST_FILE, CIFAR_TRAIN_FILES,
};
pub use pipeline::{apply_pipeline, apply_pipeline_traced, cutout_at, pad_crop_at, PreprocSpec, Stage};
pub use synthetic::{synthetic_bandit_dataset, SyntheticSpec};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::rng::{stream, stream_rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<ImageBuffer>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub split: SplitTag,
}

impl Dataset {
    pub fn new(
        images: Vec<ImageBuffer>,
        labels: Vec<usize>,
        class_count: usize,
        split: SplitTag,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        if let Some(first) = images.first() {
            if images.iter().any(|img| !img.same_shape(first)) {
                return Err(Error::Shape("images of different shapes".into()));
            }
        }
        Ok(Self {
            images,
            labels,
            class_count,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(height, width, channels)` of the images, if any.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.images
            .first()
            .map(|i| (i.height(), i.width(), i.channels()))
    }

    pub fn subset(&self, indices: &[usize], split: SplitTag) -> Dataset {
        Dataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            split,
        }
    }
}

/// Seeded shuffle; the last `val_size` records of the permutation become the
/// validation split.
pub fn split_validation(train: &Dataset, val_size: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if val_size == 0 || val_size >= train.len() {
        return Err(Error::InvalidArgument(format!(
            "validation size {val_size} must be in 1..{}",
            train.len()
        )));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut stream_rng(seed, &[stream::SPLIT]));
    let cut = train.len() - val_size;
    Ok((
        train.subset(&order[..cut], SplitTag::Train),
        train.subset(&order[cut..], SplitTag::Val),
    ))
}
