//! CIFAR-10 "binary version" batches: each record is one label byte followed by
//! the red, green and blue 32x32 planes, row-major.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

use super::{Dataset, SplitTag};

pub const CIFAR_RECORD_LEN: usize = 1 + 3 * 32 * 32;
pub const CIFAR_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const CIFAR_TEST_FILE: &str = "test_batch.bin";

/// Layout of one label-plus-planar-image record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecordShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub classes: usize,
}

impl RecordShape {
    pub const CIFAR10: RecordShape = RecordShape {
        height: 32,
        width: 32,
        channels: 3,
        classes: 10,
    };

    pub fn record_len(&self) -> usize {
        1 + self.height * self.width * self.channels
    }
}

/// Parses a whole buffer of records. `path` is only used in error messages.
pub fn parse_records(bytes: &[u8], shape: RecordShape, path: &Path) -> Result<(Vec<ImageBuffer>, Vec<usize>)> {
    let rec = shape.record_len();
    let plane = shape.height * shape.width;
    if bytes.len() % rec != 0 {
        let offset = (bytes.len() / rec * rec) as u64;
        return Err(Error::Parse {
            path: path.into(),
            offset,
            message: format!(
                "truncated record: {} of {rec} bytes",
                bytes.len() - offset as usize
            ),
        });
    }
    let mut images = Vec::with_capacity(bytes.len() / rec);
    let mut labels = Vec::with_capacity(bytes.len() / rec);
    for (r, chunk) in bytes.chunks_exact(rec).enumerate() {
        let label = chunk[0] as usize;
        if label >= shape.classes {
            return Err(Error::Parse {
                path: path.into(),
                offset: (r * rec) as u64,
                message: format!("label {label} out of range for {} classes", shape.classes),
            });
        }
        let planes = &chunk[1..];
        let mut pixels = vec![0u8; plane * shape.channels];
        for c in 0..shape.channels {
            for i in 0..plane {
                pixels[i * shape.channels + c] = planes[c * plane + i];
            }
        }
        images.push(ImageBuffer::new(shape.height, shape.width, shape.channels, pixels)?);
        labels.push(label);
    }
    Ok((images, labels))
}

/// Inverse of [`parse_records`].
pub fn serialize_records(images: &[ImageBuffer], labels: &[usize]) -> Result<Vec<u8>> {
    if images.len() != labels.len() {
        return Err(Error::Shape("images and labels differ in length".into()));
    }
    let mut out = Vec::new();
    for (img, &label) in images.iter().zip(labels) {
        let label = u8::try_from(label)
            .map_err(|_| Error::InvalidArgument(format!("label {label} does not fit a byte")))?;
        out.push(label);
        let (ch, px) = (img.channels(), img.pixels());
        for c in 0..ch {
            out.extend(px.iter().skip(c).step_by(ch));
        }
    }
    Ok(out)
}

pub fn write_records(path: &Path, ds: &Dataset) -> Result<()> {
    let bytes = serialize_records(&ds.images, &ds.labels)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a record file of arbitrary geometry.
pub fn read_records(path: &Path, shape: RecordShape, split: SplitTag) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (images, labels) = parse_records(&bytes, shape, path)?;
    Dataset::new(images, labels, shape.classes, split)
}

/// Loads the five training batches and the test batch from `dir`.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let mut train = Dataset::new(Vec::new(), Vec::new(), 10, SplitTag::Train)?;
    for name in CIFAR_TRAIN_FILES {
        let part = read_records(&dir.join(name), RecordShape::CIFAR10, SplitTag::Train)?;
        train.images.extend(part.images);
        train.labels.extend(part.labels);
    }
    let test = read_records(&dir.join(CIFAR_TEST_FILE), RecordShape::CIFAR10, SplitTag::Test)?;
    Ok((train, test))
}
