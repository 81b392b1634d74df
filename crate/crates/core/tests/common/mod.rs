#![allow(dead_code)]

pub mod oracle;
pub mod reference;

use autoaug::ImageBuffer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image<R: Rng>(rng: &mut R, h: usize, w: usize, c: usize) -> ImageBuffer {
    let pixels = (0..h * w * c).map(|_| rng.random::<u8>()).collect();
    ImageBuffer::new(h, w, c, pixels).unwrap()
}

/// Smooth content with a few outliers, closer to natural images than noise.
pub fn textured_image(seed: u64, h: usize, w: usize, c: usize) -> ImageBuffer {
    let mut r = rng(seed);
    let phase: Vec<f64> = (0..c).map(|_| r.random::<f64>() * 6.0).collect();
    ImageBuffer::from_fn(h, w, c, |y, x, ch| {
        let base = 128.0 + 90.0 * ((x as f64 * 0.7 + phase[ch]).sin() * (y as f64 * 0.45).cos());
        let spike = if (x * 7 + y * 3 + ch) % 17 == 0 { 60.0 } else { 0.0 };
        (base + spike).round().clamp(0.0, 255.0) as u8
    })
    .unwrap()
}

use std::path::Path;

use autoaug::data::{Dataset, CIFAR_TEST_FILE, CIFAR_TRAIN_FILES};
use autoaug::kernels::{apply_kind, ElementKind, Sign};
use autoaug::learner::{cosine_lr, sgd_step, Architecture, InputShape, Network, Standardizer, TrainHyper};

/// Raw bytes of `records` random CIFAR-10 records.
pub fn cifar_bytes(seed: u64, records: usize) -> Vec<u8> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(records * 3073);
    for _ in 0..records {
        out.push(r.random_range(0..10u8));
        out.extend((0..3072).map(|_| r.random::<u8>()));
    }
    out
}

/// Writes the six batch files of a full-size CIFAR-10 directory.
pub fn write_cifar_dir(dir: &Path, seed: u64) {
    for (i, name) in CIFAR_TRAIN_FILES.iter().chain([&CIFAR_TEST_FILE]).enumerate() {
        std::fs::write(dir.join(name), cifar_bytes(seed + i as u64, 10_000)).unwrap();
    }
}


/// Trains a small MLP without any pre-processing, optionally passing every
/// training image through `transform` first, and returns clean validation
/// accuracy.
pub fn train_plain(
    train: &Dataset,
    val: &Dataset,
    steps: usize,
    seed: u64,
    transform: Option<&dyn Fn(&ImageBuffer, &mut ChaCha8Rng) -> ImageBuffer>,
) -> f64 {
    let (h, w, c) = train.image_shape().unwrap();
    let input = InputShape { height: h, width: w, channels: c };
    let net = Network::new(Architecture::Mlp { hidden: 64 }, input, train.class_count).unwrap();
    let standardizer = Standardizer::fit(&train.images).unwrap();
    let hyper = TrainHyper { base_lr: 0.2, total_steps: steps, batch_size: 128, ..TrainHyper::default() };
    let mut r = rng(seed);
    let mut weights = net.init_weights(&mut r);
    let mut velocity = vec![0.0; weights.len()];
    for step in 0..steps {
        let idx: Vec<usize> = (0..hyper.batch_size).map(|_| r.random_range(0..train.len())).collect();
        let images: Vec<ImageBuffer> = idx
            .iter()
            .map(|&i| match transform {
                Some(f) => f(&train.images[i], &mut r),
                None => train.images[i].clone(),
            })
            .collect();
        let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
        let batch = standardizer.batch(&images, &labels).unwrap();
        let (_, grad) = net.loss_and_grad(&weights, &batch).unwrap();
        let lr = cosine_lr(step, &hyper).unwrap();
        sgd_step(&mut weights, &grad, &mut velocity, lr, &hyper).unwrap();
    }
    let val_batch = standardizer.batch(&val.images, &val.labels).unwrap();
    net.evaluate_accuracy(&weights, &val_batch).unwrap()
}

/// Forward translation along the destructive axis at a catalog magnitude.
pub fn destructive(kind: ElementKind) -> impl Fn(&ImageBuffer, &mut ChaCha8Rng) -> ImageBuffer {
    move |img, r| {
        let m = kind.magnitudes()[r.random_range(0..3)];
        apply_kind(img, kind, m, Sign::Plus)
    }
}
