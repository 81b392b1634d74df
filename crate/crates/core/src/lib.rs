//! Online learning of data-augmentation policies.
//!
//! A multinomial distribution over 1296 two-element augmentation operations is
//! trained by REINFORCE while a population of small classifiers is trained by
//! SGD under augmentations sampled from it. After every period the best
//! classifier is broadcast back to the whole population.
//!
//! Module map:
//!
//! - [`kernels`]: the 36 augmentation elements and their composition.
//! - [`policy`]: the normalized-sigmoid distribution over operations.
//! - [`learner`]: the inner-loop classifier, SGD and the learning-rate schedule.
//! - [`policy_optim`]: score-function gradient with mean baseline, Adam ascent.
//! - [`engine`]: the bilevel search loop with weight broadcast.
//! - [`data`]: CIFAR-10 ingestion, splits, pre-processing and synthetic tasks.
//! - [`config`]: run configuration parsing and validation.
//! - [`cost`]: search-cost accounting in normalized iterations.

pub mod config;
pub mod cost;
pub mod data;
pub mod engine;
pub mod error;
pub mod fixture;
pub mod image;
pub mod kernels;
pub mod learner;
pub mod policy;
pub mod policy_optim;
pub mod rng;

pub use error::{Error, Result};
pub use image::ImageBuffer;
