//! A small CPU convolutional network engine for image classification.
//!
//! The crate covers the whole path from pixels to a trained classifier:
//!
//! - [`tensor`] has dense row-major tensors generic over `f32`/`f64`.
//! - [`nn`] has convolution, max pooling, dense, dropout, ReLU and softmax
//!   with hand-written backward passes.
//! - [`model`] builds sequential models (VGG-16 and a small "vgg-mini"
//!   variant), handles layer freezing and the `.mcw` weight format.
//! - [`optim`] is RMSprop.
//! - [`loss`] has cross-entropy, accuracy and confusion counts.
//! - [`augment`] does flip, shift and rotation with a seeded random pipeline.
//! - [`data`] covers PPM decoding, preprocessing, dataset loading and
//!   keypoint-based hand cropping.
//! - [`train`] is the training loop, evaluation and curve export.
//!
//! Every random draw comes from a stream keyed by the master seed and the
//! purpose (see [`parallel`]), so a run is reproducible regardless of the
//! number of worker threads.

pub mod augment;
pub mod cli;
pub mod data;
pub mod error;
pub mod loss;
pub mod model;
pub mod nn;
pub mod optim;
pub mod parallel;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{build_vgg16, build_vgg_mini, Architecture, Model, ALL_FROZEN};
pub use tensor::{Real, Shape, Tensor};
pub use train::{evaluate, train, TrainConfig, TrainReport};
