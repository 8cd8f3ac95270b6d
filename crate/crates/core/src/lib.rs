//! Disease-targeted (multi-class) and lesion-targeted (multi-label) skin
//! image classification at desk scale.
//!
//! The crate bundles everything the pipeline needs:
//!
//! - [`tensor`] and [`nn`]: a small `f64` tensor type, convolutional networks
//!   with reverse-mode gradients, gradient checking, and checkpoints.
//! - [`heads`]: softmax and sigmoid cross-entropy heads, top-k prediction,
//!   and linear threshold calibration for multi-label output.
//! - [`taxonomy`]: gestalt string similarity and label merging across atlases.
//! - [`dataset`]: manifests, label vectors, atlas and k-fold splits, and a
//!   synthetic image generator.
//! - [`trainer`]: SGD with momentum and weight decay, fine-tuning.
//! - [`metrics`]: top-k accuracy, MAP, confusion matrices, macro P/R/F.
//! - [`retrieval`]: penultimate-layer features and exact k-NN search.

pub mod dataset;
pub mod error;
pub mod heads;
pub mod metrics;
pub mod nn;
pub mod retrieval;
pub mod taxonomy;
pub mod tensor;
pub mod trainer;

pub use dataset::{Dataset, ImageRecord, LabelVector, Targets};
pub use error::{Error, Result};
pub use heads::{ConfidenceVector, Head, PredictionVector, ThresholdModel};
pub use metrics::MetricsReport;
pub use nn::{Architecture, Checkpoint, LayerSpec, Network};
pub use retrieval::FeatureIndex;
pub use tensor::Tensor;
pub use trainer::TrainConfig;
