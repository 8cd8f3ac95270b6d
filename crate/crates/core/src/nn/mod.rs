//! Tensor layers, sequential networks, gradient checking and checkpoints.

pub mod checkpoint;
pub mod gradcheck;
pub mod layer;
pub mod network;

pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GradCheckReport, LossFn, ParamCheck};
pub use layer::{LayerKind, LayerSpec};
pub use network::{Architecture, Network};
