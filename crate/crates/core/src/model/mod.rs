//! Learning functions and error functions for the supported classifiers.
//!
//! A [`ModelSpec`] describes the architecture, [`ParamVector`] holds every
//! weight and bias in one flat vector, and [`Network`] runs the forward pass
//! and backpropagation over that vector.

mod dataset;
pub mod metrics;
mod network;
mod spec;

pub use dataset::{LabeledDataset, OneHotLabels};
pub use metrics::{classification_error, cross_entropy, euclidean_error, LossKind, Prediction};
pub use network::{forward, Network, Trace};
pub use spec::{Activation, BlockKind, Layer, ModelSpec, ParamBlock, ParamLayout, ParamSlot, ParamVector};

pub(crate) use network::valid_range;

/// Closed-form parameter count of `spec`.
pub fn param_count(spec: &ModelSpec) -> usize {
    spec.param_count()
}
