//! Training classifiers whose weights and biases are restricted to a finite
//! set of values, such as the ternary set `{-1, 0, +1}`.
//!
//! The pipeline is: pretrain with ordinary gradient descent ([`pretrain`]),
//! snap the weights onto the set ([`domain::discretize`]), then improve them
//! with randomized coordinate-wise global search ([`search`]). Trained
//! weights are stored bit-packed ([`domain::PackedCodes`]).
//!
//! The [`qubo`] module holds the reduction from quadratic unconstrained
//! binary optimization to single-layer binary-weight training, with
//! brute-force solvers to check it.

pub mod data;
pub mod domain;
mod error;
pub mod model;
pub mod pretrain;
pub mod qubo;
pub mod rng;
pub mod search;
pub mod weights;

pub use error::{Error, Location, Result};
