//! Ridgeless regression with random Fourier features.
//!
//! The crate covers the full pipeline from the closed-form estimators to the
//! stochastic trainers and the experiment harness:
//!
//! - [`numerics`]: dense matrices, symmetric eigendecomposition, pseudo-inverse
//!   and bisection.
//! - [`kernels`]: the Gaussian kernel, kernel matrices, effective dimension,
//!   effective ridge and the variance factor.
//! - [`features`]: random Fourier feature maps and their Frobenius-trace
//!   gradient.
//! - [`estimators`]: kernel ridge/ridgeless, ridgeless random features and the
//!   closed-form gradient-descent path.
//! - [`training`]: mini-batch SGD and the tunable-kernel trainer.
//! - [`data`]: libsvm I/O, synthetic tasks and splits.
//! - [`experiments`]: seeded sweeps that write CSV tables.

pub mod data;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod features;
pub mod kernels;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use estimators::{KernelModel, Model, Predictor, RFModel};
pub use features::FeatureMap;
pub use kernels::KernelSpec;
pub use numerics::Matrix;

/// Formats a float with nine significant digits in scientific notation, the
/// layout used for every number written to CSV.
pub fn fmt_sig(x: f64) -> String {
    format!("{x:.8e}")
}
