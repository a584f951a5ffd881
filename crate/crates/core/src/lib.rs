//! Semi-supervised anomaly detection for multivariate robot time series.
//!
//! The core model is a Real-NVP style normalizing flow whose coupling blocks
//! permute and split along the signal axis and use dilated temporal
//! convolutions as internal networks. Samples are scored by their negative
//! log-likelihood under the flow. Nearest-neighbour and PCA baselines, a
//! per-category AUROC harness and a synthetic pick-and-place generator are
//! included.

pub mod baselines;
pub mod container;
pub mod data;
pub mod error;
pub mod eval;
pub mod flow;
pub mod rng;
pub mod score;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Graph, Real, Tensor, Var};
