//! Robust sparse covariance estimation for high-dimensional compositional data.
//!
//! Observed compositions are mapped to centered log-ratio coordinates, whose
//! covariance approximates the latent log-basis covariance when the latter
//! is sparse and the dimension is large. The pilot covariance is estimated
//! by median of means ([`mom`]), adaptively thresholded ([`threshold`]) with
//! a cross-validated tuning constant ([`tuning`]). [`simgen`] generates
//! benchmark data, [`metrics`] scores estimates and [`stability`] measures
//! bootstrap edge stability of the resulting network.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod cli;
pub mod compdata;
pub mod error;
pub mod linalg;
pub mod matrix;
pub mod metrics;
pub mod mom;
pub mod rng;
pub mod simgen;
pub mod stability;
pub mod threshold;
pub mod tuning;

pub use compdata::{close_counts, clr_transform, ClrMatrix, CompositionMatrix, CountMatrix};
pub use error::{Error, Result};
pub use matrix::SymmetricMatrix;
pub use threshold::ThresholdRule;
pub use tuning::{estimate, EstimateResult, EstimatorConfig, EstimatorKind};
