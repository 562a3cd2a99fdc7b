//! Inference on high-dimensional realized covariance matrices.
//!
//! The crate covers the whole pipeline for testing residual sparsity in a
//! continuous-time one-factor model observed at high frequency:
//!
//! * [`model_sim`] simulates a factor model with Heston variance and
//!   block-correlated residuals, together with the analytic truth.
//! * [`estimators`] computes realized covariance, lazy entries of the
//!   asymptotic covariance estimator and Studentized pair statistics.
//! * [`bootstrap`] implements the MA(1) multiplier bootstrap.
//! * [`mtest`] runs stepdown multiple testing with Holm and Romano-Wolf
//!   critical values.
//! * [`harness`] drives Monte Carlo experiments (FWER and average power).
//! * [`dataio`] loads price panels and writes analysis reports.
//!
//! Asset indices are zero-based throughout the API. In a `d`-dimensional
//! panel the factor is always the last asset, index `d - 1`.
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
#[cfg(feature = "cli")]
pub mod cli;
pub mod dataio;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod model_sim;
pub mod mtest;
mod par;
pub mod rng;
mod sum;

pub use error::{HicovError, Result};
