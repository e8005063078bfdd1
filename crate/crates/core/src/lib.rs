//! Robust sufficient dimension reduction by maximizing α-distance covariance
//! over the Stiefel manifold, with a distance-correlation outlier detector and
//! the simulation harness used to evaluate both.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dcov;
pub mod error;
pub mod estimator;
pub mod io;
pub mod linalg;
pub mod outlier;
pub mod seed;
pub mod sim;
pub mod stiefel;

pub use error::{Error, Result};
