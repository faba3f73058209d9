//! Non-parametric differential entropy estimation from samples.
//!
//! Two k-nearest-neighbour estimators are provided. [`estimators::estimate_kl`]
//! assumes the density is constant inside each neighbour ball.
//! [`estimators::estimate_kpn`] replaces that assumption by a Gaussian fitted
//! to the p nearest neighbours and integrates it over the ball with
//! Expectation Propagation ([`epmgp`]). All distances use the L∞ norm, so the
//! ball around a sample is an axis-aligned box.

pub mod bench;
pub mod distributions;
pub mod epmgp;
pub mod error;
pub mod estimators;
pub mod knn;
pub mod numerics;
pub mod par;

pub use error::{Error, Result};
