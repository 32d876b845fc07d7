//! Stratified Monte Carlo quadrature of second-order random fields over the
//! unit hypercube: exact mean squared errors computed from the incremental
//! variance, asymptotic rates and constants, optimal grid designs, and a
//! config-driven experiment runner.
//!
//! The quadrature approximates I(X) = ∫ X(t) dt by Σ_i X(η_i)|D_i| with one
//! uniform random point per stratum of a rectangular grid design. Its exact
//! MSE is ½ Σ_i ∬_{D_i×D_i} d_X(t,v) dt dv, a deterministic functional of the
//! incremental variance d_X(t,v) = ‖X(t) − X(v)‖² — no simulation involved.

// `!(x > 0.0)` is used throughout as a NaN-rejecting positivity check;
// `x <= 0.0` would silently accept NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod cli;
pub mod designs;
pub mod error;
pub mod experiments;
pub mod gauss;
pub mod kahan;
pub mod models;
pub mod mse;
pub mod quadrature;
pub mod report;

pub use error::{Error, Result};
