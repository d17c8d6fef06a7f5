//! Co-optimization of transmission line upgrades and storage siting on a
//! PTDF-based DC network model.
//!
//! The pipeline is: load a [`grid::Network`], build representative-day
//! [`scenario::Scenario`]s, compute the [`ptdf::PtdfMatrix`], warm-start from
//! per-scenario relaxations ([`extensive`], [`stabilization`]), run the
//! trust-region multicut Benders loop ([`benders`]), and certify the result
//! with a global lower bound ([`bounds`]). [`planner`] chains these over a
//! rolling multiyear horizon.

// `!(x > 0.0)` is how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod error;
pub mod extensive;
pub mod fixtures;
pub mod grid;
pub mod instance;
pub mod opf;
pub mod ptdf;
pub mod scenario;
pub mod solver;
pub mod stabilization;
pub mod benders;
pub mod bounds;
pub mod planner;

pub use error::{Error, Result};
pub use instance::Instance;

/// Primal feasibility tolerance used across the crate (absolute).
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Tolerance for dual/objective agreement checks.
pub const DUALITY_TOL: f64 = 1e-6;
/// Integrality tolerance for MIP solutions.
pub const INTEGRALITY_TOL: f64 = 1e-6;
