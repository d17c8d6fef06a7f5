//! Thin abstraction over an external LP/MILP engine.
//!
//! Models are built as plain [`OptModel`] values and handed to a [`Backend`].
//! Continuous solves return row duals; integer solves return an incumbent
//! together with the best proven bound.

mod highs;
mod lp_format;
mod model;

pub use highs::{relative_gap, HighsBackend};
pub use lp_format::{write_lp, write_lp_file};
pub use model::{Backend, Constraint, OptModel, RowId, RowSense, SolveOutcome, SolveStatus, VarId, Variable};

#[cfg(test)]
mod tests;
