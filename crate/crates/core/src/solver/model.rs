use std::fmt;

use crate::error::{Error, Result};

/// Index of a column in an [`OptModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// Index of a row in an [`OptModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for RowSense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowSense::Le => "<=",
            RowSense::Eq => "=",
            RowSense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// A linear (or mixed-integer linear) minimization model.
///
/// Columns and rows are append-only; ids are dense indices.
#[derive(Debug, Clone, Default)]
pub struct OptModel {
    pub vars: Vec<Variable>,
    pub rows: Vec<Constraint>,
    /// Constant added to the objective.
    pub offset: f64,
}

impl OptModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            integer: false,
            cost,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_int_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        let id = self.add_var(name, lower, upper, cost);
        self.vars[id.0].integer = true;
        id
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(VarId, f64)>,
        sense: RowSense,
        rhs: f64,
    ) -> RowId {
        self.rows.push(Constraint {
            name: name.into(),
            coeffs,
            sense,
            rhs,
        });
        RowId(self.rows.len() - 1)
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn var_mut(&mut self, id: VarId) -> &mut Variable {
        &mut self.vars[id.0]
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn has_integers(&self) -> bool {
        self.vars.iter().any(|v| v.integer)
    }

    /// Checks the structural invariants: bounds ordered, finite coefficients,
    /// and every coefficient referring to a declared column.
    pub fn validate(&self) -> Result<()> {
        for (j, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::MalformedModel(format!(
                    "variable {j} ({}) has bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
            if !v.cost.is_finite() {
                return Err(Error::MalformedModel(format!(
                    "variable {j} ({}) has non-finite cost {}",
                    v.name, v.cost
                )));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::MalformedModel(format!(
                    "row {i} ({}) has non-finite rhs {}",
                    row.name, row.rhs
                )));
            }
            for &(VarId(j), a) in &row.coeffs {
                if j >= self.vars.len() {
                    return Err(Error::MalformedModel(format!(
                        "row {i} ({}) references undeclared variable {j}",
                        row.name
                    )));
                }
                if !a.is_finite() {
                    return Err(Error::MalformedModel(format!(
                        "row {i} ({}) has non-finite coefficient on variable {j}",
                        row.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Row activity `a_i^T x` for a primal vector.
    pub fn row_activity(&self, row: RowId, x: &[f64]) -> f64 {
        self.rows[row.0].coeffs.iter().map(|&(v, a)| a * x[v.0]).sum()
    }

    /// Objective value `c^T x + offset`.
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.offset + self.vars.iter().zip(x).map(|(v, xv)| v.cost * xv).sum::<f64>()
    }

    /// Largest absolute violation of any row or column bound at `x`.
    pub fn max_primal_residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xv) in self.vars.iter().zip(x) {
            worst = worst.max(v.lower - xv).max(xv - v.upper);
        }
        for (i, row) in self.rows.iter().enumerate() {
            let act = self.row_activity(RowId(i), x);
            let r = match row.sense {
                RowSense::Le => act - row.rhs,
                RowSense::Ge => row.rhs - act,
                RowSense::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(r);
        }
        worst
    }

    /// Dual objective `b^T y + sum_j d_j * bound_j + offset` for row duals `y`,
    /// where `d = c - A^T y` are the implied reduced costs. Used to check strong
    /// duality on continuous models.
    pub fn dual_objective(&self, duals: &[f64]) -> f64 {
        let mut reduced: Vec<f64> = self.vars.iter().map(|v| v.cost).collect();
        let mut value = self.offset;
        for (row, &y) in self.rows.iter().zip(duals) {
            value += y * row.rhs;
            for &(v, a) in &row.coeffs {
                reduced[v.0] -= a * y;
            }
        }
        for (v, d) in self.vars.iter().zip(reduced) {
            if d > 0.0 {
                value += d * v.lower;
            } else if d < 0.0 {
                value += d * v.upper;
            }
        }
        value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    LimitHit,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub objective: f64,
    /// Column values; absent when no feasible point is known.
    pub primal: Option<Vec<f64>>,
    /// Row duals (`d objective / d rhs`), continuous models only.
    pub duals: Option<Vec<f64>>,
    /// Best proven bound and relative gap, integer models only.
    pub best_bound: Option<f64>,
    pub gap: Option<f64>,
    pub wall_time: std::time::Duration,
}

impl SolveOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.primal.as_ref().map(|x| x[v.0]).unwrap_or(f64::NAN)
    }

    pub fn dual(&self, r: RowId) -> f64 {
        self.duals.as_ref().map(|y| y[r.0]).unwrap_or(f64::NAN)
    }
}

/// A linear / mixed-integer optimization engine.
///
/// Implementations must be usable from several threads at once on disjoint
/// models; no solver state is shared between calls.
pub trait Backend: Send + Sync {
    /// Solves a continuous model. Infeasible and unbounded outcomes are
    /// reported through [`SolveStatus`]; only malformed models or engine
    /// failures are errors.
    fn solve_lp(&self, model: &OptModel) -> Result<SolveOutcome>;

    /// Solves a model with at least one integer column to relative gap
    /// `gap_tol` or until `time_limit` seconds elapse.
    fn solve_mip(&self, model: &OptModel, gap_tol: f64, time_limit: f64) -> Result<SolveOutcome>;
}
