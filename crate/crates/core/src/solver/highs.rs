//! [`Backend`] implementation on top of the HiGHS C API.

use std::ffi::{c_void, CString};
use std::os::raw::c_char;
use std::time::Instant;

use highs_sys as ffi;
use log::debug;

use super::model::{Backend, OptModel, RowSense, SolveOutcome, SolveStatus};
use crate::error::{Error, Result};
use crate::{DUALITY_TOL, FEASIBILITY_TOL, INTEGRALITY_TOL};

/// Solution status code reported by HiGHS for a feasible primal/dual vector.
const SOLUTION_STATUS_FEASIBLE: i32 = ffi::SOLUTION_STATUS_FEASIBLE;

/// HiGHS settings shared by every solve.
#[derive(Debug, Clone)]
pub struct HighsBackend {
    /// Threads per solver instance. Kept at 1 so runs are reproducible.
    pub threads: i32,
    pub random_seed: i32,
    pub primal_feasibility_tolerance: f64,
    pub dual_feasibility_tolerance: f64,
    pub mip_feasibility_tolerance: f64,
}

impl Default for HighsBackend {
    fn default() -> Self {
        Self {
            threads: 1,
            random_seed: 0,
            // The lazy-flow audit checks residuals at FEASIBILITY_TOL, so the
            // engine runs an order of magnitude or more tighter.
            primal_feasibility_tolerance: FEASIBILITY_TOL * 1e-3,
            dual_feasibility_tolerance: DUALITY_TOL * 1e-3,
            mip_feasibility_tolerance: INTEGRALITY_TOL,
        }
    }
}

/// Owning handle around a `Highs` object.
struct Handle(*mut c_void);

impl Handle {
    fn new() -> Self {
        // SAFETY: Highs_create has no preconditions and returns an owned object.
        Handle(unsafe { ffi::Highs_create() })
    }

    fn set_bool(&self, name: &str, value: bool) {
        let key = CString::new(name).unwrap();
        // SAFETY: valid handle and NUL-terminated key.
        unsafe { ffi::Highs_setBoolOptionValue(self.0, key.as_ptr(), value as ffi::HighsInt) };
    }

    fn set_int(&self, name: &str, value: i32) {
        let key = CString::new(name).unwrap();
        // SAFETY: as above.
        unsafe { ffi::Highs_setIntOptionValue(self.0, key.as_ptr(), value as ffi::HighsInt) };
    }

    fn set_double(&self, name: &str, value: f64) {
        let key = CString::new(name).unwrap();
        // SAFETY: as above.
        unsafe { ffi::Highs_setDoubleOptionValue(self.0, key.as_ptr(), value) };
    }

    fn set_string(&self, name: &str, value: &str) {
        let key = CString::new(name).unwrap();
        let val = CString::new(value).unwrap();
        // SAFETY: as above.
        unsafe { ffi::Highs_setStringOptionValue(self.0, key.as_ptr(), val.as_ptr() as *const c_char) };
    }

    fn int_info(&self, name: &str) -> Option<i32> {
        let key = CString::new(name).unwrap();
        let mut out: ffi::HighsInt = 0;
        // SAFETY: valid handle, key, and out pointer.
        let st = unsafe { ffi::Highs_getIntInfoValue(self.0, key.as_ptr(), &mut out) };
        (st == ffi::STATUS_OK).then_some(out as i32)
    }

    fn double_info(&self, name: &str) -> Option<f64> {
        let key = CString::new(name).unwrap();
        let mut out = 0.0;
        // SAFETY: valid handle, key, and out pointer.
        let st = unsafe { ffi::Highs_getDoubleInfoValue(self.0, key.as_ptr(), &mut out) };
        (st == ffi::STATUS_OK).then_some(out)
    }
}

impl Drop for Handle {
    fn drop(&mut self) {
        // SAFETY: the pointer came from Highs_create and is dropped once.
        unsafe { ffi::Highs_destroy(self.0) };
    }
}

/// Column-major copy of an [`OptModel`] in the layout HiGHS expects.
struct Csc {
    cost: Vec<f64>,
    col_lower: Vec<f64>,
    col_upper: Vec<f64>,
    row_lower: Vec<f64>,
    row_upper: Vec<f64>,
    start: Vec<ffi::HighsInt>,
    index: Vec<ffi::HighsInt>,
    value: Vec<f64>,
    integrality: Vec<ffi::HighsInt>,
}

impl Csc {
    fn from_model(model: &OptModel, scale: f64) -> Self {
        let n = model.num_vars();
        let mut counts = vec![0usize; n];
        for row in &model.rows {
            for &(v, _) in &row.coeffs {
                counts[v.0] += 1;
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut acc = 0usize;
        for c in &counts {
            start.push(acc as ffi::HighsInt);
            acc += c;
        }
        let mut fill: Vec<usize> = start.iter().map(|&s| s as usize).collect();
        let mut index = vec![0 as ffi::HighsInt; acc];
        let mut value = vec![0.0; acc];
        for (i, row) in model.rows.iter().enumerate() {
            for &(v, a) in &row.coeffs {
                let k = fill[v.0];
                index[k] = i as ffi::HighsInt;
                value[k] = a;
                fill[v.0] += 1;
            }
        }
        let (row_lower, row_upper) = model
            .rows
            .iter()
            .map(|r| match r.sense {
                RowSense::Le => (f64::NEG_INFINITY, r.rhs),
                RowSense::Ge => (r.rhs, f64::INFINITY),
                RowSense::Eq => (r.rhs, r.rhs),
            })
            .unzip();
        Csc {
            cost: model.vars.iter().map(|v| v.cost * scale).collect(),
            col_lower: model.vars.iter().map(|v| v.lower).collect(),
            col_upper: model.vars.iter().map(|v| v.upper).collect(),
            row_lower,
            row_upper,
            start,
            index,
            value,
            integrality: model
                .vars
                .iter()
                .map(|v| if v.integer { ffi::VAR_TYPE_INTEGER } else { ffi::VAR_TYPE_CONTINUOUS })
                .collect(),
        }
    }
}

impl HighsBackend {
    fn configured_handle(&self) -> Handle {
        let h = Handle::new();
        h.set_bool("output_flag", std::env::var_os("TEPSTOR_HIGHS_LOG").is_some());
        h.set_int("threads", self.threads);
        h.set_int("random_seed", self.random_seed);
        h.set_double("primal_feasibility_tolerance", self.primal_feasibility_tolerance);
        h.set_double("dual_feasibility_tolerance", self.dual_feasibility_tolerance);
        h.set_double("mip_feasibility_tolerance", self.mip_feasibility_tolerance);
        h
    }

    fn pass(&self, h: &Handle, model: &OptModel, integer: bool, scale: f64) -> Result<()> {
        let csc = Csc::from_model(model, scale);
        let n = model.num_vars() as ffi::HighsInt;
        let m = model.num_rows() as ffi::HighsInt;
        let nz = csc.value.len() as ffi::HighsInt;
        // SAFETY: all arrays have the lengths HiGHS documents for the given
        // dimensions and outlive the call (HiGHS copies them).
        let st = unsafe {
            if integer {
                ffi::Highs_passMip(
                    h.0,
                    n,
                    m,
                    nz,
                    ffi::MATRIX_FORMAT_COLUMN_WISE,
                    ffi::OBJECTIVE_SENSE_MINIMIZE,
                    model.offset * scale,
                    csc.cost.as_ptr(),
                    csc.col_lower.as_ptr(),
                    csc.col_upper.as_ptr(),
                    csc.row_lower.as_ptr(),
                    csc.row_upper.as_ptr(),
                    csc.start.as_ptr(),
                    csc.index.as_ptr(),
                    csc.value.as_ptr(),
                    csc.integrality.as_ptr(),
                )
            } else {
                ffi::Highs_passLp(
                    h.0,
                    n,
                    m,
                    nz,
                    ffi::MATRIX_FORMAT_COLUMN_WISE,
                    ffi::OBJECTIVE_SENSE_MINIMIZE,
                    model.offset * scale,
                    csc.cost.as_ptr(),
                    csc.col_lower.as_ptr(),
                    csc.col_upper.as_ptr(),
                    csc.row_lower.as_ptr(),
                    csc.row_upper.as_ptr(),
                    csc.start.as_ptr(),
                    csc.index.as_ptr(),
                    csc.value.as_ptr(),
                )
            }
        };
        if st == ffi::STATUS_ERROR {
            return Err(Error::Solver("HiGHS rejected the model".into()));
        }
        Ok(())
    }

    fn run(&self, h: &Handle) -> Result<ffi::HighsInt> {
        // SAFETY: valid handle with a model passed.
        let st = unsafe { ffi::Highs_run(h.0) };
        if st == ffi::STATUS_ERROR {
            return Err(Error::Solver("HiGHS run failed".into()));
        }
        // SAFETY: valid handle.
        Ok(unsafe { ffi::Highs_getModelStatus(h.0) })
    }

    /// Builds, passes and runs a model; a numerical breakdown is retried once
    /// without presolve and with the other simplex variant.
    fn load_and_run(
        &self,
        model: &OptModel,
        integer: bool,
        scale: f64,
        setup: &dyn Fn(&Handle),
    ) -> Result<(Handle, ffi::HighsInt)> {
        let h = self.configured_handle();
        setup(&h);
        self.pass(&h, model, integer, scale)?;
        match self.run(&h) {
            Ok(code) if code != ffi::MODEL_STATUS_SOLVE_ERROR => Ok((h, code)),
            first => {
                debug!("retrying {}x{} after {:?}", model.num_rows(), model.num_vars(), first);
                let retry = self.configured_handle();
                setup(&retry);
                retry.set_string("presolve", "off");
                retry.set_int("simplex_strategy", 4);
                self.pass(&retry, model, integer, scale)?;
                let code = self.run(&retry)?;
                Ok((retry, code))
            }
        }
    }

    fn solution(&self, h: &Handle, model: &OptModel) -> (Vec<f64>, Vec<f64>) {
        let mut col_value = vec![0.0; model.num_vars()];
        let mut col_dual = vec![0.0; model.num_vars()];
        let mut row_value = vec![0.0; model.num_rows()];
        let mut row_dual = vec![0.0; model.num_rows()];
        // SAFETY: buffers sized to the model dimensions.
        unsafe {
            ffi::Highs_getSolution(
                h.0,
                col_value.as_mut_ptr(),
                col_dual.as_mut_ptr(),
                row_value.as_mut_ptr(),
                row_dual.as_mut_ptr(),
            )
        };
        (col_value, row_dual)
    }

    fn status_of(&self, h: &Handle, model: &OptModel, integer: bool, code: ffi::HighsInt) -> Result<SolveStatus> {
        Ok(match code {
            ffi::MODEL_STATUS_OPTIMAL | ffi::MODEL_STATUS_MODEL_EMPTY => SolveStatus::Optimal,
            ffi::MODEL_STATUS_INFEASIBLE => SolveStatus::Infeasible,
            ffi::MODEL_STATUS_UNBOUNDED => SolveStatus::Unbounded,
            ffi::MODEL_STATUS_UNBOUNDED_OR_INFEASIBLE => {
                // Presolve cannot tell the two apart; a plain simplex run can.
                let retry = self.configured_handle();
                retry.set_string("presolve", "off");
                self.pass(&retry, model, integer, cost_scale(model))?;
                match self.run(&retry)? {
                    ffi::MODEL_STATUS_UNBOUNDED => SolveStatus::Unbounded,
                    _ => SolveStatus::Infeasible,
                }
            }
            ffi::MODEL_STATUS_REACHED_TIME_LIMIT
            | ffi::MODEL_STATUS_REACHED_ITERATION_LIMIT
            | ffi::MODEL_STATUS_REACHED_SOLUTION_LIMIT
            | ffi::MODEL_STATUS_REACHED_INTERRUPT
            | ffi::MODEL_STATUS_OBJECTIVE_BOUND
            | ffi::MODEL_STATUS_OBJECTIVE_TARGET => SolveStatus::LimitHit,
            other => {
                let _ = h;
                return Err(Error::Solver(format!("HiGHS returned model status {other}")));
            }
        })
    }
}

impl Backend for HighsBackend {
    fn solve_lp(&self, model: &OptModel) -> Result<SolveOutcome> {
        model.validate()?;
        if model.has_integers() {
            return Err(Error::MalformedModel("solve_lp called on a model with integer columns".into()));
        }
        let started = Instant::now();
        let scale = cost_scale(model);
        let (h, code) = self.load_and_run(model, false, scale, &|_| {})?;
        let status = self.status_of(&h, model, false, code)?;
        let mut out = SolveOutcome {
            status,
            objective: f64::NAN,
            primal: None,
            duals: None,
            best_bound: None,
            gap: None,
            wall_time: started.elapsed(),
        };
        if status == SolveStatus::Optimal {
            let (x, y) = self.solution(&h, model);
            out.objective = model.objective_at(&x);
            out.primal = Some(x);
            if h.int_info("dual_solution_status") == Some(SOLUTION_STATUS_FEASIBLE) || model.num_rows() == 0 {
                out.duals = Some(y.into_iter().map(|d| d / scale).collect());
            }
        }
        debug!(
            "lp {}x{} -> {:?} obj={} in {:?}",
            model.num_rows(),
            model.num_vars(),
            out.status,
            out.objective,
            out.wall_time
        );
        Ok(out)
    }

    fn solve_mip(&self, model: &OptModel, gap_tol: f64, time_limit: f64) -> Result<SolveOutcome> {
        model.validate()?;
        let started = Instant::now();
        let scale = cost_scale(model);
        let (h, code) = self.load_and_run(model, true, scale, &|h| {
            h.set_double("time_limit", time_limit.max(0.0));
            h.set_double("mip_rel_gap", gap_tol);
            h.set_double("mip_abs_gap", 0.0);
        })?;
        let status = self.status_of(&h, model, true, code)?;
        let mut out = SolveOutcome {
            status,
            objective: f64::NAN,
            primal: None,
            duals: None,
            best_bound: None,
            gap: None,
            wall_time: started.elapsed(),
        };
        let has_point = h.int_info("primal_solution_status") == Some(SOLUTION_STATUS_FEASIBLE);
        if matches!(status, SolveStatus::Optimal | SolveStatus::LimitHit) && has_point {
            let (x, _) = self.solution(&h, model);
            out.objective = model.objective_at(&x);
            out.primal = Some(x);
            let bound = h.double_info("mip_dual_bound").unwrap_or(f64::NEG_INFINITY) / scale;
            // A pure-LP model handed to the MIP path reports no dual bound.
            let bound = if bound.is_finite() { bound.min(out.objective) } else { out.objective };
            out.best_bound = Some(bound);
            out.gap = Some(relative_gap(out.objective, bound));
        } else if status == SolveStatus::LimitHit {
            out.best_bound = h.double_info("mip_dual_bound").map(|b| b / scale);
        }
        debug!(
            "mip {}x{} -> {:?} obj={} bound={:?} in {:?}",
            model.num_rows(),
            model.num_vars(),
            out.status,
            out.objective,
            out.best_bound,
            out.wall_time
        );
        Ok(out)
    }
}

/// Power of two that brings the largest cost coefficient to at most 1024.
/// Costs in the tens of millions otherwise break the dual ratio test.
fn cost_scale(model: &OptModel) -> f64 {
    let big = model.vars.iter().map(|v| v.cost.abs()).fold(0.0, f64::max);
    if big <= 1024.0 {
        return 1.0;
    }
    (2.0f64).powi(-((big / 1024.0).log2().ceil() as i32))
}

/// `(incumbent - bound) / max(|incumbent|, 1)`, never negative.
pub fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}
