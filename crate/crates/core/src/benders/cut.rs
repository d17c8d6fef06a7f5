use serde::{Deserialize, Serialize};

use super::subproblem::{Phase, SubproblemResult};
use crate::grid::{InvestmentPlan, RelaxedPlan};

/// Affine underestimator `value + pi_gamma.(gamma - gamma_k) + pi_sigma.(sigma - sigma_k)`
/// of one scenario's recourse (Phase II) or minimum-shed (Phase I) function,
/// with `sigma` in MWh.
///
/// Kept in point-slope form so evaluation at the generation point returns
/// `value` exactly; `intercept` is the equivalent constant term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub scenario: usize,
    pub phase: Phase,
    pub iteration: usize,
    pub value: f64,
    pub intercept: f64,
    pub pi_gamma: Vec<f64>,
    pub pi_sigma: Vec<f64>,
    pub at_gamma: Vec<f64>,
    pub at_sigma: Vec<f64>,
}

pub fn assemble_cut(result: &SubproblemResult, point: &RelaxedPlan, iteration: usize) -> Cut {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    Cut {
        scenario: result.scenario,
        phase: result.phase,
        iteration,
        value: result.value,
        intercept: result.value - dot(&result.pi_gamma, &point.gamma) - dot(&result.pi_sigma, &point.sigma),
        pi_gamma: result.pi_gamma.clone(),
        pi_sigma: result.pi_sigma.clone(),
        at_gamma: point.gamma.clone(),
        at_sigma: point.sigma.clone(),
    }
}

impl Cut {
    pub fn evaluate(&self, point: &RelaxedPlan) -> f64 {
        let mut v = self.value;
        for ((p, x), x0) in self.pi_gamma.iter().zip(&point.gamma).zip(&self.at_gamma) {
            v += p * (x - x0);
        }
        for ((p, x), x0) in self.pi_sigma.iter().zip(&point.sigma).zip(&self.at_sigma) {
            v += p * (x - x0);
        }
        v
    }

    pub fn evaluate_plan(&self, plan: &InvestmentPlan) -> f64 {
        self.evaluate(&plan.relaxed())
    }

    /// Coefficients on upgrade-level and storage-unit columns, and the
    /// constant, for `proxy >= coeffs . x + constant`.
    pub(crate) fn master_terms(&self, unit_mwh: f64) -> (Vec<f64>, Vec<f64>, f64) {
        let per_unit: Vec<f64> = self.pi_sigma.iter().map(|p| p * unit_mwh).collect();
        (self.pi_gamma.clone(), per_unit, self.intercept)
    }
}
