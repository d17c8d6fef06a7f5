use super::cut::Cut;
use super::subproblem::Phase;
use crate::error::Result;
use crate::extensive::{add_first_stage, round_plan};
use crate::grid::InvestmentPlan;
use crate::instance::Instance;
use crate::solver::{Backend, OptModel, RowSense, SolveOutcome, SolveStatus, VarId};
use crate::stabilization::{CandidateSets, StabilizationState};

/// What the master is allowed to see of the stabilization state.
#[derive(Debug, Clone, Copy)]
pub struct MasterControls<'a> {
    pub stab: &'a StabilizationState,
    pub trust_region: bool,
    pub candidates: Option<&'a CandidateSets>,
}

#[derive(Debug, Clone)]
pub struct MasterModel {
    pub model: OptModel,
    pub gamma: Vec<VarId>,
    pub units: Vec<VarId>,
    pub theta: Vec<VarId>,
    pub rho: VarId,
}

#[derive(Debug, Clone)]
pub enum MasterOutcome {
    Solved {
        plan: InvestmentPlan,
        objective: f64,
        bound: f64,
    },
    Infeasible,
    /// Time ran out before any incumbent.
    NoIncumbent,
}

/// Integer first stage, one cost proxy per scenario, the shed proxy fixed at
/// zero, every cut, and the stabilization rows.
///
/// Proxies are bounded below by zero since operating cost and shed are
/// nonnegative.
pub fn build_master(inst: &Instance<'_>, cuts: &[Cut], controls: MasterControls<'_>) -> MasterModel {
    let unit = inst.unit_mwh();
    let mut model = OptModel::new();
    let (gamma, units) = add_first_stage(&mut model, inst.net, unit, true);
    if let Some(c) = controls.candidates {
        for (v, ok) in gamma.iter().zip(&c.branches).chain(units.iter().zip(&c.buses)) {
            if !ok {
                model.var_mut(*v).upper = 0.0;
            }
        }
    }
    let theta: Vec<VarId> = inst
        .scenarios
        .iter()
        .map(|s| model.add_var(format!("theta_{}", s.id), 0.0, f64::INFINITY, s.weight))
        .collect();
    let rho = model.add_var("rho", 0.0, 0.0, 1.0);
    for (k, cut) in cuts.iter().enumerate() {
        let proxy = match cut.phase {
            Phase::Optimality => theta[cut.scenario],
            Phase::Feasibility => rho,
        };
        let (pg, pu, constant) = cut.master_terms(unit);
        let mut coeffs = vec![(proxy, 1.0)];
        coeffs.extend(gamma.iter().zip(&pg).filter(|(_, p)| **p != 0.0).map(|(v, p)| (*v, -p)));
        coeffs.extend(units.iter().zip(&pu).filter(|(_, p)| **p != 0.0).map(|(v, p)| (*v, -p)));
        model.add_row(format!("cut_{k}"), coeffs, RowSense::Ge, constant);
    }
    let epigraph: Vec<(VarId, f64)> = theta.iter().zip(inst.scenarios).map(|(v, s)| (*v, s.weight)).collect();
    controls
        .stab
        .emit_constraints(&mut model, &gamma, &units, &epigraph, controls.trust_region);
    MasterModel {
        model,
        gamma,
        units,
        theta,
        rho,
    }
}

pub fn solve_master(backend: &dyn Backend, inst: &Instance<'_>, master: &MasterModel, gap_tol: f64, time_limit: f64) -> Result<(MasterOutcome, SolveOutcome)> {
    let out = backend.solve_mip(&master.model, gap_tol, time_limit)?;
    let result = match (&out.status, &out.primal) {
        (SolveStatus::Infeasible, _) => MasterOutcome::Infeasible,
        (SolveStatus::Optimal | SolveStatus::LimitHit, Some(x)) => {
            let g: Vec<f64> = master.gamma.iter().map(|v| x[v.0]).collect();
            let u: Vec<f64> = master.units.iter().map(|v| x[v.0]).collect();
            MasterOutcome::Solved {
                plan: round_plan(&g, &u, inst.unit_mwh()),
                objective: out.objective,
                bound: out.best_bound.unwrap_or(out.objective),
            }
        }
        _ => MasterOutcome::NoIncumbent,
    };
    Ok((result, out))
}
