use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RelaxedPlan;
use crate::instance::Instance;
use crate::opf::{
    add_operational_block, evaluate_opex, solve_with_lazy_flows, DispatchSolution, FlowKey, Investment,
    OperationalBlock, OperationalCost, OpexBreakdown, DEFAULT_LAZY_CAP,
};
use crate::solver::{Backend, OptModel, RowId, RowSense, VarId};

/// Phase-I shed (MW summed over buses and hours) above this emits a
/// feasibility cut.
pub const SHED_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Minimum-shed problem; its cuts bound the shed proxy.
    Feasibility,
    /// Operating-cost problem; its cuts bound the scenario cost proxy.
    Optimality,
}

#[derive(Debug, Clone)]
pub struct SubproblemResult {
    pub scenario: usize,
    pub phase: Phase,
    pub phase1_shed: f64,
    /// `alpha`-scaled operating cost at the given penalty, Phase II only.
    pub opex: Option<OpexBreakdown>,
    /// Optimal value of the phase reached.
    pub value: f64,
    /// Duals of the fixed-investment rows: per upgrade level and per MWh.
    pub pi_gamma: Vec<f64>,
    pub pi_sigma: Vec<f64>,
    pub dispatch: DispatchSolution,
    pub lazy_iterations: usize,
}

/// Flow rows discovered for one scenario, carried from call to call.
#[derive(Debug, Clone, Default)]
pub struct RetainedFlows {
    pub keys: Vec<FlowKey>,
}

struct FixedModel {
    model: OptModel,
    block: OperationalBlock,
    fix_gamma: Vec<RowId>,
    fix_sigma: Vec<RowId>,
}

/// The operational LP with free investment columns pinned by equality rows,
/// so the row duals are the sensitivities of the optimal value.
fn build(inst: &Instance<'_>, s: usize, point: &RelaxedPlan, retained: &RetainedFlows) -> Result<FixedModel> {
    let net = inst.net;
    if point.gamma.len() != net.num_branches() || point.sigma.len() != net.num_buses() {
        return Err(Error::DimensionMismatch("subproblem point does not match the network".into()));
    }
    let mut model = OptModel::new();
    let gamma: Vec<VarId> = (0..net.num_branches())
        .map(|l| model.add_var(format!("gamma_{l}"), f64::NEG_INFINITY, f64::INFINITY, 0.0))
        .collect();
    let sigma: Vec<VarId> = (0..net.num_buses())
        .map(|i| model.add_var(format!("sigma_{i}"), f64::NEG_INFINITY, f64::INFINITY, 0.0))
        .collect();
    let fix_gamma = gamma
        .iter()
        .zip(&point.gamma)
        .enumerate()
        .map(|(l, (&v, &g))| model.add_row(format!("fix_gamma_{l}"), vec![(v, 1.0)], RowSense::Eq, g))
        .collect();
    let fix_sigma = sigma
        .iter()
        .zip(&point.sigma)
        .enumerate()
        .map(|(i, (&v, &x))| model.add_row(format!("fix_sigma_{i}"), vec![(v, 1.0)], RowSense::Eq, x))
        .collect();
    let inv = Investment::Columns {
        gamma,
        sigma,
        sigma_scale: 1.0,
    };
    let ctx = inst.ctx();
    let mut block = add_operational_block(&mut model, ctx, &inst.scenarios[s], inv, OperationalCost::ShedOnly, false)?;
    for &key in &retained.keys {
        block.add_flow_row(&mut model, ctx, key);
    }
    Ok(FixedModel {
        model,
        block,
        fix_gamma,
        fix_sigma,
    })
}

fn solve_phase(
    backend: &dyn Backend,
    inst: &Instance<'_>,
    fm: &mut FixedModel,
    k_v: usize,
) -> Result<(f64, Vec<f64>, Vec<f64>, Vec<f64>, usize)> {
    let blocks = std::slice::from_mut(&mut fm.block);
    let lazy = solve_with_lazy_flows(&mut fm.model, blocks, inst.ctx(), k_v, DEFAULT_LAZY_CAP, &mut |m| {
        backend.solve_lp(m)
    })?;
    let out = lazy.outcome;
    if !out.is_optimal() {
        return Err(Error::Solver(format!("subproblem ended with status {:?}", out.status)));
    }
    let duals = out
        .duals
        .as_ref()
        .ok_or_else(|| Error::Solver("subproblem returned no duals".into()))?;
    let pi_g = fm.fix_gamma.iter().map(|r| duals[r.0]).collect();
    let pi_s = fm.fix_sigma.iter().map(|r| duals[r.0]).collect();
    Ok((out.objective, pi_g, pi_s, out.primal.expect("optimal LP has a primal"), lazy.iterations))
}

/// Two-phase recourse evaluation of scenario `s` at `point` (upgrade levels
/// and new storage MWh). Phase I minimizes shed; only if it is zero does
/// Phase II minimize `alpha`-scaled operating cost at penalty `lambda`.
/// Flow rows found in either phase are appended to `retained`.
pub fn solve_subproblem(
    backend: &dyn Backend,
    inst: &Instance<'_>,
    s: usize,
    point: &RelaxedPlan,
    lambda: f64,
    k_v: usize,
    retained: &mut RetainedFlows,
) -> Result<SubproblemResult> {
    let mut fm = build(inst, s, point, retained)?;
    let (shed, pi_g, pi_s, x, it1) = solve_phase(backend, inst, &mut fm, k_v)?;
    let ctx = inst.ctx();
    let result = if shed > SHED_TOL {
        SubproblemResult {
            scenario: s,
            phase: Phase::Feasibility,
            phase1_shed: shed,
            opex: None,
            value: shed,
            pi_gamma: pi_g,
            pi_sigma: pi_s,
            dispatch: fm.block.extract(ctx, &x),
            lazy_iterations: it1,
        }
    } else {
        fm.block.set_cost(
            &mut fm.model,
            ctx,
            OperationalCost::OpEx {
                scale: inst.alpha,
                shed_penalty: lambda,
            },
        );
        let (value, pi_g, pi_s, x, it2) = solve_phase(backend, inst, &mut fm, k_v)?;
        let mut dispatch = fm.block.extract(ctx, &x);
        dispatch.objective = value;
        SubproblemResult {
            scenario: s,
            phase: Phase::Optimality,
            phase1_shed: shed.max(0.0),
            opex: Some(evaluate_opex(&dispatch, inst.net, inst.costs, lambda, inst.alpha)),
            value,
            pi_gamma: pi_g,
            pi_sigma: pi_s,
            dispatch,
            lazy_iterations: it1 + it2,
        }
    };
    retained.keys = fm.block.active.keys().copied().collect();
    Ok(result)
}

/// Phase-II value `q_s` at `point` regardless of Phase I: the
/// `alpha`-scaled operating cost with shed priced at `lambda`.
pub fn recourse_value(
    backend: &dyn Backend,
    inst: &Instance<'_>,
    s: usize,
    point: &RelaxedPlan,
    lambda: f64,
    k_v: usize,
) -> Result<f64> {
    let mut fm = build(inst, s, point, &RetainedFlows::default())?;
    fm.block.set_cost(
        &mut fm.model,
        inst.ctx(),
        OperationalCost::OpEx {
            scale: inst.alpha,
            shed_penalty: lambda,
        },
    );
    Ok(solve_phase(backend, inst, &mut fm, k_v)?.0)
}

/// Minimum total shed for scenario `s` at `point`.
pub fn min_shed(backend: &dyn Backend, inst: &Instance<'_>, s: usize, point: &RelaxedPlan, k_v: usize) -> Result<f64> {
    let mut fm = build(inst, s, point, &RetainedFlows::default())?;
    Ok(solve_phase(backend, inst, &mut fm, k_v)?.0)
}
