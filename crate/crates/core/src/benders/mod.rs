//! Multicut Benders decomposition with trust-region stabilization.
//!
//! Each iteration solves the master for a plan, evaluates every scenario's
//! two-phase subproblem in parallel at that plan, and adds one cut per
//! scenario. A plan whose scenarios all reach Phase II yields an upper bound.
//! The loop starts in a stabilized phase (trust region around the anchor,
//! candidate restriction) and finishes in a global phase whose master bound
//! is a valid lower bound.

mod cut;
mod escalation;
mod master;
mod subproblem;
mod trace;

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cut::{assemble_cut, Cut};
pub use escalation::{escalate_shed_penalty, Escalation, DEFAULT_MAX_DOUBLINGS};
pub use master::{build_master, solve_master, MasterControls, MasterModel, MasterOutcome};
pub use subproblem::{min_shed, recourse_value, solve_subproblem, Phase, RetainedFlows, SubproblemResult, SHED_TOL};
pub use trace::{write_trace_csv, TracePhase, TraceRow};

use crate::bounds::{certify, compute_lower_bound, BoundCertificate, LowerBound};
use crate::error::{Error, Result};
use crate::extensive::per_scenario_relaxed_plans;
use crate::grid::{plan_capex, InvestmentPlan};
use crate::instance::Instance;
use crate::opf::OpexBreakdown;
use crate::solver::{relative_gap, Backend};
use crate::stabilization::{aggregate_warm_start, derive_candidate_sets, StabilizationState, UpdateEvent};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BendersConfig {
    /// Relative gap target.
    pub epsilon: f64,
    pub master_gap: f64,
    pub k_v: usize,
    /// Seconds for the whole loop.
    pub time_limit: f64,
    pub trust_region: bool,
    pub warm_start: bool,
    pub storage_radius: u32,
    pub max_iterations: usize,
}

impl Default for BendersConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            master_gap: 1e-3,
            k_v: 32,
            time_limit: 600.0,
            trust_region: true,
            warm_start: true,
            storage_radius: 2,
            max_iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// `(UB - LB*) / UB <= epsilon`.
    CertifiedGap,
    /// Global master bound within `epsilon` of UB.
    MasterGap,
    /// The global master returned a plan it had already seen.
    Stalled,
    TimeLimit,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct BendersOutcome {
    pub plan: InvestmentPlan,
    pub objective: f64,
    pub capex: f64,
    /// Per scenario, `alpha`-scaled and unweighted.
    pub opex: Vec<OpexBreakdown>,
    /// Subproblem results at the returned plan.
    pub recourse: Vec<SubproblemResult>,
    pub lower_bound: LowerBound,
    pub master_bound: f64,
    pub certificate: BoundCertificate,
    pub termination: Termination,
    pub trace: Vec<TraceRow>,
    pub cuts: Vec<Cut>,
    pub warm_start: Option<InvestmentPlan>,
    pub lambda: f64,
}

impl BendersOutcome {
    /// Scenarios whose dispatch at the returned plan sheds load.
    pub fn shedding_scenarios(&self) -> Vec<usize> {
        self.recourse
            .iter()
            .filter(|r| r.dispatch.total_shed() > SHED_TOL)
            .map(|r| r.scenario)
            .collect()
    }

    /// Weighted operating cost split across scenarios.
    pub fn expected_opex(&self, weights: &[f64]) -> OpexBreakdown {
        self.opex
            .iter()
            .zip(weights)
            .fold(OpexBreakdown::default(), |acc, (o, w)| acc.add(&o.scaled(*w)))
    }
}

struct Evaluated {
    value: Option<f64>,
    results: Vec<SubproblemResult>,
}

/// Runs the stabilized multicut loop at shed penalty `lambda`.
pub fn run_benders(backend: &dyn Backend, inst: &Instance<'_>, lambda: f64, cfg: &BendersConfig) -> Result<BendersOutcome> {
    inst.validate()?;
    if !(cfg.epsilon > 0.0) {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    let start = Instant::now();
    let net = inst.net;
    let unit = inst.unit_mwh();
    let weights: Vec<f64> = inst.scenarios.iter().map(|s| s.weight).collect();
    let n_scen = inst.scenarios.len();

    let lower_bound = compute_lower_bound(backend, inst, lambda, cfg.k_v)?;
    let lb_star = lower_bound.value();

    let (warm, candidates) = if cfg.warm_start {
        let relaxed: Vec<_> = per_scenario_relaxed_plans(backend, inst, lambda, cfg.k_v)?
            .into_iter()
            .map(|r| r.plan)
            .collect();
        let w = aggregate_warm_start(&relaxed, net, unit);
        let c = derive_candidate_sets(&relaxed, net);
        (Some(w), cfg.trust_region.then_some(c))
    } else {
        (None, None)
    };
    let anchor = warm.clone().unwrap_or_else(|| InvestmentPlan::zero(net, unit));
    let mut stab = StabilizationState::new(anchor, candidates, cfg.storage_radius);
    let mut phase = if cfg.trust_region { TracePhase::Stabilized } else { TracePhase::Global };
    let gamma_headroom: u32 = net
        .branches
        .iter()
        .enumerate()
        .filter(|(l, b)| b.can_upgrade() && stab.candidates.as_ref().is_none_or(|c| c.branches[*l]))
        .map(|(_, b)| b.max_upgrade)
        .sum();

    let mut cuts: Vec<Cut> = Vec::new();
    let mut retained: Vec<RetainedFlows> = vec![RetainedFlows::default(); n_scen];
    let mut seen: HashMap<(Vec<u32>, Vec<u32>), Evaluated> = HashMap::new();
    let mut ub = f64::INFINITY;
    let mut incumbent: Option<InvestmentPlan> = None;
    let mut lb_global = f64::NEG_INFINITY;
    let mut lb_local = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut pending = warm.clone();
    let mut termination = Termination::IterationLimit;

    for iter in 1..=cfg.max_iterations {
        let elapsed = start.elapsed().as_secs_f64();
        if elapsed > cfg.time_limit && incumbent.is_some() {
            termination = Termination::TimeLimit;
            break;
        }
        let anchor_before = stab.anchor.clone();
        let tr_active = phase == TracePhase::Stabilized;
        let (plan, master_obj, row_phase) = match pending.take() {
            Some(p) => (p, f64::NAN, TracePhase::WarmStart),
            None => {
                let mut solved = None;
                while solved.is_none() {
                    let tr = phase == TracePhase::Stabilized;
                    let controls = MasterControls {
                        stab: &stab,
                        trust_region: tr,
                        candidates: if tr { stab.candidates.as_ref() } else { None },
                    };
                    let master = build_master(inst, &cuts, controls);
                    let left = (cfg.time_limit - start.elapsed().as_secs_f64()).max(1.0);
                    let (out, _) = solve_master(backend, inst, &master, cfg.master_gap, left)?;
                    match out {
                        MasterOutcome::Solved { plan, objective, bound } => {
                            if tr {
                                lb_local = bound;
                                if ub.is_finite() && relative_gap(ub, bound) <= cfg.epsilon {
                                    log::debug!("iteration {iter}: local gap closed, switching to global phase");
                                    phase = TracePhase::Global;
                                    continue;
                                }
                            } else {
                                lb_global = lb_global.max(bound);
                            }
                            solved = Some((plan, objective, phase));
                        }
                        MasterOutcome::Infeasible if tr => {
                            stab.radius += 1;
                            if stab.radius > gamma_headroom {
                                phase = TracePhase::Global;
                            }
                        }
                        MasterOutcome::Infeasible if ub.is_finite() => {
                            // Only the level set can exclude the incumbent.
                            lb_global = ub;
                            break;
                        }
                        MasterOutcome::Infeasible => {
                            return Err(Error::MasterInfeasible(
                                "no plan satisfies the feasibility cuts; some scenario cannot be served".into(),
                            ))
                        }
                        MasterOutcome::NoIncumbent => break,
                    }
                }
                match solved {
                    Some(s) => s,
                    None if lb_global >= ub => {
                        termination = Termination::MasterGap;
                        break;
                    }
                    None => {
                        termination = Termination::TimeLimit;
                        break;
                    }
                }
            }
        };
        let radius_used = stab.radius;
        if row_phase == TracePhase::Global && ub.is_finite() && relative_gap(ub, lb_global) <= cfg.epsilon {
            termination = Termination::MasterGap;
            push_row(&mut trace, iter, row_phase, master_obj, ub, lb_local, lb_global, lb_star, &cuts, &start, &stab, tr_active, radius_used, &plan, &anchor_before, UpdateEvent::Unchanged);
            break;
        }

        let key = plan.key();
        let already = seen.contains_key(&key);
        if !already {
            let point = plan.relaxed();
            let results: Vec<SubproblemResult> = retained
                .par_iter_mut()
                .enumerate()
                .map(|(s, keep)| solve_subproblem(backend, inst, s, &point, lambda, cfg.k_v, keep))
                .collect::<Result<_>>()?;
            for r in &results {
                cuts.push(assemble_cut(r, &point, iter));
            }
            let value = results.iter().all(|r| r.phase == Phase::Optimality).then(|| {
                plan_capex(&plan, net).expect("master plans match the network")
                    + results.iter().zip(&weights).map(|(r, w)| w * r.value).sum::<f64>()
            });
            if let Some(z) = value {
                if z < ub {
                    ub = z;
                    incumbent = Some(plan.clone());
                }
            }
            seen.insert(key.clone(), Evaluated { value, results });
        }
        let value = seen[&key].value;
        let event = stab.update(&plan, value);
        push_row(&mut trace, iter, row_phase, master_obj, ub, lb_local, lb_global, lb_star, &cuts, &start, &stab, tr_active, radius_used, &plan, &anchor_before, event);

        if already && row_phase == TracePhase::Global {
            termination = Termination::Stalled;
            break;
        }
        if ub.is_finite() && relative_gap(ub, lb_star) <= cfg.epsilon {
            termination = Termination::CertifiedGap;
            break;
        }
        if tr_active && stab.radius > gamma_headroom.max(1) + 1 {
            phase = TracePhase::Global;
        }
    }

    let plan = incumbent.ok_or_else(|| {
        Error::Solver(format!("no shed-free plan found before stopping ({termination:?})"))
    })?;
    let evaluated = seen.remove(&plan.key()).expect("incumbent was evaluated");
    let capex = plan_capex(&plan, net)?;
    let certificate = certify(&lower_bound, ub);
    Ok(BendersOutcome {
        opex: evaluated.results.iter().map(|r| r.opex.unwrap_or_default()).collect(),
        recourse: evaluated.results,
        plan,
        objective: ub,
        capex,
        lower_bound,
        master_bound: lb_global,
        certificate,
        termination,
        trace,
        cuts,
        warm_start: warm,
        lambda,
    })
}

#[allow(clippy::too_many_arguments)]
fn push_row(
    trace: &mut Vec<TraceRow>,
    iter: usize,
    phase: TracePhase,
    master_obj: f64,
    ub: f64,
    lb_local: f64,
    lb_global: f64,
    lb_star: f64,
    cuts: &[Cut],
    start: &Instant,
    stab: &StabilizationState,
    tr_active: bool,
    radius_used: u32,
    plan: &InvestmentPlan,
    anchor_before: &InvestmentPlan,
    event: UpdateEvent,
) {
    let (dg, ds) = plan.l1_distance(anchor_before);
    let best_lb = lb_star.max(lb_global);
    trace.push(TraceRow {
        iter,
        master_obj,
        ub,
        lb_local,
        lb_star,
        gap: if ub.is_finite() { relative_gap(ub, best_lb) } else { f64::INFINITY },
        n_cuts_feas: cuts.iter().filter(|c| c.phase == Phase::Feasibility).count(),
        n_cuts_opt: cuts.iter().filter(|c| c.phase == Phase::Optimality).count(),
        seconds: start.elapsed().as_secs_f64(),
        phase,
        lb_global,
        trust_region: tr_active && phase == TracePhase::Stabilized,
        radius: radius_used,
        storage_radius: stab.storage_radius,
        dist_gamma: dg,
        dist_sigma: ds,
        event,
        anchor_moved: stab.anchor != *anchor_before,
        radius_after: stab.radius,
    });
}

/// Benders with penalty doubling until the returned plan sheds nothing.
pub fn plan_with_escalation(
    backend: &dyn Backend,
    inst: &Instance<'_>,
    lambda0: f64,
    max_doublings: usize,
    cfg: &BendersConfig,
) -> Result<Escalation<BendersOutcome>> {
    escalate_shed_penalty(
        lambda0,
        max_doublings,
        |lambda| run_benders(backend, inst, lambda, cfg),
        BendersOutcome::shedding_scenarios,
    )
}
