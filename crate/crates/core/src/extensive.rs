//! The monolithic two-stage model: first-stage upgrade and storage columns
//! shared by one operational block per scenario. Serves as the correctness
//! oracle, as the source of per-scenario relaxations for the warm start, and
//! for the minimum-capex feasibility solves behind the first-stage bound.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{InvestmentPlan, Network, RelaxedPlan};
use crate::instance::Instance;
use crate::opf::{
    add_operational_block, evaluate_opex, solve_with_lazy_flows, DispatchSolution, Investment, OperationalCost,
    DEFAULT_LAZY_CAP,
};
use crate::scenario::Scenario;
use crate::solver::{Backend, OptModel, SolveStatus, VarId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtensiveOptions {
    pub integral: bool,
    pub gap_tol: f64,
    /// Seconds across all lazy re-solves.
    pub time_limit: f64,
    pub k_v: usize,
}

impl Default for ExtensiveOptions {
    fn default() -> Self {
        Self {
            integral: true,
            gap_tol: 1e-6,
            time_limit: 300.0,
            k_v: 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtensiveSolution {
    pub plan: RelaxedPlan,
    /// Rounded plan when solved with integral first stage.
    pub integer_plan: Option<InvestmentPlan>,
    /// Per scenario; `objective` holds the unweighted operating cost.
    pub dispatch: Vec<DispatchSolution>,
    pub objective: f64,
    pub capex: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub limit_hit: bool,
    pub lazy_iterations: usize,
}

impl ExtensiveSolution {
    pub fn total_shed(&self) -> f64 {
        self.dispatch.iter().map(DispatchSolution::total_shed).sum()
    }

    /// Indices of scenarios whose recourse sheds load.
    pub fn shedding_scenarios(&self, tol: f64) -> Vec<usize> {
        (0..self.dispatch.len())
            .filter(|&s| self.dispatch[s].total_shed() > tol)
            .collect()
    }
}

/// Upgrade-level and storage-unit columns with their capital costs.
pub(crate) fn add_first_stage(
    model: &mut OptModel,
    net: &Network,
    unit_mwh: f64,
    integral: bool,
) -> (Vec<VarId>, Vec<VarId>) {
    let add = |model: &mut OptModel, name: String, ub: f64, cost: f64| {
        if integral {
            model.add_int_var(name, 0.0, ub, cost)
        } else {
            model.add_var(name, 0.0, ub, cost)
        }
    };
    let gamma = net
        .branches
        .iter()
        .map(|b| {
            let ub = if b.can_upgrade() { b.max_upgrade as f64 } else { 0.0 };
            add(model, format!("gamma_{}", b.id), ub, b.upgrade_cost)
        })
        .collect();
    let units = net
        .buses
        .iter()
        .map(|b| {
            let ub = if b.can_build_storage() { b.max_storage_units as f64 } else { 0.0 };
            add(model, format!("units_{}", b.id), ub, b.storage_cost * unit_mwh)
        })
        .collect();
    (gamma, units)
}

pub(crate) fn round_plan(gamma: &[f64], units: &[f64], unit_mwh: f64) -> InvestmentPlan {
    InvestmentPlan {
        gamma: gamma.iter().map(|v| v.round().max(0.0) as u32).collect(),
        units: units.iter().map(|v| v.round().max(0.0) as u32).collect(),
        unit_mwh,
    }
}

/// Solves the deterministic equivalent with shed penalty `lambda`.
pub fn solve_extensive(
    backend: &dyn Backend,
    inst: &Instance<'_>,
    lambda: f64,
    opts: ExtensiveOptions,
) -> Result<ExtensiveSolution> {
    inst.validate()?;
    let ctx = inst.ctx();
    let unit = inst.unit_mwh();
    let mut model = OptModel::new();
    let (gamma, units) = add_first_stage(&mut model, inst.net, unit, opts.integral);
    let mut blocks = inst
        .scenarios
        .iter()
        .map(|s| {
            let inv = Investment::Columns {
                gamma: gamma.clone(),
                sigma: units.clone(),
                sigma_scale: unit,
            };
            let cost = OperationalCost::OpEx {
                scale: inst.alpha * s.weight,
                shed_penalty: lambda,
            };
            add_operational_block(&mut model, ctx, s, inv, cost, false)
        })
        .collect::<Result<Vec<_>>>()?;
    let start = Instant::now();
    let mut solve = |m: &OptModel| {
        if opts.integral {
            let left = (opts.time_limit - start.elapsed().as_secs_f64()).max(1.0);
            backend.solve_mip(m, opts.gap_tol, left)
        } else {
            backend.solve_lp(m)
        }
    };
    let lazy = solve_with_lazy_flows(&mut model, &mut blocks, ctx, opts.k_v, DEFAULT_LAZY_CAP, &mut solve)?;
    let out = lazy.outcome;
    let x = match (&out.status, &out.primal) {
        (SolveStatus::Optimal | SolveStatus::LimitHit, Some(x)) => x,
        _ => return Err(Error::Solver(format!("extensive form ended with status {:?}", out.status))),
    };
    let g: Vec<f64> = gamma.iter().map(|v| x[v.0]).collect();
    let u: Vec<f64> = units.iter().map(|v| x[v.0]).collect();
    let plan = RelaxedPlan {
        gamma: g.clone(),
        sigma: u.iter().map(|v| v * unit).collect(),
    };
    let dispatch = blocks
        .iter()
        .map(|b| {
            let mut d = b.extract(ctx, x);
            d.objective = evaluate_opex(&d, inst.net, inst.costs, lambda, inst.alpha).total();
            d.lazy_iterations = lazy.iterations;
            d
        })
        .collect();
    Ok(ExtensiveSolution {
        capex: plan.capex(inst.net),
        integer_plan: opts.integral.then(|| round_plan(&g, &u, unit)),
        plan,
        dispatch,
        objective: out.objective,
        best_bound: out.best_bound.unwrap_or(out.objective),
        gap: out.gap.unwrap_or(0.0),
        limit_hit: out.status == SolveStatus::LimitHit,
        lazy_iterations: lazy.iterations,
    })
}

#[derive(Debug, Clone)]
pub struct RelaxedScenarioPlan {
    pub plan: RelaxedPlan,
    pub objective: f64,
    /// Shed at the relaxed optimum; positive means the day could not be
    /// served shed-free at this penalty.
    pub shed: f64,
}

fn alone(s: &Scenario) -> Vec<Scenario> {
    let mut one = s.clone();
    one.weight = 1.0;
    vec![one]
}

/// Continuous first-stage optimum for scenario `s` alone.
pub fn per_scenario_relaxed_plan(
    backend: &dyn Backend,
    inst: &Instance<'_>,
    s: usize,
    lambda: f64,
    k_v: usize,
) -> Result<RelaxedScenarioPlan> {
    let scen = alone(&inst.scenarios[s]);
    let single = Instance { scenarios: &scen, ..*inst };
    let opts = ExtensiveOptions {
        integral: false,
        k_v,
        ..Default::default()
    };
    let sol = solve_extensive(backend, &single, lambda, opts)?;
    Ok(RelaxedScenarioPlan {
        shed: sol.total_shed(),
        plan: sol.plan,
        objective: sol.objective,
    })
}

/// [`per_scenario_relaxed_plan`] for every scenario, in parallel.
pub fn per_scenario_relaxed_plans(
    backend: &dyn Backend,
    inst: &Instance<'_>,
    lambda: f64,
    k_v: usize,
) -> Result<Vec<RelaxedScenarioPlan>> {
    (0..inst.scenarios.len())
        .into_par_iter()
        .map(|s| per_scenario_relaxed_plan(backend, inst, s, lambda, k_v))
        .collect()
}

#[derive(Debug, Clone)]
pub struct FeasibilityCapex {
    pub value: f64,
    pub plan: RelaxedPlan,
}

/// Least relaxed capital cost under which scenario `s` runs without shed.
pub fn min_capex_for_feasibility(
    backend: &dyn Backend,
    inst: &Instance<'_>,
    s: usize,
    k_v: usize,
) -> Result<FeasibilityCapex> {
    let ctx = inst.ctx();
    let unit = inst.unit_mwh();
    let mut model = OptModel::new();
    let (gamma, units) = add_first_stage(&mut model, inst.net, unit, false);
    let inv = Investment::Columns {
        gamma: gamma.clone(),
        sigma: units.clone(),
        sigma_scale: unit,
    };
    let scen = alone(&inst.scenarios[s]);
    let mut blocks = vec![add_operational_block(&mut model, ctx, &scen[0], inv, OperationalCost::Zero, true)?];
    let lazy = solve_with_lazy_flows(&mut model, &mut blocks, ctx, k_v, DEFAULT_LAZY_CAP, &mut |m| backend.solve_lp(m))?;
    match lazy.outcome.status {
        SolveStatus::Optimal => {
            let x = lazy.outcome.primal.as_ref().expect("optimal LP has a primal");
            Ok(FeasibilityCapex {
                value: lazy.outcome.objective,
                plan: RelaxedPlan {
                    gamma: gamma.iter().map(|v| x[v.0]).collect(),
                    sigma: units.iter().map(|v| unit * x[v.0]).collect(),
                },
            })
        }
        SolveStatus::Infeasible => Err(Error::InfeasibleAtMax(vec![s])),
        other => Err(Error::Solver(format!("feasibility solve ended with status {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::grid::{plan_capex, CostConfig};
    use crate::ptdf::compute_ptdf;
    use crate::solver::HighsBackend;

    struct F3 {
        net: Network,
        ptdf: crate::ptdf::PtdfMatrix,
        costs: CostConfig,
    }

    fn f3() -> F3 {
        let net = fixtures::f3();
        F3 {
            ptdf: compute_ptdf(&net).unwrap(),
            net,
            costs: CostConfig::default(),
        }
    }

    impl F3 {
        fn inst<'a>(&'a self, scenarios: &'a [Scenario], alpha: f64) -> Instance<'a> {
            Instance {
                net: &self.net,
                ptdf: &self.ptdf,
                costs: &self.costs,
                scenarios,
                alpha,
            }
        }
    }

    // Above the ~$41k per MW it costs to avoid shed by upgrading.
    const LAMBDA: f64 = 1e6;

    #[test]
    fn uncongested_day_builds_nothing() {
        let f = f3();
        let sc = [fixtures::f3_scenario("load-90", 90.0, 1.0)];
        let sol = solve_extensive(&HighsBackend::default(), &f.inst(&sc, 1.0), LAMBDA, Default::default()).unwrap();
        assert!(sol.integer_plan.unwrap().is_zero());
        assert!((sol.objective - 900.0).abs() < 1e-6);
    }

    #[test]
    fn heavy_day_needs_two_levels() {
        let f = f3();
        let sc = [fixtures::f3_scenario("load-150", 150.0, 1.0)];
        let b = HighsBackend::default();
        let sol = solve_extensive(&b, &f.inst(&sc, 1.0), LAMBDA, Default::default()).unwrap();
        let plan = sol.integer_plan.clone().unwrap();
        assert!(sol.total_shed() < 1e-6);
        // Feasibility needs gamma_12 + gamma_23 >= 90 / 54.
        assert!(plan.gamma[0] + plan.gamma[2] >= 2);
        assert!((sol.capex - plan_capex(&plan, &f.net).unwrap()).abs() < 1e-3);
        let relaxed = solve_extensive(
            &b,
            &f.inst(&sc, 1.0),
            LAMBDA,
            ExtensiveOptions {
                integral: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(relaxed.objective <= sol.objective + 1e-6);
    }

    #[test]
    fn relaxed_plans_per_scenario() {
        let f = f3();
        let sc = fixtures::f3_scenarios();
        let b = HighsBackend::default();
        let plans = per_scenario_relaxed_plans(&b, &f.inst(&sc, 1.0), LAMBDA, 32).unwrap();
        assert!(plans[0].plan.gamma.iter().chain(&plans[0].plan.sigma).all(|v| v.abs() < 1e-9));
        let g = &plans[1].plan.gamma;
        assert!((g[0] + g[2] - 90.0 / 54.0).abs() < 1e-6);
        assert!(plans[1].shed < 1e-6);
        let twice = per_scenario_relaxed_plan(&b, &f.inst(&sc, 1.0), 1, LAMBDA, 32).unwrap();
        assert_eq!(twice.plan, plans[1].plan);
    }

    #[test]
    fn feasibility_capex() {
        let f = f3();
        let sc = fixtures::f3_scenarios();
        let b = HighsBackend::default();
        let inst = f.inst(&sc, 1.0);
        assert!(min_capex_for_feasibility(&b, &inst, 0, 32).unwrap().value.abs() < 1e-6);
        let c = min_capex_for_feasibility(&b, &inst, 1, 32).unwrap();
        // 90/54 levels at $2,237,400 each.
        assert!((c.value - 90.0 / 54.0 * 2_237_400.0).abs() < 1e-3);
        let mut integral = InvestmentPlan::zero(&f.net, 250.0);
        integral.gamma[0] = 2;
        assert!(c.value <= plan_capex(&integral, &f.net).unwrap());
    }

    #[test]
    fn unservable_day_is_reported() {
        let f = f3();
        let sc = [fixtures::f3_scenario("load-500", 500.0, 1.0)];
        let err = min_capex_for_feasibility(&HighsBackend::default(), &f.inst(&sc, 1.0), 0, 32).unwrap_err();
        assert!(matches!(err, Error::InfeasibleAtMax(v) if v == vec![0]));
    }

    #[test]
    fn more_scenarios_never_lower_the_optimum() {
        let f = f3();
        let b = HighsBackend::default();
        let one = [fixtures::f3_scenario("load-150", 150.0, 1.0)];
        let two = [
            fixtures::f3_scenario("load-150", 150.0, 0.5),
            fixtures::f3_scenario("load-170", 170.0, 0.5),
        ];
        // Doubling alpha keeps the original scenario's cost weight at one.
        let a = solve_extensive(&b, &f.inst(&one, 1.0), LAMBDA, Default::default()).unwrap();
        let c = solve_extensive(&b, &f.inst(&two, 2.0), LAMBDA, Default::default()).unwrap();
        assert!(c.objective + 1e-6 >= a.objective);
    }
}
