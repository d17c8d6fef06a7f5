//! Single-scenario operational problem: dispatch, storage, load shed, and
//! PTDF flow limits generated lazily.
//!
//! An operational block is the set of columns and rows for one scenario. A
//! model may hold several blocks (the extensive form) alongside first-stage
//! columns. Flow limits start absent; [`solve_with_lazy_flows`] adds the most
//! severe violations per block and re-solves until none remain.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CostConfig, Network, RelaxedPlan};
use crate::ptdf::PtdfMatrix;
use crate::scenario::Scenario;
use crate::solver::{Backend, OptModel, RowId, RowSense, SolveOutcome, VarId};

/// A flow excess above this (MW) counts as a violation.
pub const LAZY_DETECTION_TOL: f64 = 1e-7;
pub const DEFAULT_LAZY_CAP: usize = 200;

/// Read-only data shared by every block.
#[derive(Debug, Clone, Copy)]
pub struct OpfContext<'a> {
    pub net: &'a Network,
    pub ptdf: &'a PtdfMatrix,
    pub costs: &'a CostConfig,
}

/// How first-stage investments enter a block.
#[derive(Debug, Clone)]
pub enum Investment {
    /// Known upgrade levels and new storage energy (MWh) folded into bounds.
    Fixed { gamma: Vec<f64>, sigma: Vec<f64> },
    /// One column per branch and per bus; new storage MWh is
    /// `sigma_scale * sigma[i]`.
    Columns {
        gamma: Vec<VarId>,
        sigma: Vec<VarId>,
        sigma_scale: f64,
    },
}

impl Investment {
    pub fn fixed(plan: &RelaxedPlan) -> Self {
        Investment::Fixed {
            gamma: plan.gamma.clone(),
            sigma: plan.sigma.clone(),
        }
    }

    fn gamma_at(&self, l: usize, x: &[f64]) -> f64 {
        match self {
            Investment::Fixed { gamma, .. } => gamma[l],
            Investment::Columns { gamma, .. } => x[gamma[l].0],
        }
    }

    fn sigma_at(&self, i: usize, x: &[f64]) -> f64 {
        match self {
            Investment::Fixed { sigma, .. } => sigma[i],
            Investment::Columns { sigma, sigma_scale, .. } => sigma_scale * x[sigma[i].0],
        }
    }
}

/// Objective placed on a block's operational columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperationalCost {
    /// `scale * (c^G p + c^S (ch + dis) + shed_penalty * shed)`.
    OpEx { scale: f64, shed_penalty: f64 },
    /// Total shed, unscaled.
    ShedOnly,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub branch: usize,
    pub hour: usize,
    /// `true` for `flow <= limit`, `false` for `-flow <= limit`.
    pub upper: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowViolation {
    pub branch: usize,
    pub hour: usize,
    pub flow: f64,
    pub bound: f64,
    pub excess: f64,
    pub upper: bool,
}

#[derive(Debug, Clone)]
pub struct StorageSite {
    pub bus: usize,
    pub ch: Vec<VarId>,
    pub dis: Vec<VarId>,
    pub soc: Vec<VarId>,
}

/// Columns and rows of one scenario inside an [`OptModel`].
#[derive(Debug, Clone)]
pub struct OperationalBlock {
    /// `pg[t][g]`.
    pub pg: Vec<Vec<VarId>>,
    pub sites: Vec<StorageSite>,
    /// `shed[t][bus]`.
    pub shed: Vec<Vec<VarId>>,
    pub balance: Vec<RowId>,
    pub investment: Investment,
    pub active: BTreeMap<FlowKey, RowId>,
    load: Vec<Vec<f64>>,
    gen_at: Vec<Option<usize>>,
    site_at: Vec<Option<usize>>,
}

/// Appends one scenario's operational columns and rows. No flow limits are
/// added.
pub fn add_operational_block(
    model: &mut OptModel,
    ctx: OpfContext<'_>,
    scenario: &Scenario,
    investment: Investment,
    cost: OperationalCost,
    forbid_shed: bool,
) -> Result<OperationalBlock> {
    let net = ctx.net;
    scenario.validate(net)?;
    let hours = scenario.hours();
    let n = net.num_buses();
    match &investment {
        Investment::Fixed { gamma, sigma } => {
            if gamma.len() != net.num_branches() || sigma.len() != n {
                return Err(Error::DimensionMismatch("fixed investment does not match the network".into()));
            }
        }
        Investment::Columns { gamma, sigma, .. } => {
            if gamma.len() != net.num_branches() || sigma.len() != n {
                return Err(Error::DimensionMismatch("investment columns do not match the network".into()));
            }
        }
    }
    let tag = &scenario.id;
    let mut gen_at = vec![None; n];
    for (g, gen) in net.generators.iter().enumerate() {
        gen_at[gen.bus - 1] = Some(g);
    }
    let pg: Vec<Vec<VarId>> = (0..hours)
        .map(|t| {
            (0..net.generators.len())
                .map(|g| model.add_var(format!("pg_{tag}_{g}_{t}"), scenario.gen_min[t][g], scenario.gen_max[t][g], 0.0))
                .collect()
        })
        .collect();
    let shed: Vec<Vec<VarId>> = (0..hours)
        .map(|t| {
            (0..n)
                .map(|i| {
                    let ub = if forbid_shed { 0.0 } else { scenario.load[t][i] };
                    model.add_var(format!("shed_{tag}_{i}_{t}"), 0.0, ub, 0.0)
                })
                .collect()
        })
        .collect();

    let eta = ctx.costs.efficiency;
    let dur = ctx.costs.storage_duration_h;
    let mut sites = Vec::new();
    let mut site_at = vec![None; n];
    for (i, bus) in net.buses.iter().enumerate() {
        let base = bus.baseline_storage;
        let present = match &investment {
            Investment::Fixed { sigma, .. } => base + sigma[i] > 0.0,
            Investment::Columns { .. } => bus.hosts_storage(),
        };
        if !present {
            continue;
        }
        let (cap_e, cap_p) = match &investment {
            Investment::Fixed { sigma, .. } => (base + sigma[i], (base + sigma[i]) / dur),
            Investment::Columns { .. } => (f64::INFINITY, f64::INFINITY),
        };
        let ch: Vec<VarId> = (0..hours).map(|t| model.add_var(format!("ch_{tag}_{i}_{t}"), 0.0, cap_p, 0.0)).collect();
        let dis: Vec<VarId> = (0..hours).map(|t| model.add_var(format!("dis_{tag}_{i}_{t}"), 0.0, cap_p, 0.0)).collect();
        let soc: Vec<VarId> = (0..hours)
            .map(|t| {
                let ub = if t + 1 == hours { 0.0 } else { cap_e };
                model.add_var(format!("soc_{tag}_{i}_{t}"), 0.0, ub, 0.0)
            })
            .collect();
        for t in 0..hours {
            let mut coeffs = vec![(soc[t], 1.0), (ch[t], -eta), (dis[t], 1.0 / eta)];
            if t > 0 {
                coeffs.push((soc[t - 1], -1.0));
            }
            model.add_row(format!("soc_{tag}_{i}_{t}"), coeffs, RowSense::Eq, 0.0);
        }
        if let Investment::Columns { sigma, sigma_scale, .. } = &investment {
            for t in 0..hours {
                model.add_row(
                    format!("ecap_{tag}_{i}_{t}"),
                    vec![(soc[t], 1.0), (sigma[i], -sigma_scale)],
                    RowSense::Le,
                    base,
                );
                for (name, v) in [("chcap", ch[t]), ("discap", dis[t])] {
                    model.add_row(
                        format!("{name}_{tag}_{i}_{t}"),
                        vec![(v, 1.0), (sigma[i], -sigma_scale / dur)],
                        RowSense::Le,
                        base / dur,
                    );
                }
            }
        }
        site_at[i] = Some(sites.len());
        sites.push(StorageSite { bus: i, ch, dis, soc });
    }

    let balance = (0..hours)
        .map(|t| {
            let mut coeffs: Vec<(VarId, f64)> = pg[t].iter().map(|&v| (v, 1.0)).collect();
            coeffs.extend(shed[t].iter().map(|&v| (v, 1.0)));
            for s in &sites {
                coeffs.push((s.dis[t], 1.0));
                coeffs.push((s.ch[t], -1.0));
            }
            model.add_row(format!("balance_{tag}_{t}"), coeffs, RowSense::Eq, scenario.total_load(t))
        })
        .collect();

    let block = OperationalBlock {
        pg,
        sites,
        shed,
        balance,
        investment,
        active: BTreeMap::new(),
        load: scenario.load.clone(),
        gen_at,
        site_at,
    };
    block.set_cost(model, ctx, cost);
    Ok(block)
}

impl OperationalBlock {
    pub fn hours(&self) -> usize {
        self.load.len()
    }

    /// Rewrites the objective coefficients of this block's columns.
    pub fn set_cost(&self, model: &mut OptModel, ctx: OpfContext<'_>, cost: OperationalCost) {
        let (scale, lambda, gen_on, shed_unit) = match cost {
            OperationalCost::OpEx { scale, shed_penalty } => (scale, shed_penalty, true, 0.0),
            OperationalCost::ShedOnly => (0.0, 0.0, false, 1.0),
            OperationalCost::Zero => (0.0, 0.0, false, 0.0),
        };
        let cs = ctx.costs.storage_throughput_cost;
        for t in 0..self.hours() {
            for (g, &v) in self.pg[t].iter().enumerate() {
                model.var_mut(v).cost = if gen_on { scale * ctx.net.generators[g].marginal_cost } else { 0.0 };
            }
            for &v in &self.shed[t] {
                model.var_mut(v).cost = scale * lambda + shed_unit;
            }
            for s in &self.sites {
                model.var_mut(s.ch[t]).cost = scale * cs;
                model.var_mut(s.dis[t]).cost = scale * cs;
            }
        }
    }

    /// Sets the upper bound of every shed column to zero or back to the load.
    pub fn set_shed_allowed(&self, model: &mut OptModel, allowed: bool) {
        for (t, row) in self.shed.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                model.var_mut(v).upper = if allowed { self.load[t][i] } else { 0.0 };
            }
        }
    }

    /// Adds the limit row for `key` unless already present.
    pub fn add_flow_row(&mut self, model: &mut OptModel, ctx: OpfContext<'_>, key: FlowKey) -> RowId {
        if let Some(&r) = self.active.get(&key) {
            return r;
        }
        let branch = &ctx.net.branches[key.branch];
        let dir = if key.upper { 1.0 } else { -1.0 };
        let t = key.hour;
        let mut coeffs = Vec::new();
        let mut load_term = 0.0;
        for &(k, phi) in ctx.ptdf.row(key.branch) {
            let a = dir * phi;
            if let Some(g) = self.gen_at[k] {
                coeffs.push((self.pg[t][g], a));
            }
            if let Some(s) = self.site_at[k] {
                coeffs.push((self.sites[s].dis[t], a));
                coeffs.push((self.sites[s].ch[t], -a));
            }
            coeffs.push((self.shed[t][k], a));
            load_term += a * self.load[t][k];
        }
        let mut rhs = branch.rating + load_term;
        match &self.investment {
            Investment::Fixed { gamma, .. } => rhs += branch.upgrade_step * gamma[key.branch],
            Investment::Columns { gamma, .. } => {
                if branch.upgrade_step > 0.0 {
                    coeffs.push((gamma[key.branch], -branch.upgrade_step));
                }
            }
        }
        let name = format!("flow{}_{}_{}", if key.upper { "up" } else { "lo" }, key.branch, t);
        let r = model.add_row(name, coeffs, RowSense::Le, rhs);
        self.active.insert(key, r);
        r
    }

    /// Materializes every branch-hour limit in both directions.
    pub fn add_all_flow_rows(&mut self, model: &mut OptModel, ctx: OpfContext<'_>) {
        for t in 0..self.hours() {
            for l in 0..ctx.net.num_branches() {
                for upper in [true, false] {
                    self.add_flow_row(model, ctx, FlowKey { branch: l, hour: t, upper });
                }
            }
        }
    }

    /// Net injection per bus at hour `t`.
    pub fn injection(&self, x: &[f64], t: usize) -> Vec<f64> {
        let mut inj: Vec<f64> = self.load[t].iter().map(|l| -l).collect();
        for (i, v) in inj.iter_mut().enumerate() {
            if let Some(g) = self.gen_at[i] {
                *v += x[self.pg[t][g].0];
            }
            *v += x[self.shed[t][i].0];
        }
        for s in &self.sites {
            inj[s.bus] += x[s.dis[t].0] - x[s.ch[t].0];
        }
        inj
    }

    /// Every branch-hour whose flow exceeds its limit by more than `tol`.
    pub fn violations(&self, ctx: OpfContext<'_>, ptdf: &PtdfMatrix, x: &[f64], tol: f64) -> Vec<FlowViolation> {
        let mut out = Vec::new();
        for t in 0..self.hours() {
            let inj = self.injection(x, t);
            for (l, br) in ctx.net.branches.iter().enumerate() {
                let flow = ptdf.flow(l, &inj);
                let bound = br.limit_at(self.investment.gamma_at(l, x));
                let excess = flow.abs() - bound;
                if excess > tol {
                    out.push(FlowViolation {
                        branch: l,
                        hour: t,
                        flow,
                        bound,
                        excess,
                        upper: flow > 0.0,
                    });
                }
            }
        }
        out
    }

    /// Reads the dispatch of this block from a primal vector.
    pub fn extract(&self, ctx: OpfContext<'_>, x: &[f64]) -> DispatchSolution {
        let hours = self.hours();
        let n = ctx.net.num_buses();
        let mut sol = DispatchSolution {
            pg: self.pg.iter().map(|r| r.iter().map(|v| x[v.0]).collect()).collect(),
            flows: Vec::with_capacity(hours),
            ch: vec![vec![0.0; n]; hours],
            dis: vec![vec![0.0; n]; hours],
            soc: vec![vec![0.0; n]; hours],
            shed: self.shed.iter().map(|r| r.iter().map(|v| x[v.0]).collect()).collect(),
            load: self.load.clone(),
            limits: (0..ctx.net.num_branches())
                .map(|l| ctx.net.branches[l].limit_at(self.investment.gamma_at(l, x)))
                .collect(),
            storage_mwh: ctx
                .net
                .buses
                .iter()
                .enumerate()
                .map(|(i, b)| b.baseline_storage + self.investment.sigma_at(i, x))
                .collect(),
            objective: 0.0,
            lazy_iterations: 0,
            active_flows: self.active.keys().copied().collect(),
        };
        for t in 0..hours {
            for s in &self.sites {
                sol.ch[t][s.bus] = x[s.ch[t].0];
                sol.dis[t][s.bus] = x[s.dis[t].0];
                sol.soc[t][s.bus] = x[s.soc[t].0];
            }
            sol.flows.push(ctx.ptdf.flows_unchecked(&self.injection(x, t)));
        }
        sol
    }

    /// Shed summed over buses and hours.
    pub fn total_shed(&self, x: &[f64]) -> f64 {
        self.shed.iter().flatten().map(|v| x[v.0]).sum()
    }
}

#[derive(Debug, Clone)]
pub struct LazyOutcome {
    pub outcome: SolveOutcome,
    pub iterations: usize,
    pub rows_added: usize,
}

/// Solves `model`, adding up to `k_v` of the most severe flow violations per
/// block after each solve, until no block has a violation above
/// [`LAZY_DETECTION_TOL`]. Rows persist in `model` and in each block's
/// active set. A non-optimal solve ends the loop and is returned as is.
pub fn solve_with_lazy_flows(
    model: &mut OptModel,
    blocks: &mut [OperationalBlock],
    ctx: OpfContext<'_>,
    k_v: usize,
    cap: usize,
    solve: &mut dyn FnMut(&OptModel) -> Result<SolveOutcome>,
) -> Result<LazyOutcome> {
    if k_v == 0 {
        return Err(Error::InvalidInput("k_v must be at least 1".into()));
    }
    let mut iterations = 0;
    let mut rows_added = 0;
    loop {
        let outcome = solve(model)?;
        let Some(x) = outcome.primal.as_ref().filter(|_| outcome.is_optimal()) else {
            return Ok(LazyOutcome { outcome, iterations, rows_added });
        };
        let mut pending: Vec<(usize, Vec<FlowViolation>)> = Vec::new();
        for (b, block) in blocks.iter().enumerate() {
            let mut v: Vec<FlowViolation> = block
                .violations(ctx, ctx.ptdf, x, LAZY_DETECTION_TOL)
                .into_iter()
                .filter(|v| {
                    !block.active.contains_key(&FlowKey {
                        branch: v.branch,
                        hour: v.hour,
                        upper: v.upper,
                    })
                })
                .collect();
            if v.is_empty() {
                continue;
            }
            v.sort_by(|a, b| b.excess.total_cmp(&a.excess).then((a.hour, a.branch).cmp(&(b.hour, b.branch))));
            pending.push((b, v));
        }
        if pending.is_empty() {
            return Ok(LazyOutcome { outcome, iterations, rows_added });
        }
        if iterations >= cap {
            let worst = pending
                .iter()
                .flat_map(|(_, v)| v.first())
                .max_by(|a, b| a.excess.total_cmp(&b.excess))
                .copied()
                .expect("pending is nonempty");
            return Err(Error::LazyIterationCap {
                cap,
                remaining: pending.iter().map(|(_, v)| v.len()).sum(),
                worst_excess: worst.excess,
                worst_branch: ctx.net.branches[worst.branch].id,
                worst_hour: worst.hour,
            });
        }
        for (b, v) in pending {
            for viol in v.into_iter().take(k_v) {
                blocks[b].add_flow_row(
                    model,
                    ctx,
                    FlowKey {
                        branch: viol.branch,
                        hour: viol.hour,
                        upper: viol.upper,
                    },
                );
                rows_added += 1;
            }
        }
        iterations += 1;
        log::debug!("lazy flows: iteration {iterations}, {rows_added} rows so far");
    }
}

/// Operating point of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchSolution {
    /// `[t][g]`, MW.
    pub pg: Vec<Vec<f64>>,
    /// `[t][branch]`, MW, positive from `from` to `to`.
    pub flows: Vec<Vec<f64>>,
    /// `[t][bus]`, MW.
    pub ch: Vec<Vec<f64>>,
    pub dis: Vec<Vec<f64>>,
    /// `[t][bus]`, MWh at the end of hour `t`.
    pub soc: Vec<Vec<f64>>,
    pub shed: Vec<Vec<f64>>,
    pub load: Vec<Vec<f64>>,
    /// Thermal limit per branch under the plan, MW.
    pub limits: Vec<f64>,
    /// Total storage energy rating per bus (baseline plus new), MWh.
    pub storage_mwh: Vec<f64>,
    pub objective: f64,
    pub lazy_iterations: usize,
    pub active_flows: Vec<FlowKey>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OpexBreakdown {
    pub generation: f64,
    pub storage: f64,
    pub shed: f64,
}

impl OpexBreakdown {
    pub fn total(&self) -> f64 {
        self.generation + self.storage + self.shed
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            generation: k * self.generation,
            storage: k * self.storage,
            shed: k * self.shed,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            generation: self.generation + other.generation,
            storage: self.storage + other.storage,
            shed: self.shed + other.shed,
        }
    }
}

impl DispatchSolution {
    pub fn hours(&self) -> usize {
        self.pg.len()
    }

    pub fn total_shed(&self) -> f64 {
        self.shed.iter().flatten().sum()
    }

    /// Largest `|flow| - limit` over every branch-hour (negative when slack).
    pub fn max_flow_excess(&self) -> f64 {
        self.flows
            .iter()
            .flat_map(|row| row.iter().zip(&self.limits).map(|(f, lim)| f.abs() - lim))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest hourly power-balance residual.
    pub fn balance_residual(&self) -> f64 {
        (0..self.hours())
            .map(|t| {
                let supply: f64 = self.pg[t].iter().sum::<f64>()
                    + self.dis[t].iter().sum::<f64>()
                    - self.ch[t].iter().sum::<f64>()
                    + self.shed[t].iter().sum::<f64>();
                (supply - self.load[t].iter().sum::<f64>()).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest residual of the state-of-charge recursion with efficiency `eta`.
    pub fn soc_residual(&self, eta: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for t in 0..self.hours() {
            for i in 0..self.soc[t].len() {
                let prev = if t == 0 { 0.0 } else { self.soc[t - 1][i] };
                let r = self.soc[t][i] - prev - eta * self.ch[t][i] + self.dis[t][i] / eta;
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// Largest excess of charge or discharge over `storage_mwh / duration`.
    pub fn power_rating_excess(&self, duration_h: f64) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for t in 0..self.hours() {
            for (i, cap) in self.storage_mwh.iter().enumerate() {
                let p = cap / duration_h;
                worst = worst.max(self.ch[t][i] - p).max(self.dis[t][i] - p);
            }
        }
        worst
    }

    /// Writes `quantity,index,hour,value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["quantity", "index", "hour", "value"])?;
        let blocks: [(&str, &Vec<Vec<f64>>); 6] = [
            ("pg", &self.pg),
            ("flow", &self.flows),
            ("ch", &self.ch),
            ("dis", &self.dis),
            ("soc", &self.soc),
            ("shed", &self.shed),
        ];
        for (name, data) in blocks {
            for (t, row) in data.iter().enumerate() {
                for (k, v) in row.iter().enumerate() {
                    w.write_record([name.to_string(), (k + 1).to_string(), t.to_string(), v.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Operating cost of a dispatch: `alpha * sum(c^G p + c^S (ch + dis) + lambda shed)`.
pub fn evaluate_opex(sol: &DispatchSolution, net: &Network, costs: &CostConfig, lambda: f64, alpha: f64) -> OpexBreakdown {
    let mut out = OpexBreakdown::default();
    for t in 0..sol.hours() {
        for (g, gen) in net.generators.iter().enumerate() {
            out.generation += gen.marginal_cost * sol.pg[t][g];
        }
        out.storage += costs.storage_throughput_cost * (sol.ch[t].iter().sum::<f64>() + sol.dis[t].iter().sum::<f64>());
        out.shed += lambda * sol.shed[t].iter().sum::<f64>();
    }
    out.scaled(alpha)
}

/// Builds the single-scenario model for a fixed plan without flow limits.
pub fn build_operational_model(
    ctx: OpfContext<'_>,
    scenario: &Scenario,
    plan: &RelaxedPlan,
    cost: OperationalCost,
) -> Result<(OptModel, OperationalBlock)> {
    let mut model = OptModel::new();
    let block = add_operational_block(&mut model, ctx, scenario, Investment::fixed(plan), cost, false)?;
    Ok((model, block))
}

/// Dispatches one scenario under a fixed plan with lazy flow limits.
pub fn solve_dispatch(
    backend: &dyn Backend,
    ctx: OpfContext<'_>,
    scenario: &Scenario,
    plan: &RelaxedPlan,
    cost: OperationalCost,
    k_v: usize,
) -> Result<DispatchSolution> {
    let (mut model, block) = build_operational_model(ctx, scenario, plan, cost)?;
    let mut blocks = [block];
    let lazy = solve_with_lazy_flows(&mut model, &mut blocks, ctx, k_v, DEFAULT_LAZY_CAP, &mut |m| backend.solve_lp(m))?;
    finish_dispatch(ctx, &blocks[0], lazy)
}

/// Same as [`solve_dispatch`] with every flow limit materialized up front.
pub fn solve_dispatch_full(
    backend: &dyn Backend,
    ctx: OpfContext<'_>,
    scenario: &Scenario,
    plan: &RelaxedPlan,
    cost: OperationalCost,
) -> Result<DispatchSolution> {
    let (mut model, mut block) = build_operational_model(ctx, scenario, plan, cost)?;
    block.add_all_flow_rows(&mut model, ctx);
    let outcome = backend.solve_lp(&model)?;
    finish_dispatch(
        ctx,
        &block,
        LazyOutcome {
            outcome,
            iterations: 0,
            rows_added: 0,
        },
    )
}

fn finish_dispatch(ctx: OpfContext<'_>, block: &OperationalBlock, lazy: LazyOutcome) -> Result<DispatchSolution> {
    let Some(x) = lazy.outcome.primal.as_ref().filter(|_| lazy.outcome.is_optimal()) else {
        return Err(Error::Solver(format!("dispatch ended with status {:?}", lazy.outcome.status)));
    };
    let mut sol = block.extract(ctx, x);
    sol.objective = lazy.outcome.objective;
    sol.lazy_iterations = lazy.iterations;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::ptdf::compute_ptdf;
    use crate::solver::HighsBackend;

    fn opex(alpha: f64) -> OperationalCost {
        OperationalCost::OpEx { scale: alpha, shed_penalty: 1000.0 }
    }

    #[test]
    fn census_without_storage() {
        let mut net = fixtures::f3();
        net.buses.iter_mut().for_each(|b| b.storage_candidate = false);
        let ptdf = compute_ptdf(&net).unwrap();
        let costs = CostConfig::default();
        let ctx = OpfContext { net: &net, ptdf: &ptdf, costs: &costs };
        let sc = fixtures::f3_scenario("s", 90.0, 1.0);
        let (model, block) = build_operational_model(ctx, &sc, &RelaxedPlan::zero(&net), opex(1.0)).unwrap();
        assert_eq!(model.num_vars(), 5);
        assert_eq!(model.num_rows(), 1);
        assert!(block.sites.is_empty());
        assert!(block.active.is_empty());
    }

    #[test]
    fn zero_storage_forces_zero_operation() {
        let net = fixtures::f3();
        let ptdf = compute_ptdf(&net).unwrap();
        let costs = CostConfig::default();
        let ctx = OpfContext { net: &net, ptdf: &ptdf, costs: &costs };
        let mut model = OptModel::new();
        let gamma: Vec<VarId> = (0..3).map(|l| model.add_var(format!("g{l}"), 0.0, 0.0, 0.0)).collect();
        let sigma: Vec<VarId> = (0..3).map(|i| model.add_var(format!("s{i}"), 0.0, 0.0, 0.0)).collect();
        let sc = fixtures::f3_scenario("s", 90.0, 1.0);
        let inv = Investment::Columns { gamma, sigma, sigma_scale: 1.0 };
        let mut blocks = [add_operational_block(&mut model, ctx, &sc, inv, opex(1.0), false).unwrap()];
        let b = HighsBackend::default();
        let out = solve_with_lazy_flows(&mut model, &mut blocks, ctx, 32, 200, &mut |m| b.solve_lp(m)).unwrap();
        let sol = blocks[0].extract(ctx, out.outcome.primal.as_ref().unwrap());
        assert!(sol.ch.iter().chain(&sol.dis).chain(&sol.soc).flatten().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn efficiency_arithmetic() {
        // soc1 = 0.95 * 100; soc2 = soc1 - 90.25 / 0.95.
        let sol = DispatchSolution {
            pg: vec![vec![]; 2],
            flows: vec![vec![]; 2],
            ch: vec![vec![100.0], vec![0.0]],
            dis: vec![vec![0.0], vec![90.25]],
            soc: vec![vec![95.0], vec![0.0]],
            shed: vec![vec![0.0]; 2],
            load: vec![vec![0.0]; 2],
            limits: vec![],
            storage_mwh: vec![400.0],
            objective: 0.0,
            lazy_iterations: 0,
            active_flows: vec![],
        };
        assert!(sol.soc_residual(0.95) < 1e-12);
    }

    #[test]
    fn f3_load_90_uses_the_cheap_unit() {
        let net = fixtures::f3();
        let ptdf = compute_ptdf(&net).unwrap();
        let costs = CostConfig::default();
        let ctx = OpfContext { net: &net, ptdf: &ptdf, costs: &costs };
        let sc = fixtures::f3_scenario("load-90", 90.0, 1.0);
        let sol = solve_dispatch(&HighsBackend::default(), ctx, &sc, &RelaxedPlan::zero(&net), opex(1.0), 32).unwrap();
        assert!((sol.pg[0][0] - 90.0).abs() < 1e-6);
        assert!((sol.objective - 900.0).abs() < 1e-6);
        assert!(sol.total_shed() < 1e-9);
        assert!((sol.flows[0][0] - 60.0).abs() < 1e-6);
        assert!((sol.flows[0][1] - 30.0).abs() < 1e-6);
        assert!((sol.flows[0][2] + 30.0).abs() < 1e-6);
        let o = evaluate_opex(&sol, &net, &costs, 1000.0, 1.0);
        assert!((o.total() - 900.0).abs() < 1e-6);
        let o = evaluate_opex(&sol, &net, &costs, 1000.0, 1825.0);
        assert!((o.total() - 1_642_500.0).abs() < 1e-3);
    }

    #[test]
    fn f3_load_150_sheds_at_zero_plan() {
        let net = fixtures::f3();
        let ptdf = compute_ptdf(&net).unwrap();
        let costs = CostConfig::default();
        let ctx = OpfContext { net: &net, ptdf: &ptdf, costs: &costs };
        let sc = fixtures::f3_scenario("load-150", 150.0, 1.0);
        let sol = solve_dispatch(&HighsBackend::default(), ctx, &sc, &RelaxedPlan::zero(&net), OperationalCost::ShedOnly, 32).unwrap();
        // g1 <= 30 from 1-2 and g1 >= 120 from 2-3 cannot both hold.
        assert!(sol.total_shed() > 1e-3);
        assert!(sol.max_flow_excess() <= 1e-6);
    }

    #[test]
    fn throughput_cost() {
        let net = fixtures::f3();
        let costs = CostConfig::default();
        let mut sol = DispatchSolution {
            pg: vec![vec![0.0, 0.0]],
            flows: vec![vec![0.0; 3]],
            ch: vec![vec![10.0, 0.0, 0.0]],
            dis: vec![vec![0.0, 10.0, 0.0]],
            soc: vec![vec![0.0; 3]],
            shed: vec![vec![0.0; 3]],
            load: vec![vec![0.0; 3]],
            limits: vec![60.0; 3],
            storage_mwh: vec![0.0; 3],
            objective: 0.0,
            lazy_iterations: 0,
            active_flows: vec![],
        };
        assert!((evaluate_opex(&sol, &net, &costs, 1.0, 1.0).storage - 1370.0).abs() < 1e-9);
        sol.ch[0][0] = 0.0;
        assert!((evaluate_opex(&sol, &net, &costs, 1.0, 1.0).storage - 685.0).abs() < 1e-9);
    }

    #[test]
    fn lazy_batch_size_does_not_change_the_optimum() {
        let inst = fixtures::random_instance(3);
        let ptdf = compute_ptdf(&inst.net).unwrap();
        let costs = CostConfig::default();
        let ctx = OpfContext { net: &inst.net, ptdf: &ptdf, costs: &costs };
        let b = HighsBackend::default();
        let plan = RelaxedPlan::zero(&inst.net);
        let full = solve_dispatch_full(&b, ctx, &inst.scenarios[0], &plan, opex(1.0)).unwrap();
        let mut iters = Vec::new();
        for k in [1, 8, 32] {
            let lazy = solve_dispatch(&b, ctx, &inst.scenarios[0], &plan, opex(1.0), k).unwrap();
            assert!((lazy.objective - full.objective).abs() <= 1e-6 * full.objective.abs().max(1.0));
            assert!(lazy.max_flow_excess() <= 1e-6);
            iters.push(lazy.lazy_iterations);
        }
        assert!(iters[0] >= iters[2]);
    }

    #[test]
    fn csv_has_long_format() {
        let net = fixtures::f3();
        let ptdf = compute_ptdf(&net).unwrap();
        let costs = CostConfig::default();
        let ctx = OpfContext { net: &net, ptdf: &ptdf, costs: &costs };
        let sc = fixtures::f3_scenario("load-90", 90.0, 1.0);
        let sol = solve_dispatch(&HighsBackend::default(), ctx, &sc, &RelaxedPlan::zero(&net), opex(1.0), 32).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("quantity,index,hour,value\n"));
        assert!(text.contains("pg,1,0,90"));
    }
}
