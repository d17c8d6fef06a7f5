//! Warm start, candidate sets, and the trust-region state machine that
//! stabilizes the Benders master around an anchor plan.

use std::collections::HashSet;

use serde::Serialize;

use crate::grid::{InvestmentPlan, Network, RelaxedPlan};
use crate::solver::{OptModel, RowId, RowSense, VarId};

/// Relaxed investments at or below this are treated as zero.
pub const CANDIDATE_TOL: f64 = 1e-6;

/// Rounds up the componentwise maximum of the relaxed plans to whole levels
/// and storage units, clamped to the remaining headroom.
pub fn aggregate_warm_start(relaxed: &[RelaxedPlan], net: &Network, unit_mwh: f64) -> InvestmentPlan {
    let up = |v: f64| (v - CANDIDATE_TOL).ceil().max(0.0) as u32;
    let max_of = |pick: &dyn Fn(&RelaxedPlan) -> f64| relaxed.iter().map(pick).fold(0.0, f64::max);
    InvestmentPlan {
        gamma: net
            .branches
            .iter()
            .enumerate()
            .map(|(l, b)| {
                let cap = if b.can_upgrade() { b.max_upgrade } else { 0 };
                up(max_of(&|p| p.gamma[l])).min(cap)
            })
            .collect(),
        units: net
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let cap = if b.can_build_storage() { b.max_storage_units } else { 0 };
                up(max_of(&|p| p.sigma[i]) / unit_mwh).min(cap)
            })
            .collect(),
        unit_mwh,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CandidateSets {
    pub branches: Vec<bool>,
    pub buses: Vec<bool>,
}

impl CandidateSets {
    pub fn all(net: &Network) -> Self {
        Self {
            branches: vec![true; net.num_branches()],
            buses: vec![true; net.num_buses()],
        }
    }

    pub fn contains(&self, plan: &InvestmentPlan) -> bool {
        plan.gamma.iter().zip(&self.branches).all(|(g, ok)| *g == 0 || *ok)
            && plan.units.iter().zip(&self.buses).all(|(u, ok)| *u == 0 || *ok)
    }
}

/// Branches and buses that some relaxation invests in.
pub fn derive_candidate_sets(relaxed: &[RelaxedPlan], net: &Network) -> CandidateSets {
    CandidateSets {
        branches: (0..net.num_branches())
            .map(|l| relaxed.iter().any(|p| p.gamma[l] > CANDIDATE_TOL))
            .collect(),
        buses: (0..net.num_buses())
            .map(|i| relaxed.iter().any(|p| p.sigma[i] > CANDIDATE_TOL))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateEvent {
    /// Strict improvement: anchor moved, radius reset.
    Improved,
    /// The plan was already in the registry: radius grew.
    Revisit,
    Unchanged,
}

#[derive(Debug, Clone)]
pub struct StabilizationState {
    pub anchor: InvestmentPlan,
    /// Transmission radius, in upgrade levels.
    pub radius: u32,
    /// Storage radius, in units.
    pub storage_radius: u32,
    pub candidates: Option<CandidateSets>,
    pub upper_bound: f64,
    registry: HashSet<(Vec<u32>, Vec<u32>)>,
}

/// Rows and columns added to a master by [`StabilizationState::emit_constraints`].
#[derive(Debug, Clone, Default)]
pub struct StabilizationRows {
    pub gamma_radius: Option<RowId>,
    pub storage_radius: Option<RowId>,
    pub level_set: Option<RowId>,
}

impl StabilizationState {
    pub fn new(anchor: InvestmentPlan, candidates: Option<CandidateSets>, storage_radius: u32) -> Self {
        Self {
            anchor,
            radius: 1,
            storage_radius,
            candidates,
            upper_bound: f64::INFINITY,
            registry: HashSet::new(),
        }
    }

    /// Adds `sum |gamma - anchor| <= r`, `sum |units - anchor| <= r_sigma`
    /// (when `trust_region`), and the level set `capex + sum w theta <= UB`
    /// once an upper bound exists. `epigraph` pairs each proxy column with its
    /// objective weight.
    pub fn emit_constraints(
        &self,
        model: &mut OptModel,
        gamma: &[VarId],
        units: &[VarId],
        epigraph: &[(VarId, f64)],
        trust_region: bool,
    ) -> StabilizationRows {
        let mut rows = StabilizationRows::default();
        if trust_region {
            rows.gamma_radius = Some(l1_ball(model, "tr_gamma", gamma, &self.anchor.gamma, self.radius));
            rows.storage_radius = Some(l1_ball(model, "tr_sigma", units, &self.anchor.units, self.storage_radius));
        }
        if self.upper_bound.is_finite() {
            let mut coeffs: Vec<(VarId, f64)> = gamma
                .iter()
                .chain(units)
                .map(|&v| (v, model.var(v).cost))
                .filter(|(_, c)| *c != 0.0)
                .collect();
            coeffs.extend_from_slice(epigraph);
            let slack = 1e-7 * self.upper_bound.abs().max(1.0);
            rows.level_set = Some(model.add_row("level_set", coeffs, RowSense::Le, self.upper_bound + slack));
        }
        rows
    }

    /// Applies the anchor and radius rules after evaluating `plan`.
    /// `value` is the plan's total cost, `None` when it sheds load.
    pub fn update(&mut self, plan: &InvestmentPlan, value: Option<f64>) -> UpdateEvent {
        let key = plan.key();
        if let Some(z) = value.filter(|z| *z < self.upper_bound) {
            self.anchor = plan.clone();
            self.radius = 1;
            self.upper_bound = z;
            self.registry.clear();
            self.registry.insert(key);
            return UpdateEvent::Improved;
        }
        if self.registry.contains(&key) {
            self.radius += 1;
            UpdateEvent::Revisit
        } else {
            self.registry.insert(key);
            UpdateEvent::Unchanged
        }
    }

    pub fn in_registry(&self, plan: &InvestmentPlan) -> bool {
        self.registry.contains(&plan.key())
    }
}

fn l1_ball(model: &mut OptModel, name: &str, vars: &[VarId], center: &[u32], radius: u32) -> RowId {
    let mut ball = Vec::with_capacity(2 * vars.len());
    for (k, (&v, &c)) in vars.iter().zip(center).enumerate() {
        if model.var(v).upper <= 0.0 && c == 0 {
            continue;
        }
        let up = model.add_var(format!("{name}_up_{k}"), 0.0, f64::INFINITY, 0.0);
        let down = model.add_var(format!("{name}_down_{k}"), 0.0, f64::INFINITY, 0.0);
        model.add_row(format!("{name}_split_{k}"), vec![(v, 1.0), (up, -1.0), (down, 1.0)], RowSense::Eq, c as f64);
        ball.push((up, 1.0));
        ball.push((down, 1.0));
    }
    model.add_row(name, ball, RowSense::Le, radius as f64)
}
