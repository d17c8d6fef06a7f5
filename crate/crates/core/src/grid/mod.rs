//! Network data model, case ingestion, investment plans, and capital cost.

mod case;
mod cost;
mod plan;
mod scaling;

pub use case::{load_case, load_case_with, parse_case, parse_case_with, CaseFile};
pub use cost::CostConfig;
pub use plan::{commit_plan, plan_capex, InvestmentPlan, RelaxedPlan};
pub(crate) use plan::capex_split;
pub use scaling::{apply_year_scaling, ScalingTable, YearScaling};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    Coal,
    Gas,
    Nuclear,
    Solar,
    Wind,
    Other,
}

impl GenKind {
    pub fn is_renewable(self) -> bool {
        matches!(self, GenKind::Solar | GenKind::Wind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// 1-based, contiguous after ingestion.
    pub id: usize,
    /// MW, nonnegative.
    pub base_load: f64,
    pub storage_candidate: bool,
    /// Capital cost of new storage energy rating, $/MWh.
    pub storage_cost: f64,
    /// Remaining number of storage units that may still be built here.
    pub max_storage_units: u32,
    /// Storage energy already committed by earlier periods, MWh.
    pub baseline_storage: f64,
}

impl Bus {
    /// Whether any storage (existing or new) can operate at this bus.
    pub fn hosts_storage(&self) -> bool {
        self.baseline_storage > 0.0 || self.can_build_storage()
    }

    pub fn can_build_storage(&self) -> bool {
        self.storage_candidate && self.max_storage_units > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    /// Bus ids (1-based). Flow is positive from `from` to `to`.
    pub from: usize,
    pub to: usize,
    /// Per unit, > 0.
    pub reactance: f64,
    /// Thermal limit in MW, > 0.
    pub rating: f64,
    /// MW added per upgrade level.
    pub upgrade_step: f64,
    /// Remaining upgrade levels.
    pub max_upgrade: u32,
    pub length_km: f64,
    /// $ per upgrade level.
    pub upgrade_cost: f64,
}

impl Branch {
    pub fn from_index(&self) -> usize {
        self.from - 1
    }

    pub fn to_index(&self) -> usize {
        self.to - 1
    }

    pub fn can_upgrade(&self) -> bool {
        self.max_upgrade > 0 && self.upgrade_step > 0.0
    }

    /// Thermal limit under a (possibly fractional) upgrade level.
    pub fn limit_at(&self, level: f64) -> f64 {
        self.rating + level * self.upgrade_step
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    pub kind: GenKind,
    /// MW.
    pub capacity: f64,
    /// $/MWh.
    pub marginal_cost: f64,
    /// MW; zero for renewables.
    pub min_output: f64,
}

impl Generator {
    pub fn is_renewable(&self) -> bool {
        self.kind.is_renewable()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub slack_bus: usize,
    pub base_mva: f64,
}

impl Network {
    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn slack_index(&self) -> usize {
        self.slack_bus - 1
    }

    pub fn total_base_load(&self) -> f64 {
        self.buses.iter().map(|b| b.base_load).sum()
    }

    pub fn max_marginal_cost(&self) -> f64 {
        self.generators.iter().map(|g| g.marginal_cost).fold(0.0, f64::max)
    }

    /// Largest admissible plan: every branch at its remaining level headroom
    /// and every candidate bus at its remaining unit headroom.
    pub fn max_plan(&self, unit_mwh: f64) -> InvestmentPlan {
        InvestmentPlan {
            gamma: self
                .branches
                .iter()
                .map(|b| if b.can_upgrade() { b.max_upgrade } else { 0 })
                .collect(),
            units: self
                .buses
                .iter()
                .map(|b| if b.can_build_storage() { b.max_storage_units } else { 0 })
                .collect(),
            unit_mwh,
        }
    }

    /// Checks the invariants the rest of the crate relies on.
    pub fn validate(&self) -> crate::Result<()> {
        case::validate_network(self)
    }
}
