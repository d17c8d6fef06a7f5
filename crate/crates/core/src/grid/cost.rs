use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Capital and operating cost parameters plus the investment granularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// Line upgrade cost, $/MW-km.
    pub line_cost_per_mw_km: f64,
    /// Storage energy rating cost, $/MWh.
    pub storage_cost_per_mwh: f64,
    /// Storage throughput cost c^S, $/MWh charged or discharged.
    pub storage_throughput_cost: f64,
    /// Initial load-shed penalty, $/MWh. `None` means ten times the largest
    /// generator marginal cost.
    pub shed_penalty: Option<f64>,
    /// Energy per storage unit, MWh.
    pub storage_unit_mwh: f64,
    /// Hours of discharge at rated power.
    pub storage_duration_h: f64,
    /// One-way charge and discharge efficiency.
    pub efficiency: f64,
    pub max_units_per_node: u32,
    /// Capacity added per upgrade level as a fraction of the base rating.
    pub upgrade_step_fraction: f64,
    pub max_upgrade_levels: u32,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            line_cost_per_mw_km: 1243.0,
            storage_cost_per_mwh: 1_000_000.0,
            storage_throughput_cost: 68.50,
            shed_penalty: None,
            storage_unit_mwh: 250.0,
            storage_duration_h: 4.0,
            efficiency: 0.95,
            max_units_per_node: 12,
            upgrade_step_fraction: 0.30,
            max_upgrade_levels: 3,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        let costs = [
            ("line_cost_per_mw_km", self.line_cost_per_mw_km),
            ("storage_cost_per_mwh", self.storage_cost_per_mwh),
            ("storage_throughput_cost", self.storage_throughput_cost),
            ("upgrade_step_fraction", self.upgrade_step_fraction),
        ];
        for (name, v) in costs {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be a nonnegative number, got {v}")));
            }
        }
        if let Some(l) = self.shed_penalty {
            if !(l > 0.0) {
                return Err(Error::InvalidInput(format!("shed_penalty must be positive, got {l}")));
            }
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::InvalidInput(format!("efficiency must lie in (0, 1], got {}", self.efficiency)));
        }
        if !(self.storage_duration_h > 0.0) {
            return Err(Error::InvalidInput("storage_duration_h must be positive".into()));
        }
        if !(self.storage_unit_mwh > 0.0) {
            return Err(Error::InvalidInput("storage_unit_mwh must be positive".into()));
        }
        Ok(())
    }

    /// Upgrade levels as fractions of the base rating, e.g. `[0.3, 0.6, 0.9]`.
    pub fn upgrade_levels(&self) -> Vec<f64> {
        (1..=self.max_upgrade_levels)
            .map(|k| k as f64 * self.upgrade_step_fraction)
            .collect()
    }

    /// Per-level cost of upgrading a branch: $/MW-km x km x MW per level.
    pub fn branch_upgrade_cost(&self, length_km: f64, upgrade_step: f64) -> f64 {
        self.line_cost_per_mw_km * length_km * upgrade_step
    }

    pub fn shed_penalty_for(&self, max_marginal_cost: f64) -> f64 {
        self.shed_penalty.unwrap_or(10.0 * max_marginal_cost).max(f64::MIN_POSITIVE)
    }

    pub fn unit_power_mw(&self) -> f64 {
        self.storage_unit_mwh / self.storage_duration_h
    }
}
