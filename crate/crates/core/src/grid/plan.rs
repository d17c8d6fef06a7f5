use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};

/// Integer first-stage decision: an upgrade level per branch and a number of
/// storage units per bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestmentPlan {
    pub gamma: Vec<u32>,
    pub units: Vec<u32>,
    /// MWh per storage unit.
    pub unit_mwh: f64,
}

impl InvestmentPlan {
    pub fn zero(net: &Network, unit_mwh: f64) -> Self {
        Self {
            gamma: vec![0; net.num_branches()],
            units: vec![0; net.num_buses()],
            unit_mwh,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.gamma.iter().all(|&g| g == 0) && self.units.iter().all(|&u| u == 0)
    }

    /// Storage energy per bus, MWh.
    pub fn sigma(&self) -> Vec<f64> {
        self.units.iter().map(|&u| u as f64 * self.unit_mwh).collect()
    }

    pub fn gamma_f64(&self) -> Vec<f64> {
        self.gamma.iter().map(|&g| g as f64).collect()
    }

    pub fn total_storage_mwh(&self) -> f64 {
        self.units.iter().map(|&u| u as f64).sum::<f64>() * self.unit_mwh
    }

    pub fn upgraded_branches(&self) -> usize {
        self.gamma.iter().filter(|&&g| g > 0).count()
    }

    pub fn storage_sites(&self) -> usize {
        self.units.iter().filter(|&&u| u > 0).count()
    }

    /// Componentwise `self >= other`.
    pub fn dominates(&self, other: &InvestmentPlan) -> bool {
        self.gamma.iter().zip(&other.gamma).all(|(a, b)| a >= b)
            && self.units.iter().zip(&other.units).all(|(a, b)| a >= b)
    }

    /// Componentwise sum, used to accumulate plans across periods.
    pub fn plus(&self, other: &InvestmentPlan) -> InvestmentPlan {
        InvestmentPlan {
            gamma: self.gamma.iter().zip(&other.gamma).map(|(a, b)| a + b).collect(),
            units: self.units.iter().zip(&other.units).map(|(a, b)| a + b).collect(),
            unit_mwh: self.unit_mwh,
        }
    }

    /// Integer-vector key for exact plan comparison.
    pub fn key(&self) -> (Vec<u32>, Vec<u32>) {
        (self.gamma.clone(), self.units.clone())
    }

    /// ℓ1 distance in branch levels and in storage units.
    pub fn l1_distance(&self, other: &InvestmentPlan) -> (u32, u32) {
        let dg = self.gamma.iter().zip(&other.gamma).map(|(a, b)| a.abs_diff(*b)).sum();
        let du = self.units.iter().zip(&other.units).map(|(a, b)| a.abs_diff(*b)).sum();
        (dg, du)
    }

    pub fn relaxed(&self) -> RelaxedPlan {
        RelaxedPlan {
            gamma: self.gamma_f64(),
            sigma: self.sigma(),
        }
    }

    pub fn check_dimensions(&self, net: &Network) -> Result<()> {
        if self.gamma.len() != net.num_branches() || self.units.len() != net.num_buses() {
            return Err(Error::DimensionMismatch(format!(
                "plan has {} branch levels and {} bus entries; network has {} branches and {} buses",
                self.gamma.len(),
                self.units.len(),
                net.num_branches(),
                net.num_buses()
            )));
        }
        Ok(())
    }

    /// Dimensions plus per-component bounds against the network's headroom.
    pub fn validate(&self, net: &Network) -> Result<()> {
        self.check_dimensions(net)?;
        for (l, (&g, b)) in self.gamma.iter().zip(&net.branches).enumerate() {
            if g > 0 && (g > b.max_upgrade || b.upgrade_step <= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "branch {} level {g} exceeds its headroom {}",
                    net.branches[l].id, b.max_upgrade
                )));
            }
        }
        for (&u, bus) in self.units.iter().zip(&net.buses) {
            if u > 0 && (!bus.storage_candidate || u > bus.max_storage_units) {
                return Err(Error::InvalidInput(format!(
                    "bus {} has {u} units but headroom {}",
                    bus.id,
                    if bus.storage_candidate { bus.max_storage_units } else { 0 }
                )));
            }
        }
        Ok(())
    }
}

/// Continuous first-stage point: fractional levels and storage MWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedPlan {
    pub gamma: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl RelaxedPlan {
    pub fn zero(net: &Network) -> Self {
        Self {
            gamma: vec![0.0; net.num_branches()],
            sigma: vec![0.0; net.num_buses()],
        }
    }

    pub fn capex(&self, net: &Network) -> f64 {
        let lines: f64 = self.gamma.iter().zip(&net.branches).map(|(g, b)| g * b.upgrade_cost).sum();
        let storage: f64 = self.sigma.iter().zip(&net.buses).map(|(s, b)| s * b.storage_cost).sum();
        lines + storage
    }
}

/// Capital cost: upgrade cost per level times level, plus storage $/MWh
/// times MWh.
pub fn plan_capex(plan: &InvestmentPlan, net: &Network) -> Result<f64> {
    plan.check_dimensions(net)?;
    Ok(capex_split(plan, net).iter().sum())
}

/// `[lines, storage]` capital cost.
pub(crate) fn capex_split(plan: &InvestmentPlan, net: &Network) -> [f64; 2] {
    let lines = plan
        .gamma
        .iter()
        .zip(&net.branches)
        .map(|(&g, b)| g as f64 * b.upgrade_cost)
        .sum();
    let storage = plan
        .units
        .iter()
        .zip(&net.buses)
        .map(|(&u, b)| u as f64 * plan.unit_mwh * b.storage_cost)
        .sum();
    [lines, storage]
}

/// Folds a plan into the network: ratings grow by the committed levels,
/// committed storage becomes baseline fleet, and the remaining headroom
/// shrinks accordingly.
pub fn commit_plan(net: &Network, plan: &InvestmentPlan) -> Result<Network> {
    plan.validate(net)?;
    let mut out = net.clone();
    for (b, &g) in out.branches.iter_mut().zip(&plan.gamma) {
        b.rating += g as f64 * b.upgrade_step;
        b.max_upgrade -= g;
    }
    for (bus, &u) in out.buses.iter_mut().zip(&plan.units) {
        bus.baseline_storage += u as f64 * plan.unit_mwh;
        bus.max_storage_units -= u;
    }
    Ok(out)
}
