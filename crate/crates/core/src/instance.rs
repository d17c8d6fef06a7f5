use crate::error::{Error, Result};
use crate::grid::{CostConfig, Network};
use crate::opf::OpfContext;
use crate::ptdf::PtdfMatrix;
use crate::scenario::{validate_scenarios, Scenario};

/// Everything that defines one planning year's two-stage problem except the
/// shed penalty, which escalation varies.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub net: &'a Network,
    pub ptdf: &'a PtdfMatrix,
    pub costs: &'a CostConfig,
    pub scenarios: &'a [Scenario],
    /// Days represented by one scenario-day (operating cost multiplier).
    pub alpha: f64,
}

impl<'a> Instance<'a> {
    pub fn ctx(&self) -> OpfContext<'a> {
        OpfContext {
            net: self.net,
            ptdf: self.ptdf,
            costs: self.costs,
        }
    }

    pub fn unit_mwh(&self) -> f64 {
        self.costs.storage_unit_mwh
    }

    /// Configured shed penalty, or ten times the largest marginal cost.
    pub fn default_shed_penalty(&self) -> f64 {
        self.costs.shed_penalty_for(self.net.max_marginal_cost())
    }

    pub fn validate(&self) -> Result<()> {
        self.costs.validate()?;
        validate_scenarios(self.net, self.scenarios)?;
        if self.ptdf.num_buses() != self.net.num_buses() || self.ptdf.num_branches() != self.net.num_branches() {
            return Err(Error::DimensionMismatch("PTDF does not match the network".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidInput(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}
