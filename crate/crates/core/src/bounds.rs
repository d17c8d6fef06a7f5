//! Global lower bound from two relaxations and the resulting conservative
//! optimality gap.
//!
//! First stage: every shed-free plan must at least pay for the hardest
//! scenario's cheapest shed-free relaxed investment. Second stage: recourse
//! cost is nonincreasing in investment, so each scenario's cost at maximum
//! investment bounds it from below. The sum is `LB*`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benders::{solve_subproblem, Phase, RetainedFlows};
use crate::error::{Error, Result};
use crate::extensive::min_capex_for_feasibility;
use crate::grid::Network;
use crate::instance::Instance;
use crate::scenario::Scenario;
use crate::solver::Backend;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub feasibility_capex: Vec<f64>,
    pub hardest_scenario: usize,
    pub first_stage: f64,
    pub max_investment_opex: Vec<f64>,
    pub second_stage: f64,
}

impl LowerBound {
    pub fn value(&self) -> f64 {
        self.first_stage + self.second_stage
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub feasibility_capex: Vec<f64>,
    pub hardest_scenario: usize,
    pub first_stage_lb: f64,
    pub max_investment_opex: Vec<f64>,
    pub second_stage_lb: f64,
    pub lb_star: f64,
    pub ub: f64,
    pub gap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// `max_s c^feas_s` with the lowest index winning ties.
pub fn first_stage_lower_bound(backend: &dyn Backend, inst: &Instance<'_>, k_v: usize) -> Result<(f64, usize, Vec<f64>)> {
    let solved: Vec<Result<f64>> = (0..inst.scenarios.len())
        .into_par_iter()
        .map(|s| min_capex_for_feasibility(backend, inst, s, k_v).map(|c| c.value))
        .collect();
    let mut values = Vec::with_capacity(solved.len());
    let mut infeasible = Vec::new();
    for (s, r) in solved.into_iter().enumerate() {
        match r {
            Ok(v) => values.push(v),
            Err(Error::InfeasibleAtMax(_)) => infeasible.push(s),
            Err(e) => return Err(e),
        }
    }
    if !infeasible.is_empty() {
        return Err(Error::InfeasibleAtMax(infeasible));
    }
    let mut best = 0;
    for (s, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = s;
        }
    }
    Ok((values[best].max(0.0), best, values))
}

/// `sum_s weight_s q_s(max plan)` and the per-scenario terms.
pub fn second_stage_lower_bound(
    backend: &dyn Backend,
    inst: &Instance<'_>,
    lambda: f64,
    k_v: usize,
) -> Result<(f64, Vec<f64>)> {
    let point = inst.net.max_plan(inst.unit_mwh()).relaxed();
    let results: Vec<_> = (0..inst.scenarios.len())
        .into_par_iter()
        .map(|s| solve_subproblem(backend, inst, s, &point, lambda, k_v, &mut RetainedFlows::default()))
        .collect::<Result<_>>()?;
    let shedding: Vec<usize> = results
        .iter()
        .filter(|r| r.phase == Phase::Feasibility)
        .map(|r| r.scenario)
        .collect();
    if !shedding.is_empty() {
        return Err(Error::InfeasibleAtMax(shedding));
    }
    for r in &results {
        if r.dispatch.max_flow_excess() > crate::FEASIBILITY_TOL {
            return Err(Error::Solver(format!(
                "recourse at maximum investment for scenario {} violates a flow limit",
                r.scenario
            )));
        }
    }
    let q: Vec<f64> = results.iter().map(|r| r.value).collect();
    let total = q.iter().zip(inst.scenarios).map(|(v, s)| s.weight * v).sum();
    Ok((total, q))
}

pub fn compute_lower_bound(backend: &dyn Backend, inst: &Instance<'_>, lambda: f64, k_v: usize) -> Result<LowerBound> {
    let (first_stage, hardest_scenario, feasibility_capex) = first_stage_lower_bound(backend, inst, k_v)?;
    let (second_stage, max_investment_opex) = second_stage_lower_bound(backend, inst, lambda, k_v)?;
    Ok(LowerBound {
        feasibility_capex,
        hardest_scenario,
        first_stage,
        max_investment_opex,
        second_stage,
    })
}

pub fn certify(lb: &LowerBound, ub: f64) -> BoundCertificate {
    let lb_star = lb.value();
    BoundCertificate {
        feasibility_capex: lb.feasibility_capex.clone(),
        hardest_scenario: lb.hardest_scenario,
        first_stage_lb: lb.first_stage,
        max_investment_opex: lb.max_investment_opex.clone(),
        second_stage_lb: lb.second_stage,
        lb_star,
        ub,
        gap: if ub == lb_star { 0.0 } else { (ub - lb_star) / ub.abs() },
        fixture_hash: None,
        config_hash: None,
    }
}

impl BoundCertificate {
    pub fn with_provenance(mut self, fixture_hash: String, config_hash: String) -> Self {
        self.fixture_hash = Some(fixture_hash);
        self.config_hash = Some(config_hash);
        self
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|source| Error::PathIo {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the network and scenario data a run was solved on.
pub fn fixture_hash(net: &Network, scenarios: &[Scenario]) -> Result<String> {
    let text = serde_json::to_string(&(net, scenarios))?;
    Ok(sha256_hex(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::grid::CostConfig;
    use crate::ptdf::compute_ptdf;
    use crate::solver::HighsBackend;

    #[test]
    fn f3_bounds() {
        let net = fixtures::f3();
        let ptdf = compute_ptdf(&net).unwrap();
        let costs = CostConfig::default();
        let sc = fixtures::f3_scenarios();
        let inst = Instance {
            net: &net,
            ptdf: &ptdf,
            costs: &costs,
            scenarios: &sc,
            alpha: 1.0,
        };
        let b = HighsBackend::default();
        let (v, s, all) = first_stage_lower_bound(&b, &inst, 32).unwrap();
        assert_eq!(s, 1);
        assert!(all[0].abs() < 1e-6);
        assert!((v - all[1]).abs() < 1e-12);
        let only_light = [fixtures::f3_scenario("load-90", 90.0, 1.0)];
        let light = Instance { scenarios: &only_light, ..inst };
        assert_eq!(first_stage_lower_bound(&b, &light, 32).unwrap().0, 0.0);
        let (q, per) = second_stage_lower_bound(&b, &light, 1e4, 32).unwrap();
        assert!((q - 900.0).abs() < 1e-6);
        assert_eq!(per.len(), 1);
    }

    #[test]
    fn equal_bounds_have_zero_gap() {
        let lb = LowerBound {
            feasibility_capex: vec![1.0],
            hardest_scenario: 0,
            first_stage: 1.0,
            max_investment_opex: vec![2.0],
            second_stage: 2.0,
        };
        let c = certify(&lb, 3.0);
        assert_eq!(c.gap, 0.0);
        assert!((certify(&lb, 4.0).gap - 0.25).abs() < 1e-12);
        let text = serde_json::to_string(&c.with_provenance("a".into(), "b".into())).unwrap();
        assert!(text.contains("\"fixture_hash\":\"a\""));
    }
}
