#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tepstor::fixtures;
use tepstor::grid::{CostConfig, InvestmentPlan, Network, RelaxedPlan};
use tepstor::ptdf::{compute_ptdf, PtdfMatrix};
use tepstor::scenario::Scenario;
use tepstor::Instance;

/// An instance that owns its data.
pub struct Owned {
    pub name: String,
    pub net: Network,
    pub ptdf: PtdfMatrix,
    pub costs: CostConfig,
    pub scenarios: Vec<Scenario>,
    pub alpha: f64,
}

impl Owned {
    pub fn new(name: impl Into<String>, net: Network, scenarios: Vec<Scenario>, alpha: f64) -> Self {
        Self {
            name: name.into(),
            ptdf: compute_ptdf(&net).unwrap(),
            net,
            costs: CostConfig::default(),
            scenarios,
            alpha,
        }
    }

    pub fn inst(&self) -> Instance<'_> {
        Instance {
            net: &self.net,
            ptdf: &self.ptdf,
            costs: &self.costs,
            scenarios: &self.scenarios,
            alpha: self.alpha,
        }
    }

    pub fn max_plan(&self) -> InvestmentPlan {
        self.net.max_plan(self.costs.storage_unit_mwh)
    }
}

pub const ALPHA: f64 = 1825.0;

pub fn f3() -> Owned {
    Owned::new("f3", fixtures::f3(), fixtures::f3_scenarios(), ALPHA)
}

pub fn random(seed: u64) -> Owned {
    let r = fixtures::random_instance(seed);
    Owned::new(format!("random-{seed}"), r.net, r.scenarios, ALPHA)
}

/// A relaxed plan uniformly inside `[0, max]`.
pub fn random_point(rng: &mut ChaCha8Rng, max: &InvestmentPlan) -> RelaxedPlan {
    RelaxedPlan {
        gamma: max.gamma.iter().map(|&g| rng.random_range(0.0..=g as f64)).collect(),
        sigma: max.sigma().iter().map(|&s| rng.random_range(0.0..=s)).collect(),
    }
}

/// A point componentwise between `lo` and `max`.
pub fn random_point_above(rng: &mut ChaCha8Rng, lo: &RelaxedPlan, max: &InvestmentPlan) -> RelaxedPlan {
    RelaxedPlan {
        gamma: lo
            .gamma
            .iter()
            .zip(&max.gamma)
            .map(|(&a, &b)| rng.random_range(a..=(b as f64).max(a)))
            .collect(),
        sigma: lo
            .sigma
            .iter()
            .zip(max.sigma())
            .map(|(&a, b)| rng.random_range(a..=b.max(a)))
            .collect(),
    }
}

pub fn random_integer_plan(rng: &mut ChaCha8Rng, max: &InvestmentPlan) -> InvestmentPlan {
    InvestmentPlan {
        gamma: max.gamma.iter().map(|&g| rng.random_range(0..=g)).collect(),
        units: max.units.iter().map(|&u| rng.random_range(0..=u)).collect(),
        unit_mwh: max.unit_mwh,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Flows by the angle formulation: solve the reduced `B theta = p` with a
/// dense LU and take `(theta_from - theta_to) / x`.
pub fn angle_flows(net: &Network, injection: &[f64]) -> Vec<f64> {
    let n = net.num_buses();
    let mut b = nalgebra::DMatrix::<f64>::zeros(n, n);
    for br in &net.branches {
        let (i, j, y) = (br.from_index(), br.to_index(), 1.0 / br.reactance);
        b[(i, i)] += y;
        b[(j, j)] += y;
        b[(i, j)] -= y;
        b[(j, i)] -= y;
    }
    let s = net.slack_index();
    let keep: Vec<usize> = (0..n).filter(|&k| k != s).collect();
    let reduced = b.select_rows(&keep).select_columns(&keep);
    let rhs = nalgebra::DVector::from_iterator(keep.len(), keep.iter().map(|&k| injection[k]));
    let theta_r = reduced.lu().solve(&rhs).expect("connected network");
    let mut theta = vec![0.0; n];
    for (pos, &k) in keep.iter().enumerate() {
        theta[k] = theta_r[pos];
    }
    net.branches
        .iter()
        .map(|br| (theta[br.from_index()] - theta[br.to_index()]) / br.reactance)
        .collect()
}

/// Random injections summing to zero.
pub fn balanced_injection(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
    let mean = p.iter().sum::<f64>() / n as f64;
    p.iter_mut().for_each(|v| *v -= mean);
    p
}
