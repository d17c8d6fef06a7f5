//! Shared inputs for the criterion benches.

use tepstor::fixtures::{random_instance, RandomInstance};
use tepstor::grid::CostConfig;
use tepstor::ptdf::{compute_ptdf, PtdfMatrix};
use tepstor::Instance;

pub struct Prepared {
    pub inner: RandomInstance,
    pub ptdf: PtdfMatrix,
    pub costs: CostConfig,
}

pub fn prepared(seed: u64) -> Prepared {
    let inner = random_instance(seed);
    Prepared {
        ptdf: compute_ptdf(&inner.net).expect("random networks are connected"),
        inner,
        costs: CostConfig::default(),
    }
}

impl Prepared {
    pub fn instance(&self) -> Instance<'_> {
        Instance {
            net: &self.inner.net,
            ptdf: &self.ptdf,
            costs: &self.costs,
            scenarios: &self.inner.scenarios,
            alpha: 1825.0,
        }
    }
}
