mod common;

use proptest::prelude::*;

use tepstor::benders::recourse_value;
use tepstor::fixtures;
use tepstor::grid::{commit_plan, plan_capex, InvestmentPlan};
use tepstor::ptdf::{compute_ptdf, compute_ptdf_with, line_flows, sparsify_ptdf};
use tepstor::solver::HighsBackend;

fn network_dims() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 2usize..=16).prop_flat_map(|(seed, n)| {
        let most = (2 * n).min(n * (n - 1) / 2);
        (Just(seed), Just(n), (n - 1)..=most)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ptdf_matches_angle_formulation((seed, n, m) in network_dims(), inj_seed in any::<u64>()) {
        let net = fixtures::random_network(seed, n, m);
        let ptdf = compute_ptdf(&net).unwrap();
        let inj = common::balanced_injection(&mut common::rng(inj_seed), n);
        let flows = line_flows(&ptdf, &inj).unwrap();
        let reference = common::angle_flows(&net, &inj);
        for (a, b) in flows.iter().zip(&reference) {
            prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn dense_and_rowwise_paths_agree((seed, n, m) in network_dims()) {
        let net = fixtures::random_network(seed, n, m);
        let dense = compute_ptdf_with(&net, usize::MAX).unwrap();
        let rowwise = compute_ptdf_with(&net, 0).unwrap();
        for l in 0..net.num_branches() {
            for k in 0..n {
                prop_assert!((dense.get(l, k) - rowwise.get(l, k)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn flows_do_not_depend_on_slack((seed, n, m) in network_dims(), inj_seed in any::<u64>()) {
        let net = fixtures::random_network(seed, n, m);
        let mut moved = net.clone();
        moved.slack_bus = net.buses[(inj_seed as usize) % n].id;
        let inj = common::balanced_injection(&mut common::rng(inj_seed), n);
        let a = line_flows(&compute_ptdf(&net).unwrap(), &inj).unwrap();
        let b = line_flows(&compute_ptdf(&moved).unwrap(), &inj).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn sparsified_flow_error_is_bounded((seed, n, m) in network_dims(), k_p in 0.0f64..0.2, inj_seed in any::<u64>()) {
        let net = fixtures::random_network(seed, n, m);
        let full = compute_ptdf(&net).unwrap();
        let sparse = sparsify_ptdf(&full, k_p).unwrap();
        prop_assert!(sparse.nnz() <= full.nnz());
        let inj = common::balanced_injection(&mut common::rng(inj_seed), n);
        let bound = k_p * inj.iter().map(|v| v.abs()).sum::<f64>() + 1e-9;
        let a = line_flows(&full, &inj).unwrap();
        let b = line_flows(&sparse, &inj).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= bound);
        }
    }

    #[test]
    fn capex_is_additive(seed in any::<u64>()) {
        let owned = common::random(seed % 5);
        let max = owned.max_plan();
        let mut rng = common::rng(seed);
        let a = common::random_integer_plan(&mut rng, &max);
        let b = common::random_integer_plan(&mut rng, &max);
        let sum = a.plus(&b);
        prop_assert!(sum.dominates(&a) && sum.dominates(&b));
        let ca = plan_capex(&a, &owned.net).unwrap();
        let cb = plan_capex(&b, &owned.net).unwrap();
        let cs = plan_capex(&sum, &owned.net).unwrap();
        prop_assert!((cs - ca - cb).abs() <= 1e-6 * cs.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn f3_recourse_is_nonincreasing(lo in proptest::collection::vec(0u32..=3, 3), bump in proptest::collection::vec(0u32..=3, 3)) {
        let owned = common::f3();
        let inst = owned.inst();
        let unit = owned.costs.storage_unit_mwh;
        let small = InvestmentPlan { gamma: lo.clone(), units: vec![0; 3], unit_mwh: unit };
        let big = InvestmentPlan {
            gamma: lo.iter().zip(&bump).map(|(a, b)| (a + b).min(3)).collect(),
            units: vec![0; 3],
            unit_mwh: unit,
        };
        let backend = HighsBackend::default();
        let lambda = inst.default_shed_penalty();
        for s in 0..owned.scenarios.len() {
            let qs = recourse_value(&backend, &inst, s, &small.relaxed(), lambda, 32).unwrap();
            let qb = recourse_value(&backend, &inst, s, &big.relaxed(), lambda, 32).unwrap();
            prop_assert!(qb <= qs + 1e-6 * qs.abs().max(1.0), "{qb} > {qs}");
        }
    }
}

#[test]
fn committing_a_plan_raises_ratings_by_whole_steps() {
    let net = fixtures::f3();
    let plan = InvestmentPlan {
        gamma: vec![2, 0, 1],
        units: vec![0, 0, 0],
        unit_mwh: 1.0,
    };
    let next = commit_plan(&net, &plan).unwrap();
    let ratings: Vec<f64> = next.branches.iter().map(|b| b.rating).collect();
    assert_eq!(ratings, vec![96.0, 60.0, 78.0]);
    let caps: Vec<u32> = next.branches.iter().map(|b| b.max_upgrade).collect();
    assert_eq!(caps, vec![1, 3, 2]);
}
