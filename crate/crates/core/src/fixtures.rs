//! Small hand-checkable networks and a seeded random instance generator for
//! tests, benchmarks, and oracle comparisons.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Branch, Bus, CostConfig, GenKind, Generator, Network};
use crate::ptdf::compute_ptdf;
use crate::scenario::Scenario;

/// Three buses in a triangle: cheap generation at bus 1, expensive at bus 3,
/// load at bus 2, slack at bus 3. Branches 1-2, 1-3, 2-3, all 60 MW with an
/// 18 MW upgrade step and three levels.
pub fn f3() -> Network {
    let costs = CostConfig::default();
    let branch = |id, from, to| Branch {
        id,
        from,
        to,
        reactance: 0.1,
        rating: 60.0,
        upgrade_step: 18.0,
        max_upgrade: 3,
        length_km: 100.0,
        upgrade_cost: costs.branch_upgrade_cost(100.0, 18.0),
    };
    let bus = |id, base_load| Bus {
        id,
        base_load,
        storage_candidate: true,
        storage_cost: costs.storage_cost_per_mwh,
        max_storage_units: costs.max_units_per_node,
        baseline_storage: 0.0,
    };
    let gen = |id, bus, marginal_cost| Generator {
        id,
        bus,
        kind: GenKind::Gas,
        capacity: 200.0,
        marginal_cost,
        min_output: 0.0,
    };
    Network {
        buses: vec![bus(1, 0.0), bus(2, 90.0), bus(3, 0.0)],
        branches: vec![branch(1, 1, 2), branch(2, 1, 3), branch(3, 2, 3)],
        generators: vec![gen(1, 1, 10.0), gen(2, 3, 100.0)],
        slack_bus: 3,
        base_mva: 100.0,
    }
}

/// One-hour F3 scenario with `load_mw` at bus 2.
pub fn f3_scenario(id: &str, load_mw: f64, weight: f64) -> Scenario {
    Scenario::flat(id, weight, &f3(), vec![0.0, load_mw, 0.0], 1)
}

/// The two-day F3 set: `load-90` (uncongested) and `load-150` (needs upgrades).
pub fn f3_scenarios() -> Vec<Scenario> {
    vec![f3_scenario("load-90", 90.0, 0.5), f3_scenario("load-150", 150.0, 0.5)]
}

/// Two buses joined by one line; slack at bus 2.
pub fn two_bus() -> Network {
    let mut net = f3();
    net.buses.truncate(2);
    net.branches.truncate(1);
    net.generators.truncate(1);
    net.slack_bus = 2;
    net
}

/// A random connected network: a random spanning tree plus extra distinct
/// edges up to `branches` (capped by the complete graph). Ratings are
/// placeholders; see [`random_instance`] for a calibrated instance.
pub fn random_network(seed: u64, buses: usize, branches: usize) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_topology(&mut rng, buses.max(2), branches)
}

fn random_topology(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Network {
    let costs = CostConfig::default();
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    let m = m.clamp(n - 1, n * (n - 1) / 2);
    while edges.len() < m {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let (a, b) = (a.min(b), a.max(b));
        if a != b && !edges.iter().any(|&(x, y)| (x.min(y), x.max(y)) == (a, b)) {
            edges.push((a, b));
        }
    }
    let branches = edges
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            let length_km = rng.random_range(20.0..150.0);
            let rating = 100.0;
            let upgrade_step = costs.upgrade_step_fraction * rating;
            Branch {
                id: k + 1,
                from: a + 1,
                to: b + 1,
                reactance: rng.random_range(0.05..0.3),
                rating,
                upgrade_step,
                max_upgrade: costs.max_upgrade_levels,
                length_km,
                upgrade_cost: costs.branch_upgrade_cost(length_km, upgrade_step),
            }
        })
        .collect();
    let buses = (1..=n)
        .map(|id| Bus {
            id,
            base_load: 0.0,
            storage_candidate: false,
            storage_cost: costs.storage_cost_per_mwh,
            max_storage_units: 0,
            baseline_storage: 0.0,
        })
        .collect();
    Network {
        buses,
        branches,
        generators: Vec::new(),
        slack_bus: rng.random_range(1..=n),
        base_mva: 100.0,
    }
}

#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub net: Network,
    pub scenarios: Vec<Scenario>,
}

/// Storage energy price used by random instances, $/MWh. Low enough that
/// storage competes with line upgrades.
pub const RANDOM_STORAGE_COST: f64 = 20_000.0;

/// A random planning instance: 5..=12 buses, up to 20 branches, 2 or 3
/// scenarios of 24 hours, feasible at maximum investment.
///
/// Feasibility is by construction: every branch rating is at least 55% of
/// the largest flow of a proportional reference dispatch, so the fully
/// upgraded limit (190% of rating) carries that dispatch.
pub fn random_instance(seed: u64) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(5..=12);
    let m = rng.random_range(n..=(n + 8).min(20));
    let mut net = random_topology(&mut rng, n, m);

    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let n_gen = (n / 2).max(2);
    let gen_buses = &order[..n_gen];
    for b in &mut net.buses {
        if !gen_buses.contains(&(b.id - 1)) {
            b.base_load = rng.random_range(20.0..100.0);
        }
        if rng.random_bool(0.35) {
            b.storage_candidate = true;
            b.storage_cost = RANDOM_STORAGE_COST;
            b.max_storage_units = 12;
        }
    }
    let peak_factor = 1.25;
    let peak = net.total_base_load() * peak_factor;
    let wind_at = if rng.random_bool(0.5) { Some(n_gen - 1) } else { None };
    let conventional = n_gen - usize::from(wind_at.is_some());
    let shares: Vec<f64> = (0..conventional).map(|_| rng.random_range(0.5..1.5)).collect();
    let share_total: f64 = shares.iter().sum();
    for (k, &bus) in gen_buses.iter().enumerate() {
        let (kind, capacity, marginal_cost) = if Some(k) == wind_at {
            (GenKind::Wind, rng.random_range(30.0..120.0), 0.0)
        } else {
            let kind = if rng.random_bool(0.5) { GenKind::Gas } else { GenKind::Coal };
            (kind, 1.4 * peak * shares[k] / share_total, rng.random_range(5.0..120.0))
        };
        net.generators.push(Generator {
            id: k + 1,
            bus: bus + 1,
            kind,
            capacity,
            marginal_cost,
            min_output: 0.0,
        });
    }
    net.generators.sort_by_key(|g| g.bus);
    for (k, g) in net.generators.iter_mut().enumerate() {
        g.id = k + 1;
    }

    let n_scen = rng.random_range(2..=3);
    let mut scenarios = Vec::with_capacity(n_scen);
    for s in 0..n_scen {
        let level = rng.random_range(0.8..1.2);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let mut wind: f64 = rng.random_range(0.1..0.9);
        let mut sc = Scenario::flat(format!("day-{}", s + 1), 1.0 / n_scen as f64, &net, vec![0.0; n], 24);
        for t in 0..24 {
            let shape = level * (0.8 + 0.2 * ((t as f64 / 24.0) * std::f64::consts::TAU + phase).sin());
            for (i, b) in net.buses.iter().enumerate() {
                sc.load[t][i] = b.base_load * shape * rng.random_range(0.95..1.05);
            }
            wind = (wind + rng.random_range(-0.15..0.15)).clamp(0.0, 1.0);
            for (g, gen) in net.generators.iter().enumerate() {
                if gen.is_renewable() {
                    sc.gen_max[t][g] = gen.capacity * wind;
                }
            }
        }
        scenarios.push(sc);
    }

    // Calibrate ratings against a proportional reference dispatch.
    let ptdf = compute_ptdf(&net).expect("random topology is connected");
    let mut peak_flow = vec![0.0_f64; net.num_branches()];
    for sc in &scenarios {
        for t in 0..24 {
            let demand = sc.total_load(t);
            let avail: f64 = sc.gen_max[t].iter().sum();
            let mut inj: Vec<f64> = sc.load[t].iter().map(|l| -l).collect();
            for (g, gen) in net.generators.iter().enumerate() {
                inj[gen.bus - 1] += demand * sc.gen_max[t][g] / avail;
            }
            for (l, f) in ptdf.flows_unchecked(&inj).into_iter().enumerate() {
                peak_flow[l] = peak_flow[l].max(f.abs());
            }
        }
    }
    let costs = CostConfig::default();
    for (br, pf) in net.branches.iter_mut().zip(peak_flow) {
        br.rating = (pf * rng.random_range(0.55..1.1)).max(5.0);
        br.upgrade_step = costs.upgrade_step_fraction * br.rating;
        br.upgrade_cost = costs.branch_upgrade_cost(br.length_km, br.upgrade_step);
    }
    RandomInstance { net, scenarios }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f3_is_valid() {
        let net = f3();
        net.validate().unwrap();
        assert_eq!((net.num_buses(), net.num_branches()), (3, 3));
        assert!((net.branches[0].upgrade_cost - 2_237_400.0).abs() < 1e-6);
        for s in f3_scenarios() {
            s.validate(&net).unwrap();
        }
    }

    #[test]
    fn random_instances_are_valid_and_reproducible() {
        for seed in 0..10 {
            let a = random_instance(seed);
            a.net.validate().unwrap();
            assert!(a.net.num_buses() <= 12 && a.net.num_branches() <= 20);
            assert!((2..=3).contains(&a.scenarios.len()));
            crate::scenario::validate_scenarios(&a.net, &a.scenarios).unwrap();
            let b = random_instance(seed);
            assert_eq!(a.net, b.net);
            assert_eq!(a.scenarios, b.scenarios);
        }
    }

    #[test]
    fn random_network_is_connected() {
        for seed in 0..20 {
            random_network(seed, 10, 14).validate().unwrap();
        }
    }
}
