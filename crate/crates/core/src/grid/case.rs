use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Branch, Bus, CostConfig, GenKind, Generator, Network};
use crate::error::{Error, Result};

/// On-disk case document. Optional fields are filled from a [`CostConfig`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub buses: Vec<BusRecord>,
    pub branches: Vec<BranchRecord>,
    pub generators: Vec<GeneratorRecord>,
    pub slack_bus: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_mva: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: usize,
    #[serde(default)]
    pub base_load: f64,
    #[serde(default)]
    pub storage_candidate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_storage_units: Option<u32>,
    #[serde(default)]
    pub baseline_storage: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRecord {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub reactance: f64,
    pub rating: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upgrade_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_upgrade: Option<u32>,
    #[serde(default)]
    pub length_km: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upgrade_cost: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorRecord {
    pub id: usize,
    pub bus: usize,
    pub kind: GenKind,
    pub capacity: f64,
    pub marginal_cost: f64,
    #[serde(default)]
    pub min_output: f64,
}

impl From<&Network> for CaseFile {
    fn from(net: &Network) -> Self {
        CaseFile {
            buses: net
                .buses
                .iter()
                .map(|b| BusRecord {
                    id: b.id,
                    base_load: b.base_load,
                    storage_candidate: b.storage_candidate,
                    storage_cost: Some(b.storage_cost),
                    max_storage_units: Some(b.max_storage_units),
                    baseline_storage: b.baseline_storage,
                })
                .collect(),
            branches: net
                .branches
                .iter()
                .map(|l| BranchRecord {
                    id: l.id,
                    from: l.from,
                    to: l.to,
                    reactance: l.reactance,
                    rating: l.rating,
                    upgrade_step: Some(l.upgrade_step),
                    max_upgrade: Some(l.max_upgrade),
                    length_km: l.length_km,
                    upgrade_cost: Some(l.upgrade_cost),
                })
                .collect(),
            generators: net
                .generators
                .iter()
                .map(|g| GeneratorRecord {
                    id: g.id,
                    bus: g.bus,
                    kind: g.kind,
                    capacity: g.capacity,
                    marginal_cost: g.marginal_cost,
                    min_output: g.min_output,
                })
                .collect(),
            slack_bus: net.slack_bus,
            base_mva: Some(net.base_mva),
        }
    }
}

fn invalid(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::InvalidCase {
        location: location.into(),
        message: message.into(),
    }
}

/// Reads a case file, filling absent costs and upgrade granularity from the
/// default cost configuration.
pub fn load_case(path: impl AsRef<Path>) -> Result<Network> {
    load_case_with(path, &CostConfig::default())
}

pub fn load_case_with(path: impl AsRef<Path>, costs: &CostConfig) -> Result<Network> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::PathIo {
        path: path.to_path_buf(),
        source,
    })?;
    parse_case_with(&text, costs)
}

pub fn parse_case(text: &str) -> Result<Network> {
    parse_case_with(text, &CostConfig::default())
}

pub fn parse_case_with(text: &str, costs: &CostConfig) -> Result<Network> {
    let file: CaseFile = serde_json::from_str(text).map_err(|e| invalid(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    build_network(file, costs)
}

fn build_network(file: CaseFile, costs: &CostConfig) -> Result<Network> {
    // Relabel bus ids onto 1..N in ascending order of the declared ids.
    let mut relabel = BTreeMap::new();
    for (k, b) in file.buses.iter().enumerate() {
        if relabel.insert(b.id, 0usize).is_some() {
            return Err(invalid(format!("buses[{k}]"), format!("duplicate bus id {}", b.id)));
        }
    }
    for (new, slot) in relabel.values_mut().enumerate() {
        *slot = new + 1;
    }
    let lookup = |id: usize, location: String| -> Result<usize> {
        relabel
            .get(&id)
            .copied()
            .ok_or_else(|| invalid(location, format!("references undeclared bus {id}")))
    };

    let mut buses: Vec<Bus> = file
        .buses
        .iter()
        .map(|b| Bus {
            id: relabel[&b.id],
            base_load: b.base_load,
            storage_candidate: b.storage_candidate,
            storage_cost: b.storage_cost.unwrap_or(costs.storage_cost_per_mwh),
            max_storage_units: b
                .max_storage_units
                .unwrap_or(if b.storage_candidate { costs.max_units_per_node } else { 0 }),
            baseline_storage: b.baseline_storage,
        })
        .collect();
    buses.sort_by_key(|b| b.id);

    let mut seen = HashSet::new();
    let mut branches = Vec::with_capacity(file.branches.len());
    for (k, r) in file.branches.iter().enumerate() {
        let loc = format!("branches[{k}] (id {})", r.id);
        if !seen.insert(r.id) {
            return Err(invalid(loc, "duplicate branch id"));
        }
        let from = lookup(r.from, loc.clone())?;
        let to = lookup(r.to, loc.clone())?;
        let upgrade_step = r.upgrade_step.unwrap_or(costs.upgrade_step_fraction * r.rating);
        branches.push(Branch {
            id: r.id,
            from,
            to,
            reactance: r.reactance,
            rating: r.rating,
            upgrade_step,
            max_upgrade: r.max_upgrade.unwrap_or(costs.max_upgrade_levels),
            length_km: r.length_km,
            upgrade_cost: r
                .upgrade_cost
                .unwrap_or_else(|| costs.branch_upgrade_cost(r.length_km, upgrade_step)),
        });
    }

    let mut seen = HashSet::new();
    let mut generators = Vec::with_capacity(file.generators.len());
    for (k, g) in file.generators.iter().enumerate() {
        let loc = format!("generators[{k}] (id {})", g.id);
        if !seen.insert(g.id) {
            return Err(invalid(loc, "duplicate generator id"));
        }
        generators.push(Generator {
            id: g.id,
            bus: lookup(g.bus, loc)?,
            kind: g.kind,
            capacity: g.capacity,
            marginal_cost: g.marginal_cost,
            min_output: g.min_output,
        });
    }

    let slack_bus = lookup(file.slack_bus, "slack_bus".into())?;
    let net = Network {
        buses,
        branches,
        generators,
        slack_bus,
        base_mva: file.base_mva.unwrap_or(100.0),
    };
    validate_network(&net)?;
    Ok(net)
}

pub(super) fn validate_network(net: &Network) -> Result<()> {
    let n = net.buses.len();
    if n == 0 {
        return Err(invalid("buses", "network has no buses"));
    }
    for (k, b) in net.buses.iter().enumerate() {
        let loc = format!("buses[{k}] (id {})", b.id);
        if b.id != k + 1 {
            return Err(invalid(loc, "bus ids must be contiguous 1..N"));
        }
        if !(b.base_load >= 0.0 && b.base_load.is_finite()) {
            return Err(invalid(loc, format!("base load must be nonnegative, got {}", b.base_load)));
        }
        if !(b.storage_cost >= 0.0) || !(b.baseline_storage >= 0.0) {
            return Err(invalid(loc, "storage cost and baseline storage must be nonnegative"));
        }
    }
    if net.slack_bus == 0 || net.slack_bus > n {
        return Err(invalid("slack_bus", format!("slack bus {} is not a declared bus", net.slack_bus)));
    }
    for (k, l) in net.branches.iter().enumerate() {
        let loc = format!("branches[{k}] (id {})", l.id);
        if l.from == 0 || l.from > n || l.to == 0 || l.to > n {
            return Err(invalid(loc, "endpoint is not a declared bus"));
        }
        if l.from == l.to {
            return Err(invalid(loc, "branch connects a bus to itself"));
        }
        if !(l.reactance > 0.0 && l.reactance.is_finite()) {
            return Err(invalid(loc, format!("reactance must be positive, got {}", l.reactance)));
        }
        if !(l.rating > 0.0 && l.rating.is_finite()) {
            return Err(invalid(loc, format!("thermal limit must be positive, got {}", l.rating)));
        }
        if !(l.upgrade_step >= 0.0) || !(l.upgrade_cost >= 0.0) || !(l.length_km >= 0.0) {
            return Err(invalid(loc, "upgrade step, cost, and length must be nonnegative"));
        }
    }
    let mut gen_buses = HashSet::new();
    for (k, g) in net.generators.iter().enumerate() {
        let loc = format!("generators[{k}] (id {})", g.id);
        if g.bus == 0 || g.bus > n {
            return Err(invalid(loc, "generator bus is not a declared bus"));
        }
        if !gen_buses.insert(g.bus) {
            return Err(invalid(loc, format!("bus {} already has a generator", g.bus)));
        }
        if !(g.capacity >= 0.0) || !(g.marginal_cost >= 0.0) || !(g.min_output >= 0.0) {
            return Err(invalid(loc, "capacity, cost, and minimum output must be nonnegative"));
        }
        if g.min_output > g.capacity {
            return Err(invalid(loc, "minimum output exceeds capacity"));
        }
        if g.is_renewable() && g.min_output != 0.0 {
            return Err(invalid(loc, "renewable generators must have zero minimum output"));
        }
    }
    if let Some(island) = first_unreached_bus(net) {
        return Err(invalid(format!("buses[{}] (id {island})", island - 1), "bus is islanded from the slack bus"));
    }
    Ok(())
}

/// Breadth-first search from the slack bus; returns the first bus id not reached.
fn first_unreached_bus(net: &Network) -> Option<usize> {
    let n = net.num_buses();
    let mut adj = vec![Vec::new(); n];
    for l in &net.branches {
        adj[l.from_index()].push(l.to_index());
        adj[l.to_index()].push(l.from_index());
    }
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([net.slack_index()]);
    seen[net.slack_index()] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.iter().position(|s| !s).map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = r#"{
        "slack_bus": 3,
        "buses": [
            {"id": 1, "storage_candidate": true},
            {"id": 2, "base_load": 90, "storage_candidate": true},
            {"id": 3, "storage_candidate": true}
        ],
        "branches": [
            {"id": 1, "from": 1, "to": 2, "reactance": 0.1, "rating": 60, "length_km": 100},
            {"id": 2, "from": 1, "to": 3, "reactance": 0.1, "rating": 60, "length_km": 100},
            {"id": 3, "from": 2, "to": 3, "reactance": 0.1, "rating": 60, "length_km": 100}
        ],
        "generators": [
            {"id": 1, "bus": 1, "kind": "gas", "capacity": 200, "marginal_cost": 10},
            {"id": 2, "bus": 3, "kind": "gas", "capacity": 200, "marginal_cost": 100}
        ]
    }"#;

    fn edit(f: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(TRIANGLE).unwrap();
        f(&mut v);
        v.to_string()
    }

    #[test]
    fn triangle_parses_with_defaults() {
        let net = parse_case(TRIANGLE).unwrap();
        assert_eq!(net.num_buses(), 3);
        assert_eq!(net.num_branches(), 3);
        let l = &net.branches[0];
        assert!((l.upgrade_step - 18.0).abs() < 1e-12);
        assert_eq!(l.max_upgrade, 3);
        assert!((l.upgrade_cost - 1243.0 * 100.0 * 18.0).abs() < 1e-6);
        assert_eq!(net.buses[1].max_storage_units, 12);
        assert_eq!(net.base_mva, 100.0);
    }

    #[test]
    fn zero_reactance_names_the_branch() {
        let text = edit(|v| v["branches"][1]["reactance"] = 0.0.into());
        let err = parse_case(&text).unwrap_err().to_string();
        assert!(err.contains("id 2"), "{err}");
        assert!(err.contains("reactance"), "{err}");
    }

    #[test]
    fn undeclared_bus_is_rejected() {
        let text = edit(|v| v["branches"][2]["to"] = 4.into());
        let err = parse_case(&text).unwrap_err().to_string();
        assert!(err.contains("undeclared bus 4"), "{err}");
    }

    #[test]
    fn duplicate_ids_and_islands_are_rejected() {
        let dup = edit(|v| v["buses"][2]["id"] = 2.into());
        assert!(parse_case(&dup).unwrap_err().to_string().contains("duplicate bus id"));

        let island = edit(|v| {
            v["buses"].as_array_mut().unwrap().push(serde_json::json!({"id": 4}));
        });
        assert!(parse_case(&island).unwrap_err().to_string().contains("islanded"));
    }

    #[test]
    fn second_generator_on_a_bus_is_rejected() {
        let text = edit(|v| {
            v["generators"].as_array_mut().unwrap().push(
                serde_json::json!({"id": 3, "bus": 1, "kind": "coal", "capacity": 5, "marginal_cost": 1}),
            );
        });
        assert!(parse_case(&text).unwrap_err().to_string().contains("already has a generator"));
    }

    #[test]
    fn renewable_with_minimum_output_is_rejected() {
        let text = edit(|v| {
            v["generators"][0]["kind"] = "wind".into();
            v["generators"][0]["min_output"] = 5.into();
        });
        assert!(parse_case(&text).is_err());
    }

    #[test]
    fn sparse_ids_are_relabelled() {
        let text = edit(|v| {
            v["buses"][0]["id"] = 10.into();
            v["branches"][0]["from"] = 10.into();
            v["branches"][1]["from"] = 10.into();
            v["generators"][0]["bus"] = 10.into();
        });
        let net = parse_case(&text).unwrap();
        // 2 < 3 < 10
        assert_eq!(net.branches[0].from, 3);
        assert_eq!(net.generators[0].bus, 3);
        assert_eq!(net.slack_bus, 2);
    }

    #[test]
    fn case_round_trips_through_json() {
        let net = parse_case(TRIANGLE).unwrap();
        let text = serde_json::to_string(&CaseFile::from(&net)).unwrap();
        assert_eq!(parse_case(&text).unwrap(), net);
    }
}
