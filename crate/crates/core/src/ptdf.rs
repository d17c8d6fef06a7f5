//! Injection-to-flow sensitivities for the DC network model.
//!
//! `PTDF = B_f · B_red⁻¹`, padded with a zero slack column, where `B_red` is
//! the nodal susceptance matrix with the slack row and column removed and
//! `B_f` the branch-incidence rows scaled by `1/x`. The reduced matrix is
//! factored once; each branch row is one triangular solve pair.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Network;

/// Magnitudes at or below this are treated as exact zeros of the factorization.
const NUMERICAL_ZERO: f64 = 1e-13;

/// Above this bus count rows are solved one at a time instead of forming the
/// dense inverse.
pub const DEFAULT_DENSE_THRESHOLD: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct PtdfMatrix {
    /// Per branch: `(bus index, factor)` sorted by bus index.
    rows: Vec<Vec<(usize, f64)>>,
    num_buses: usize,
    slack: usize,
    cutoff: f64,
    nnz_before_cutoff: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SparsityReport {
    pub cutoff: f64,
    pub nnz_before: usize,
    pub nnz_after: usize,
    pub reduction_ratio: f64,
}

pub fn compute_ptdf(net: &Network) -> Result<PtdfMatrix> {
    compute_ptdf_with(net, DEFAULT_DENSE_THRESHOLD)
}

pub fn compute_ptdf_with(net: &Network, dense_threshold: usize) -> Result<PtdfMatrix> {
    let n = net.num_buses();
    let slack = net.slack_index();
    // Reduced index: bus i -> i or i-1 after removing the slack.
    let reduced = |i: usize| -> Option<usize> {
        match i.cmp(&slack) {
            std::cmp::Ordering::Less => Some(i),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(i - 1),
        }
    };
    let m = n - 1;
    let mut b = DMatrix::<f64>::zeros(m, m);
    for l in &net.branches {
        let y = 1.0 / l.reactance;
        let (f, t) = (reduced(l.from_index()), reduced(l.to_index()));
        if let Some(f) = f {
            b[(f, f)] += y;
        }
        if let Some(t) = t {
            b[(t, t)] += y;
        }
        if let (Some(f), Some(t)) = (f, t) {
            b[(f, t)] -= y;
            b[(t, f)] -= y;
        }
    }
    let chol = if m == 0 {
        None
    } else {
        Some(b.cholesky().ok_or(Error::SingularSusceptance)?)
    };

    let expand = |red: &[f64]| -> Vec<(usize, f64)> {
        (0..n)
            .filter_map(|i| reduced(i).map(|r| (i, red[r])))
            .filter(|(_, v)| v.abs() > NUMERICAL_ZERO)
            .collect()
    };

    let rows: Vec<Vec<(usize, f64)>> = match &chol {
        None => vec![Vec::new(); net.num_branches()],
        Some(chol) if n <= dense_threshold => {
            let inv = chol.inverse();
            net.branches
                .iter()
                .map(|l| {
                    let y = 1.0 / l.reactance;
                    let mut red = vec![0.0; m];
                    if let Some(f) = reduced(l.from_index()) {
                        for (k, v) in red.iter_mut().enumerate() {
                            *v += y * inv[(f, k)];
                        }
                    }
                    if let Some(t) = reduced(l.to_index()) {
                        for (k, v) in red.iter_mut().enumerate() {
                            *v -= y * inv[(t, k)];
                        }
                    }
                    expand(&red)
                })
                .collect()
        }
        Some(chol) => net
            .branches
            .par_iter()
            .map(|l| {
                let y = 1.0 / l.reactance;
                let mut rhs = DVector::<f64>::zeros(m);
                if let Some(f) = reduced(l.from_index()) {
                    rhs[f] += y;
                }
                if let Some(t) = reduced(l.to_index()) {
                    rhs[t] -= y;
                }
                // B_red is symmetric, so row l of B_f B_red⁻¹ solves B_red r = B_fᵀ e_l.
                let sol = chol.solve(&rhs);
                expand(sol.as_slice())
            })
            .collect(),
    };
    let nnz = rows.iter().map(Vec::len).sum();
    Ok(PtdfMatrix {
        rows,
        num_buses: n,
        slack,
        cutoff: 0.0,
        nnz_before_cutoff: nnz,
    })
}

/// Drops every factor with magnitude below `k_p`.
pub fn sparsify_ptdf(ptdf: &PtdfMatrix, k_p: f64) -> Result<PtdfMatrix> {
    if !(0.0..1.0).contains(&k_p) {
        return Err(Error::InvalidInput(format!("PTDF cutoff must lie in [0, 1), got {k_p}")));
    }
    let rows = ptdf
        .rows
        .iter()
        .map(|r| r.iter().copied().filter(|(_, v)| v.abs() >= k_p).collect())
        .collect();
    Ok(PtdfMatrix {
        rows,
        num_buses: ptdf.num_buses,
        slack: ptdf.slack,
        cutoff: ptdf.cutoff.max(k_p),
        nnz_before_cutoff: ptdf.nnz_before_cutoff,
    })
}

/// Branch flows `Φ · inj` for a balanced injection vector.
pub fn line_flows(ptdf: &PtdfMatrix, inj: &[f64]) -> Result<Vec<f64>> {
    if inj.len() != ptdf.num_buses {
        return Err(Error::DimensionMismatch(format!(
            "injection has {} entries, network has {} buses",
            inj.len(),
            ptdf.num_buses
        )));
    }
    let total: f64 = inj.iter().sum();
    let scale = inj.iter().map(|v| v.abs()).fold(1.0, f64::max);
    if total.abs() > crate::FEASIBILITY_TOL * scale {
        return Err(Error::UnbalancedInjection(total));
    }
    Ok(ptdf.flows_unchecked(inj))
}

impl PtdfMatrix {
    pub fn num_branches(&self) -> usize {
        self.rows.len()
    }

    pub fn num_buses(&self) -> usize {
        self.num_buses
    }

    /// Slack bus index (0-based).
    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn row(&self, branch: usize) -> &[(usize, f64)] {
        &self.rows[branch]
    }

    pub fn get(&self, branch: usize, bus: usize) -> f64 {
        let row = &self.rows[branch];
        row.binary_search_by_key(&bus, |&(i, _)| i)
            .map(|k| row[k].1)
            .unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn sparsity(&self) -> SparsityReport {
        let after = self.nnz();
        SparsityReport {
            cutoff: self.cutoff,
            nnz_before: self.nnz_before_cutoff,
            nnz_after: after,
            reduction_ratio: if self.nnz_before_cutoff == 0 {
                0.0
            } else {
                1.0 - after as f64 / self.nnz_before_cutoff as f64
            },
        }
    }

    /// Flow on one branch; the caller guarantees balance.
    pub fn flow(&self, branch: usize, inj: &[f64]) -> f64 {
        self.rows[branch].iter().map(|&(i, v)| v * inj[i]).sum()
    }

    pub(crate) fn flows_unchecked(&self, inj: &[f64]) -> Vec<f64> {
        (0..self.rows.len()).map(|l| self.flow(l, inj)).collect()
    }

    /// Writes `branch,bus,value` lines (1-based ids) for every stored factor.
    pub fn write_csv<W: Write>(&self, net: &Network, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["branch", "bus", "value"])?;
        for (l, row) in self.rows.iter().enumerate() {
            for &(i, v) in row {
                w.write_record([net.branches[l].id.to_string(), (i + 1).to_string(), format!("{v:.12e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Largest per-branch flow difference between two matrices over the given
/// balanced injections.
pub fn max_flow_deviation(reference: &PtdfMatrix, approx: &PtdfMatrix, probes: &[Vec<f64>]) -> f64 {
    probes
        .iter()
        .flat_map(|inj| {
            let a = reference.flows_unchecked(inj);
            let b = approx.flows_unchecked(inj);
            a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

/// Balanced pseudo-random probe injections (one source bus against the
/// system, rotating) for reporting the effect of a cutoff.
pub fn probe_injections(num_buses: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut inj: Vec<f64> = (0..num_buses).map(|_| rng.random_range(-100.0..100.0)).collect();
            let mean = inj.iter().sum::<f64>() / num_buses as f64;
            inj.iter_mut().for_each(|v| *v -= mean);
            inj
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn two_bus_line_carries_everything() {
        let net = fixtures::two_bus();
        let p = compute_ptdf(&net).unwrap();
        assert!((p.get(0, 0) - 1.0).abs() < 1e-12);
        assert_eq!(p.get(0, 1), 0.0);
    }

    #[test]
    fn triangle_splits_one_third_two_thirds() {
        let net = fixtures::f3();
        let p = compute_ptdf(&net).unwrap();
        // Branches: 1-2, 1-3, 2-3; slack = bus 3.
        assert!((p.get(0, 0) - 1.0 / 3.0).abs() < 1e-9);
        assert!((p.get(1, 0) - 2.0 / 3.0).abs() < 1e-9);
        assert!((p.get(2, 0) - 1.0 / 3.0).abs() < 1e-9);
        for l in 0..3 {
            assert_eq!(p.get(l, 2), 0.0);
        }
    }

    #[test]
    fn triangle_flows_for_a_transfer() {
        let p = compute_ptdf(&fixtures::f3()).unwrap();
        let f = line_flows(&p, &[90.0, -90.0, 0.0]).unwrap();
        assert!((f[0] - 60.0).abs() < 1e-9);
        assert!((f[1] - 30.0).abs() < 1e-9);
        assert!((f[2] + 30.0).abs() < 1e-9);
        let zero = line_flows(&p, &[0.0; 3]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unbalanced_injection_is_rejected() {
        let p = compute_ptdf(&fixtures::f3()).unwrap();
        assert!(matches!(line_flows(&p, &[1.0, 0.0, 0.0]), Err(Error::UnbalancedInjection(_))));
    }

    #[test]
    fn cutoff_drops_small_entries_only() {
        let p = PtdfMatrix {
            rows: vec![vec![(0, 0.5), (1, 0.003), (2, -0.2)]],
            num_buses: 4,
            slack: 3,
            cutoff: 0.0,
            nnz_before_cutoff: 3,
        };
        let s = sparsify_ptdf(&p, 0.005).unwrap();
        assert_eq!(s.row(0), &[(0, 0.5), (2, -0.2)]);
        assert_eq!(sparsify_ptdf(&p, 0.0).unwrap().row(0), p.row(0));
        let r = s.sparsity();
        assert_eq!((r.nnz_before, r.nnz_after), (3, 2));
        assert!((r.reduction_ratio - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_cutoff_removes_nothing() {
        let p = compute_ptdf(&fixtures::f3()).unwrap();
        let s = sparsify_ptdf(&p, 0.005).unwrap();
        assert_eq!(s.sparsity().reduction_ratio, 0.0);
        assert!(sparsify_ptdf(&p, 1.0).is_err());
    }

    #[test]
    fn row_by_row_path_matches_dense_inverse() {
        let inst = fixtures::random_network(7, 12, 18);
        let dense = compute_ptdf_with(&inst, usize::MAX).unwrap();
        let rowwise = compute_ptdf_with(&inst, 0).unwrap();
        for l in 0..inst.num_branches() {
            for i in 0..inst.num_buses() {
                assert!((dense.get(l, i) - rowwise.get(l, i)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn csv_export_lists_stored_factors() {
        let net = fixtures::f3();
        let p = compute_ptdf(&net).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&net, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + p.nnz());
        assert!(text.starts_with("branch,bus,value"));
    }
}
