use super::*;

fn backend() -> HighsBackend {
    HighsBackend::default()
}

#[test]
fn single_active_lower_bound_row() {
    let mut m = OptModel::new();
    let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
    let r = m.add_row("lb", vec![(x, 1.0)], RowSense::Ge, 3.0);
    let out = backend().solve_lp(&m).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.value(x) - 3.0).abs() < 1e-9);
    assert!((out.objective - 3.0).abs() < 1e-9);
    assert!((out.dual(r) - 1.0).abs() < 1e-9);
}

#[test]
fn maximize_via_negated_cost() {
    let mut m = OptModel::new();
    let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY, -1.0);
    let r = m.add_row("ub", vec![(x, 1.0)], RowSense::Le, 2.0);
    let out = backend().solve_lp(&m).unwrap();
    assert!((out.value(x) - 2.0).abs() < 1e-9);
    assert!((out.objective + 2.0).abs() < 1e-9);
    assert!((out.dual(r) + 1.0).abs() < 1e-9);
}

#[test]
fn contradictory_rows_are_infeasible_not_errors() {
    let mut m = OptModel::new();
    let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
    m.add_row("a", vec![(x, 1.0)], RowSense::Ge, 3.0);
    m.add_row("b", vec![(x, 1.0)], RowSense::Le, 1.0);
    let out = backend().solve_lp(&m).unwrap();
    assert_eq!(out.status, SolveStatus::Infeasible);
    assert!(out.primal.is_none());
}

#[test]
fn unbounded_is_reported() {
    let mut m = OptModel::new();
    let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY, -1.0);
    m.add_row("a", vec![(x, 1.0)], RowSense::Ge, 0.0);
    let out = backend().solve_lp(&m).unwrap();
    assert_eq!(out.status, SolveStatus::Unbounded);
}

#[test]
fn malformed_models_are_rejected_before_solve() {
    let mut m = OptModel::new();
    m.add_var("x", 1.0, 0.0, 1.0);
    assert!(backend().solve_lp(&m).is_err());

    let mut m = OptModel::new();
    let _ = m.add_var("x", 0.0, 1.0, 1.0);
    m.add_row("bad", vec![(VarId(7), 1.0)], RowSense::Le, 1.0);
    assert!(backend().solve_lp(&m).is_err());
}

#[test]
fn integer_ceiling_of_bound() {
    let mut m = OptModel::new();
    let y = m.add_int_var("y", f64::NEG_INFINITY, f64::INFINITY, 1.0);
    m.add_row("lb", vec![(y, 1.0)], RowSense::Ge, 2.3);
    let out = backend().solve_mip(&m, 1e-3, 10.0).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.value(y) - 3.0).abs() < 1e-9);
    assert!(out.gap.unwrap() <= 1e-3);
}

#[test]
fn binary_knapsack() {
    let mut m = OptModel::new();
    let a = m.add_int_var("a", 0.0, 1.0, -3.0);
    let b = m.add_int_var("b", 0.0, 1.0, -2.0);
    m.add_row("pick_one", vec![(a, 1.0), (b, 1.0)], RowSense::Le, 1.0);
    let out = backend().solve_mip(&m, 1e-3, 10.0).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.value(a) - 1.0).abs() < 1e-9);
    assert!(out.value(b).abs() < 1e-9);
    assert!((-out.objective - 3.0).abs() < 1e-9);
    assert!(out.gap.unwrap() <= 1e-3);
    assert!(out.best_bound.unwrap() <= out.objective + 1e-9);
}

#[test]
fn infeasible_mip_has_no_point() {
    let mut m = OptModel::new();
    let y = m.add_int_var("y", 0.0, 1.0, 1.0);
    m.add_row("lb", vec![(y, 1.0)], RowSense::Ge, 0.4);
    m.add_row("ub", vec![(y, 1.0)], RowSense::Le, 0.6);
    let out = backend().solve_mip(&m, 1e-3, 10.0).unwrap();
    assert_eq!(out.status, SolveStatus::Infeasible);
    assert!(out.primal.is_none());
}

fn transport_lp() -> OptModel {
    // Two supplies, three demands.
    let mut m = OptModel::new();
    let cost = [[4.0, 6.0, 9.0], [5.0, 3.0, 7.0]];
    let supply = [50.0, 60.0];
    let demand = [30.0, 40.0, 35.0];
    let mut x = vec![];
    for (i, row) in cost.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            x.push(((i, j), m.add_var(format!("x{i}{j}"), 0.0, f64::INFINITY, c)));
        }
    }
    for (i, &s) in supply.iter().enumerate() {
        let coeffs = x.iter().filter(|((a, _), _)| *a == i).map(|(_, v)| (*v, 1.0)).collect();
        m.add_row(format!("s{i}"), coeffs, RowSense::Le, s);
    }
    for (j, &d) in demand.iter().enumerate() {
        let coeffs = x.iter().filter(|((_, b), _)| *b == j).map(|(_, v)| (*v, 1.0)).collect();
        m.add_row(format!("d{j}"), coeffs, RowSense::Ge, d);
    }
    m
}

#[test]
fn strong_duality_and_complementary_slackness() {
    let m = transport_lp();
    let out = backend().solve_lp(&m).unwrap();
    assert!(out.is_optimal());
    let x = out.primal.as_ref().unwrap();
    let y = out.duals.as_ref().unwrap();
    assert!(m.max_primal_residual(x) <= 1e-6);
    assert!((m.dual_objective(y) - out.objective).abs() <= 1e-6);
    for (i, row) in m.rows.iter().enumerate() {
        let slack = m.row_activity(RowId(i), x) - row.rhs;
        assert!((slack * y[i]).abs() <= 1e-6, "row {i}");
        match row.sense {
            RowSense::Le => assert!(y[i] <= 1e-9),
            RowSense::Ge => assert!(y[i] >= -1e-9),
            RowSense::Eq => {}
        }
    }
}

#[test]
fn resolve_is_deterministic() {
    let m = transport_lp();
    let a = backend().solve_lp(&m).unwrap();
    let b = backend().solve_lp(&m).unwrap();
    assert!((a.objective - b.objective).abs() <= 1e-9);
    assert_eq!(a.primal, b.primal);
}

#[test]
fn concurrent_instances_on_disjoint_models() {
    use rayon::prelude::*;
    let reference = backend().solve_lp(&transport_lp()).unwrap().objective;
    let objs: Vec<f64> = (0..8)
        .into_par_iter()
        .map(|_| backend().solve_lp(&transport_lp()).unwrap().objective)
        .collect();
    assert!(objs.iter().all(|o| (o - reference).abs() < 1e-9));
}

#[test]
fn lp_dump_mentions_every_row_and_integer() {
    let mut m = transport_lp();
    m.add_int_var("n", 0.0, 4.0, 1.0);
    let text = write_lp(&m);
    assert!(text.starts_with("\\"));
    assert!(text.contains("Subject To"));
    assert!(text.contains("s0_0:"));
    assert!(text.contains("d2_4:"));
    assert!(text.contains("General"));
    assert!(text.trim_end().ends_with("End"));
}
