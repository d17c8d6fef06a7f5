use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use tepstor::benders::{run_benders, solve_subproblem, BendersConfig, RetainedFlows};
use tepstor::extensive::{solve_extensive, ExtensiveOptions};
use tepstor::fixtures::random_network;
use tepstor::grid::RelaxedPlan;
use tepstor::opf::{solve_dispatch, OperationalCost};
use tepstor::ptdf::{compute_ptdf, compute_ptdf_with, sparsify_ptdf};
use tepstor::solver::HighsBackend;
use tepstor_bench::prepared;

fn bench_ptdf(c: &mut Criterion) {
    let mut g = c.benchmark_group("ptdf");
    for n in [30usize, 120, 400] {
        let net = random_network(n as u64, n, n + n / 2);
        g.bench_with_input(BenchmarkId::new("dense", n), &net, |b, net| b.iter(|| compute_ptdf(black_box(net)).unwrap()));
        g.bench_with_input(BenchmarkId::new("rowwise", n), &net, |b, net| {
            b.iter(|| compute_ptdf_with(black_box(net), 0).unwrap())
        });
        let full = compute_ptdf(&net).unwrap();
        g.bench_with_input(BenchmarkId::new("sparsify", n), &full, |b, p| b.iter(|| sparsify_ptdf(black_box(p), 0.005).unwrap()));
    }
    g.finish();
}

fn bench_dispatch(c: &mut Criterion) {
    let p = prepared(1);
    let inst = p.instance();
    let backend = HighsBackend::default();
    let plan = p.inner.net.max_plan(inst.unit_mwh()).relaxed();
    let cost = OperationalCost::OpEx {
        scale: 1.0,
        shed_penalty: inst.default_shed_penalty(),
    };
    let mut g = c.benchmark_group("dispatch");
    for k_v in [1usize, 8, 32] {
        g.bench_with_input(BenchmarkId::new("lazy_k_v", k_v), &k_v, |b, &k_v| {
            b.iter(|| solve_dispatch(&backend, inst.ctx(), &inst.scenarios[0], &plan, cost, k_v).unwrap())
        });
    }
    g.finish();
}

fn bench_decomposition(c: &mut Criterion) {
    let p = prepared(2);
    let inst = p.instance();
    let backend = HighsBackend::default();
    let lambda = inst.default_shed_penalty();
    let zero = RelaxedPlan::zero(inst.net);
    let mut g = c.benchmark_group("decomposition");
    g.sample_size(10);
    g.bench_function("subproblem", |b| {
        b.iter(|| solve_subproblem(&backend, &inst, 0, &zero, lambda, 32, &mut RetainedFlows::default()).unwrap())
    });
    g.bench_function("benders", |b| b.iter(|| run_benders(&backend, &inst, lambda, &BendersConfig::default()).unwrap()));
    g.bench_function("extensive", |b| {
        b.iter(|| solve_extensive(&backend, &inst, lambda, ExtensiveOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(ptdf, bench_ptdf);
criterion_group!(dispatch, bench_dispatch);
criterion_group!(decomposition, bench_decomposition);
criterion_main!(ptdf, dispatch, decomposition);
