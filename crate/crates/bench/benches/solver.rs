use criterion::{criterion_group, criterion_main, Criterion};
use ecoplan::hjb::{build_grid, rollout, solve};
use ecoplan::sequential::{run_receding_horizon, RecedingConfig};
use ecoplan::strategies::{brute_force_optimal, tune_four_phase};
use ecoplan::{ProblemSpec, State};
use ecoplan_bench::default_problem;

fn hjb(c: &mut Criterion) {
    let p = default_problem();
    let mut group = c.benchmark_group("hjb");
    group.sample_size(10);
    for res in [(106, 41, 301), (211, 81, 601)] {
        let grid = build_grid(&p, res).unwrap();
        group.bench_function(format!("solve {res:?}"), |b| b.iter(|| solve(&p, &grid).unwrap()));
    }
    let field = solve(&p, &build_grid(&p, (211, 81, 601)).unwrap()).unwrap();
    group.bench_function("rollout", |b| {
        b.iter(|| rollout(&field, &State::start_of(&p), &p).unwrap())
    });
    group.finish();
}

fn strategies(c: &mut Criterion) {
    let p = default_problem();
    let mut group = c.benchmark_group("strategies");
    group.sample_size(10);
    group.bench_function("tune_four_phase", |b| {
        b.iter(|| tune_four_phase(&ProblemSpec::default_scenario()).unwrap())
    });
    group.bench_function("oracle 10 stages", |b| b.iter(|| brute_force_optimal(&p, 10).unwrap()));
    group.finish();
}

fn receding(c: &mut Criterion) {
    let p = default_problem();
    let config = RecedingConfig::new(10.0, (106, 41, 301)).unwrap();
    let mut group = c.benchmark_group("sequential");
    group.sample_size(10);
    group.bench_function("receding horizon, coarse grid", |b| {
        b.iter(|| run_receding_horizon(&p, &[], &config).unwrap())
    });
    group.finish();
}

criterion_group!(benches, hjb, strategies, receding);
criterion_main!(benches);
