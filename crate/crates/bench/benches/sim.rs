use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dvrp_bench::square_tasks;
use dvrp_core::environment::Environment;
use dvrp_core::policies::PolicyParams;
use dvrp_core::sim::{run_single, SimSetup};
use dvrp_core::tour_opt::SolverConfig;

fn bench_sim(c: &mut Criterion) {
    let env = Environment::unit_square();
    let solver = SolverConfig::default();
    let setup = SimSetup {
        env: &env,
        v: 1.0,
        s_bar: 1.0,
        solver: &solver,
    };
    let mut group = c.benchmark_group("sim");
    group.sample_size(10);
    let tasks = square_tasks(500, 0.8, 3);
    for name in ["proposed", "batch", "c2_event", "dc_batch"] {
        let params = PolicyParams::preset(name).unwrap();
        group.bench_with_input(BenchmarkId::new(name, tasks.len()), &params, |b, p| {
            b.iter(|| run_single(&tasks, p, &setup).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sim);
criterion_main!(benches);
