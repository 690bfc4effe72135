mod common;

use dvrp_core::analysis::{queue_regression, stability};
use dvrp_core::environment::synthetic::DistrictCity;
use dvrp_core::environment::{Environment, Pose};
use dvrp_core::policies::{PolicyParams, PRESET_NAMES};
use dvrp_core::sim::{
    k_means_partition, run_fleet, run_single, write_queue_csv, write_waits_csv, SimSetup,
    SimulationTrace,
};
use dvrp_core::tour_opt::SolverConfig;
use dvrp_core::workload::{arrival_rate, generate, sample_locations, SpatialLaw, Task};

fn check_invariants(trace: &SimulationTrace, tasks: &[Task]) {
    assert_eq!(trace.waits.len(), tasks.len());
    let mut ids: Vec<usize> = trace.waits.iter().map(|w| w.task_id).collect();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), tasks.len(), "a task was served twice");
    for w in &trace.waits {
        let task = &tasks[w.task_id];
        assert_eq!(w.arrival, task.arrival_time);
        assert!(w.wait() >= 0.0, "negative wait {w:?}");
        assert!((w.service_end - w.service_start - task.service_duration).abs() < 1e-9);
        assert_eq!(w.system_time(), w.service_end - w.arrival);
    }
    for c in &trace.clocks {
        let sum = c.busy + c.travel + c.idle;
        assert!((sum - c.horizon).abs() <= 1e-9 * c.horizon.max(1.0), "{c:?}");
    }
    assert_eq!(trace.lemma1.violations, 0);
}

fn square_setup<'a>(env: &'a Environment, solver: &'a SolverConfig) -> SimSetup<'a> {
    SimSetup {
        env,
        v: 1.0,
        s_bar: 1.0,
        solver,
    }
}

#[test]
fn every_preset_conserves_tasks_and_time() {
    let env = Environment::unit_square();
    let solver = SolverConfig::default();
    let setup = square_setup(&env, &solver);
    let tasks = generate(&common::square_spec(600, 0.8, 3), &env).unwrap();
    for name in PRESET_NAMES {
        let trace = run_single(&tasks, &PolicyParams::preset(name).unwrap(), &setup).unwrap();
        check_invariants(&trace, &tasks);
    }
}

fn csv_bytes(trace: &SimulationTrace) -> (Vec<u8>, Vec<u8>) {
    let mut waits = Vec::new();
    write_waits_csv(trace, &mut waits).unwrap();
    let mut queue = Vec::new();
    write_queue_csv(trace, 0, &mut queue).unwrap();
    (waits, queue)
}

#[test]
fn reruns_are_byte_identical() {
    let env = Environment::unit_square();
    let solver = SolverConfig::default();
    let setup = square_setup(&env, &solver);
    let tasks = generate(&common::square_spec(500, 0.9, 8), &env).unwrap();
    for params in [PolicyParams::eta_batch(), PolicyParams::c2_event(), PolicyParams::proposed()] {
        let a = run_single(&tasks, &params, &setup).unwrap();
        let b = run_single(&tasks, &params, &setup).unwrap();
        assert_eq!(csv_bytes(&a), csv_bytes(&b));
    }
}

#[test]
fn queue_recursion_coefficients_are_sound() {
    let env = Environment::unit_square();
    let solver = SolverConfig::default();
    let setup = square_setup(&env, &solver);
    let spec = common::square_spec(4000, 0.9, 2);
    let lambda = arrival_rate(&spec).unwrap();
    let tasks = generate(&spec, &env).unwrap();
    let trace = run_single(&tasks, &PolicyParams::proposed(), &setup).unwrap();
    let fit = queue_regression(&trace, 0.1).unwrap();
    assert!(fit.coef_span >= 0.0 && fit.coef_span <= lambda, "{fit:?}");
    assert!(fit.coef_n <= 1.0, "{fit:?}");
}

#[test]
fn proposed_holds_a_steady_queue_at_high_load() {
    let env = Environment::unit_square();
    let solver = SolverConfig::default();
    let setup = square_setup(&env, &solver);
    let tasks = generate(&common::square_spec(6000, 0.8, 1), &env).unwrap();
    let trace = run_single(&tasks, &PolicyParams::proposed(), &setup).unwrap();
    let report = stability(&trace, 10).unwrap();
    assert!(report.stable, "{report:?}");
}

#[test]
fn overload_shows_a_growing_queue() {
    let env = Environment::unit_square();
    let solver = SolverConfig::default();
    let setup = square_setup(&env, &solver);
    let tasks = generate(&common::square_spec(3000, 1.1, 1), &env).unwrap();
    let trace = run_single(&tasks, &PolicyParams::proposed(), &setup).unwrap();
    let report = stability(&trace, 10).unwrap();
    assert!(report.slope.significant(0.05) && report.slope.slope > 0.0, "{report:?}");
    assert!(!report.stable);
}

#[test]
fn single_partition_sits_at_the_sample_mean() {
    let env = Environment::unit_square();
    let sample = sample_locations(&SpatialLaw::Uniform, &env, 500, 4).unwrap();
    let parts = k_means_partition(&env, &sample, 1, 0).unwrap();
    let (sx, sy) = sample.iter().fold((0.0, 0.0), |(x, y), p| {
        let c = env.coords(p);
        (x + c.x, y + c.y)
    });
    let c = parts.parts[0].centroid;
    assert!((c.x - sx / 500.0).abs() < 1e-12 && (c.y - sy / 500.0).abs() < 1e-12);
}

#[test]
fn six_partitions_of_the_square_are_reasonably_even() {
    let env = Environment::unit_square();
    for seed in 0..10 {
        let sample = sample_locations(&SpatialLaw::Uniform, &env, 3000, seed).unwrap();
        let parts = k_means_partition(&env, &sample, 6, seed).unwrap();
        let mut counts = vec![0usize; 6];
        for p in &sample {
            counts[parts.assign(&env, p)] += 1;
        }
        let (lo, hi) = (*counts.iter().min().unwrap(), *counts.iter().max().unwrap());
        assert!(lo > 0, "seed {seed}: empty partition");
        assert!(hi as f64 / lo as f64 <= 3.0, "seed {seed}: counts {counts:?}");
    }
}

#[test]
fn roadmap_fleet_conserves_tasks_and_reports_loads() {
    let (graph, weights) = DistrictCity::default().build().unwrap();
    let env: Environment = graph.into();
    let solver = SolverConfig::default();
    let setup = SimSetup {
        env: &env,
        v: 1.0,
        s_bar: 600.0,
        solver: &solver,
    };
    let mut spec = common::square_spec(800, 0.74, 6);
    spec.s_bar = 600.0;
    spec.s_spread = 180.0;
    spec.m = 6;
    spec.spatial = SpatialLaw::NodeWeights { weights };
    let tasks = generate(&spec, &env).unwrap();
    let sample: Vec<Pose> = tasks.iter().map(|t| t.location).collect();
    let parts = k_means_partition(&env, &sample, 6, 6).unwrap();
    let trace = run_fleet(&tasks, &[PolicyParams::proposed()], &parts, &setup).unwrap();
    check_invariants(&trace, &tasks);
    assert_eq!(trace.vehicle_count(), 6);
    assert_eq!(trace.partitions.len(), 6);
    let share: f64 = trace.partitions.iter().map(|p| p.share).sum();
    assert!((share - 1.0).abs() < 1e-9);
    let mean_rho = trace.partitions.iter().map(|p| p.rho).sum::<f64>() / 6.0;
    assert!((mean_rho - 0.74).abs() < 0.1, "mean partition load {mean_rho}");
}
