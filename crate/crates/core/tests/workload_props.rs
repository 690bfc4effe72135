mod common;

use dvrp_core::environment::Environment;
use dvrp_core::workload::{arrival_rate, generate, Task};

#[test]
fn same_seed_gives_identical_tasks_and_stable_json() {
    let env = Environment::unit_square();
    let spec = common::square_spec(500, 0.7, 42);
    let a = generate(&spec, &env).unwrap();
    let b = generate(&spec, &env).unwrap();
    assert_eq!(a, b);
    let json = serde_json::to_string(&a).unwrap();
    let back: Vec<Task> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a);
    assert_eq!(serde_json::to_string(&back).unwrap(), json);
}

#[test]
fn service_durations_are_strictly_positive_even_with_wide_spread() {
    let env = Environment::unit_square();
    let mut spec = common::square_spec(5000, 0.7, 3);
    spec.s_spread = 2.0;
    let tasks = generate(&spec, &env).unwrap();
    assert!(tasks.iter().all(|t| t.service_duration >= spec.s_bar / 100.0));
}

// Kolmogorov-Smirnov distance of the gaps against Exp(lambda).
fn ks_exponential(gaps: &mut [f64], lambda: f64) -> f64 {
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len() as f64;
    gaps.iter()
        .enumerate()
        .map(|(i, &g)| {
            let cdf = 1.0 - (-lambda * g).exp();
            let lo = (cdf - i as f64 / n).abs();
            let hi = ((i + 1) as f64 / n - cdf).abs();
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

#[test]
fn inter_arrival_gaps_pass_a_ks_test() {
    let env = Environment::unit_square();
    let critical = 1.628 / (3000f64).sqrt();
    let mut passes = 0;
    for seed in 0..10 {
        let spec = common::square_spec(3000, 0.8, seed);
        let lambda = arrival_rate(&spec).unwrap();
        let tasks = generate(&spec, &env).unwrap();
        let mut prev = 0.0;
        let mut gaps: Vec<f64> = tasks
            .iter()
            .map(|t| {
                let g = t.arrival_time - prev;
                prev = t.arrival_time;
                g
            })
            .collect();
        if ks_exponential(&mut gaps, lambda) < critical {
            passes += 1;
        }
    }
    assert!(passes >= 9, "only {passes}/10 seeds pass");
}

#[test]
fn spatial_law_change_keeps_arrival_times() {
    let (graph, weights) = dvrp_core::environment::synthetic::DistrictCity::default()
        .build()
        .unwrap();
    let env: Environment = graph.into();
    let mut spec = common::square_spec(200, 0.5, 9);
    spec.spatial = dvrp_core::workload::SpatialLaw::Uniform;
    let uniform = generate(&spec, &env).unwrap();
    spec.spatial = dvrp_core::workload::SpatialLaw::NodeWeights { weights };
    let weighted = generate(&spec, &env).unwrap();
    for (a, b) in uniform.iter().zip(&weighted) {
        assert_eq!(a.arrival_time, b.arrival_time);
        assert_eq!(a.service_duration, b.service_duration);
    }
}
