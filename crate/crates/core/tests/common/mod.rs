#![allow(dead_code)]

use dvrp_core::environment::{Environment, Point, Pose};
use dvrp_core::workload::{SpatialLaw, SpreadKind, Task, WorkloadSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Experiment-1 style workload on the unit square.
pub fn square_spec(n_tasks: usize, rho: f64, seed: u64) -> WorkloadSpec {
    WorkloadSpec {
        n_tasks,
        rho,
        s_bar: 1.0,
        s_spread: 0.1,
        spread_kind: SpreadKind::StdDev,
        m: 1,
        v: 1.0,
        spatial: SpatialLaw::Uniform,
        seed,
    }
}

/// Tasks scattered uniformly in a `w x h` rectangle, all arrived at time 0.
pub fn scatter(rng: &mut ChaCha8Rng, n: usize, w: f64, h: f64) -> Vec<Task> {
    (0..n)
        .map(|id| Task {
            id,
            location: Pose::point(rng.gen::<f64>() * w, rng.gen::<f64>() * h),
            arrival_time: 0.0,
            service_duration: 1.0,
        })
        .collect()
}

pub fn random_point(rng: &mut ChaCha8Rng, env: &Environment) -> Pose {
    match env {
        Environment::Euclidean(r) => {
            Pose::point(rng.gen::<f64>() * r.width(), rng.gen::<f64>() * r.height())
        }
        Environment::Roadmap(g) => Pose::Node(rng.gen_range(0..g.node_count())),
    }
}

pub fn origin() -> Pose {
    Pose::Point(Point::new(0.0, 0.0))
}

/// Every permutation of `items`, in lexicographic order of positions.
pub fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}
