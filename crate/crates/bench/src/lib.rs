//! Shared fixtures for the criterion benches under `benches/`.

use dvrp_core::environment::Environment;
use dvrp_core::workload::{generate, SpatialLaw, SpreadKind, Task, WorkloadSpec};

/// Unit-square workload with unit mean service.
pub fn square_tasks(n_tasks: usize, rho: f64, seed: u64) -> Vec<Task> {
    let spec = WorkloadSpec {
        n_tasks,
        rho,
        s_bar: 1.0,
        s_spread: 0.1,
        spread_kind: SpreadKind::StdDev,
        m: 1,
        v: 1.0,
        spatial: SpatialLaw::Uniform,
        seed,
    };
    generate(&spec, &Environment::unit_square()).expect("valid bench workload")
}
