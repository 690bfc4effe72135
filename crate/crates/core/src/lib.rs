//! Dynamic vehicle routing with tunable wait-time objectives: environments,
//! workloads, tour costs and optimisation, routing policies, an event-driven
//! simulator, analytical bound checks and result analysis.

// `!(x > 0.0)` style guards are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bounds;
pub mod cost;
pub mod environment;
pub mod error;
pub mod policies;
pub mod sim;
pub mod tour_opt;
pub mod workload;

pub use analysis::{compare, summarize, WaitStats};
pub use cost::{evaluate, Objective, PlanMethod, TourPlan};
pub use environment::{Environment, EuclideanRegion, Point, Pose, RoadmapGraph};
pub use error::{DvrpError, Result};
pub use policies::{Exponent, PolicyKind, PolicyParams};
pub use sim::{run_fleet, run_single, SimSetup, SimulationTrace};
pub use tour_opt::{optimize, optimize_exact, SolverConfig, TourProblem};
pub use workload::{generate, Task, TaskId, WorkloadSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
