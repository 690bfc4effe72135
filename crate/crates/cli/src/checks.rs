//! Verification suites behind `dvrp check`: tour-length and area bounds,
//! solver optimality gap, norm ordering and queue stability.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use dvrp_core::analysis::{stability, StabilityReport};
use dvrp_core::bounds::{check_haimovich, check_lemma1, BoundCheckConfig};
use dvrp_core::cost::{evaluate, Objective, TourPlan};
use dvrp_core::environment::{Environment, EuclideanRegion, Pose};
use dvrp_core::policies::PolicyParams;
use dvrp_core::sim::{run_single, SimSetup};
use dvrp_core::tour_opt::{optimize, optimize_exact, SolverConfig, TourProblem};
use dvrp_core::workload::{generate, SpatialLaw, SpreadKind, Task, WorkloadSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

pub const SUITES: [&str; 5] = ["lemma1", "haimovich", "oracle_gap", "norm_sandwich", "stability"];

/// Deliberate defects used to confirm the suites can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Evaluates the tour cost with exponent p+1 where p is expected.
    ExponentOffByOne,
}

#[derive(Clone, Debug)]
pub struct StabilitySettings {
    pub rho: f64,
    pub n_tasks: usize,
    pub seed: u64,
    pub control_rho: f64,
    pub control_tasks: usize,
}

impl Default for StabilitySettings {
    fn default() -> Self {
        Self {
            rho: 0.95,
            n_tasks: 10_000,
            seed: 1,
            control_rho: 1.1,
            control_tasks: 3000,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct CheckOptions {
    /// Runs only suites whose name contains this text.
    pub filter: Option<String>,
    pub fault: Option<Fault>,
    /// Directory for one `<suite>.json` report each.
    pub out: Option<PathBuf>,
    pub stability: StabilitySettings,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub summary: String,
    pub details: serde_json::Value,
}

pub fn selected(filter: Option<&str>) -> Vec<&'static str> {
    SUITES
        .iter()
        .copied()
        .filter(|s| filter.is_none_or(|f| s.contains(f)))
        .collect()
}

pub fn run_checks(opts: &CheckOptions) -> Result<Vec<CheckReport>> {
    let names = selected(opts.filter.as_deref());
    if names.is_empty() {
        anyhow::bail!(
            "no suite matches {:?}; known suites: {}",
            opts.filter.as_deref().unwrap_or(""),
            SUITES.join(", ")
        );
    }
    if let Some(dir) = &opts.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut reports = Vec::new();
    for name in names {
        log::info!("running {name}");
        let report = match name {
            "lemma1" => lemma1(10_000, opts.fault)?,
            "haimovich" => haimovich(100)?,
            "oracle_gap" => oracle_gap(200)?,
            "norm_sandwich" => norm_sandwich(1000)?,
            "stability" => stability_run(&opts.stability)?,
            _ => unreachable!(),
        };
        if let Some(dir) = &opts.out {
            let path = dir.join(format!("{name}.json"));
            fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
        }
        reports.push(report);
    }
    Ok(reports)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn point(rng: &mut ChaCha8Rng, w: f64, h: f64) -> Pose {
    Pose::point(rng.gen::<f64>() * w, rng.gen::<f64>() * h)
}

fn scatter(rng: &mut ChaCha8Rng, n: usize, w: f64, h: f64) -> Vec<Task> {
    (0..n)
        .map(|id| Task {
            id,
            location: point(rng, w, h),
            arrival_time: 0.0,
            service_duration: 1.0,
        })
        .collect()
}

/// Random tours through the unit square with random latents and service.
pub fn lemma1(tours: usize, fault: Option<Fault>) -> Result<CheckReport> {
    let env = Environment::unit_square();
    let exponents = [1.0, 1.5, 2.0, 4.0];
    let mut rng = rng(0x1e44a1);
    let mut violations = Vec::new();
    let mut max_ratio = 0.0f64;
    for k in 0..tours {
        let n = rng.gen_range(1..=30);
        let p = exponents[k % exponents.len()];
        let s_bar = rng.gen::<f64>() * 2.0;
        let latent_scale = rng.gen::<f64>() * 10.0;
        let start = point(&mut rng, 1.0, 1.0);
        let mut prev = start;
        let mut legs = Vec::with_capacity(n);
        for _ in 0..n {
            let next = point(&mut rng, 1.0, 1.0);
            legs.push(env.leg_time(&prev, &next, 1.0));
            prev = next;
        }
        let latents = (0..n).map(|_| rng.gen::<f64>() * latent_scale).collect();
        let plan = TourPlan::manual(start, (0..n).collect(), latents, legs, s_bar)?;
        let cfg = BoundCheckConfig::new(p, &env.geometric_constants(s_bar, 1.0)?);
        let check = match fault {
            None => check_lemma1(&plan, &cfg)?,
            Some(Fault::ExponentOffByOne) => faulty_lemma1(&plan, &cfg)?,
        };
        max_ratio = max_ratio.max(check.lhs / check.rhs);
        if !check.holds && violations.len() < 20 {
            violations.push(json!({ "tour": k, "n": n, "p": p, "lhs": check.lhs, "rhs": check.rhs }));
        }
    }
    let passed = violations.is_empty();
    Ok(CheckReport {
        name: "lemma1".into(),
        passed,
        summary: format!(
            "{tours} tours, n <= 30, p in {{1, 1.5, 2, 4}}: largest length/bound ratio {max_ratio:.6}{}",
            if passed { String::new() } else { format!(", {} violations shown", violations.len()) }
        ),
        details: json!({
            "tours": tours,
            "max_ratio": max_ratio,
            "tolerance": 1e-9,
            "fault": fault.map(|_| "exponent_off_by_one"),
            "violations": violations,
        }),
    })
}

fn faulty_lemma1(plan: &TourPlan, cfg: &BoundCheckConfig) -> Result<dvrp_core::bounds::BoundCheck> {
    let p = cfg.p;
    let lhs = plan.composite_length();
    let c = evaluate(plan, &Objective::p_norm(p + 1.0, true))?;
    let rhs = (cfg.q * (p + 1.0)).powf(1.0 / (p + 1.0)) * c.powf(p / (p + 1.0));
    Ok(dvrp_core::bounds::BoundCheck {
        holds: lhs <= rhs * (1.0 + cfg.tolerance),
        lhs,
        rhs,
    })
}

/// Exact closed tours in a square and in a long thin rectangle.
pub fn haimovich(per_shape: u64) -> Result<CheckReport> {
    let mut shapes = Vec::new();
    let mut passed = true;
    for (w, h) in [(1.0, 1.0), (4.0, 0.25)] {
        let env: Environment = EuclideanRegion::new(w, h)?.into();
        let mut violations = Vec::new();
        let mut max_ratio = 0.0f64;
        for seed in 0..per_shape {
            let mut rng = rng(0x4a1 + seed);
            let n = rng.gen_range(1..=9);
            let tasks = scatter(&mut rng, n, w, h);
            let start = point(&mut rng, w, h);
            let latents = vec![0.0; n];
            let problem = TourProblem {
                env: &env,
                start,
                tasks: &tasks,
                latents: &latents,
                objective: Objective::PathLength,
                s_bar: 0.0,
                v: 1.0,
            };
            let plan = optimize_exact(&problem)?;
            let check = check_haimovich(&tasks, &env, &plan)?;
            max_ratio = max_ratio.max(check.lhs / check.rhs);
            if !check.holds {
                violations.push(json!({ "seed": seed, "n": n, "lhs": check.lhs, "rhs": check.rhs }));
            }
        }
        passed &= violations.is_empty();
        shapes.push(json!({
            "width": w,
            "height": h,
            "tours": per_shape,
            "max_ratio": max_ratio,
            "violations": violations,
        }));
    }
    Ok(CheckReport {
        name: "haimovich".into(),
        passed,
        summary: format!("{} exact tours over 2 rectangles, n <= 9", 2 * per_shape),
        details: json!({ "shapes": shapes }),
    })
}

/// Heuristic against exhaustive search on n=8 path-length instances.
pub fn oracle_gap(instances: u64) -> Result<CheckReport> {
    let env = Environment::unit_square();
    let cfg = SolverConfig::default();
    let mut gaps = Vec::with_capacity(instances as usize);
    let mut beaten = Vec::new();
    let latents = [0.0; 8];
    for seed in 0..instances {
        let mut rng = rng(1000 + seed);
        let tasks = scatter(&mut rng, 8, 1.0, 1.0);
        let start = point(&mut rng, 1.0, 1.0);
        let problem = TourProblem {
            env: &env,
            start,
            tasks: &tasks,
            latents: &latents,
            objective: Objective::PathLength,
            s_bar: 1.0,
            v: 1.0,
        };
        let exact = evaluate(&optimize_exact(&problem)?, &Objective::PathLength)?;
        let heur = evaluate(&optimize(&problem, &cfg)?, &Objective::PathLength)?;
        if heur < exact * (1.0 - 1e-12) {
            beaten.push(json!({ "seed": seed, "heuristic": heur, "exact": exact }));
        }
        gaps.push(heur / exact);
    }
    gaps.sort_by(f64::total_cmp);
    let median = dvrp_core::analysis::quantile(&gaps, 0.5);
    let max = gaps.last().copied().unwrap_or(1.0);
    let passed = beaten.is_empty() && median <= 1.05 && max <= 1.25;
    Ok(CheckReport {
        name: "oracle_gap".into(),
        passed,
        summary: format!("{instances} instances: median gap {median:.4}, max {max:.4}"),
        details: json!({
            "instances": instances,
            "median_gap": median,
            "max_gap": max,
            "median_limit": 1.05,
            "max_limit": 1.25,
            "oracle_beaten": beaten,
        }),
    })
}

/// Sum-cost identity and the ordering `max <= c^p <= n^(1/p) max`, falling in p.
pub fn norm_sandwich(plans: usize) -> Result<CheckReport> {
    let mut rng = rng(0x5a4d);
    let exponents = [1.0, 1.5, 2.0, 4.0, 8.0, 16.0, 32.0];
    let mut failures = Vec::new();
    let mut worst_identity = 0.0f64;
    for k in 0..plans {
        let n = rng.gen_range(1..40);
        let latents = (0..n).map(|_| rng.gen::<f64>() * 10.0).collect();
        let legs = (0..n).map(|_| rng.gen::<f64>()).collect();
        let s_bar = rng.gen::<f64>() * 2.0;
        let plan = TourPlan::manual(Pose::point(0.5, 0.5), (0..n).collect(), latents, legs, s_bar)?;
        for include in [false, true] {
            let sum: f64 = plan.planned_waits(include).iter().sum();
            let c1 = evaluate(&plan, &Objective::p_norm(1.0, include))?;
            let err = (c1 - sum).abs() / sum.max(1.0);
            worst_identity = worst_identity.max(err);
            if err > 1e-12 {
                failures.push(json!({ "plan": k, "kind": "identity", "c1": c1, "sum": sum }));
            }
        }
        let max = evaluate(&plan, &Objective::MaxWait { include_latent: true })?;
        let mut prev = f64::INFINITY;
        for p in exponents {
            let c = evaluate(&plan, &Objective::p_norm(p, true))?;
            let upper = (n as f64).powf(1.0 / p) * max;
            let ok = c >= max * (1.0 - 1e-12) && c <= upper * (1.0 + 1e-12) && c <= prev * (1.0 + 1e-12);
            if !ok {
                failures.push(json!({ "plan": k, "kind": "sandwich", "p": p, "cost": c, "max_wait": max }));
            }
            prev = c;
        }
    }
    failures.truncate(20);
    Ok(CheckReport {
        name: "norm_sandwich".into(),
        passed: failures.is_empty(),
        summary: format!("{plans} plans, p in {exponents:?}: worst identity error {worst_identity:.2e}"),
        details: json!({ "plans": plans, "worst_identity_error": worst_identity, "failures": failures }),
    })
}

/// Long single-vehicle run of the proposed policy near saturation, with an
/// overloaded control that must show a growing queue.
pub fn stability_run(s: &StabilitySettings) -> Result<CheckReport> {
    let main = queue_report(s.rho, s.n_tasks, s.seed)?;
    let control = queue_report(s.control_rho, s.control_tasks, s.seed)?;
    let control_grows = control.slope.slope > 0.0 && control.slope.significant(0.05);
    Ok(CheckReport {
        name: "stability".into(),
        passed: main.stable && control_grows,
        summary: format!(
            "rho={} n={}: slope {:.3e} (p={:.3}, {}); control rho={}: slope {:.3e} (p={:.2e}, {})",
            s.rho,
            s.n_tasks,
            main.slope.slope,
            main.slope.p_value,
            if main.stable { "flat" } else { "not flat" },
            s.control_rho,
            control.slope.slope,
            control.slope.p_value,
            if control_grows { "growing" } else { "not growing" },
        ),
        details: json!({ "settings": {
            "rho": s.rho, "n_tasks": s.n_tasks, "seed": s.seed,
            "control_rho": s.control_rho, "control_tasks": s.control_tasks,
        }, "main": main, "control": control }),
    })
}

/// Unit-square, single-vehicle run of the proposed preset.
pub fn queue_report(rho: f64, n_tasks: usize, seed: u64) -> Result<StabilityReport> {
    let env = Environment::unit_square();
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
    let tasks = generate(&spec, &env)?;
    let solver = SolverConfig::default();
    let setup = SimSetup {
        env: &env,
        v: 1.0,
        s_bar: 1.0,
        solver: &solver,
    };
    let trace = run_single(&tasks, &PolicyParams::preset("proposed")?, &setup)?;
    Ok(stability(&trace, 10)?)
}
