//! Numerical checks of the tour-length bounds behind the stability
//! argument: length from cost, the TSP length bound for optimal tours, and
//! the expected queue recursion envelope.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{evaluate, Objective, PlanMethod, TourPlan};
use crate::environment::{Environment, GeometricConstants};
use crate::error::{DvrpError, Result};
use crate::sim::SimulationTrace;
use crate::workload::Task;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckConfig {
    pub p: f64,
    /// Largest composite leg (travel plus expected service).
    pub q: f64,
    pub area: f64,
    pub perimeter: f64,
    /// Relative slack allowed for floating-point error.
    pub tolerance: f64,
    pub c_t: Option<f64>,
    pub nu: Option<f64>,
}

impl BoundCheckConfig {
    pub fn new(p: f64, constants: &GeometricConstants) -> Self {
        Self {
            p,
            q: constants.service_bound,
            area: constants.area,
            perimeter: constants.perimeter,
            tolerance: 1e-9,
            c_t: None,
            nu: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(DvrpError::InvalidParameter(format!("p must be at least 1, got {}", self.p)));
        }
        if !(self.q > 0.0) {
            return Err(DvrpError::InvalidParameter(format!("Q must be positive, got {}", self.q)));
        }
        if let Some(nu) = self.nu {
            if !(0.0..1.0).contains(&nu) {
                return Err(DvrpError::InvalidParameter(format!("nu must lie in [0, 1), got {nu}")));
            }
        }
        Ok(())
    }

    /// `max(0.5, nu)` when `nu` is set.
    pub fn gamma(&self) -> Option<f64> {
        self.nu.map(|nu| nu.max(0.5))
    }
}

/// Exponent of the queue length in the expected tour-length envelope.
pub fn lemma2_exponent(p: f64, gamma: f64) -> f64 {
    (p * gamma + 1.0) / (p + 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

/// `l ≤ (Q (p+1) c^p(π)^p)^(1/(p+1))` with `l` the sum of composite legs
/// and the cost evaluated with latent waits included.
pub fn check_lemma1(plan: &TourPlan, cfg: &BoundCheckConfig) -> Result<BoundCheck> {
    cfg.validate()?;
    plan.validate()?;
    let q = cfg.q;
    for (k, leg) in plan.leg_times.iter().enumerate() {
        let composite = leg + plan.s_bar;
        if composite > q * (1.0 + cfg.tolerance) {
            return Err(DvrpError::Precondition(format!(
                "leg {k} takes {composite}, more than Q = {q}"
            )));
        }
    }
    let lhs = plan.composite_length();
    let c = evaluate(plan, &Objective::p_norm(cfg.p, true))?;
    let p = cfg.p;
    // (Q (p+1))^(1/(p+1)) * c^(p/(p+1)), arranged to avoid overflow
    let rhs = if c == 0.0 {
        0.0
    } else {
        (q * (p + 1.0)).powf(1.0 / (p + 1.0)) * c.powf(p / (p + 1.0))
    };
    Ok(BoundCheck {
        holds: lhs <= rhs * (1.0 + cfg.tolerance) + f64::MIN_POSITIVE,
        lhs,
        rhs,
    })
}

/// Closed optimal tour through the plan's tasks against `sqrt(2 A n) + P`.
/// Only exact plans are accepted. `tasks` must contain every visited task.
pub fn check_haimovich(tasks: &[Task], env: &Environment, plan: &TourPlan) -> Result<BoundCheck> {
    if plan.method != PlanMethod::Exact {
        return Err(DvrpError::NotExact);
    }
    let Environment::Euclidean(region) = env else {
        return Err(DvrpError::Precondition(
            "the tour length bound is checked on Euclidean regions only".into(),
        ));
    };
    plan.validate()?;
    let start = env.coords(&plan.start);
    let mut prev = start;
    let mut lhs = 0.0;
    for id in &plan.visits {
        let task = tasks
            .iter()
            .find(|t| t.id == *id)
            .ok_or_else(|| DvrpError::InvalidInput(format!("plan visits unknown task {id}")))?;
        let here = env.coords(&task.location);
        lhs += prev.distance(&here);
        prev = here;
    }
    lhs += prev.distance(&start);
    let rhs = (2.0 * region.area() * plan.len() as f64).sqrt() + region.perimeter();
    Ok(BoundCheck {
        holds: lhs <= rhs * (1.0 + 1e-9),
        lhs,
        rhs,
    })
}

/// Inputs for the queue recursion envelope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub lambda: f64,
    pub eta: f64,
    pub rho: f64,
    pub q: f64,
    /// Tour-length envelope scale; fitted on the first half when `None`.
    pub beta: Option<f64>,
    pub kappa: f64,
    /// Fraction of leading iterations dropped as transient.
    pub warmup_fraction: f64,
    pub batches: usize,
    pub resamples: usize,
    pub seed: u64,
}

impl EnvelopeParams {
    pub fn new(lambda: f64, eta: f64, rho: f64, q: f64) -> Self {
        Self {
            lambda,
            eta,
            rho,
            q,
            beta: None,
            kappa: 0.75,
            warmup_fraction: 0.1,
            batches: 10,
            resamples: 2000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub iterations: usize,
    pub beta: f64,
    pub kappa: f64,
    /// Share of held-out iterations with `l_k ≤ beta * N_k^kappa`.
    pub length_envelope_rate: f64,
    pub mean_n: f64,
    pub mean_next_n: f64,
    pub mean_length: f64,
    /// Right-hand side of the recursion at the sample means.
    pub recursion_rhs: f64,
    /// Batch-mean excess of `N_{k+1}` over the recursion bound.
    pub excess: Interval,
    /// Whether the excess is not significantly positive.
    pub recursion_holds: bool,
    /// Mean one-step change of the queue length.
    pub drift: Interval,
    /// Whether the queue grows significantly over the window.
    pub growing: bool,
}

fn bootstrap(values: &[f64], resamples: usize, rng: &mut ChaCha8Rng) -> Interval {
    let n = values.len();
    let estimate = values.iter().sum::<f64>() / n as f64;
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    Interval {
        estimate,
        lower: at(0.025),
        upper: at(0.975),
    }
}

/// Envelope consistency report over the iterations of vehicle 0.
pub fn check_recursion_envelope(
    trace: &SimulationTrace,
    params: &EnvelopeParams,
) -> Result<EnvelopeReport> {
    if !(params.eta > 0.0 && params.eta <= 1.0) || !(0.0..1.0).contains(&params.kappa) {
        return Err(DvrpError::InvalidParameter(
            "eta must lie in (0, 1] and kappa in [0, 1)".into(),
        ));
    }
    if params.batches < 2 || params.resamples == 0 {
        return Err(DvrpError::InvalidParameter(
            "need at least two batches and one resample".into(),
        ));
    }
    let all: Vec<_> = trace.iterations_of(0).collect();
    let skip = (params.warmup_fraction.clamp(0.0, 0.9) * all.len() as f64) as usize;
    let steady = &all[skip..];
    if steady.len() < 50 {
        return Err(DvrpError::InsufficientData(format!(
            "{} steady-state iterations, need at least 50",
            steady.len()
        )));
    }
    let n: Vec<f64> = steady.iter().map(|r| r.n_outstanding as f64).collect();
    let l: Vec<f64> = steady.iter().map(|r| r.planned_length).collect();
    let half = steady.len() / 2;
    let kappa = params.kappa;
    let scale = |nk: f64| if nk > 0.0 { nk.powf(kappa) } else { 0.0 };
    let beta = params.beta.unwrap_or_else(|| {
        (0..half)
            .filter(|&k| n[k] > 0.0)
            .map(|k| l[k] / scale(n[k]))
            .fold(0.0, f64::max)
    });
    let held = steady.len() - half;
    let inside = (half..steady.len())
        .filter(|&k| l[k] <= beta * scale(n[k]) * (1.0 + 1e-12) + 1e-12)
        .count();

    let pairs = steady.len() - 1;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let rhs_of = |mn: f64, ml: f64| {
        let (lam, eta) = (params.lambda, params.eta);
        lam * params.q + lam * eta * ml + params.rho * eta * mn + (1.0 - eta) * mn
    };
    let size = pairs / params.batches;
    if size == 0 {
        return Err(DvrpError::InsufficientData("too few iterations per batch".into()));
    }
    let mut excess = Vec::with_capacity(params.batches);
    let mut drift = Vec::with_capacity(params.batches);
    for b in 0..params.batches {
        let r = b * size..(b + 1) * size;
        let mn = mean(&n[r.clone()]);
        let ml = mean(&l[r.clone()]);
        let next = mean(&n[r.start + 1..r.end + 1]);
        excess.push(next - rhs_of(mn, ml));
        drift.push(next - mn);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let excess = bootstrap(&excess, params.resamples, &mut rng);
    let drift = bootstrap(&drift, params.resamples, &mut rng);
    let (mean_n, mean_l) = (mean(&n[..pairs]), mean(&l[..pairs]));
    Ok(EnvelopeReport {
        iterations: steady.len(),
        beta,
        kappa,
        length_envelope_rate: inside as f64 / held as f64,
        mean_n,
        mean_next_n: mean(&n[1..]),
        mean_length: mean_l,
        recursion_rhs: rhs_of(mean_n, mean_l),
        recursion_holds: excess.lower <= 0.0,
        excess,
        growing: drift.lower > 0.0,
        drift,
    })
}
