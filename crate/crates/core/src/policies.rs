//! Routing policies as decision functions: given the outstanding queue and
//! the vehicle's pose, pick the next run of tasks to commit to.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::cost::{Objective, TourPlan};
use crate::environment::{sector_index, sectors, Environment, Pose, Sector};
use crate::error::{DvrpError, Result};
use crate::tour_opt::{optimize_warm, SolverConfig, TourProblem};
use crate::workload::{Task, TaskId};

/// Tour-cost exponent. `Infinite` selects the path-length objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinite,
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(p) => s.serialize_f64(*p),
            Exponent::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(p) => Ok(Exponent::Finite(p)),
            Repr::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Infinity") => {
                Ok(Exponent::Infinite)
            }
            Repr::Text(t) => Err(de::Error::custom(format!(
                "exponent must be a number or \"inf\", got {t:?}"
            ))),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PolicyKind {
    Generalized,
    /// Round-robin over `sectors` equal-angle sectors, clearing one sector
    /// per iteration with a length-minimizing tour.
    DcBatch { sectors: usize },
    /// Replans over the whole queue whenever a task arrives.
    EventTriggered,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    pub p: Exponent,
    pub eta: f64,
    /// Whether latent waits enter the planning objective.
    pub p_t: bool,
    /// Whether the fragment start is drawn at random.
    pub r: bool,
    pub kind: PolicyKind,
}

pub const PRESET_NAMES: [&str; 6] = [
    "proposed",
    "proposed_eta02",
    "batch",
    "eta_batch",
    "dc_batch",
    "c2_event",
];

/// Sector count used by the `dc_batch` preset.
pub const DC_SECTORS: usize = 10;

impl PolicyParams {
    pub fn generalized(p: Exponent, eta: f64, p_t: bool, r: bool) -> Self {
        Self {
            p,
            eta,
            p_t,
            r,
            kind: PolicyKind::Generalized,
        }
    }

    pub fn batch() -> Self {
        Self::generalized(Exponent::Infinite, 1.0, false, false)
    }

    pub fn eta_batch() -> Self {
        Self::generalized(Exponent::Infinite, 0.2, false, true)
    }

    pub fn proposed() -> Self {
        Self::generalized(Exponent::Finite(1.5), 0.05, true, false)
    }

    pub fn proposed_eta02() -> Self {
        Self::generalized(Exponent::Finite(1.5), 0.2, true, false)
    }

    pub fn dc_batch(sectors: usize) -> Self {
        Self {
            p: Exponent::Infinite,
            eta: 1.0,
            p_t: false,
            r: false,
            kind: PolicyKind::DcBatch { sectors },
        }
    }

    pub fn c2_event() -> Self {
        Self {
            p: Exponent::Finite(2.0),
            eta: 1.0,
            p_t: true,
            r: false,
            kind: PolicyKind::EventTriggered,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "proposed" => Self::proposed(),
            "proposed_eta02" => Self::proposed_eta02(),
            "batch" => Self::batch(),
            "eta_batch" => Self::eta_batch(),
            "dc_batch" => Self::dc_batch(DC_SECTORS),
            "c2_event" => Self::c2_event(),
            other => {
                return Err(DvrpError::InvalidParameter(format!(
                    "unknown policy preset {other:?} (known: {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn validate(&self, env: &Environment) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(DvrpError::InvalidParameter(format!(
                "eta must lie in (0, 1], got {}",
                self.eta
            )));
        }
        if let Exponent::Finite(p) = self.p {
            if !(p >= 1.0 && p.is_finite()) {
                return Err(DvrpError::InvalidParameter(format!(
                    "exponent must be at least 1, got {p}"
                )));
            }
        }
        if let PolicyKind::DcBatch { sectors } = self.kind {
            if sectors == 0 {
                return Err(DvrpError::InvalidParameter("dc_batch needs at least one sector".into()));
            }
            if !env.is_euclidean() {
                return Err(DvrpError::InvalidParameter(
                    "dc_batch requires a Euclidean environment".into(),
                ));
            }
        }
        Ok(())
    }

    /// Planning objective: p-norm for finite exponents, path length otherwise.
    pub fn objective(&self) -> Objective {
        match self.p {
            Exponent::Finite(p) => Objective::p_norm(p, self.p_t),
            Exponent::Infinite => Objective::PathLength,
        }
    }
}

/// Tasks committed for service in one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Commitment {
    pub fragment: Vec<TaskId>,
    pub plan: TourPlan,
    pub epoch: f64,
    /// One-based position of the fragment's first task in `plan`.
    pub start_index: usize,
}

/// Where the vehicle plans from and what it knows.
#[derive(Clone, Copy, Debug)]
pub struct PlanContext<'a> {
    pub env: &'a Environment,
    pub pose: Pose,
    pub now: f64,
    pub v: f64,
    pub s_bar: f64,
    pub solver: &'a SolverConfig,
}

/// Fragment length for a queue of `n`: `ceil(eta * n)`, at least one.
pub fn fragment_len(eta: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let raw = (eta * n as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n)
}

fn latents(queue: &[Task], now: f64) -> Result<Vec<f64>> {
    queue
        .iter()
        .map(|t| {
            let w = now - t.arrival_time;
            if w < -1e-9 {
                Err(DvrpError::InvalidInput(format!(
                    "task {} arrives at {} after the planning epoch {now}",
                    t.id, t.arrival_time
                )))
            } else {
                Ok(w.max(0.0))
            }
        })
        .collect()
}

/// Plans a tour over `queue` and cuts the fragment to commit. With
/// `hint`, the solver starts from that visit order. Returns `None` for an
/// empty queue.
pub fn plan_fragment(
    params: &PolicyParams,
    queue: &[Task],
    ctx: &PlanContext<'_>,
    rng: &mut ChaCha8Rng,
    hint: &[TaskId],
) -> Result<Option<Commitment>> {
    if queue.is_empty() {
        return Ok(None);
    }
    let lat = latents(queue, ctx.now)?;
    let (objective, eta, randomized) = match params.kind {
        PolicyKind::EventTriggered => (Objective::p_norm(2.0, true), None, false),
        _ => (params.objective(), Some(params.eta), params.r),
    };
    let problem = TourProblem {
        env: ctx.env,
        start: ctx.pose,
        tasks: queue,
        latents: &lat,
        objective,
        s_bar: ctx.s_bar,
        v: ctx.v,
    };
    let plan = optimize_warm(&problem, ctx.solver, hint)?;
    let n = plan.len();
    let len = match eta {
        Some(eta) => fragment_len(eta, n),
        None => 1,
    };
    let start_index = if randomized { rng.gen_range(1..=n) } else { 1 };
    let first = start_index - 1;
    let end = (first + len).min(n);
    Ok(Some(Commitment {
        fragment: plan.visits[first..end].to_vec(),
        plan,
        epoch: ctx.now,
        start_index,
    }))
}

/// Round-robin pointer over the sectors of a DC-BATCH vehicle.
#[derive(Clone, Debug)]
pub struct SectorCursor {
    sectors: Vec<Sector>,
    pointer: usize,
}

impl SectorCursor {
    pub fn new(env: &Environment, r: usize) -> Result<Self> {
        match env {
            Environment::Euclidean(region) => {
                let sectors = sectors(region, r)?;
                // start just before sector 0 so the first scan begins there
                let pointer = r - 1;
                Ok(Self { sectors, pointer })
            }
            Environment::Roadmap(_) => Err(DvrpError::InvalidParameter(
                "dc_batch requires a Euclidean environment".into(),
            )),
        }
    }

    pub fn pointer(&self) -> usize {
        self.pointer
    }

    pub fn set_pointer(&mut self, pointer: usize) {
        self.pointer = pointer % self.sectors.len();
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }
}

/// Advances the cursor to the next sector, after the current one, that
/// holds at least one queued task, and returns its index.
pub fn dc_next_sector(cursor: &mut SectorCursor, queue: &[Task], env: &Environment) -> Option<usize> {
    let r = cursor.sectors.len();
    let center = cursor.sectors[0].center;
    let mut occupied = vec![false; r];
    for t in queue {
        occupied[sector_index(&center, r, &env.coords(&t.location))] = true;
    }
    let next = (1..=r)
        .map(|k| (cursor.pointer + k) % r)
        .find(|&s| occupied[s])?;
    cursor.pointer = next;
    Some(next)
}

/// DC-BATCH iteration: pick the next occupied sector and commit a
/// length-minimizing tour over all of its tasks.
pub fn plan_sector(
    cursor: &mut SectorCursor,
    queue: &[Task],
    ctx: &PlanContext<'_>,
    hint: &[TaskId],
) -> Result<Option<Commitment>> {
    let Some(sector) = dc_next_sector(cursor, queue, ctx.env) else {
        return Ok(None);
    };
    let r = cursor.sectors.len();
    let center = cursor.sectors[0].center;
    let members: Vec<Task> = queue
        .iter()
        .filter(|t| sector_index(&center, r, &ctx.env.coords(&t.location)) == sector)
        .cloned()
        .collect();
    let lat = latents(&members, ctx.now)?;
    let problem = TourProblem {
        env: ctx.env,
        start: ctx.pose,
        tasks: &members,
        latents: &lat,
        objective: Objective::PathLength,
        s_bar: ctx.s_bar,
        v: ctx.v,
    };
    let plan = optimize_warm(&problem, ctx.solver, hint)?;
    Ok(Some(Commitment {
        fragment: plan.visits.clone(),
        plan,
        epoch: ctx.now,
        start_index: 1,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    TaskArrival,
    ServiceCompleted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trigger {
    Replan,
    Continue,
}

/// Whether an event interrupts the current plan. Only event-triggered
/// policies ever replan outside their iteration boundaries.
pub fn event_replan_trigger(event: Event, params: &PolicyParams) -> Trigger {
    match (params.kind, event) {
        (PolicyKind::EventTriggered, Event::TaskArrival) => Trigger::Replan,
        _ => Trigger::Continue,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EuclideanRegion;
    use rand::SeedableRng;

    fn task(id: TaskId, x: f64, y: f64, arrival: f64) -> Task {
        Task {
            id,
            location: Pose::point(x, y),
            arrival_time: arrival,
            service_duration: 1.0,
        }
    }

    fn ring(n: usize) -> Vec<Task> {
        (0..n)
            .map(|i| {
                let a = i as f64 / n as f64 * std::f64::consts::TAU;
                task(i, 0.5 + 0.4 * a.cos(), 0.5 + 0.4 * a.sin(), 0.0)
            })
            .collect()
    }

    fn ctx<'a>(env: &'a Environment, solver: &'a SolverConfig, now: f64) -> PlanContext<'a> {
        PlanContext {
            env,
            pose: Pose::point(0.5, 0.5),
            now,
            v: 1.0,
            s_bar: 1.0,
            solver,
        }
    }

    #[test]
    fn presets_expand_literally() {
        let b = PolicyParams::preset("batch").unwrap();
        assert_eq!((b.p, b.eta, b.p_t, b.r), (Exponent::Infinite, 1.0, false, false));
        let e = PolicyParams::preset("eta_batch").unwrap();
        assert_eq!((e.p, e.eta, e.p_t, e.r), (Exponent::Infinite, 0.2, false, true));
        let p = PolicyParams::preset("proposed").unwrap();
        assert_eq!((p.p, p.eta, p.p_t, p.r), (Exponent::Finite(1.5), 0.05, true, false));
        let q = PolicyParams::preset("proposed_eta02").unwrap();
        assert_eq!((q.p, q.eta, q.p_t, q.r), (Exponent::Finite(1.5), 0.2, true, false));
        let c = PolicyParams::preset("c2_event").unwrap();
        assert_eq!((c.kind, c.p, c.p_t), (PolicyKind::EventTriggered, Exponent::Finite(2.0), true));
        let d = PolicyParams::preset("dc_batch").unwrap();
        assert_eq!(d.kind, PolicyKind::DcBatch { sectors: 10 });
        assert!(PolicyParams::preset("nope").is_err());
    }

    #[test]
    fn exponent_serde() {
        let p: PolicyParams = serde_json::from_str(
            r#"{"p":"inf","eta":0.5,"p_t":false,"r":true,"kind":{"type":"generalized"}}"#,
        )
        .unwrap();
        assert_eq!(p.p, Exponent::Infinite);
        let back = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<PolicyParams>(&back).unwrap(), p);
        assert!(serde_json::from_str::<Exponent>("\"big\"").is_err());
        assert_eq!(serde_json::from_str::<Exponent>("2").unwrap(), Exponent::Finite(2.0));
    }

    #[test]
    fn validation() {
        let env = Environment::unit_square();
        let mut p = PolicyParams::proposed();
        p.eta = 0.0;
        assert!(p.validate(&env).is_err());
        p.eta = 1.5;
        assert!(p.validate(&env).is_err());
        let mut q = PolicyParams::proposed();
        q.p = Exponent::Finite(0.5);
        assert!(q.validate(&env).is_err());
        assert!(PolicyParams::dc_batch(0).validate(&env).is_err());
    }

    #[test]
    fn fragment_lengths() {
        assert_eq!(fragment_len(0.2, 10), 2);
        assert_eq!(fragment_len(0.05, 10), 1);
        assert_eq!(fragment_len(0.05, 30), 2);
        assert_eq!(fragment_len(1.0, 7), 7);
        assert_eq!(fragment_len(0.3, 10), 3);
        assert_eq!(fragment_len(0.5, 0), 0);
    }

    #[test]
    fn batch_commits_everything() {
        let env = Environment::unit_square();
        let solver = SolverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let queue = ring(10);
        let c = plan_fragment(&PolicyParams::batch(), &queue, &ctx(&env, &solver, 0.0), &mut rng, &[])
            .unwrap()
            .unwrap();
        assert_eq!(c.fragment.len(), 10);
        assert_eq!(c.fragment, c.plan.visits);
    }

    #[test]
    fn eta_prefix_without_randomization() {
        let env = Environment::unit_square();
        let solver = SolverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let queue = ring(10);
        let params = PolicyParams::generalized(Exponent::Finite(1.5), 0.2, true, false);
        let c = plan_fragment(&params, &queue, &ctx(&env, &solver, 0.0), &mut rng, &[])
            .unwrap()
            .unwrap();
        assert_eq!(c.start_index, 1);
        assert_eq!(c.fragment, c.plan.visits[..2].to_vec());
    }

    #[test]
    fn randomized_fragment_clamps_at_tour_end() {
        let env = Environment::unit_square();
        let solver = SolverConfig::default();
        let queue = ring(10);
        let params = PolicyParams::eta_batch();
        let mut seen_tail = false;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = plan_fragment(&params, &queue, &ctx(&env, &solver, 0.0), &mut rng, &[])
                .unwrap()
                .unwrap();
            let first = c.start_index - 1;
            assert_eq!(c.fragment[0], c.plan.visits[first]);
            if c.start_index == 10 {
                assert_eq!(c.fragment.len(), 1);
                seen_tail = true;
            } else {
                assert_eq!(c.fragment.len(), 2);
            }
        }
        assert!(seen_tail);
    }

    #[test]
    fn proposed_serves_long_waiting_task_first() {
        let env: Environment = EuclideanRegion::new(10.0, 10.0).unwrap().into();
        let solver = SolverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // near task arrived just now, far task has waited 100
        let queue = [task(0, 6.0, 5.0, 100.0), task(1, 0.0, 5.0, 0.0)];
        let c = PlanContext {
            env: &env,
            pose: Pose::point(5.0, 5.0),
            now: 100.0,
            v: 1.0,
            s_bar: 0.0,
            solver: &solver,
        };
        let mut params = PolicyParams::proposed();
        params.p = Exponent::Finite(2.0);
        let pr = plan_fragment(&params, &queue, &c, &mut rng, &[]).unwrap().unwrap();
        assert_eq!(pr.fragment, vec![1]);
        let b = plan_fragment(&PolicyParams::batch(), &queue, &c, &mut rng, &[])
            .unwrap()
            .unwrap();
        assert_eq!(b.fragment[0], 0);
    }

    #[test]
    fn empty_queue_gives_no_commitment() {
        let env = Environment::unit_square();
        let solver = SolverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(plan_fragment(&PolicyParams::proposed(), &[], &ctx(&env, &solver, 0.0), &mut rng, &[])
            .unwrap()
            .is_none());
    }

    #[test]
    fn future_task_is_rejected() {
        let env = Environment::unit_square();
        let solver = SolverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let queue = [task(0, 0.1, 0.1, 5.0)];
        assert!(plan_fragment(&PolicyParams::proposed(), &queue, &ctx(&env, &solver, 1.0), &mut rng, &[])
            .is_err());
    }

    #[test]
    fn sector_scan_is_cyclic() {
        let env = Environment::unit_square();
        let mut cursor = SectorCursor::new(&env, 10).unwrap();
        cursor.set_pointer(7);
        // sector 3 spans angles [108, 144) degrees
        let a = 126f64.to_radians();
        let queue = [task(0, 0.5 + 0.3 * a.cos(), 0.5 + 0.3 * a.sin(), 0.0)];
        assert_eq!(dc_next_sector(&mut cursor, &queue, &env), Some(3));
        assert_eq!(cursor.pointer(), 3);
        assert_eq!(dc_next_sector(&mut cursor, &[], &env), None);
    }

    #[test]
    fn sector_round_robin_alternates() {
        let env = Environment::unit_square();
        let mut cursor = SectorCursor::new(&env, 10).unwrap();
        let at = |deg: f64, id| {
            let a = f64::to_radians(deg);
            task(id, 0.5 + 0.3 * a.cos(), 0.5 + 0.3 * a.sin(), 0.0)
        };
        let queue = [at(90.0, 0), at(342.0, 1)];
        let mut visits = Vec::new();
        for _ in 0..4 {
            visits.push(dc_next_sector(&mut cursor, &queue, &env).unwrap());
        }
        assert_eq!(visits, vec![2, 9, 2, 9]);
    }

    #[test]
    fn one_sector_is_batch() {
        let env = Environment::unit_square();
        let solver = SolverConfig::default();
        let mut cursor = SectorCursor::new(&env, 1).unwrap();
        let queue = ring(8);
        let c = plan_sector(&mut cursor, &queue, &ctx(&env, &solver, 0.0), &[]).unwrap().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = plan_fragment(&PolicyParams::batch(), &queue, &ctx(&env, &solver, 0.0), &mut rng, &[])
            .unwrap()
            .unwrap();
        assert_eq!(c.fragment, b.fragment);
    }

    #[test]
    fn dc_batch_needs_euclidean() {
        let g = crate::environment::RoadmapGraph::new(
            vec![("a".into(), crate::environment::Point::new(0.0, 0.0)), ("b".into(), crate::environment::Point::new(1.0, 0.0))],
            vec![("a".into(), "b".into(), 1.0)],
        )
        .unwrap();
        let env: Environment = g.into();
        assert!(SectorCursor::new(&env, 4).is_err());
        assert!(PolicyParams::dc_batch(4).validate(&env).is_err());
    }

    #[test]
    fn triggers() {
        let ev = PolicyParams::c2_event();
        assert_eq!(event_replan_trigger(Event::TaskArrival, &ev), Trigger::Replan);
        assert_eq!(event_replan_trigger(Event::ServiceCompleted, &ev), Trigger::Continue);
        let p = PolicyParams::proposed();
        assert_eq!(event_replan_trigger(Event::TaskArrival, &p), Trigger::Continue);
    }
}
