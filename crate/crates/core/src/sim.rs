//! Discrete-event simulation of vehicles executing policy commitments, for
//! a single vehicle or a fleet split into spatial partitions.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{check_lemma1, BoundCheckConfig};
use crate::environment::{sector_index, Environment, Point, Pose};
use crate::error::{DvrpError, Result};
use crate::policies::{
    event_replan_trigger, plan_fragment, plan_sector, Commitment, Event, Exponent, PlanContext,
    PolicyKind, PolicyParams, SectorCursor, Trigger,
};
use crate::tour_opt::SolverConfig;
use crate::workload::{Task, TaskId};

/// Shared run settings.
#[derive(Clone, Copy, Debug)]
pub struct SimSetup<'a> {
    pub env: &'a Environment,
    pub v: f64,
    /// Expected service time used inside planning objectives.
    pub s_bar: f64,
    pub solver: &'a SolverConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaitRecord {
    pub task_id: TaskId,
    pub vehicle_id: usize,
    pub arrival: f64,
    pub service_start: f64,
    pub service_end: f64,
    /// Iteration whose plan committed the task.
    pub iteration: usize,
}

impl WaitRecord {
    pub fn wait(&self) -> f64 {
        self.service_start - self.arrival
    }

    pub fn system_time(&self) -> f64 {
        self.service_end - self.arrival
    }
}

/// One planning epoch of one vehicle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub vehicle_id: usize,
    /// One-based, counted per vehicle.
    pub iteration: usize,
    pub epoch: f64,
    pub n_outstanding: usize,
    /// Travel time of the full plan computed at this epoch.
    pub planned_length: f64,
    pub fragment_len: usize,
    /// Time until the vehicle's next epoch, or until it finished.
    pub span: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleClock {
    pub vehicle_id: usize,
    pub busy: f64,
    pub travel: f64,
    pub idle: f64,
    pub horizon: f64,
}

/// Load carried by one partition of a fleet run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionLoad {
    pub vehicle_id: usize,
    pub tasks: usize,
    pub share: f64,
    pub rho: f64,
}

/// Tally of the tour-length bound evaluated on every plan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundTally {
    pub checked: usize,
    pub violations: usize,
    pub skipped: usize,
    pub max_ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub waits: Vec<WaitRecord>,
    pub iterations: Vec<IterationRecord>,
    pub clocks: Vec<VehicleClock>,
    pub partitions: Vec<PartitionLoad>,
    pub lemma1: BoundTally,
}

impl SimulationTrace {
    pub fn iterations_of(&self, vehicle_id: usize) -> impl Iterator<Item = &IterationRecord> {
        self.iterations.iter().filter(move |r| r.vehicle_id == vehicle_id)
    }

    pub fn waits_of(&self, vehicle_id: usize) -> impl Iterator<Item = &WaitRecord> {
        self.waits.iter().filter(move |r| r.vehicle_id == vehicle_id)
    }

    pub fn vehicle_count(&self) -> usize {
        self.clocks.len()
    }

    fn absorb(&mut self, lane: SimulationTrace) {
        self.waits.extend(lane.waits);
        self.iterations.extend(lane.iterations);
        self.clocks.extend(lane.clocks);
        self.lemma1.checked += lane.lemma1.checked;
        self.lemma1.violations += lane.lemma1.violations;
        self.lemma1.skipped += lane.lemma1.skipped;
        self.lemma1.max_ratio = self.lemma1.max_ratio.max(lane.lemma1.max_ratio);
    }
}

pub fn write_waits_csv<W: Write>(trace: &SimulationTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| DvrpError::InvalidInput(format!("writing waits: {e}"));
    w.write_record([
        "task_id",
        "vehicle_id",
        "arrival",
        "service_start",
        "service_end",
        "wait",
        "system_time",
        "iteration",
    ])
    .map_err(io)?;
    for r in &trace.waits {
        w.write_record([
            r.task_id.to_string(),
            r.vehicle_id.to_string(),
            r.arrival.to_string(),
            r.service_start.to_string(),
            r.service_end.to_string(),
            r.wait().to_string(),
            r.system_time().to_string(),
            r.iteration.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| DvrpError::InvalidInput(format!("writing waits: {e}")))
}

/// Writes the per-iteration queue log of one vehicle.
pub fn write_queue_csv<W: Write>(trace: &SimulationTrace, vehicle_id: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| DvrpError::InvalidInput(format!("writing queue log: {e}"));
    w.write_record(["iteration", "epoch_time", "n_outstanding", "planned_tour_length"])
        .map_err(io)?;
    for r in trace.iterations_of(vehicle_id) {
        w.write_record([
            r.iteration.to_string(),
            r.epoch.to_string(),
            r.n_outstanding.to_string(),
            r.planned_length.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| DvrpError::InvalidInput(format!("writing queue log: {e}")))
}

struct Lane<'a> {
    setup: SimSetup<'a>,
    params: PolicyParams,
    vehicle_id: usize,
    waiting: Pose,
    rng: ChaCha8Rng,
    bound_cfg: BoundCheckConfig,
    tasks: &'a [Task],
    next: usize,
    queue: Vec<Task>,
    t: f64,
    pose: Pose,
    clock: VehicleClock,
    trace: SimulationTrace,
    hint: Vec<TaskId>,
    cursor: Option<SectorCursor>,
}

impl<'a> Lane<'a> {
    fn new(
        setup: SimSetup<'a>,
        params: PolicyParams,
        vehicle_id: usize,
        waiting: Pose,
        tasks: &'a [Task],
    ) -> Result<Self> {
        params.validate(setup.env)?;
        setup.env.validate_pose(&waiting)?;
        let constants = setup.env.geometric_constants(setup.s_bar, setup.v)?;
        let p = match params.p {
            Exponent::Finite(p) => p,
            Exponent::Infinite => 1.0,
        };
        let cursor = match params.kind {
            PolicyKind::DcBatch { sectors } => Some(SectorCursor::new(setup.env, sectors)?),
            _ => None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(setup.solver.seed);
        rng.set_stream(vehicle_id as u64 + 1);
        Ok(Self {
            setup,
            params,
            vehicle_id,
            waiting,
            rng,
            bound_cfg: BoundCheckConfig::new(p, &constants),
            tasks,
            next: 0,
            queue: Vec::new(),
            t: 0.0,
            pose: waiting,
            clock: VehicleClock {
                vehicle_id,
                ..VehicleClock::default()
            },
            trace: SimulationTrace::default(),
            hint: Vec::new(),
            cursor,
        })
    }

    fn next_arrival(&self) -> f64 {
        self.tasks
            .get(self.next)
            .map_or(f64::INFINITY, |t| t.arrival_time)
    }

    /// Enqueues every task that has arrived by now; returns how many.
    fn admit(&mut self) -> usize {
        let before = self.next;
        while self.next < self.tasks.len() && self.tasks[self.next].arrival_time <= self.t {
            self.queue.push(self.tasks[self.next]);
            self.next += 1;
        }
        self.next - before
    }

    fn finished(&self) -> bool {
        self.queue.is_empty() && self.next >= self.tasks.len()
    }

    /// Drifts back toward the waiting pose until `until`, stopping early on
    /// the way if needed.
    fn idle_until(&mut self, until: f64) {
        let env = self.setup.env;
        let leg = env.leg_time(&self.pose, &self.waiting, self.setup.v);
        if self.t + leg <= until {
            self.clock.travel += leg;
            self.t += leg;
            self.pose = self.waiting;
            self.clock.idle += until - self.t;
            self.t = until;
        } else {
            let elapsed = until - self.t;
            let (pose, extra) = env.divert_point(&self.pose, &self.waiting, elapsed, self.setup.v);
            self.clock.travel += elapsed + extra;
            self.t = until + extra;
            self.pose = pose;
        }
    }

    fn travel_to(&mut self, target: &Pose) {
        let leg = self.setup.env.leg_time(&self.pose, target, self.setup.v);
        self.clock.travel += leg;
        self.t += leg;
        self.pose = *target;
    }

    fn serve(&mut self, task: &Task, iteration: usize) {
        self.travel_to(&task.location);
        let start = self.t;
        assert!(start >= task.arrival_time, "negative wait for task {}", task.id);
        self.t += task.service_duration;
        self.clock.busy += task.service_duration;
        self.trace.waits.push(WaitRecord {
            task_id: task.id,
            vehicle_id: self.vehicle_id,
            arrival: task.arrival_time,
            service_start: start,
            service_end: self.t,
            iteration,
        });
        if let Some(k) = self.queue.iter().position(|q| q.id == task.id) {
            self.queue.swap_remove(k);
        }
    }

    fn ctx(&self) -> PlanContext<'a> {
        PlanContext {
            env: self.setup.env,
            pose: self.pose,
            now: self.t,
            v: self.setup.v,
            s_bar: self.setup.s_bar,
            solver: self.setup.solver,
        }
    }

    fn decide(&mut self) -> Result<Option<Commitment>> {
        // keep queue order independent of service history
        self.queue.sort_by_key(|t| t.id);
        let ctx = self.ctx();
        match self.cursor.as_mut() {
            Some(cursor) => plan_sector(cursor, &self.queue, &ctx, &[]),
            None => plan_fragment(&self.params, &self.queue, &ctx, &mut self.rng, &self.hint),
        }
    }

    fn record(&mut self, c: &Commitment) -> usize {
        let iteration = self.trace.iterations.len() + 1;
        self.trace.iterations.push(IterationRecord {
            vehicle_id: self.vehicle_id,
            iteration,
            epoch: c.epoch,
            n_outstanding: self.queue.len(),
            planned_length: c.plan.travel_length(),
            fragment_len: c.fragment.len(),
            span: 0.0,
        });
        let tally = &mut self.trace.lemma1;
        match check_lemma1(&c.plan, &self.bound_cfg) {
            Ok(check) => {
                tally.checked += 1;
                if check.rhs > 0.0 {
                    tally.max_ratio = tally.max_ratio.max(check.lhs / check.rhs);
                }
                if !check.holds {
                    tally.violations += 1;
                }
                debug_assert!(check.holds, "tour length bound violated: {check:?}");
            }
            Err(_) => tally.skipped += 1,
        }
        iteration
    }

    fn task(&self, id: TaskId) -> Task {
        *self
            .queue
            .iter()
            .find(|t| t.id == id)
            .expect("committed task is queued")
    }

    fn run(mut self) -> Result<SimulationTrace> {
        match self.params.kind {
            PolicyKind::EventTriggered => self.run_event()?,
            _ => self.run_iterative()?,
        }
        let horizon = self.t;
        self.clock.horizon = horizon;
        let epochs: Vec<f64> = self.trace.iterations.iter().map(|r| r.epoch).collect();
        for (k, r) in self.trace.iterations.iter_mut().enumerate() {
            let end = epochs.get(k + 1).copied().unwrap_or(horizon);
            r.span = end - r.epoch;
        }
        self.trace.clocks.push(self.clock);
        Ok(self.trace)
    }

    fn run_iterative(&mut self) -> Result<()> {
        loop {
            self.admit();
            if self.queue.is_empty() {
                if self.finished() {
                    return Ok(());
                }
                let until = self.next_arrival();
                self.idle_until(until);
                continue;
            }
            let Some(c) = self.decide()? else {
                continue;
            };
            let iteration = self.record(&c);
            let start = c.start_index - 1;
            self.hint = c.plan.visits[..start]
                .iter()
                .chain(&c.plan.visits[start + c.fragment.len()..])
                .copied()
                .collect();
            for id in &c.fragment {
                let task = self.task(*id);
                self.serve(&task, iteration);
            }
        }
    }

    fn run_event(&mut self) -> Result<()> {
        let mut plan: VecDeque<TaskId> = VecDeque::new();
        let mut iteration = 0;
        let mut replan = false;
        loop {
            if self.admit() > 0 && event_replan_trigger(Event::TaskArrival, &self.params) == Trigger::Replan {
                replan = true;
            }
            if self.queue.is_empty() {
                if self.finished() {
                    return Ok(());
                }
                let until = self.next_arrival();
                self.idle_until(until);
                continue;
            }
            if replan || plan.is_empty() {
                self.hint = plan.iter().copied().collect();
                let Some(c) = self.decide()? else {
                    continue;
                };
                iteration = self.record(&c);
                plan = c.plan.visits.iter().copied().collect();
                replan = false;
            }
            let task = self.task(*plan.front().expect("plan is non-empty"));
            let leg = self.setup.env.leg_time(&self.pose, &task.location, self.setup.v);
            let arrival = self.next_arrival();
            if self.t + leg > arrival {
                // abandon the leg where the vehicle is when the task shows up
                let elapsed = arrival - self.t;
                let (pose, extra) =
                    self.setup
                        .env
                        .divert_point(&self.pose, &task.location, elapsed, self.setup.v);
                self.clock.travel += elapsed + extra;
                self.t = arrival + extra;
                self.pose = pose;
                continue;
            }
            plan.pop_front();
            self.serve(&task, iteration);
            if event_replan_trigger(Event::ServiceCompleted, &self.params) == Trigger::Replan {
                replan = true;
            }
        }
    }
}

fn sorted_by_arrival(tasks: &[Task]) -> std::borrow::Cow<'_, [Task]> {
    let ordered = tasks.windows(2).all(|w| {
        (w[0].arrival_time, w[0].id) <= (w[1].arrival_time, w[1].id)
    });
    if ordered {
        std::borrow::Cow::Borrowed(tasks)
    } else {
        let mut v = tasks.to_vec();
        v.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time).then(a.id.cmp(&b.id)));
        std::borrow::Cow::Owned(v)
    }
}

fn check_tasks(tasks: &[Task], env: &Environment) -> Result<()> {
    let mut ids: Vec<TaskId> = tasks.iter().map(|t| t.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(DvrpError::InvalidInput("duplicate task ids in workload".into()));
    }
    for t in tasks {
        env.validate_pose(&t.location)?;
        if !(t.arrival_time >= 0.0 && t.service_duration >= 0.0) {
            return Err(DvrpError::InvalidInput(format!(
                "task {} has negative arrival or service time",
                t.id
            )));
        }
    }
    Ok(())
}

/// Single vehicle starting idle at the environment centroid.
pub fn run_single(tasks: &[Task], params: &PolicyParams, setup: &SimSetup<'_>) -> Result<SimulationTrace> {
    run_lane(tasks, params, setup, 0, setup.env.centroid())
}

/// One vehicle, parked at `waiting` when idle.
pub fn run_lane(
    tasks: &[Task],
    params: &PolicyParams,
    setup: &SimSetup<'_>,
    vehicle_id: usize,
    waiting: Pose,
) -> Result<SimulationTrace> {
    check_tasks(tasks, setup.env)?;
    let tasks = sorted_by_arrival(tasks);
    Lane::new(*setup, *params, vehicle_id, waiting, &tasks)?.run()
}

/// Region owned by one vehicle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub vehicle_id: usize,
    /// Idle pose; the centroid snapped into the environment.
    pub waiting: Pose,
    pub centroid: Point,
    /// Sample locations assigned to this partition when it was fitted.
    pub sample_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
enum AssignRule {
    Nearest,
    Sector { center: Point },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partitioning {
    pub parts: Vec<Partition>,
    rule: AssignRule,
}

impl Partitioning {
    /// Everything to one vehicle parked at `waiting`.
    pub fn single(env: &Environment, waiting: Pose) -> Self {
        Self {
            parts: vec![Partition {
                vehicle_id: 0,
                waiting,
                centroid: env.coords(&waiting),
                sample_count: 0,
            }],
            rule: AssignRule::Nearest,
        }
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Partition index owning `pose`: nearest waiting pose by travel time
    /// (ties to the lowest index), or the angular sector.
    pub fn assign(&self, env: &Environment, pose: &Pose) -> usize {
        match self.rule {
            AssignRule::Sector { center } => {
                sector_index(&center, self.parts.len(), &env.coords(pose))
            }
            AssignRule::Nearest => nearest(env, self.parts.iter().map(|p| &p.waiting), pose).0,
        }
    }
}

fn nearest<'p>(env: &Environment, centers: impl Iterator<Item = &'p Pose>, pose: &Pose) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.enumerate() {
        let d = env.leg_time(pose, c, 1.0);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn mean_point<'p>(env: &Environment, poses: impl Iterator<Item = &'p Pose>) -> Option<Point> {
    let (mut x, mut y, mut n) = (0.0, 0.0, 0usize);
    for p in poses {
        let c = env.coords(p);
        x += c.x;
        y += c.y;
        n += 1;
    }
    (n > 0).then(|| Point::new(x / n as f64, y / n as f64))
}

const KMEANS_RESTARTS: u64 = 4;
const KMEANS_MAX_ITER: usize = 100;

/// Clusters `sample` into `m` partitions by iterative centroid refinement
/// with k-means++ seeding. Distances are environment travel times; on
/// roadmaps centroids are snapped to the nearest node.
pub fn k_means_partition(
    env: &Environment,
    sample: &[Pose],
    m: usize,
    seed: u64,
) -> Result<Partitioning> {
    if m == 0 {
        return Err(DvrpError::InvalidParameter("partition count must be at least 1".into()));
    }
    if m > sample.len() {
        return Err(DvrpError::InvalidParameter(format!(
            "cannot fit {m} partitions to {} locations",
            sample.len()
        )));
    }
    for p in sample {
        env.validate_pose(p)?;
    }
    let mut best: Option<(f64, Vec<Pose>, Vec<usize>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart + 1);
        let (centers, labels, inertia) = k_means_once(env, sample, m, &mut rng)?;
        if best.as_ref().is_none_or(|b| inertia < b.0) {
            best = Some((inertia, centers, labels));
        }
    }
    let (_, centers, labels) = best.expect("at least one restart");
    let parts = centers
        .iter()
        .enumerate()
        .map(|(k, c)| Partition {
            vehicle_id: k,
            waiting: *c,
            centroid: mean_point(env, sample.iter().zip(&labels).filter(|(_, &l)| l == k).map(|(p, _)| p))
                .unwrap_or_else(|| env.coords(c)),
            sample_count: labels.iter().filter(|&&l| l == k).count(),
        })
        .collect();
    Ok(Partitioning {
        parts,
        rule: AssignRule::Nearest,
    })
}

fn k_means_once(
    env: &Environment,
    sample: &[Pose],
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Pose>, Vec<usize>, f64)> {
    let n = sample.len();
    let mut centers = vec![sample[rng.gen_range(0..n)]];
    let mut d2: Vec<f64> = sample
        .iter()
        .map(|p| env.leg_time(p, &centers[0], 1.0).powi(2))
        .collect();
    while centers.len() < m {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return Err(DvrpError::Seeding(format!(
                "sample has fewer than {m} distinct locations"
            )));
        }
        let mut target = rng.gen::<f64>() * total;
        let mut pick = n - 1;
        for (k, w) in d2.iter().enumerate() {
            if target < *w {
                pick = k;
                break;
            }
            target -= w;
        }
        let c = sample[pick];
        for (k, p) in sample.iter().enumerate() {
            d2[k] = d2[k].min(env.leg_time(p, &c, 1.0).powi(2));
        }
        centers.push(c);
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (k, p) in sample.iter().enumerate() {
            let (l, _) = nearest(env, centers.iter(), p);
            if labels[k] != l {
                labels[k] = l;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members = sample.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p);
            match mean_point(env, members) {
                Some(mean) => *center = env.snap(&mean),
                None => {
                    // reseed an empty cluster at the worst-served location
                    let far = sample
                        .iter()
                        .map(|p| nearest(env, std::iter::once(&*center), p).1)
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(&b.1))
                        .map(|(k, _)| k)
                        .ok_or_else(|| DvrpError::Seeding("empty sample".into()))?;
                    *center = sample[far];
                }
            }
        }
    }
    let inertia = sample
        .iter()
        .zip(&labels)
        .map(|(p, &l)| env.leg_time(p, &centers[l], 1.0).powi(2))
        .sum();
    Ok((centers, labels, inertia))
}

/// Equal-angle sectors about the region centre; each vehicle waits at the
/// mean of its sample locations.
pub fn sector_partition(env: &Environment, sample: &[Pose], m: usize) -> Result<Partitioning> {
    let Environment::Euclidean(region) = env else {
        return Err(DvrpError::InvalidParameter(
            "sector partitions require a Euclidean environment".into(),
        ));
    };
    if m == 0 {
        return Err(DvrpError::InvalidParameter("partition count must be at least 1".into()));
    }
    let center = region.centroid();
    let parts = (0..m)
        .map(|k| {
            let members: Vec<&Pose> = sample
                .iter()
                .filter(|p| sector_index(&center, m, &env.coords(p)) == k)
                .collect();
            let centroid = mean_point(env, members.iter().copied()).unwrap_or_else(|| {
                let a = (k as f64 + 0.5) / m as f64 * std::f64::consts::TAU;
                let r = 0.25 * region.width().min(region.height());
                Point::new(center.x + r * a.cos(), center.y + r * a.sin())
            });
            Partition {
                vehicle_id: k,
                waiting: env.snap(&centroid),
                centroid,
                sample_count: members.len(),
            }
        })
        .collect();
    Ok(Partitioning {
        parts,
        rule: AssignRule::Sector { center },
    })
}

/// Routes each task to its partition's vehicle and simulates every vehicle
/// independently. `policies` holds one entry for the whole fleet or one per
/// vehicle.
pub fn run_fleet(
    tasks: &[Task],
    policies: &[PolicyParams],
    partitioning: &Partitioning,
    setup: &SimSetup<'_>,
) -> Result<SimulationTrace> {
    let m = partitioning.len();
    if m == 0 {
        return Err(DvrpError::InvalidParameter("fleet needs at least one vehicle".into()));
    }
    if policies.len() != 1 && policies.len() != m {
        return Err(DvrpError::InvalidParameter(format!(
            "{} policies for {m} vehicles",
            policies.len()
        )));
    }
    check_tasks(tasks, setup.env)?;
    let tasks = sorted_by_arrival(tasks);
    let mut streams: Vec<Vec<Task>> = vec![Vec::new(); m];
    for t in tasks.iter() {
        streams[partitioning.assign(setup.env, &t.location)].push(*t);
    }
    let n = tasks.len();
    let last_arrival = tasks.last().map_or(0.0, |t| t.arrival_time);
    let mean_service = if n == 0 {
        0.0
    } else {
        tasks.iter().map(|t| t.service_duration).sum::<f64>() / n as f64
    };
    let rate = if last_arrival > 0.0 { n as f64 / last_arrival } else { 0.0 };
    let mut trace = SimulationTrace::default();
    for (k, part) in partitioning.parts.iter().enumerate() {
        let params = policies[if policies.len() == 1 { 0 } else { k }];
        let lane = run_lane(&streams[k], &params, setup, part.vehicle_id, part.waiting)?;
        trace.absorb(lane);
        let share = if n == 0 { 0.0 } else { streams[k].len() as f64 / n as f64 };
        trace.partitions.push(PartitionLoad {
            vehicle_id: part.vehicle_id,
            tasks: streams[k].len(),
            share,
            rho: share * rate * mean_service,
        });
    }
    Ok(trace)
}
