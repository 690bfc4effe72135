//! Tour construction and local search over the outstanding task set, plus an
//! exhaustive solver for small instances.
//!
//! The objectives here depend on visit order through the accumulated waits,
//! so every candidate move is scored with [`SequenceCost`] rather than with
//! the constant-time edge deltas of classic TSP heuristics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{CostModel, Edit, Objective, PlanMethod, Power, SequenceCost, TourPlan};
use crate::environment::{Environment, Pose};
use crate::error::{DvrpError, Result};
use crate::workload::{Task, TaskId};

/// Largest instance [`optimize_exact`] accepts.
pub const EXACT_LIMIT: usize = 9;

/// Relative improvement a single move must achieve to be accepted.
const MOVE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// Tasks are inserted largest latent wait first (then oldest), each at
    /// the position that raises the objective least.
    CheapestInsertion,
    /// Greedy nearest unvisited task from the current end of the path.
    NearestNeighbor,
    /// Both of the above, keeping the cheaper order.
    Best,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Move {
    Relocate,
    TwoOpt,
    OrOpt2,
    OrOpt3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub construction: Construction,
    pub moves: Vec<Move>,
    pub max_passes: usize,
    pub improvement_epsilon: f64,
    /// Seeds tie-breaking between equally cheap insertions.
    pub seed: u64,
    /// Restricts move targets to positions next to this many nearest
    /// neighbours (plus the head of the tour). `None` scans every position.
    pub neighbor_limit: Option<usize>,
    /// Seed construction with a previous visit order when one is supplied.
    pub warm_start: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            construction: Construction::Best,
            moves: vec![Move::Relocate, Move::TwoOpt, Move::OrOpt2, Move::OrOpt3],
            max_passes: 30,
            improvement_epsilon: 1e-9,
            seed: 0,
            neighbor_limit: Some(16),
            warm_start: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_passes == 0 {
            return Err(DvrpError::InvalidParameter("max_passes must be at least 1".into()));
        }
        if !(self.improvement_epsilon >= 0.0) {
            return Err(DvrpError::InvalidParameter(
                "improvement_epsilon must be non-negative".into(),
            ));
        }
        if self.neighbor_limit == Some(0) {
            return Err(DvrpError::InvalidParameter("neighbor_limit must be positive".into()));
        }
        Ok(())
    }
}

/// One routing instance: plan a visit order over `tasks` starting at
/// `start`. `latents[i]` is the latent wait of `tasks[i]`.
#[derive(Clone, Copy, Debug)]
pub struct TourProblem<'a> {
    pub env: &'a Environment,
    pub start: Pose,
    pub tasks: &'a [Task],
    pub latents: &'a [f64],
    pub objective: Objective,
    pub s_bar: f64,
    pub v: f64,
}

impl<'a> TourProblem<'a> {
    fn model(&self) -> Result<CostModel> {
        if self.latents.len() != self.tasks.len() {
            return Err(DvrpError::InvalidInput(format!(
                "{} latent waits for {} tasks",
                self.latents.len(),
                self.tasks.len()
            )));
        }
        let locations: Vec<Pose> = self.tasks.iter().map(|t| t.location).collect();
        CostModel::new(
            self.env,
            &self.start,
            &locations,
            self.latents,
            self.s_bar,
            self.v,
            self.objective,
        )
    }

    fn to_plan(self, model: &CostModel, order: &[usize], method: PlanMethod) -> TourPlan {
        let mut prev = 0;
        let mut legs = Vec::with_capacity(order.len());
        for &node in order {
            legs.push(model.time(prev, node));
            prev = node;
        }
        TourPlan {
            start: self.start,
            visits: order.iter().map(|&i| self.tasks[i - 1].id).collect(),
            latent_waits: order.iter().map(|&i| self.latents[i - 1]).collect(),
            leg_times: legs,
            s_bar: self.s_bar,
            method,
        }
    }
}

/// Result of a heuristic solve.
#[derive(Clone, Debug)]
pub struct Solution {
    pub plan: TourPlan,
    pub construction_cost: f64,
    pub cost: f64,
    pub passes: usize,
}

pub fn optimize(problem: &TourProblem<'_>, cfg: &SolverConfig) -> Result<TourPlan> {
    solve(problem, cfg, None).map(|s| s.plan)
}

/// Like [`optimize`], but construction starts from `hint` (task ids, unknown
/// ids ignored) when `cfg.warm_start` is set.
pub fn optimize_warm(
    problem: &TourProblem<'_>,
    cfg: &SolverConfig,
    hint: &[TaskId],
) -> Result<TourPlan> {
    solve(problem, cfg, Some(hint)).map(|s| s.plan)
}

pub fn solve(
    problem: &TourProblem<'_>,
    cfg: &SolverConfig,
    hint: Option<&[TaskId]>,
) -> Result<Solution> {
    cfg.validate()?;
    let model = problem.model()?;
    let n = model.task_count();
    if n == 0 {
        return Ok(Solution {
            plan: TourPlan::empty(problem.start, problem.s_bar, PlanMethod::Heuristic),
            construction_cost: 0.0,
            cost: 0.0,
            passes: 0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hint = if cfg.warm_start { hint } else { None };
    let mut seq = construct(problem, &model, cfg.construction, hint, &mut rng);
    let construction_cost = seq.cost();
    let neighbors = match cfg.neighbor_limit {
        Some(k) if k < n => Some(Neighbors::new(&model, k)),
        _ => None,
    };
    let passes = local_search(&mut seq, cfg, neighbors.as_ref());
    let cost = seq.cost();
    debug_assert!(cost <= construction_cost * (1.0 + 1e-12) + 1e-12);
    let plan = problem.to_plan(&model, seq.order(), PlanMethod::Heuristic);
    Ok(Solution {
        plan,
        construction_cost,
        cost,
        passes,
    })
}

fn construct<'m>(
    problem: &TourProblem<'_>,
    model: &'m CostModel,
    construction: Construction,
    hint: Option<&[TaskId]>,
    rng: &mut ChaCha8Rng,
) -> SequenceCost<'m> {
    let n = model.task_count();
    let mut placed = vec![false; n + 1];
    let mut order = Vec::with_capacity(n);
    if let Some(hint) = hint {
        for id in hint {
            if let Some(i) = problem.tasks.iter().position(|t| t.id == *id) {
                if !placed[i + 1] {
                    placed[i + 1] = true;
                    order.push(i + 1);
                }
            }
        }
    }
    let mut rest: Vec<usize> = (1..=n).filter(|&i| !placed[i]).collect();
    match construction {
        Construction::Best => {
            let a = construct(problem, model, Construction::CheapestInsertion, hint, rng);
            let b = construct(problem, model, Construction::NearestNeighbor, hint, rng);
            if b.cost() < a.cost() {
                b
            } else {
                a
            }
        }
        Construction::CheapestInsertion => {
            // largest latent first; in a live queue that is the oldest task
            rest.sort_by(|&a, &b| {
                let (ta, tb) = (&problem.tasks[a - 1], &problem.tasks[b - 1]);
                model
                    .latent(b)
                    .total_cmp(&model.latent(a))
                    .then(ta.arrival_time.total_cmp(&tb.arrival_time))
                    .then(ta.id.cmp(&tb.id))
            });
            let mut seq = SequenceCost::new(model, order);
            for node in rest {
                let mut best = f64::INFINITY;
                let mut ties: Vec<usize> = Vec::new();
                for at in 0..=seq.len() {
                    let d = seq
                        .delta(&Edit::Insert { node, at })
                        .expect("insertion position in range");
                    let slack = 1e-12 * best.abs().max(1e-300);
                    if d < best - slack {
                        best = d;
                        ties.clear();
                        ties.push(at);
                    } else if (d - best).abs() <= slack {
                        ties.push(at);
                    }
                }
                let at = if ties.len() == 1 {
                    ties[0]
                } else {
                    ties[rng.gen_range(0..ties.len())]
                };
                seq.apply(&Edit::Insert { node, at })
                    .expect("insertion position in range");
            }
            seq
        }
        Construction::NearestNeighbor => {
            let mut prev = order.last().copied().unwrap_or(0);
            while !rest.is_empty() {
                let (k, _) = rest
                    .iter()
                    .enumerate()
                    .min_by(|(_, &a), (_, &b)| {
                        model.time(prev, a).total_cmp(&model.time(prev, b))
                    })
                    .expect("non-empty");
                let node = rest.remove(k);
                order.push(node);
                prev = node;
            }
            SequenceCost::new(model, order)
        }
    }
}

/// `k` nearest task nodes of every node, by travel time.
struct Neighbors {
    lists: Vec<Vec<usize>>,
}

impl Neighbors {
    fn new(model: &CostModel, k: usize) -> Self {
        let n = model.task_count();
        let lists = (0..=n)
            .map(|a| {
                let mut row: Vec<usize> = (1..=n).filter(|&b| b != a).collect();
                let k = k.min(row.len());
                if k < row.len() {
                    row.select_nth_unstable_by(k, |&x, &y| {
                        model.time(a, x).total_cmp(&model.time(a, y)).then(x.cmp(&y))
                    });
                    row.truncate(k);
                }
                row.sort_by(|&x, &y| model.time(a, x).total_cmp(&model.time(a, y)).then(x.cmp(&y)));
                row
            })
            .collect();
        Self { lists }
    }

    fn of(&self, node: usize) -> &[usize] {
        &self.lists[node]
    }
}

fn positions(order: &[usize], nodes: usize) -> Vec<usize> {
    let mut pos = vec![usize::MAX; nodes + 1];
    for (k, &node) in order.iter().enumerate() {
        pos[node] = k;
    }
    pos
}

fn local_search(seq: &mut SequenceCost<'_>, cfg: &SolverConfig, nb: Option<&Neighbors>) -> usize {
    let mut passes = 0;
    while passes < cfg.max_passes {
        let before = seq.cost();
        for mv in &cfg.moves {
            match mv {
                Move::Relocate => relocate_scan(seq, 1, nb),
                Move::OrOpt2 => relocate_scan(seq, 2, nb),
                Move::OrOpt3 => relocate_scan(seq, 3, nb),
                Move::TwoOpt => two_opt_scan(seq, nb),
            }
        }
        passes += 1;
        let after = seq.cost();
        if !(before > 0.0) || (before - after) <= cfg.improvement_epsilon * before {
            break;
        }
    }
    passes
}

fn relocate_scan(seq: &mut SequenceCost<'_>, len: usize, nb: Option<&Neighbors>) {
    let n = seq.len();
    if n <= len {
        return;
    }
    let nodes = seq.model().task_count();
    let mut pos = positions(seq.order(), nodes);
    let mut targets = Vec::new();
    let mut from = 0;
    while from + len <= n {
        targets.clear();
        match nb {
            None => targets.extend(0..=n - len),
            Some(nb) => {
                let order = seq.order();
                let (first, last) = (order[from], order[from + len - 1]);
                let shifted = |p: usize| if p < from { p } else { p - len };
                targets.push(0);
                for &u in nb.of(first) {
                    let p = pos[u];
                    if p < from || p >= from + len {
                        targets.push(shifted(p) + 1);
                    }
                }
                for &u in nb.of(last) {
                    let p = pos[u];
                    if p < from || p >= from + len {
                        targets.push(shifted(p));
                    }
                }
            }
        }
        let mut moved = false;
        for &to in &targets {
            if to == from || to + len > n {
                continue;
            }
            let edit = Edit::Relocate { from, len, to };
            if seq.improving_delta(&edit, MOVE_TOLERANCE).is_some() {
                seq.apply(&edit).expect("valid relocate");
                pos = positions(seq.order(), nodes);
                moved = true;
                break;
            }
        }
        if !moved {
            from += 1;
        }
    }
}

fn two_opt_scan(seq: &mut SequenceCost<'_>, nb: Option<&Neighbors>) {
    let n = seq.len();
    if n < 2 {
        return;
    }
    let nodes = seq.model().task_count();
    let mut pos = positions(seq.order(), nodes);
    let mut targets = Vec::new();
    let mut start = 0;
    while start + 1 < n {
        targets.clear();
        match nb {
            None => targets.extend(start + 1..n),
            Some(nb) => {
                let order = seq.order();
                let prev = if start == 0 { 0 } else { order[start - 1] };
                for &u in nb.of(prev) {
                    if pos[u] > start && pos[u] != usize::MAX {
                        targets.push(pos[u]);
                    }
                }
                for &u in nb.of(order[start]) {
                    let p = pos[u];
                    if p != usize::MAX && p > start + 1 {
                        targets.push(p - 1);
                    }
                }
                targets.push(n - 1);
            }
        }
        let mut moved = false;
        for &end in &targets {
            let edit = Edit::Reverse { start, end };
            if seq.improving_delta(&edit, MOVE_TOLERANCE).is_some() {
                seq.apply(&edit).expect("valid reversal");
                pos = positions(seq.order(), nodes);
                moved = true;
                break;
            }
        }
        if !moved {
            start += 1;
        }
    }
}

/// Globally optimal plan by permutation enumeration with branch-and-bound.
/// Permutations are visited in lexicographic order of task ids and only a
/// strictly better plan replaces the incumbent, so ties resolve to the
/// lexicographically smallest id sequence.
pub fn optimize_exact(problem: &TourProblem<'_>) -> Result<TourPlan> {
    let n = problem.tasks.len();
    if n > EXACT_LIMIT {
        return Err(DvrpError::SizeLimit {
            size: n,
            limit: EXACT_LIMIT,
        });
    }
    let model = problem.model()?;
    if n == 0 {
        return Ok(TourPlan::empty(problem.start, problem.s_bar, PlanMethod::Exact));
    }
    let mut by_id: Vec<usize> = (1..=n).collect();
    by_id.sort_by_key(|&i| problem.tasks[i - 1].id);

    struct Search<'a> {
        model: &'a CostModel,
        by_id: &'a [usize],
        power: Power,
        path: Vec<usize>,
        used: Vec<bool>,
        best: f64,
        best_path: Vec<usize>,
    }

    impl Search<'_> {
        fn step(&self, acc: f64, leg: f64, wait: f64) -> f64 {
            match self.model.objective() {
                Objective::PNorm { .. } => acc + self.power.pow(wait),
                Objective::MaxWait { .. } => acc.max(wait),
                Objective::PathLength => acc + leg,
            }
        }

        fn dfs(&mut self, prev: usize, clock: f64, acc: f64) {
            let cutoff = self.best - 1e-12 * self.best.abs();
            if acc >= cutoff {
                return;
            }
            if self.path.len() == self.by_id.len() {
                self.best = acc;
                self.best_path.clone_from(&self.path);
                return;
            }
            for k in 0..self.by_id.len() {
                let node = self.by_id[k];
                if self.used[node] {
                    continue;
                }
                let leg = self.model.time(prev, node);
                let t = clock + leg + self.model.s_bar();
                let next = self.step(acc, leg, self.model.latent(node) + t);
                self.used[node] = true;
                self.path.push(node);
                self.dfs(node, t, next);
                self.path.pop();
                self.used[node] = false;
            }
        }
    }

    let power = match model.objective() {
        Objective::PNorm { p, .. } => Power::new(*p),
        _ => Power::One,
    };
    let mut search = Search {
        model: &model,
        by_id: &by_id,
        power,
        path: Vec::with_capacity(n),
        used: vec![false; n + 1],
        best: f64::INFINITY,
        best_path: Vec::new(),
    };
    search.dfs(0, 0.0, 0.0);
    let best = std::mem::take(&mut search.best_path);
    Ok(problem.to_plan(&model, &best, PlanMethod::Exact))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::evaluate;
    use crate::environment::EuclideanRegion;

    fn task(id: TaskId, x: f64, y: f64) -> Task {
        Task {
            id,
            location: Pose::point(x, y),
            arrival_time: 0.0,
            service_duration: 1.0,
        }
    }

    fn wide() -> Environment {
        EuclideanRegion::new(10.0, 10.0).unwrap().into()
    }

    #[test]
    fn single_task_plan() {
        let env = Environment::unit_square();
        let tasks = [task(7, 0.2, 0.3)];
        let problem = TourProblem {
            env: &env,
            start: Pose::point(0.5, 0.5),
            tasks: &tasks,
            latents: &[0.0],
            objective: Objective::p_norm(1.5, true),
            s_bar: 1.0,
            v: 1.0,
        };
        let plan = optimize(&problem, &SolverConfig::default()).unwrap();
        assert_eq!(plan.visits, vec![7]);
        let exact = optimize_exact(&problem).unwrap();
        assert_eq!(exact.visits, vec![7]);
        assert_eq!(exact.method, PlanMethod::Exact);
    }

    #[test]
    fn collinear_tasks_in_order() {
        let env = wide();
        let tasks = [task(0, 3.0, 0.0), task(1, 1.0, 0.0), task(2, 4.0, 0.0), task(3, 2.0, 0.0)];
        let problem = TourProblem {
            env: &env,
            start: Pose::point(0.0, 0.0),
            tasks: &tasks,
            latents: &[0.0; 4],
            objective: Objective::p_norm(1.0, true),
            s_bar: 0.0,
            v: 1.0,
        };
        for construction in [Construction::CheapestInsertion, Construction::NearestNeighbor] {
            let cfg = SolverConfig {
                construction,
                ..SolverConfig::default()
            };
            let plan = optimize(&problem, &cfg).unwrap();
            assert_eq!(plan.visits, vec![1, 3, 0, 2]);
            assert_eq!(evaluate(&plan, &problem.objective).unwrap(), 10.0);
        }
        let exact = optimize_exact(&problem).unwrap();
        assert_eq!(exact.visits, vec![1, 3, 0, 2]);
    }

    #[test]
    fn long_latent_task_goes_first_under_p2() {
        let env = wide();
        // near task one unit away, far task five units away on the other side
        let tasks = [task(0, 6.0, 5.0), task(1, 0.0, 5.0)];
        let latents = [0.0, 100.0];
        let mut problem = TourProblem {
            env: &env,
            start: Pose::point(5.0, 5.0),
            tasks: &tasks,
            latents: &latents,
            objective: Objective::p_norm(2.0, true),
            s_bar: 0.0,
            v: 1.0,
        };
        let plan = optimize(&problem, &SolverConfig::default()).unwrap();
        assert_eq!(plan.visits, vec![1, 0]);
        problem.objective = Objective::PathLength;
        let plan = optimize(&problem, &SolverConfig::default()).unwrap();
        assert_eq!(plan.visits, vec![0, 1]);
    }

    #[test]
    fn exact_rejects_large_instances() {
        let env = Environment::unit_square();
        let tasks: Vec<Task> = (0..10).map(|i| task(i, 0.1 * i as f64, 0.0)).collect();
        let problem = TourProblem {
            env: &env,
            start: Pose::point(0.0, 0.0),
            tasks: &tasks,
            latents: &[0.0; 10],
            objective: Objective::PathLength,
            s_bar: 0.0,
            v: 1.0,
        };
        assert!(matches!(
            optimize_exact(&problem),
            Err(DvrpError::SizeLimit { size: 10, limit: 9 })
        ));
    }

    #[test]
    fn symmetric_tie_is_lexicographic() {
        let env = wide();
        // three tasks on a circle of radius 1 around the start, 120 degrees
        // apart, ids deliberately out of slice order
        let c = Pose::point(5.0, 5.0);
        let at = |deg: f64| {
            let r = deg.to_radians();
            (5.0 + r.cos(), 5.0 + r.sin())
        };
        let (a, b, d) = (at(90.0), at(210.0), at(330.0));
        let tasks = [task(9, a.0, a.1), task(4, b.0, b.1), task(6, d.0, d.1)];
        let problem = TourProblem {
            env: &env,
            start: c,
            tasks: &tasks,
            latents: &[2.0; 3],
            objective: Objective::p_norm(2.0, true),
            s_bar: 1.0,
            v: 1.0,
        };
        let exact = optimize_exact(&problem).unwrap();
        assert_eq!(exact.visits, vec![4, 6, 9]);
    }

    #[test]
    fn missing_latent_is_invalid_input() {
        let env = Environment::unit_square();
        let tasks = [task(0, 0.1, 0.1), task(1, 0.2, 0.2)];
        let problem = TourProblem {
            env: &env,
            start: Pose::point(0.0, 0.0),
            tasks: &tasks,
            latents: &[0.0],
            objective: Objective::PathLength,
            s_bar: 0.0,
            v: 1.0,
        };
        assert!(matches!(
            optimize(&problem, &SolverConfig::default()),
            Err(DvrpError::InvalidInput(_))
        ));
    }

    #[test]
    fn empty_task_set_gives_empty_plan() {
        let env = Environment::unit_square();
        let problem = TourProblem {
            env: &env,
            start: Pose::point(0.0, 0.0),
            tasks: &[],
            latents: &[],
            objective: Objective::PathLength,
            s_bar: 0.0,
            v: 1.0,
        };
        assert!(optimize(&problem, &SolverConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn bad_solver_config() {
        let cfg = SolverConfig {
            max_passes: 0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn warm_start_keeps_hint_when_optimal() {
        let env = wide();
        let tasks = [task(0, 1.0, 0.0), task(1, 2.0, 0.0), task(2, 3.0, 0.0)];
        let problem = TourProblem {
            env: &env,
            start: Pose::point(0.0, 0.0),
            tasks: &tasks,
            latents: &[0.0; 3],
            objective: Objective::PathLength,
            s_bar: 0.0,
            v: 1.0,
        };
        let plan = optimize_warm(&problem, &SolverConfig::default(), &[0, 99, 1]).unwrap();
        assert_eq!(plan.visits, vec![0, 1, 2]);
    }
}
