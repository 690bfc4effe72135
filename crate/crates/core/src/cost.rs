//! Tour objectives: the p-norm of planned waits, total path length, and the
//! maximum planned wait, plus an incremental evaluator for local search.
//!
//! A planned wait is the latent wait of a task plus the time to reach and
//! service it, with every service on the way charged at the expected
//! duration `s̄`:
//!
//! ```text
//! w_i = t_i + Σ_{j ≤ i} (L_{j-1,j} / v + s̄)
//! ```

use serde::{Deserialize, Serialize};

use crate::environment::{Environment, Pose};
use crate::error::{DvrpError, Result};
use crate::workload::TaskId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Objective {
    /// `(Σ w_i^p)^{1/p}`; latent waits are zeroed unless `include_latent`.
    PNorm { p: f64, include_latent: bool },
    /// Total travel time of the open path; no service or latent terms.
    PathLength,
    /// `max_i w_i`.
    MaxWait { include_latent: bool },
}

impl Objective {
    pub fn p_norm(p: f64, include_latent: bool) -> Self {
        Objective::PNorm { p, include_latent }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Objective::PNorm { p, .. } if !(p >= 1.0 && p.is_finite()) => Err(
                DvrpError::InvalidParameter(format!("p-norm exponent must be >= 1, got {p}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn include_latent(&self) -> bool {
        match *self {
            Objective::PNorm { include_latent, .. } | Objective::MaxWait { include_latent } => {
                include_latent
            }
            Objective::PathLength => false,
        }
    }
}

/// How a plan was produced. Only exhaustively solved plans may be used
/// where global optimality matters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMethod {
    Exact,
    Heuristic,
    Manual,
}

/// An ordered visit sequence from a start pose, with latent waits and leg
/// times frozen at plan time. `leg_times[i]` is the travel time into
/// `visits[i]` from its predecessor (the start pose for `i = 0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TourPlan {
    pub start: Pose,
    pub visits: Vec<TaskId>,
    pub latent_waits: Vec<f64>,
    pub leg_times: Vec<f64>,
    pub s_bar: f64,
    pub method: PlanMethod,
}

impl TourPlan {
    pub fn empty(start: Pose, s_bar: f64, method: PlanMethod) -> Self {
        Self {
            start,
            visits: Vec::new(),
            latent_waits: Vec::new(),
            leg_times: Vec::new(),
            s_bar,
            method,
        }
    }

    /// A hand-built plan, checked for consistent lengths, distinct visits and
    /// non-negative times.
    pub fn manual(
        start: Pose,
        visits: Vec<TaskId>,
        latent_waits: Vec<f64>,
        leg_times: Vec<f64>,
        s_bar: f64,
    ) -> Result<Self> {
        let plan = Self {
            start,
            visits,
            latent_waits,
            leg_times,
            s_bar,
            method: PlanMethod::Manual,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.visits.len();
        if self.latent_waits.len() != n || self.leg_times.len() != n {
            return Err(DvrpError::InvalidInput(format!(
                "plan has {} visits, {} latent waits and {} legs",
                n,
                self.latent_waits.len(),
                self.leg_times.len()
            )));
        }
        let mut seen = self.visits.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(DvrpError::InvalidInput("plan visits a task twice".into()));
        }
        if self.latent_waits.iter().chain(&self.leg_times).any(|t| !(*t >= 0.0)) {
            return Err(DvrpError::InvalidInput(
                "plan times must be non-negative".into(),
            ));
        }
        if !(self.s_bar >= 0.0) {
            return Err(DvrpError::InvalidInput("expected service time must be non-negative".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.visits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visits.is_empty()
    }

    pub fn planned_waits(&self, include_latent: bool) -> Vec<f64> {
        let mut clock = 0.0;
        self.leg_times
            .iter()
            .zip(&self.latent_waits)
            .map(|(leg, latent)| {
                clock += leg + self.s_bar;
                if include_latent {
                    latent + clock
                } else {
                    clock
                }
            })
            .collect()
    }

    /// Total travel time of the open path.
    pub fn travel_length(&self) -> f64 {
        self.leg_times.iter().sum()
    }

    /// Sum of composite legs `L/v + s̄`.
    pub fn composite_length(&self) -> f64 {
        self.travel_length() + self.s_bar * self.len() as f64
    }
}

pub fn evaluate(plan: &TourPlan, obj: &Objective) -> Result<f64> {
    obj.validate()?;
    Ok(match *obj {
        Objective::PathLength => plan.travel_length(),
        Objective::MaxWait { include_latent } => plan
            .planned_waits(include_latent)
            .into_iter()
            .fold(0.0, f64::max),
        Objective::PNorm { p, include_latent } => {
            let power = Power::new(p);
            power.root(
                plan.planned_waits(include_latent)
                    .into_iter()
                    .map(|w| power.pow(w))
                    .sum(),
            )
        }
    })
}

/// Exponentiation specialised for the exponents that show up in practice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Power {
    One,
    OneHalf,
    Two,
    Real(f64),
}

impl Power {
    pub(crate) fn new(p: f64) -> Self {
        if p == 1.0 {
            Power::One
        } else if p == 1.5 {
            Power::OneHalf
        } else if p == 2.0 {
            Power::Two
        } else {
            Power::Real(p)
        }
    }

    pub(crate) fn exponent(self) -> f64 {
        match self {
            Power::One => 1.0,
            Power::OneHalf => 1.5,
            Power::Two => 2.0,
            Power::Real(p) => p,
        }
    }

    #[inline]
    pub(crate) fn pow(self, x: f64) -> f64 {
        match self {
            Power::One => x,
            Power::OneHalf => x * x.sqrt(),
            Power::Two => x * x,
            Power::Real(p) => x.powf(p),
        }
    }

    /// `x^{p-1}`, the derivative of `x^p` divided by `p`.
    #[inline]
    pub(crate) fn slope(self, x: f64) -> f64 {
        match self {
            Power::One => 1.0,
            Power::OneHalf => x.sqrt(),
            Power::Two => x,
            Power::Real(p) => x.powf(p - 1.0),
        }
    }

    #[inline]
    pub(crate) fn root(self, s: f64) -> f64 {
        match self {
            Power::One => s,
            Power::OneHalf => (s * s).cbrt(),
            Power::Two => s.sqrt(),
            Power::Real(p) => s.powf(1.0 / p),
        }
    }
}

/// Travel-time matrix and latent waits of one routing instance. Node 0 is
/// the start pose; tasks are nodes `1..=task_count()`.
#[derive(Clone, Debug)]
pub struct CostModel {
    nodes: usize,
    times: Vec<f64>,
    latents: Vec<f64>,
    s_bar: f64,
    objective: Objective,
}

impl CostModel {
    /// `times` is a row-major `(n+1) x (n+1)` matrix and `latents` holds one
    /// entry per task.
    pub fn from_matrix(
        times: Vec<f64>,
        latents: &[f64],
        s_bar: f64,
        objective: Objective,
    ) -> Result<Self> {
        objective.validate()?;
        let nodes = latents.len() + 1;
        if times.len() != nodes * nodes {
            return Err(DvrpError::InvalidInput(format!(
                "matrix of {} entries for {} nodes",
                times.len(),
                nodes
            )));
        }
        if latents.iter().any(|t| !(*t >= 0.0)) || !(s_bar >= 0.0) {
            return Err(DvrpError::InvalidInput(
                "latent waits and service time must be non-negative".into(),
            ));
        }
        let include = objective.include_latent();
        let latents = std::iter::once(0.0)
            .chain(latents.iter().map(|&t| if include { t } else { 0.0 }))
            .collect();
        Ok(Self {
            nodes,
            times,
            latents,
            s_bar,
            objective,
        })
    }

    pub fn new(
        env: &Environment,
        start: &Pose,
        locations: &[Pose],
        latents: &[f64],
        s_bar: f64,
        v: f64,
        objective: Objective,
    ) -> Result<Self> {
        if latents.len() != locations.len() {
            return Err(DvrpError::InvalidInput(format!(
                "{} latent waits for {} tasks",
                latents.len(),
                locations.len()
            )));
        }
        if !(v > 0.0) {
            return Err(DvrpError::InvalidParameter(format!("speed must be positive, got {v}")));
        }
        env.validate_pose(start)?;
        for pose in locations {
            env.validate_pose(pose)?;
        }
        let poses: Vec<Pose> = std::iter::once(*start).chain(locations.iter().copied()).collect();
        let n = poses.len();
        let mut times = vec![0.0; n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                let t = env.leg_time(&poses[a], &poses[b], v);
                times[a * n + b] = t;
                times[b * n + a] = t;
            }
        }
        Self::from_matrix(times, latents, s_bar, objective)
    }

    pub fn task_count(&self) -> usize {
        self.nodes - 1
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn s_bar(&self) -> f64 {
        self.s_bar
    }

    #[inline]
    pub fn time(&self, a: usize, b: usize) -> f64 {
        self.times[a * self.nodes + b]
    }

    /// Latent wait of node `i` as seen by the objective (zero when latents
    /// are excluded).
    pub fn latent(&self, i: usize) -> f64 {
        self.latents[i]
    }

    /// Straightforward evaluation of a visit order of task nodes.
    pub fn evaluate_order(&self, order: &[usize]) -> f64 {
        SequenceCost::new(self, order.to_vec()).cost()
    }

    fn power(&self) -> Power {
        match self.objective {
            Objective::PNorm { p, .. } => Power::new(p),
            _ => Power::One,
        }
    }
}

/// Local edits of a visit order. Indices are positions in the order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Edit {
    /// Moves the `len` visits starting at `from` so that they start at `to`
    /// in the resulting order.
    Relocate { from: usize, len: usize, to: usize },
    /// Reverses positions `start..=end`.
    Reverse { start: usize, end: usize },
    /// Inserts task node `node` at position `at`.
    Insert { node: usize, at: usize },
    /// Removes the visit at position `at`.
    Remove { at: usize },
}

/// Extent of an edit: positions before `first` are untouched, and from
/// new position `tail` on, every visit and its predecessor match the old
/// order at `tail + offset`.
#[derive(Clone, Copy, Debug)]
struct Shape {
    first: usize,
    tail: usize,
    offset: isize,
    new_len: usize,
}

/// Incremental evaluator over one visit order. Prefix and suffix aggregates
/// let an edit be scored by re-walking only the positions whose legs change,
/// then shifting the unchanged tail by the change in elapsed time.
#[derive(Clone, Debug)]
pub struct SequenceCost<'m> {
    model: &'m CostModel,
    power: Power,
    order: Vec<usize>,
    cum: Vec<f64>,
    waits: Vec<f64>,
    leg_prefix: Vec<f64>,
    val_prefix: Vec<f64>,
    val_suffix: Vec<f64>,
    slope_suffix: Vec<f64>,
    max_prefix: Vec<f64>,
    max_suffix: Vec<f64>,
    total: f64,
}

impl<'m> SequenceCost<'m> {
    pub fn new(model: &'m CostModel, order: Vec<usize>) -> Self {
        let mut s = Self {
            model,
            power: model.power(),
            order,
            cum: Vec::new(),
            waits: Vec::new(),
            leg_prefix: Vec::new(),
            val_prefix: Vec::new(),
            val_suffix: Vec::new(),
            slope_suffix: Vec::new(),
            max_prefix: Vec::new(),
            max_suffix: Vec::new(),
            total: 0.0,
        };
        s.rebuild();
        s
    }

    fn rebuild(&mut self) {
        let n = self.order.len();
        let m = self.model;
        self.cum.clear();
        self.waits.clear();
        self.leg_prefix.clear();
        self.val_prefix.clear();
        self.max_prefix.clear();
        self.leg_prefix.push(0.0);
        self.val_prefix.push(0.0);
        self.max_prefix.push(0.0);
        let (mut prev, mut clock, mut legs, mut vals, mut max) = (0usize, 0.0, 0.0, 0.0, 0.0f64);
        for &node in &self.order {
            let leg = m.time(prev, node);
            clock += leg + m.s_bar;
            legs += leg;
            let w = m.latents[node] + clock;
            vals += self.power.pow(w);
            max = max.max(w);
            self.cum.push(clock);
            self.waits.push(w);
            self.leg_prefix.push(legs);
            self.val_prefix.push(vals);
            self.max_prefix.push(max);
            prev = node;
        }
        self.val_suffix.clear();
        self.val_suffix.resize(n + 1, 0.0);
        self.slope_suffix.clear();
        self.slope_suffix.resize(n + 1, 0.0);
        self.max_suffix.clear();
        self.max_suffix.resize(n + 1, f64::NEG_INFINITY);
        for k in (0..n).rev() {
            let w = self.waits[k];
            self.val_suffix[k] = self.val_suffix[k + 1] + self.power.pow(w);
            self.slope_suffix[k] = self.slope_suffix[k + 1] + self.power.slope(w);
            self.max_suffix[k] = self.max_suffix[k + 1].max(w);
        }
        self.total = match m.objective {
            Objective::PNorm { .. } => vals,
            Objective::MaxWait { .. } => max,
            Objective::PathLength => legs,
        };
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn into_order(self) -> Vec<usize> {
        self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn model(&self) -> &'m CostModel {
        self.model
    }

    /// Objective value of the current order.
    pub fn cost(&self) -> f64 {
        self.finalize(self.total)
    }

    /// Planned waits of the current order, latent terms as configured.
    pub fn waits(&self) -> &[f64] {
        &self.waits
    }

    pub fn travel_length(&self) -> f64 {
        *self.leg_prefix.last().unwrap_or(&0.0)
    }

    fn finalize(&self, agg: f64) -> f64 {
        match self.model.objective {
            Objective::PNorm { .. } => self.power.root(agg),
            _ => agg,
        }
    }

    fn shape(&self, edit: &Edit) -> Result<Shape> {
        let n = self.order.len();
        let bad = |msg: String| Err(DvrpError::InvalidEdit(msg));
        match *edit {
            Edit::Relocate { from, len, to } => {
                if len == 0 || from + len > n || to + len > n {
                    return bad(format!("relocate {from}+{len} -> {to} in order of {n}"));
                }
                Ok(Shape {
                    first: from.min(to),
                    tail: from.max(to) + len + 1,
                    offset: 0,
                    new_len: n,
                })
            }
            Edit::Reverse { start, end } => {
                if start > end || end >= n {
                    return bad(format!("reverse {start}..={end} in order of {n}"));
                }
                Ok(Shape {
                    first: start,
                    tail: end + 2,
                    offset: 0,
                    new_len: n,
                })
            }
            Edit::Insert { node, at } => {
                if at > n || node == 0 || node >= self.model.nodes || self.order.contains(&node) {
                    return bad(format!("insert node {node} at {at} in order of {n}"));
                }
                Ok(Shape {
                    first: at,
                    tail: at + 2,
                    offset: -1,
                    new_len: n + 1,
                })
            }
            Edit::Remove { at } => {
                if at >= n {
                    return bad(format!("remove {at} from order of {n}"));
                }
                Ok(Shape {
                    first: at,
                    tail: at + 1,
                    offset: 1,
                    new_len: n - 1,
                })
            }
        }
    }

    #[inline]
    fn new_node(&self, edit: &Edit, k: usize) -> usize {
        let o = &self.order;
        match *edit {
            Edit::Relocate { from, len, to } => {
                let rest = |j: usize| if j < from { o[j] } else { o[j + len] };
                if k < to {
                    rest(k)
                } else if k < to + len {
                    o[from + k - to]
                } else {
                    rest(k - len)
                }
            }
            Edit::Reverse { start, end } => {
                if k >= start && k <= end {
                    o[start + end - k]
                } else {
                    o[k]
                }
            }
            Edit::Insert { node, at } => {
                if k < at {
                    o[k]
                } else if k == at {
                    node
                } else {
                    o[k - 1]
                }
            }
            Edit::Remove { at } => {
                if k < at {
                    o[k]
                } else {
                    o[k + 1]
                }
            }
        }
    }

    /// Aggregate of the edited order, or `None` once it provably reaches
    /// `cutoff`.
    fn edited_aggregate(&self, edit: &Edit, shape: Shape, cutoff: f64) -> Option<f64> {
        let m = self.model;
        let n = self.order.len();
        let Shape {
            first,
            tail,
            offset,
            new_len,
        } = shape;
        let (mut prev, mut clock) = if first == 0 {
            (0, 0.0)
        } else {
            (self.order[first - 1], self.cum[first - 1])
        };
        let objective = m.objective;
        let mut acc = match objective {
            Objective::PNorm { .. } => self.val_prefix[first],
            Objective::MaxWait { .. } => self.max_prefix[first],
            Objective::PathLength => self.leg_prefix[first],
        };
        for k in first..tail.min(new_len) {
            let node = self.new_node(edit, k);
            let leg = m.time(prev, node);
            clock += leg + m.s_bar;
            let w = m.latents[node] + clock;
            match objective {
                Objective::PNorm { .. } => acc += self.power.pow(w),
                Objective::MaxWait { .. } => acc = acc.max(w),
                Objective::PathLength => acc += leg,
            }
            prev = node;
        }
        if tail < new_len {
            let old = (tail as isize + offset) as usize;
            let shift = clock - self.cum[old - 1];
            match objective {
                Objective::PathLength => acc += self.leg_prefix[n] - self.leg_prefix[old],
                Objective::MaxWait { .. } => acc = acc.max(self.max_suffix[old] + shift),
                Objective::PNorm { .. } => {
                    if shift == 0.0 {
                        acc += self.val_suffix[old];
                    } else {
                        // convexity: (w + d)^p >= w^p + p d w^(p-1)
                        let bound = acc
                            + self.val_suffix[old]
                            + self.power.exponent() * shift * self.slope_suffix[old];
                        if bound >= cutoff {
                            return None;
                        }
                        for &w in &self.waits[old..] {
                            acc += self.power.pow(w + shift);
                        }
                    }
                }
            }
        }
        if acc >= cutoff {
            None
        } else {
            Some(acc)
        }
    }

    fn is_identity(edit: &Edit) -> bool {
        match *edit {
            Edit::Relocate { from, to, .. } => from == to,
            Edit::Reverse { start, end } => start == end,
            _ => false,
        }
    }

    /// Exact change in objective value if `edit` were applied.
    pub fn delta(&self, edit: &Edit) -> Result<f64> {
        let shape = self.shape(edit)?;
        if Self::is_identity(edit) {
            return Ok(0.0);
        }
        let agg = self
            .edited_aggregate(edit, shape, f64::INFINITY)
            .expect("unbounded cutoff never prunes");
        Ok(self.finalize(agg) - self.cost())
    }

    /// Change in objective value when `edit` lowers the aggregate by more
    /// than `rel_tol` of its current value; `None` otherwise or when the
    /// edit is out of range.
    pub fn improving_delta(&self, edit: &Edit, rel_tol: f64) -> Option<f64> {
        let shape = self.shape(edit).ok()?;
        if Self::is_identity(edit) {
            return None;
        }
        let cutoff = self.total - rel_tol * self.total.abs();
        self.edited_aggregate(edit, shape, cutoff)
            .map(|agg| self.finalize(agg) - self.cost())
    }

    pub fn apply(&mut self, edit: &Edit) -> Result<()> {
        let shape = self.shape(edit)?;
        let order = (0..shape.new_len).map(|k| self.new_node(edit, k)).collect();
        self.order = order;
        self.rebuild();
        Ok(())
    }
}

/// `evaluate(edited) - evaluate(current)` for a visit order under `model`.
pub fn evaluate_suffix_delta(model: &CostModel, order: &[usize], edit: &Edit) -> Result<f64> {
    SequenceCost::new(model, order.to_vec()).delta(edit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_model(objective: Objective, latents: &[f64], s_bar: f64) -> CostModel {
        // start at x = 0, task i at x = i
        let n = latents.len() + 1;
        let mut times = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                times[a * n + b] = (a as f64 - b as f64).abs();
            }
        }
        CostModel::from_matrix(times, latents, s_bar, objective).unwrap()
    }

    #[test]
    fn single_task_p1() {
        let plan = TourPlan::manual(Pose::point(0.0, 0.0), vec![0], vec![0.0], vec![2.0], 1.0)
            .unwrap();
        assert_eq!(evaluate(&plan, &Objective::p_norm(1.0, true)).unwrap(), 3.0);
    }

    #[test]
    fn two_tasks_p2() {
        let plan = TourPlan::manual(
            Pose::point(0.0, 0.0),
            vec![0, 1],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            0.0,
        )
        .unwrap();
        let c = evaluate(&plan, &Objective::p_norm(2.0, true)).unwrap();
        assert!((c - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn three_four_five_waits() {
        let plan = TourPlan::manual(
            Pose::point(0.0, 0.0),
            vec![0, 1],
            vec![0.0, 0.0],
            vec![3.0, 1.0],
            0.0,
        )
        .unwrap();
        assert_eq!(evaluate(&plan, &Objective::p_norm(2.0, false)).unwrap(), 5.0);
        assert_eq!(evaluate(&plan, &Objective::MaxWait { include_latent: false }).unwrap(), 4.0);
        assert_eq!(evaluate(&plan, &Objective::PathLength).unwrap(), 4.0);
    }

    #[test]
    fn empty_plan_costs_nothing() {
        let plan = TourPlan::empty(Pose::point(0.0, 0.0), 1.0, PlanMethod::Manual);
        for obj in [
            Objective::p_norm(1.5, true),
            Objective::PathLength,
            Objective::MaxWait { include_latent: true },
        ] {
            assert_eq!(evaluate(&plan, &obj).unwrap(), 0.0);
        }
    }

    #[test]
    fn exponent_below_one_rejected() {
        let plan = TourPlan::empty(Pose::point(0.0, 0.0), 1.0, PlanMethod::Manual);
        assert!(matches!(
            evaluate(&plan, &Objective::p_norm(0.5, true)),
            Err(DvrpError::InvalidParameter(_))
        ));
    }

    #[test]
    fn manual_plan_validation() {
        let start = Pose::point(0.0, 0.0);
        assert!(TourPlan::manual(start, vec![1, 1], vec![0.0; 2], vec![1.0; 2], 0.0).is_err());
        assert!(TourPlan::manual(start, vec![1], vec![-1.0], vec![1.0], 0.0).is_err());
        assert!(TourPlan::manual(start, vec![1], vec![0.0, 0.0], vec![1.0], 0.0).is_err());
    }

    #[test]
    fn identity_relocate_is_free() {
        let m = line_model(Objective::p_norm(1.5, true), &[3.0, 0.0, 1.0, 2.0], 0.5);
        let s = SequenceCost::new(&m, vec![2, 4, 1, 3]);
        for from in 0..4 {
            assert_eq!(
                s.delta(&Edit::Relocate {
                    from,
                    len: 1,
                    to: from
                })
                .unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn removing_last_under_p1_drops_its_wait() {
        let m = line_model(Objective::p_norm(1.0, true), &[3.0, 0.0, 1.0], 1.0);
        let s = SequenceCost::new(&m, vec![1, 2, 3]);
        let last_wait = *s.waits().last().unwrap();
        let d = s.delta(&Edit::Remove { at: 2 }).unwrap();
        assert!((d + last_wait).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_edits() {
        let m = line_model(Objective::PathLength, &[0.0; 3], 0.0);
        let s = SequenceCost::new(&m, vec![1, 2]);
        for e in [
            Edit::Relocate { from: 1, len: 2, to: 0 },
            Edit::Relocate { from: 0, len: 1, to: 2 },
            Edit::Reverse { start: 1, end: 2 },
            Edit::Reverse { start: 1, end: 0 },
            Edit::Insert { node: 1, at: 0 },
            Edit::Insert { node: 3, at: 3 },
            Edit::Insert { node: 0, at: 0 },
            Edit::Remove { at: 2 },
        ] {
            assert!(matches!(s.delta(&e), Err(DvrpError::InvalidEdit(_))), "{e:?}");
        }
        assert!(s.delta(&Edit::Insert { node: 3, at: 2 }).is_ok());
    }

    #[test]
    fn apply_matches_delta() {
        let m = line_model(Objective::p_norm(2.0, true), &[0.0, 5.0, 1.0, 0.0, 2.0], 0.3);
        let mut s = SequenceCost::new(&m, vec![1, 2, 3, 4, 5]);
        let e = Edit::Reverse { start: 1, end: 3 };
        let before = s.cost();
        let d = s.delta(&e).unwrap();
        s.apply(&e).unwrap();
        assert_eq!(s.order(), &[1, 4, 3, 2, 5]);
        assert!((s.cost() - (before + d)).abs() < 1e-12);
    }

    #[test]
    fn relocate_forward_and_backward() {
        let m = line_model(Objective::PathLength, &[0.0; 5], 0.0);
        let mut s = SequenceCost::new(&m, vec![1, 2, 3, 4, 5]);
        s.apply(&Edit::Relocate { from: 0, len: 2, to: 3 }).unwrap();
        assert_eq!(s.order(), &[3, 4, 5, 1, 2]);
        s.apply(&Edit::Relocate { from: 3, len: 2, to: 0 }).unwrap();
        assert_eq!(s.order(), &[1, 2, 3, 4, 5]);
        s.apply(&Edit::Insert { node: 5, at: 0 }).unwrap_err();
        s.apply(&Edit::Remove { at: 0 }).unwrap();
        s.apply(&Edit::Insert { node: 1, at: 4 }).unwrap();
        assert_eq!(s.order(), &[2, 3, 4, 5, 1]);
    }

    #[test]
    fn improving_delta_filters() {
        let m = line_model(Objective::p_norm(1.5, false), &[0.0; 4], 0.0);
        let s = SequenceCost::new(&m, vec![4, 3, 2, 1]);
        let e = Edit::Reverse { start: 0, end: 3 };
        let d = s.improving_delta(&e, 1e-12).unwrap();
        assert!((d - s.delta(&e).unwrap()).abs() < 1e-12);
        let sorted = SequenceCost::new(&m, vec![1, 2, 3, 4]);
        assert!(sorted.improving_delta(&e, 1e-12).is_none());
    }
}
