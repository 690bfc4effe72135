//! Metric spaces that tasks live in: axis-aligned Euclidean rectangles and
//! weighted roadmap graphs with precomputed all-pairs travel times.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::TAU;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{DvrpError, Result};

/// Slack allowed when checking that a point lies inside a region.
const REGION_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &Point, frac: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * frac,
            self.y + (other.y - self.y) * frac,
        )
    }
}

/// A vehicle or task position: planar coordinates in a Euclidean region, or
/// a node index in a roadmap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Pose {
    Point(Point),
    Node(usize),
}

impl Pose {
    pub const fn point(x: f64, y: f64) -> Self {
        Pose::Point(Point::new(x, y))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EuclideanRegion {
    width: f64,
    height: f64,
}

impl EuclideanRegion {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite() && height > 0.0 && height.is_finite()) {
            return Err(DvrpError::InvalidParameter(format!(
                "region dimensions must be positive and finite, got {width} x {height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn unit_square() -> Self {
        Self {
            width: 1.0,
            height: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.width + self.height)
    }

    pub fn diameter(&self) -> f64 {
        self.width.hypot(self.height)
    }

    pub fn centroid(&self) -> Point {
        Point::new(self.width / 2.0, self.height / 2.0)
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= -REGION_SLACK
            && p.y >= -REGION_SLACK
            && p.x <= self.width + REGION_SLACK
            && p.y <= self.height + REGION_SLACK
    }
}

/// An undirected roadmap with symmetric shortest-path travel times.
///
/// Edge weights are travel times (seconds). The all-pairs matrix is built
/// with one Dijkstra run per node, so it satisfies the triangle inequality
/// and has a zero diagonal.
#[derive(Clone, Debug)]
pub struct RoadmapGraph {
    ids: Vec<String>,
    coords: Vec<Point>,
    edges: Vec<(usize, usize, f64)>,
    times: Vec<f64>,
    /// `next_hop[a * n + b]` is the node following `a` on a shortest path to `b`.
    next_hop: Vec<u32>,
}

#[derive(Deserialize)]
struct NodeRow {
    id: String,
    x: f64,
    y: f64,
}

#[derive(Deserialize)]
struct EdgeRow {
    u: String,
    v: String,
    travel_time: f64,
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl RoadmapGraph {
    /// Builds the graph and its travel-time matrix. Fails on dangling edge
    /// endpoints, negative or non-finite weights, and disconnected graphs.
    pub fn new(
        nodes: Vec<(String, Point)>,
        edges: Vec<(String, String, f64)>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(DvrpError::InvalidInput("roadmap has no nodes".into()));
        }
        let mut index = HashMap::with_capacity(nodes.len());
        let mut ids = Vec::with_capacity(nodes.len());
        let mut coords = Vec::with_capacity(nodes.len());
        for (i, (id, p)) in nodes.into_iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(DvrpError::InvalidInput(format!("duplicate node id {id:?}")));
            }
            ids.push(id);
            coords.push(p);
        }
        let mut resolved = Vec::with_capacity(edges.len());
        for (u, v, t) in edges {
            let lookup = |id: &String| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| DvrpError::InvalidPose(format!("unknown node id {id:?}")))
            };
            let (a, b) = (lookup(&u)?, lookup(&v)?);
            if !(t >= 0.0 && t.is_finite()) {
                return Err(DvrpError::InvalidInput(format!(
                    "edge {u:?}-{v:?} has invalid travel time {t}"
                )));
            }
            resolved.push((a, b, t));
        }
        Self::from_indexed(ids, coords, resolved)
    }

    pub(crate) fn from_indexed(
        ids: Vec<String>,
        coords: Vec<Point>,
        edges: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        let n = coords.len();
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(a, b, t) in &edges {
            adjacency[a].push((b, t));
            adjacency[b].push((a, t));
        }
        let mut times = vec![f64::INFINITY; n * n];
        let mut next_hop = vec![u32::MAX; n * n];
        let mut parent = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        for source in 0..n {
            let row = &mut times[source * n..(source + 1) * n];
            parent.fill(usize::MAX);
            row[source] = 0.0;
            heap.push(HeapEntry {
                cost: 0.0,
                node: source,
            });
            while let Some(HeapEntry { cost, node }) = heap.pop() {
                if cost > row[node] {
                    continue;
                }
                for &(next, w) in &adjacency[node] {
                    let candidate = cost + w;
                    if candidate < row[next] {
                        row[next] = candidate;
                        parent[next] = node;
                        heap.push(HeapEntry {
                            cost: candidate,
                            node: next,
                        });
                    }
                }
            }
            if let Some(unreached) = row.iter().position(|t| t.is_infinite()) {
                return Err(DvrpError::InvalidInput(format!(
                    "roadmap is disconnected: {:?} cannot reach {:?}",
                    ids[source], ids[unreached]
                )));
            }
            // in the tree rooted at `source`, a node's parent is its next hop
            // back toward the root
            for target in 0..n {
                next_hop[target * n + source] = if target == source {
                    source as u32
                } else {
                    parent[target] as u32
                };
            }
        }
        // symmetrize against floating-point asymmetry of separate Dijkstra runs
        for a in 0..n {
            for b in (a + 1)..n {
                let t = times[a * n + b].min(times[b * n + a]);
                times[a * n + b] = t;
                times[b * n + a] = t;
            }
        }
        Ok(Self {
            ids,
            coords,
            edges,
            times,
            next_hop,
        })
    }

    /// Loads `nodes.csv` (`id,x,y`) and `edges.csv` (`u,v,travel_time`).
    pub fn from_csv(nodes_path: &Path, edges_path: &Path) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut reader =
            csv::Reader::from_path(nodes_path).map_err(|e| DvrpError::ingestion(nodes_path, e))?;
        for row in reader.deserialize::<NodeRow>() {
            let row = row.map_err(|e| DvrpError::ingestion(nodes_path, e))?;
            nodes.push((row.id, Point::new(row.x, row.y)));
        }
        let mut edges = Vec::new();
        let mut reader =
            csv::Reader::from_path(edges_path).map_err(|e| DvrpError::ingestion(edges_path, e))?;
        for row in reader.deserialize::<EdgeRow>() {
            let row = row.map_err(|e| DvrpError::ingestion(edges_path, e))?;
            edges.push((row.u, row.v, row.travel_time));
        }
        Self::new(nodes, edges)
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    #[inline]
    pub fn time(&self, a: usize, b: usize) -> f64 {
        self.times[a * self.coords.len() + b]
    }

    pub fn max_time(&self) -> f64 {
        self.times.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_time(&self) -> f64 {
        let n = self.coords.len();
        if n < 2 {
            return 0.0;
        }
        self.times.iter().sum::<f64>() / (n * (n - 1)) as f64
    }

    /// Node after `from` on a shortest path toward `to`.
    pub fn next_hop(&self, from: usize, to: usize) -> usize {
        self.next_hop[from * self.coords.len() + to] as usize
    }

    /// Node sequence of a shortest path, both endpoints included.
    pub fn path(&self, from: usize, to: usize) -> Vec<usize> {
        let mut path = vec![from];
        let mut cur = from;
        while cur != to {
            cur = self.next_hop(cur, to);
            path.push(cur);
        }
        path
    }

    pub fn nearest_node(&self, p: &Point) -> usize {
        self.coords
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.distance(p).total_cmp(&b.distance(p)))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Axis-aligned bounding box of node coordinates: (min, max).
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.coords {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }
}

/// Geometric constants used by the tour-length bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricConstants {
    pub area: f64,
    pub perimeter: f64,
    /// Maximum distance between two poses, in length units.
    pub diameter: f64,
    /// Maximum time to travel between two tasks and service one at the
    /// expected duration.
    pub service_bound: f64,
    /// True when area and perimeter come from a bounding box (roadmaps).
    pub approximate: bool,
}

/// An angular sector `[start, end)` about a centre point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sector {
    pub index: usize,
    pub start_angle: f64,
    pub end_angle: f64,
    pub center: Point,
    count: usize,
}

impl Sector {
    pub fn contains(&self, p: &Point) -> bool {
        sector_index(&self.center, self.count, p) == self.index
    }
}

/// Index of the equal-angle sector containing `p`. Angles are measured
/// counter-clockwise from the positive x axis; each sector is half-open, so
/// a point on a boundary ray belongs to the sector starting at that ray.
/// The centre itself belongs to sector 0.
pub fn sector_index(center: &Point, count: usize, p: &Point) -> usize {
    let dx = p.x - center.x;
    let dy = p.y - center.y;
    if dx == 0.0 && dy == 0.0 {
        return 0;
    }
    let mut angle = dy.atan2(dx);
    if angle < 0.0 {
        angle += TAU;
    }
    let idx = (angle / TAU * count as f64).floor() as usize;
    idx.min(count - 1)
}

/// The space tasks live in. Cloning is cheap: roadmaps are shared.
#[derive(Clone, Debug)]
pub enum Environment {
    Euclidean(EuclideanRegion),
    Roadmap(Arc<RoadmapGraph>),
}

impl From<EuclideanRegion> for Environment {
    fn from(region: EuclideanRegion) -> Self {
        Environment::Euclidean(region)
    }
}

impl From<RoadmapGraph> for Environment {
    fn from(graph: RoadmapGraph) -> Self {
        Environment::Roadmap(Arc::new(graph))
    }
}

impl Environment {
    pub fn unit_square() -> Self {
        Environment::Euclidean(EuclideanRegion::unit_square())
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self, Environment::Euclidean(_))
    }

    pub fn validate_pose(&self, pose: &Pose) -> Result<()> {
        match (self, pose) {
            (Environment::Euclidean(region), Pose::Point(p)) => {
                if p.x.is_finite() && p.y.is_finite() && region.contains(p) {
                    Ok(())
                } else {
                    Err(DvrpError::InvalidPose(format!(
                        "point ({}, {}) outside {} x {} region",
                        p.x,
                        p.y,
                        region.width(),
                        region.height()
                    )))
                }
            }
            (Environment::Roadmap(g), Pose::Node(i)) => {
                if *i < g.node_count() {
                    Ok(())
                } else {
                    Err(DvrpError::InvalidPose(format!("unknown node index {i}")))
                }
            }
            (Environment::Euclidean(_), Pose::Node(i)) => Err(DvrpError::InvalidPose(format!(
                "node {i} used in a Euclidean region"
            ))),
            (Environment::Roadmap(_), Pose::Point(p)) => Err(DvrpError::InvalidPose(format!(
                "point ({}, {}) used in a roadmap",
                p.x, p.y
            ))),
        }
    }

    /// Travel time between two poses at speed `v`. Roadmap edge weights are
    /// already times, so `v` only applies to Euclidean regions.
    pub fn travel_time(&self, a: &Pose, b: &Pose, v: f64) -> Result<f64> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(DvrpError::InvalidParameter(format!("speed must be positive, got {v}")));
        }
        self.validate_pose(a)?;
        self.validate_pose(b)?;
        Ok(self.leg_time(a, b, v))
    }

    /// Unchecked travel time for poses already validated against this
    /// environment.
    #[inline]
    pub fn leg_time(&self, a: &Pose, b: &Pose, v: f64) -> f64 {
        match (self, a, b) {
            (Environment::Euclidean(_), Pose::Point(p), Pose::Point(q)) => p.distance(q) / v,
            (Environment::Roadmap(g), Pose::Node(i), Pose::Node(j)) => g.time(*i, *j),
            _ => f64::NAN,
        }
    }

    /// Planar coordinates of a pose.
    pub fn coords(&self, pose: &Pose) -> Point {
        match (self, pose) {
            (_, Pose::Point(p)) => *p,
            (Environment::Roadmap(g), Pose::Node(i)) => g.coords()[*i],
            (Environment::Euclidean(_), Pose::Node(_)) => Point::new(f64::NAN, f64::NAN),
        }
    }

    /// Pose nearest to a planar point: the point itself (clamped into the
    /// region) or the closest roadmap node.
    pub fn snap(&self, p: &Point) -> Pose {
        match self {
            Environment::Euclidean(r) => Pose::Point(Point::new(
                p.x.clamp(0.0, r.width()),
                p.y.clamp(0.0, r.height()),
            )),
            Environment::Roadmap(g) => Pose::Node(g.nearest_node(p)),
        }
    }

    /// The waiting pose of an idle vehicle: the region centre, or the node
    /// closest to the mean of the node coordinates.
    pub fn centroid(&self) -> Pose {
        match self {
            Environment::Euclidean(r) => Pose::Point(r.centroid()),
            Environment::Roadmap(g) => {
                let n = g.node_count() as f64;
                let (sx, sy) = g
                    .coords()
                    .iter()
                    .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
                Pose::Node(g.nearest_node(&Point::new(sx / n, sy / n)))
            }
        }
    }

    pub fn geometric_constants(&self, s_bar: f64, v: f64) -> Result<GeometricConstants> {
        if !(s_bar >= 0.0) {
            return Err(DvrpError::InvalidParameter(format!(
                "expected service time must be non-negative, got {s_bar}"
            )));
        }
        if !(v > 0.0) {
            return Err(DvrpError::InvalidParameter(format!("speed must be positive, got {v}")));
        }
        Ok(match self {
            Environment::Euclidean(r) => GeometricConstants {
                area: r.area(),
                perimeter: r.perimeter(),
                diameter: r.diameter(),
                service_bound: r.diameter() / v + s_bar,
                approximate: false,
            },
            Environment::Roadmap(g) => {
                let (lo, hi) = g.bounding_box();
                let (w, h) = (hi.x - lo.x, hi.y - lo.y);
                let diameter = g.max_time() * v;
                GeometricConstants {
                    area: w * h,
                    perimeter: 2.0 * (w + h),
                    diameter,
                    service_bound: diameter / v + s_bar,
                    approximate: true,
                }
            }
        })
    }

    /// Where a vehicle that left `from` for `to` at speed `v` can replan from
    /// after `elapsed` time, and how much longer it must travel to get there.
    /// Euclidean vehicles stop on the spot; roadmap vehicles finish the edge
    /// they are on.
    pub fn divert_point(&self, from: &Pose, to: &Pose, elapsed: f64, v: f64) -> (Pose, f64) {
        match (self, from, to) {
            (Environment::Euclidean(_), Pose::Point(a), Pose::Point(b)) => {
                let total = a.distance(b) / v;
                if total <= 0.0 || elapsed >= total {
                    return (*to, 0.0);
                }
                let frac = (elapsed / total).clamp(0.0, 1.0);
                (Pose::Point(a.lerp(b, frac)), 0.0)
            }
            (Environment::Roadmap(g), Pose::Node(a), Pose::Node(b)) => {
                if elapsed <= 0.0 {
                    return (*from, 0.0);
                }
                let mut cur = *a;
                let mut clock = 0.0;
                while cur != *b {
                    let next = g.next_hop(cur, *b);
                    clock += g.time(cur, next);
                    cur = next;
                    if clock >= elapsed {
                        return (Pose::Node(cur), clock - elapsed);
                    }
                }
                (*to, 0.0)
            }
            _ => (*to, 0.0),
        }
    }
}

/// Splits a Euclidean region into `r` equal-angle sectors about its centre.
/// Sectors have equal angle, not equal area.
pub fn sectors(region: &EuclideanRegion, r: usize) -> Result<Vec<Sector>> {
    if r == 0 {
        return Err(DvrpError::InvalidParameter("sector count must be at least 1".into()));
    }
    let center = region.centroid();
    let step = TAU / r as f64;
    Ok((0..r)
        .map(|index| Sector {
            index,
            start_angle: step * index as f64,
            end_angle: step * (index + 1) as f64,
            center,
            count: r,
        })
        .collect())
}

pub mod synthetic {
    //! Synthetic roadmaps for desk-scale multi-vehicle experiments.

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use serde::{Deserialize, Serialize};

    use super::{Point, RoadmapGraph};
    use crate::error::{DvrpError, Result};

    /// A city made of square street-grid districts laid out on a coarse grid
    /// and joined by arterial roads. Each district carries a request weight
    /// so the spatial demand can be made deliberately uneven.
    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct DistrictCity {
        /// Districts per row of the coarse layout.
        pub columns: usize,
        /// Request weight of each district; the district count is its length.
        pub weights: Vec<f64>,
        /// Street-grid nodes per district side.
        pub grid: usize,
        /// Street spacing in metres.
        pub block: f64,
        /// Gap between neighbouring districts in metres.
        pub gap: f64,
        /// Driving speed in metres per second.
        pub speed: f64,
        /// Upper bound of the multiplicative congestion jitter on streets.
        pub jitter: f64,
        pub seed: u64,
    }

    impl Default for DistrictCity {
        fn default() -> Self {
            Self {
                columns: 3,
                weights: vec![0.55, 0.62, 0.70, 0.78, 0.87, 0.92],
                grid: 6,
                block: 250.0,
                gap: 1500.0,
                speed: 8.0,
                jitter: 0.3,
                seed: 7,
            }
        }
    }

    impl DistrictCity {
        /// Builds the roadmap and the per-node request weights.
        pub fn build(&self) -> Result<(RoadmapGraph, Vec<f64>)> {
            if self.columns == 0 || self.weights.is_empty() || self.grid == 0 {
                return Err(DvrpError::InvalidParameter(
                    "district city needs columns, weights and a grid size".into(),
                ));
            }
            if !(self.block > 0.0 && self.speed > 0.0 && self.gap >= 0.0 && self.jitter >= 0.0) {
                return Err(DvrpError::InvalidParameter(
                    "district city dimensions must be positive".into(),
                ));
            }
            if self.weights.iter().any(|w| !(*w >= 0.0)) {
                return Err(DvrpError::InvalidParameter(
                    "district weights must be non-negative".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            let g = self.grid;
            let span = self.block * (g - 1) as f64;
            let pitch = span + self.gap;
            let per_district = g * g;
            let mut ids = Vec::new();
            let mut coords = Vec::new();
            let mut node_weights = Vec::new();
            let mut edges = Vec::new();
            for (d, &w) in self.weights.iter().enumerate() {
                let (col, row) = (d % self.columns, d / self.columns);
                let (ox, oy) = (col as f64 * pitch, row as f64 * pitch);
                let base = d * per_district;
                for j in 0..g {
                    for i in 0..g {
                        ids.push(format!("d{d}_{i}_{j}"));
                        coords.push(Point::new(
                            ox + i as f64 * self.block,
                            oy + j as f64 * self.block,
                        ));
                        node_weights.push(w / per_district as f64);
                    }
                }
                for j in 0..g {
                    for i in 0..g {
                        let a = base + j * g + i;
                        if i + 1 < g {
                            let factor = 1.0 + rng.gen::<f64>() * self.jitter;
                            edges.push((a, a + 1, self.block / self.speed * factor));
                        }
                        if j + 1 < g {
                            let factor = 1.0 + rng.gen::<f64>() * self.jitter;
                            edges.push((a, a + g, self.block / self.speed * factor));
                        }
                    }
                }
            }
            // arterials join the facing mid-edge nodes of neighbouring districts
            let count = self.weights.len();
            let mid = g / 2;
            for d in 0..count {
                let col = d % self.columns;
                let base = d * per_district;
                if col + 1 < self.columns && d + 1 < count {
                    let a = base + mid * g + (g - 1);
                    let b = (d + 1) * per_district + mid * g;
                    edges.push((a, b, self.gap / self.speed));
                }
                let below = d + self.columns;
                if below < count {
                    let a = base + (g - 1) * g + mid;
                    let b = below * per_district + mid;
                    edges.push((a, b, self.gap / self.speed));
                }
            }
            let graph = RoadmapGraph::from_indexed(ids, coords, edges)?;
            Ok((graph, node_weights))
        }

        /// Node-index range of district `d`.
        pub fn district_nodes(&self, d: usize) -> std::ops::Range<usize> {
            let per = self.grid * self.grid;
            d * per..(d + 1) * per
        }
    }
}
