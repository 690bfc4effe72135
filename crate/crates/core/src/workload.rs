//! Stochastic task streams: Poisson arrivals, spatial sampling and truncated
//! Gaussian service durations.

use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, Point, Pose};
use crate::error::{DvrpError, Result};

pub type TaskId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub location: Pose,
    pub arrival_time: f64,
    pub service_duration: f64,
}

/// How `s_spread` is read: directly as a standard deviation, or as a
/// variance whose square root is the standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadKind {
    #[default]
    StdDev,
    Variance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialLaw {
    /// Uniform over a Euclidean region, or uniform over roadmap nodes.
    Uniform,
    /// Roadmap nodes drawn proportionally to the given weights.
    NodeWeights { weights: Vec<f64> },
    /// Resampled from an explicit list of locations.
    Empirical { locations: Vec<Pose> },
    /// Resampled from the rows of a `requests.csv` file.
    FromFile { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub n_tasks: usize,
    pub rho: f64,
    pub s_bar: f64,
    pub s_spread: f64,
    #[serde(default)]
    pub spread_kind: SpreadKind,
    pub m: usize,
    pub v: f64,
    pub spatial: SpatialLaw,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(DvrpError::InvalidParameter(format!(
                "load factor must be positive, got {}",
                self.rho
            )));
        }
        if !(self.s_bar > 0.0 && self.s_bar.is_finite()) {
            return Err(DvrpError::InvalidParameter(format!(
                "mean service time must be positive, got {}",
                self.s_bar
            )));
        }
        if !(self.s_spread >= 0.0 && self.s_spread.is_finite()) {
            return Err(DvrpError::InvalidParameter(format!(
                "service spread must be non-negative, got {}",
                self.s_spread
            )));
        }
        if self.m == 0 {
            return Err(DvrpError::InvalidParameter("vehicle count must be at least 1".into()));
        }
        if !(self.v > 0.0 && self.v.is_finite()) {
            return Err(DvrpError::InvalidParameter(format!(
                "speed must be positive, got {}",
                self.v
            )));
        }
        Ok(())
    }

    /// Standard deviation of service durations.
    pub fn service_std(&self) -> f64 {
        match self.spread_kind {
            SpreadKind::StdDev => self.s_spread,
            SpreadKind::Variance => self.s_spread.sqrt(),
        }
    }
}

/// Task arrival rate `λ = ρ·m / s̄`.
pub fn arrival_rate(spec: &WorkloadSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.rho * spec.m as f64 / spec.s_bar)
}

// Independent streams of one seed, so changing one law leaves the others
// untouched.
const ARRIVAL_STREAM: u64 = 1;
const LOCATION_STREAM: u64 = 2;
const SERVICE_STREAM: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

enum Sampler {
    Rect { width: f64, height: f64 },
    Nodes { count: usize },
    Weighted(WeightedIndex<f64>),
    Resample(Vec<Pose>),
}

impl Sampler {
    fn draw<R: Rng>(&self, rng: &mut R) -> Pose {
        match self {
            Sampler::Rect { width, height } => {
                Pose::point(rng.gen::<f64>() * width, rng.gen::<f64>() * height)
            }
            Sampler::Nodes { count } => Pose::Node(rng.gen_range(0..*count)),
            Sampler::Weighted(w) => Pose::Node(w.sample(rng)),
            Sampler::Resample(rows) => rows[rng.gen_range(0..rows.len())],
        }
    }
}

fn sampler(law: &SpatialLaw, env: &Environment) -> Result<Sampler> {
    match (law, env) {
        (SpatialLaw::Uniform, Environment::Euclidean(r)) => Ok(Sampler::Rect {
            width: r.width(),
            height: r.height(),
        }),
        (SpatialLaw::Uniform, Environment::Roadmap(g)) => Ok(Sampler::Nodes {
            count: g.node_count(),
        }),
        (SpatialLaw::NodeWeights { weights }, Environment::Roadmap(g)) => {
            if weights.len() != g.node_count() {
                return Err(DvrpError::InvalidParameter(format!(
                    "{} node weights for {} nodes",
                    weights.len(),
                    g.node_count()
                )));
            }
            WeightedIndex::new(weights)
                .map(Sampler::Weighted)
                .map_err(|e| DvrpError::InvalidParameter(format!("node weights: {e}")))
        }
        (SpatialLaw::NodeWeights { .. }, Environment::Euclidean(_)) => Err(
            DvrpError::InvalidParameter("node weights require a roadmap environment".into()),
        ),
        (SpatialLaw::Empirical { locations }, _) => {
            if locations.is_empty() {
                return Err(DvrpError::InvalidParameter("empirical law has no locations".into()));
            }
            for pose in locations {
                env.validate_pose(pose)?;
            }
            Ok(Sampler::Resample(locations.clone()))
        }
        (SpatialLaw::FromFile { path }, _) => Ok(Sampler::Resample(load_requests(path, env)?)),
    }
}

#[derive(Deserialize)]
struct PointRow {
    x: f64,
    y: f64,
}

#[derive(Deserialize)]
struct NodeRow {
    node_id: String,
}

/// Reads `requests.csv`: header `x,y` for Euclidean regions, `node_id` for
/// roadmaps.
pub fn load_requests(path: &Path, env: &Environment) -> Result<Vec<Pose>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| DvrpError::ingestion(path, e))?;
    let mut rows = Vec::new();
    match env {
        Environment::Euclidean(_) => {
            for row in reader.deserialize::<PointRow>() {
                let row = row.map_err(|e| DvrpError::ingestion(path, e))?;
                let pose = Pose::point(row.x, row.y);
                env.validate_pose(&pose)
                    .map_err(|e| DvrpError::ingestion(path, e))?;
                rows.push(pose);
            }
        }
        Environment::Roadmap(g) => {
            for row in reader.deserialize::<NodeRow>() {
                let row = row.map_err(|e| DvrpError::ingestion(path, e))?;
                let idx = g.node_index(&row.node_id).ok_or_else(|| {
                    DvrpError::ingestion(path, format!("unknown node id {:?}", row.node_id))
                })?;
                rows.push(Pose::Node(idx));
            }
        }
    }
    if rows.is_empty() {
        return Err(DvrpError::ingestion(path, "no request rows"));
    }
    Ok(rows)
}

/// Draws `n` locations from a spatial law, using the same stream as task
/// generation.
pub fn sample_locations(law: &SpatialLaw, env: &Environment, n: usize, seed: u64) -> Result<Vec<Pose>> {
    let s = sampler(law, env)?;
    let mut rng = stream(seed, LOCATION_STREAM);
    Ok((0..n).map(|_| s.draw(&mut rng)).collect())
}

/// Generates the task stream: exponential inter-arrival gaps at rate λ,
/// i.i.d. locations, and Gaussian service durations resampled until they are
/// at least `s̄/100`.
pub fn generate(spec: &WorkloadSpec, env: &Environment) -> Result<Vec<Task>> {
    let lambda = arrival_rate(spec)?;
    let locations = sampler(&spec.spatial, env)?;
    if spec.n_tasks == 0 {
        return Ok(Vec::new());
    }
    let gaps = Exp::new(lambda).map_err(|e| DvrpError::InvalidParameter(e.to_string()))?;
    let std = spec.service_std();
    let service = Normal::new(spec.s_bar, std)
        .map_err(|e| DvrpError::InvalidParameter(e.to_string()))?;
    let floor = spec.s_bar / 100.0;

    let mut arrival_rng = stream(spec.seed, ARRIVAL_STREAM);
    let mut location_rng = stream(spec.seed, LOCATION_STREAM);
    let mut service_rng = stream(spec.seed, SERVICE_STREAM);

    let mut clock = 0.0;
    let mut tasks = Vec::with_capacity(spec.n_tasks);
    for id in 0..spec.n_tasks {
        clock += gaps.sample(&mut arrival_rng);
        let location = locations.draw(&mut location_rng);
        let service_duration = if std == 0.0 {
            spec.s_bar
        } else {
            loop {
                let s = service.sample(&mut service_rng);
                if s >= floor {
                    break s;
                }
            }
        };
        tasks.push(Task {
            id,
            location,
            arrival_time: clock,
            service_duration,
        });
    }
    Ok(tasks)
}

/// Mean of planar coordinates of a task list.
pub fn mean_location(tasks: &[Task], env: &Environment) -> Option<Point> {
    if tasks.is_empty() {
        return None;
    }
    let (sx, sy) = tasks.iter().fold((0.0, 0.0), |(sx, sy), t| {
        let p = env.coords(&t.location);
        (sx + p.x, sy + p.y)
    });
    let n = tasks.len() as f64;
    Some(Point::new(sx / n, sy / n))
}
