//! Executes the (policy x load x seed) grid of a config and writes the
//! trace, summary, comparison and bound artifacts.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use dvrp_core::analysis::{compare, retained_waits, stability, summarize, CellWaits, Comparison, StabilityReport, WaitStats};
use dvrp_core::bounds::{check_recursion_envelope, EnvelopeParams, EnvelopeReport};
use dvrp_core::environment::Pose;
use dvrp_core::policies::PolicyKind;
use dvrp_core::sim::{
    k_means_partition, run_fleet, sector_partition, write_queue_csv, write_waits_csv, BoundTally,
    Partitioning, SimSetup, SimulationTrace, WaitRecord,
};
use dvrp_core::workload::{arrival_rate, generate, load_requests};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{rho_label, BuiltEnvironment, LoadedConfig, PartitionSample, Partitioner};

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; all cores when unset.
    pub jobs: Option<usize>,
    /// Overrides the config's output directory.
    pub out: Option<PathBuf>,
}

/// One grid cell, by position in the config lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellIndex {
    pub policy: usize,
    pub rho: usize,
    pub seed: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub policy: String,
    pub rho: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleSummary {
    pub vehicle_id: usize,
    pub tasks: usize,
    pub partition_rho: f64,
    /// `None` when the partition served no tasks after the warm-up cut.
    pub stats: Option<WaitStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellBounds {
    pub lemma1: BoundTally,
    pub envelope: Option<Outcome<EnvelopeReport>>,
    pub stability: Option<Outcome<StabilityReport>>,
}

/// A report, or why it could not be produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome<T> {
    Report(T),
    Unavailable(String),
}

impl<T> Outcome<T> {
    fn from<E: ToString>(r: std::result::Result<T, E>) -> Self {
        match r {
            Ok(v) => Outcome::Report(v),
            Err(e) => Outcome::Unavailable(e.to_string()),
        }
    }
}

/// Per-cell results persisted as `stats.json`; its presence marks the cell
/// complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub policy: String,
    pub rho: f64,
    pub seed: u64,
    pub stats: WaitStats,
    pub vehicles: Vec<VehicleSummary>,
    pub bounds: CellBounds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_sha256: String,
    pub versions: Versions,
    pub grid: usize,
    pub completed: BTreeSet<CellKey>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub dvrp_core: String,
    pub dvrp_cli: String,
}

impl Versions {
    fn current() -> Self {
        Self {
            dvrp_core: dvrp_core::VERSION.to_string(),
            dvrp_cli: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

pub struct RunSummary {
    pub out_dir: PathBuf,
    pub cells: Vec<CellStats>,
    pub resumed: usize,
    pub comparison: Comparison,
}

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn cells(loaded: &LoadedConfig) -> Vec<CellIndex> {
    let c = &loaded.config;
    let mut out = Vec::new();
    for policy in 0..c.policies.len() {
        for rho in 0..c.rho.len() {
            for seed in 0..c.seeds.len() {
                out.push(CellIndex { policy, rho, seed });
            }
        }
    }
    out
}

fn key(loaded: &LoadedConfig, cell: CellIndex) -> CellKey {
    let c = &loaded.config;
    CellKey {
        policy: c.policies[cell.policy].name().to_string(),
        rho: c.rho[cell.rho].to_string(),
        seed: c.seeds[cell.seed],
    }
}

pub fn cell_dir(out: &Path, loaded: &LoadedConfig, cell: CellIndex) -> PathBuf {
    let c = &loaded.config;
    out.join(c.policies[cell.policy].name())
        .join(rho_label(c.rho[cell.rho]))
        .join(format!("seed_{}", c.seeds[cell.seed]))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    // write-then-rename so an interrupted run never leaves a torn file
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_manifest(path: &Path) -> Result<Option<Manifest>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path)?;
    Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?))
}

/// Runs every cell not already recorded as complete in the output
/// directory's manifest, then writes the merged artifacts.
pub fn run_experiment(loaded: &LoadedConfig, opts: &RunOptions) -> Result<RunSummary> {
    let out = opts.out.clone().unwrap_or_else(|| loaded.config.output_dir.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let manifest_path = out.join("manifest.json");
    let hash = config_hash(&loaded.text);
    let grid = cells(loaded);
    let mut manifest = match read_manifest(&manifest_path)? {
        Some(m) if m.config_sha256 != hash => bail!(
            "{} holds results of a different config (sha256 {}); choose another output directory",
            out.display(),
            m.config_sha256
        ),
        Some(m) => m,
        None => Manifest {
            name: loaded.config.name.clone(),
            config_sha256: hash,
            versions: Versions::current(),
            grid: grid.len(),
            completed: BTreeSet::new(),
        },
    };
    // a cell counts as done only if its manifest entry and stats file agree
    manifest
        .completed
        .retain(|k| grid.iter().any(|&c| key(loaded, c) == *k));
    write_json(&manifest_path, &manifest)?;
    let done: Vec<CellIndex> = grid
        .iter()
        .copied()
        .filter(|&c| {
            manifest.completed.contains(&key(loaded, c))
                && cell_dir(&out, loaded, c).join("stats.json").exists()
        })
        .collect();
    let pending: Vec<CellIndex> = grid.iter().copied().filter(|c| !done.contains(c)).collect();
    log::info!(
        "{}: {} cells, {} already complete, {} to run",
        loaded.config.name,
        grid.len(),
        done.len(),
        pending.len()
    );

    let built = loaded.environment()?;
    let manifest = Mutex::new(manifest);
    let run_all = || -> Vec<Result<()>> {
        pending
            .par_iter()
            .map(|&cell| {
                let dir = cell_dir(&out, loaded, cell);
                run_cell(loaded, &built, cell, &dir)
                    .with_context(|| format!("cell {:?}", key(loaded, cell)))?;
                let mut m = manifest.lock().expect("manifest lock");
                m.completed.insert(key(loaded, cell));
                write_json(&manifest_path, &*m)
            })
            .collect()
    };
    let results = match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .context("building worker pool")?
            .install(run_all),
        None => run_all(),
    };
    if let Some(err) = results.into_iter().find_map(|r| r.err()) {
        return Err(err.context("run interrupted; rerun the same command to resume"));
    }

    let mut stats = Vec::with_capacity(grid.len());
    let mut waits = Vec::with_capacity(grid.len());
    for &cell in &grid {
        let dir = cell_dir(&out, loaded, cell);
        let s: CellStats = serde_json::from_str(&fs::read_to_string(dir.join("stats.json"))?)
            .with_context(|| format!("reading {}", dir.join("stats.json").display()))?;
        let trace = read_waits_csv(&dir.join("waits.csv"))?;
        waits.push(CellWaits {
            policy: s.policy.clone(),
            rho: s.rho,
            seed: s.seed,
            waits: retained_waits(&trace, loaded.config.warmup_fraction)?,
        });
        stats.push(s);
    }
    write_summary(&out.join("summary.csv"), &stats)?;
    if loaded.config.fleet.m > 1 {
        write_vehicle_summary(&out.join("vehicles.csv"), &stats)?;
    }
    let comparison = compare(&waits, &loaded.reference())?;
    write_json(&out.join("comparison.json"), &comparison)?;
    let bounds: Vec<BoundsRow> = stats
        .iter()
        .map(|s| BoundsRow {
            policy: &s.policy,
            rho: s.rho,
            seed: s.seed,
            bounds: &s.bounds,
        })
        .collect();
    write_json(&out.join("bounds.json"), &bounds)?;
    Ok(RunSummary {
        out_dir: out,
        cells: stats,
        resumed: done.len(),
        comparison,
    })
}

#[derive(Serialize)]
struct BoundsRow<'a> {
    policy: &'a str,
    rho: f64,
    seed: u64,
    bounds: &'a CellBounds,
}

/// Simulates one cell and writes its directory.
pub fn run_cell(loaded: &LoadedConfig, built: &BuiltEnvironment, cell: CellIndex, dir: &Path) -> Result<CellStats> {
    let c = &loaded.config;
    let entry = &c.policies[cell.policy];
    let params = entry.params()?;
    let (rho, seed) = (c.rho[cell.rho], c.seeds[cell.seed]);
    let env = &built.env;
    let mut spec = loaded.workload_spec(rho, seed);
    spec.spatial = loaded.spatial_law(built);
    let tasks = generate(&spec, env)?;
    let partitioning = if c.fleet.m == 1 {
        Partitioning::single(env, env.centroid())
    } else {
        let sample: Vec<Pose> = match &c.fleet.sample {
            PartitionSample::Workload => tasks.iter().map(|t| t.location).collect(),
            PartitionSample::Requests { path } => load_requests(&loaded.resolve(path), env)?,
        };
        match c.fleet.partitioner {
            Partitioner::KMeans => k_means_partition(env, &sample, c.fleet.m, seed)?,
            Partitioner::Sectors => sector_partition(env, &sample, c.fleet.m)?,
        }
    };
    let setup = SimSetup {
        env,
        v: c.workload.v,
        s_bar: c.workload.s_bar,
        solver: &c.solver,
    };
    log::debug!("running {} rho={rho} seed={seed}", entry.name());
    let trace = run_fleet(&tasks, &[params], &partitioning, &setup)?;

    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_waits_csv(&trace, BufWriter::new(File::create(dir.join("waits.csv"))?))?;
    if c.fleet.m == 1 {
        write_queue_csv(&trace, 0, BufWriter::new(File::create(dir.join("queue.csv"))?))?;
    } else {
        for part in &partitioning.parts {
            let name = format!("queue_vehicle_{}.csv", part.vehicle_id);
            write_queue_csv(&trace, part.vehicle_id, BufWriter::new(File::create(dir.join(name))?))?;
        }
    }

    let stats = summarize(&trace, c.warmup_fraction)?;
    let vehicles = trace
        .partitions
        .iter()
        .map(|p| {
            let lane = SimulationTrace {
                waits: trace.waits_of(p.vehicle_id).copied().collect(),
                ..SimulationTrace::default()
            };
            VehicleSummary {
                vehicle_id: p.vehicle_id,
                tasks: p.tasks,
                partition_rho: p.rho,
                stats: summarize(&lane, c.warmup_fraction).ok(),
            }
        })
        .collect();
    let single = c.fleet.m == 1;
    let envelope = (single && params.kind == PolicyKind::Generalized).then(|| {
        let q = env
            .geometric_constants(c.workload.s_bar, c.workload.v)
            .map(|g| g.service_bound);
        Outcome::from(q.and_then(|q| {
            let lambda = arrival_rate(&spec)?;
            let mut ep = EnvelopeParams::new(lambda, params.eta, rho, q);
            ep.seed = seed;
            check_recursion_envelope(&trace, &ep)
        }))
    });
    let cell_stats = CellStats {
        policy: entry.name().to_string(),
        rho,
        seed,
        stats,
        vehicles,
        bounds: CellBounds {
            lemma1: trace.lemma1,
            envelope,
            stability: single.then(|| Outcome::from(stability(&trace, 10))),
        },
    };
    write_json(&dir.join("bounds.json"), &cell_stats.bounds)?;
    write_json(&dir.join("stats.json"), &cell_stats)?;
    Ok(cell_stats)
}

/// Reads back a `waits.csv` written by the simulator.
pub fn read_waits_csv(path: &Path) -> Result<SimulationTrace> {
    #[derive(Deserialize)]
    struct Row {
        task_id: usize,
        vehicle_id: usize,
        arrival: f64,
        service_start: f64,
        service_end: f64,
        iteration: usize,
    }
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut trace = SimulationTrace::default();
    for row in reader.deserialize::<Row>() {
        let r = row.with_context(|| format!("reading {}", path.display()))?;
        trace.waits.push(WaitRecord {
            task_id: r.task_id,
            vehicle_id: r.vehicle_id,
            arrival: r.arrival,
            service_start: r.service_start,
            service_end: r.service_end,
            iteration: r.iteration,
        });
    }
    Ok(trace)
}

fn write_summary(path: &Path, stats: &[CellStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    dvrp_core::analysis::write_summary_header(&mut w)?;
    for s in stats {
        dvrp_core::analysis::write_summary_row(&mut w, &s.policy, s.rho, s.seed, &s.stats)?;
    }
    w.flush()?;
    Ok(())
}

fn write_vehicle_summary(path: &Path, stats: &[CellStats]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "policy,rho,seed,vehicle_id,tasks,partition_rho,mean,std,median,q25,q75,p95,max,count")?;
    for s in stats {
        for v in &s.vehicles {
            match &v.stats {
                Some(st) => writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    s.policy, s.rho, s.seed, v.vehicle_id, v.tasks, v.partition_rho, st.mean, st.std,
                    st.median, st.q25, st.q75, st.p95, st.max, st.count
                )?,
                None => writeln!(
                    w,
                    "{},{},{},{},{},{},,,,,,,,0",
                    s.policy, s.rho, s.seed, v.vehicle_id, v.tasks, v.partition_rho
                )?,
            }
        }
    }
    w.flush()?;
    Ok(())
}
