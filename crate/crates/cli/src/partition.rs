//! `dvrp partition`: splits a request history into vehicle regions.

use std::path::Path;

use anyhow::{bail, Context, Result};
use dvrp_core::environment::{Environment, EuclideanRegion};
use dvrp_core::sim::{k_means_partition, sector_partition, Partitioning};
use dvrp_core::workload::load_requests;
use serde::{Deserialize, Serialize};

use crate::config::{self, Partitioner};

#[derive(Clone, Debug, Serialize)]
pub struct PartitionReport {
    pub m: usize,
    pub seed: u64,
    pub partitioner: Partitioner,
    pub requests: usize,
    /// Requests assigned to each vehicle, by vehicle id.
    pub counts: Vec<usize>,
    pub partitioning: Partitioning,
}

pub struct PartitionOptions<'a> {
    pub requests: &'a Path,
    pub m: usize,
    pub seed: u64,
    pub partitioner: Partitioner,
    /// Experiment config whose environment the requests live in.
    pub config: Option<&'a Path>,
}

pub fn partition(opts: &PartitionOptions<'_>) -> Result<PartitionReport> {
    if opts.m == 0 {
        bail!("--m must be at least 1");
    }
    let env = match opts.config {
        Some(path) => {
            let loaded = config::load(path)?;
            loaded.validate()?;
            loaded.environment()?.env
        }
        None => bounding_region(opts.requests)?,
    };
    let sample = load_requests(opts.requests, &env)?;
    let partitioning = match opts.partitioner {
        Partitioner::KMeans => k_means_partition(&env, &sample, opts.m, opts.seed)?,
        Partitioner::Sectors => sector_partition(&env, &sample, opts.m)?,
    };
    let mut counts = vec![0; partitioning.len()];
    for pose in &sample {
        counts[partitioning.assign(&env, pose)] += 1;
    }
    Ok(PartitionReport {
        m: opts.m,
        seed: opts.seed,
        partitioner: opts.partitioner,
        requests: sample.len(),
        counts,
        partitioning,
    })
}

/// Smallest region anchored at the origin that holds every `x,y` request.
fn bounding_region(path: &Path) -> Result<Environment> {
    #[derive(Deserialize)]
    struct Row {
        x: f64,
        y: f64,
    }
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let (mut w, mut h) = (0.0f64, 0.0f64);
    for row in reader.deserialize::<Row>() {
        let r = row.with_context(|| {
            format!("reading {}; roadmap requests (node_id) need --config", path.display())
        })?;
        if !(r.x >= 0.0 && r.y >= 0.0 && r.x.is_finite() && r.y.is_finite()) {
            bail!(
                "{}: request ({}, {}) lies outside the positive quadrant; pass --config with the region",
                path.display(),
                r.x,
                r.y
            );
        }
        w = w.max(r.x);
        h = h.max(r.y);
    }
    if w <= 0.0 || h <= 0.0 {
        bail!("{}: requests span no area; pass --config with the region", path.display());
    }
    let region = EuclideanRegion::new(w, h)?;
    log::info!("inferred a {w} x {h} region from {}", path.display());
    Ok(region.into())
}
