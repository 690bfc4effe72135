//! Experiment configuration: a JSON document naming the environment, the
//! workload, the policies and the (policy x load x seed) grid to run.

use std::fmt;
use std::path::{Path, PathBuf};

use dvrp_core::environment::synthetic::DistrictCity;
use dvrp_core::environment::{Environment, EuclideanRegion, RoadmapGraph};
use dvrp_core::policies::PolicyParams;
use dvrp_core::tour_opt::SolverConfig;
use dvrp_core::workload::{SpatialLaw, SpreadKind, WorkloadSpec};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    UnitSquare,
    Rectangle { width: f64, height: f64 },
    /// Synthetic district roadmap; demand follows the district weights.
    DistrictCity(DistrictCity),
    /// `nodes.csv` and `edges.csv`, relative to the config file.
    Roadmap { nodes: PathBuf, edges: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialSpec {
    Uniform,
    /// Node weights of a district city.
    DistrictWeights,
    /// Resampled from a `requests.csv` file, relative to the config file.
    Requests { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub n_tasks: usize,
    pub s_bar: f64,
    pub s_spread: f64,
    #[serde(default)]
    pub spread_kind: SpreadKind,
    /// Vehicle speed; travel times are distances over this.
    pub v: f64,
    pub spatial: SpatialSpec,
}

/// A preset name, or explicit parameters under a chosen name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicyEntry {
    Preset(String),
    Custom { name: String, params: PolicyParams },
}

impl PolicyEntry {
    pub fn name(&self) -> &str {
        match self {
            PolicyEntry::Preset(name) => name,
            PolicyEntry::Custom { name, .. } => name,
        }
    }

    pub fn params(&self) -> Result<PolicyParams, ConfigError> {
        match self {
            PolicyEntry::Preset(name) => PolicyParams::preset(name)
                .map_err(|_| ConfigError::invalid(format!("unknown policy preset {name:?}"), name)),
            PolicyEntry::Custom { params, .. } => Ok(*params),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Partitioner {
    #[default]
    KMeans,
    Sectors,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "from", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSample {
    /// The cell's own task locations.
    Workload,
    Requests { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub m: usize,
    pub partitioner: Partitioner,
    pub sample: PartitionSample,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            m: 1,
            partitioner: Partitioner::KMeans,
            sample: PartitionSample::Workload,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub environment: EnvironmentSpec,
    pub workload: WorkloadConfig,
    pub policies: Vec<PolicyEntry>,
    #[serde(default)]
    pub solver: SolverConfig,
    pub rho: Vec<f64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub warmup_fraction: f64,
    #[serde(default)]
    pub fleet: FleetConfig,
    /// Policy the comparison ratios are taken against; defaults to
    /// `proposed` when listed, else the first policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

/// A parsed config together with its source text and location.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub text: String,
    pub path: PathBuf,
}

impl LoadedConfig {
    pub fn base_dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir().join(p)
        }
    }
}

/// Reads, parses and validates a config file. Errors carry the line they
/// refer to when one can be found.
pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let config = parse(&text)?;
    let loaded = LoadedConfig {
        config,
        text,
        path: path.to_path_buf(),
    };
    loaded.validate()?;
    Ok(loaded)
}

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| {
        let full = e.to_string();
        // serde_json appends its own position; keep it in the fields only
        let message = full.rsplit_once(" at line ").map_or(full.as_str(), |(m, _)| m).to_string();
        ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message,
        }
    })
}

impl LoadedConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.config;
        let at = |e: ConfigError| e.anchor(&self.text);
        if c.name.trim().is_empty() {
            return Err(at(ConfigError::invalid("experiment name is empty", "\"name\"")));
        }
        if c.policies.is_empty() {
            return Err(at(ConfigError::invalid("no policies listed", "\"policies\"")));
        }
        if c.seeds.is_empty() {
            return Err(at(ConfigError::invalid("seeds must not be empty", "\"seeds\"")));
        }
        if c.rho.is_empty() {
            return Err(at(ConfigError::invalid("rho must not be empty", "\"rho\"")));
        }
        if let Some(r) = c.rho.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(at(ConfigError::invalid(format!("load factor {r} must be positive"), "\"rho\"")));
        }
        if !(0.0..1.0).contains(&c.warmup_fraction) {
            return Err(at(ConfigError::invalid(
                format!("warmup_fraction {} must lie in [0, 1)", c.warmup_fraction),
                "\"warmup_fraction\"",
            )));
        }
        if c.workload.n_tasks == 0 {
            return Err(at(ConfigError::invalid("n_tasks must be positive", "\"n_tasks\"")));
        }
        if c.fleet.m == 0 {
            return Err(at(ConfigError::invalid("fleet size must be at least 1", "\"m\"")));
        }
        c.solver
            .validate()
            .map_err(|e| at(ConfigError::invalid(e.to_string(), "\"solver\"")))?;
        let mut names: Vec<&str> = c.policies.iter().map(PolicyEntry::name).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(at(ConfigError::invalid(format!("policy {:?} listed twice", w[0]), w[0])));
        }
        if let Some(bad) = names.iter().find(|n| !is_safe_name(n)) {
            return Err(at(ConfigError::invalid(
                format!("policy name {bad:?} must use letters, digits, '-' or '_'"),
                *bad,
            )));
        }
        if let Some(r) = &c.reference {
            if !names.contains(&r.as_str()) {
                return Err(at(ConfigError::invalid(
                    format!("reference policy {r:?} is not in the policy list"),
                    "\"reference\"",
                )));
            }
        }
        let workload = self.workload_spec(c.rho[0], c.seeds[0]);
        workload
            .validate()
            .map_err(|e| at(ConfigError::invalid(e.to_string(), "\"workload\"")))?;
        let built = self.environment().map_err(at)?;
        if matches!(c.fleet.partitioner, Partitioner::Sectors) && !built.env.is_euclidean() {
            return Err(at(ConfigError::invalid(
                "sector partitions need a Euclidean environment",
                "\"partitioner\"",
            )));
        }
        if matches!(c.workload.spatial, SpatialSpec::DistrictWeights) && built.weights.is_none() {
            return Err(at(ConfigError::invalid(
                "district_weights needs a district_city environment",
                "\"district_weights\"",
            )));
        }
        for entry in &c.policies {
            let params = entry.params().map_err(at)?;
            params
                .validate(&built.env)
                .map_err(|e| at(ConfigError::invalid(format!("policy {:?}: {e}", entry.name()), entry.name())))?;
        }
        check_writable(&c.output_dir).map_err(at)?;
        Ok(())
    }

    pub fn environment(&self) -> Result<BuiltEnvironment, ConfigError> {
        let invalid = |e: dvrp_core::DvrpError| ConfigError::invalid(e.to_string(), "\"environment\"");
        Ok(match &self.config.environment {
            EnvironmentSpec::UnitSquare => BuiltEnvironment {
                env: Environment::unit_square(),
                weights: None,
            },
            EnvironmentSpec::Rectangle { width, height } => BuiltEnvironment {
                env: EuclideanRegion::new(*width, *height).map_err(invalid)?.into(),
                weights: None,
            },
            EnvironmentSpec::DistrictCity(city) => {
                let (graph, weights) = city.build().map_err(invalid)?;
                BuiltEnvironment {
                    env: graph.into(),
                    weights: Some(weights),
                }
            }
            EnvironmentSpec::Roadmap { nodes, edges } => BuiltEnvironment {
                env: RoadmapGraph::from_csv(&self.resolve(nodes), &self.resolve(edges))
                    .map_err(invalid)?
                    .into(),
                weights: None,
            },
        })
    }

    /// Workload of one grid cell.
    pub fn workload_spec(&self, rho: f64, seed: u64) -> WorkloadSpec {
        let w = &self.config.workload;
        WorkloadSpec {
            n_tasks: w.n_tasks,
            rho,
            s_bar: w.s_bar,
            s_spread: w.s_spread,
            spread_kind: w.spread_kind,
            m: self.config.fleet.m,
            v: w.v,
            spatial: SpatialLaw::Uniform,
            seed,
        }
    }

    pub fn spatial_law(&self, built: &BuiltEnvironment) -> SpatialLaw {
        match &self.config.workload.spatial {
            SpatialSpec::Uniform => SpatialLaw::Uniform,
            SpatialSpec::DistrictWeights => SpatialLaw::NodeWeights {
                weights: built.weights.clone().unwrap_or_default(),
            },
            SpatialSpec::Requests { path } => SpatialLaw::FromFile {
                path: self.resolve(path),
            },
        }
    }

    pub fn reference(&self) -> String {
        let c = &self.config;
        c.reference.clone().unwrap_or_else(|| {
            if c.policies.iter().any(|p| p.name() == "proposed") {
                "proposed".into()
            } else {
                c.policies[0].name().to_string()
            }
        })
    }
}

pub struct BuiltEnvironment {
    pub env: Environment,
    /// Per-node demand weights of a synthetic city.
    pub weights: Option<Vec<f64>>,
}

fn is_safe_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

// The output directory, or its closest existing ancestor, must be a
// writable directory. Nothing is created here.
fn check_writable(dir: &Path) -> Result<(), ConfigError> {
    let mut probe = Some(dir);
    while let Some(p) = probe {
        if p.as_os_str().is_empty() {
            return Ok(());
        }
        if p.exists() {
            let meta = std::fs::metadata(p).map_err(|e| ConfigError::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            if !meta.is_dir() {
                return Err(ConfigError::invalid(
                    format!("output path {} is not a directory", p.display()),
                    "\"output_dir\"",
                ));
            }
            if meta.permissions().readonly() {
                return Err(ConfigError::invalid(
                    format!("output directory {} is read-only", p.display()),
                    "\"output_dir\"",
                ));
            }
            return Ok(());
        }
        probe = p.parent();
    }
    Ok(())
}

/// Number of cells in the grid.
pub fn grid_size(c: &ExperimentConfig) -> usize {
    c.policies.len() * c.rho.len() * c.seeds.len()
}

/// Directory-safe rendering of a load factor.
pub fn rho_label(rho: f64) -> String {
    format!("rho_{rho}")
}

impl fmt::Display for PolicyEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
