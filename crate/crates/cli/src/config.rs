//! The JSON run configuration and its cross-validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use wmmf::lyapunov::{LyapunovConfig, LyapunovError, Setting};
use wmmf::model::{NetworkTopology, TrafficSpec};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub topology: NetworkTopology,
    pub traffic: TrafficSpec,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}

fn default_replications() -> usize {
    20
}

fn default_horizon() -> f64 {
    1000.0
}

/// Only weighted max-min is implemented; route weights live in the topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default)]
    pub kind: PolicyKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    #[default]
    Wmmf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    Validate,
    Run,
    Drift,
    Eventset,
    Stability,
    PsBench,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Validate => "validate",
            ExperimentKind::Run => "run",
            ExperimentKind::Drift => "drift",
            ExperimentKind::Eventset => "eventset",
            ExperimentKind::Stability => "stability",
            ExperimentKind::PsBench => "ps-bench",
        }
    }

    fn needs_norms(self) -> bool {
        matches!(self, ExperimentKind::Validate | ExperimentKind::Drift | ExperimentKind::Eventset)
    }
}

/// Settings for every experiment; the subcommand picks `kind`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: ExperimentKind,
    #[serde(default)]
    pub run: RunSettings,
    #[serde(default)]
    pub drift: DriftSettings,
    #[serde(default)]
    pub eventset: EventSetSettings,
    #[serde(default)]
    pub stability: StabilitySettings,
    #[serde(default)]
    pub ps_bench: PsBenchSettings,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    /// Original documents per route at time 0, residuals drawn from the
    /// service laws. Empty means an empty network.
    #[serde(default)]
    pub initial_counts: Vec<usize>,
    /// Evenly spaced count samples written to `samples.csv`.
    #[serde(default)]
    pub samples: usize,
    /// Evaluate the service-rate lower bound after every event.
    #[serde(default)]
    pub check_rate_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSettings {
    /// One entry per initial state, each giving documents per route.
    #[serde(default)]
    pub initial_counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSetSettings {
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// `auto` is a quarter of the resolved epsilon7.
    #[serde(default)]
    pub epsilon5: Setting,
    #[serde(default = "default_t_values")]
    pub t_values: Vec<f64>,
}

fn default_eta() -> f64 {
    1.0 / 12.0
}

fn default_t_values() -> Vec<f64> {
    vec![1e2, 1e3, 1e4]
}

impl Default for EventSetSettings {
    fn default() -> Self {
        EventSetSettings {
            eta: default_eta(),
            epsilon5: Setting::AUTO,
            t_values: default_t_values(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySettings {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub initial_counts: Vec<usize>,
}

fn default_samples() -> usize {
    100
}

impl Default for StabilitySettings {
    fn default() -> Self {
        StabilitySettings {
            samples: default_samples(),
            initial_counts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsBenchSettings {
    /// Largest accepted relative error of the mean document count.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    0.05
}

impl Default for PsBenchSettings {
    fn default() -> Self {
        PsBenchSettings {
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir() }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Reads, parses and cross-validates a configuration. Defaults are
/// materialized so that serializing the result gives the effective config.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    load_with(path, &Overrides::default())
}

pub fn load_with(path: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config = parse_config(&text)?;
    config.apply(overrides);
    config.materialize();
    config.validate()?;
    Ok(config)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

impl RunConfig {
    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(kind) = overrides.experiment {
            self.experiment.kind = kind;
        }
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(k) = overrides.replications {
            self.replications = k;
        }
        if let Some(dir) = &overrides.out {
            self.outputs.dir.clone_from(dir);
        }
    }

    /// Fills defaults that depend on the number of routes.
    pub fn materialize(&mut self) {
        let routes = self.traffic.num_routes();
        if self.experiment.drift.initial_counts.is_empty() {
            self.experiment.drift.initial_counts = [50, 100, 200].iter().map(|&k| vec![k; routes]).collect();
        }
        if self.experiment.run.initial_counts.is_empty() {
            self.experiment.run.initial_counts = vec![0; routes];
        }
        if self.experiment.stability.initial_counts.is_empty() {
            self.experiment.stability.initial_counts = vec![0; routes];
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        let routes = self.topology.num_routes();
        if let Err(violations) = self.topology.clone().validate() {
            errors.extend(violations.iter().map(|v| format!("topology: {v}")));
        }
        if let Err(e) = self.traffic.validate(routes) {
            errors.push(format!("traffic: {e}"));
        }
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            errors.push(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.replications < 2 {
            errors.push(format!("replications = {} must be at least 2", self.replications));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            errors.push(format!("horizon = {} must be positive and finite", self.horizon));
        }
        if errors.is_empty() {
            // the norm parameters are only meaningful on a well-formed model
            match self.lyapunov.validate(&self.topology, &self.traffic) {
                Ok(()) => {}
                // supercritical loads are legitimate for the stability contrast
                // and are rejected by the experiments that need subcriticality
                Err(LyapunovError::Supercritical(_)) if !self.experiment.kind.needs_norms() => {}
                Err(LyapunovError::Supercritical(slack)) => {
                    errors.push(format!("supercritical configuration (per-link slack {slack:?})"))
                }
                Err(e) => errors.push(format!("lyapunov: {e}")),
            }
        }
        let e = &self.experiment;
        let per_route = |name: &str, counts: &[usize], errors: &mut Vec<String>| {
            if counts.len() != routes {
                errors.push(format!("{name} has {} entries for {routes} routes", counts.len()));
            }
        };
        per_route("experiment.run.initial_counts", &e.run.initial_counts, &mut errors);
        per_route("experiment.stability.initial_counts", &e.stability.initial_counts, &mut errors);
        for (i, c) in e.drift.initial_counts.iter().enumerate() {
            per_route(&format!("experiment.drift.initial_counts[{i}]"), c, &mut errors);
        }
        if e.stability.samples < 4 {
            errors.push("experiment.stability.samples must be at least 4".into());
        }
        let t = &e.eventset.t_values;
        if t.is_empty() || t[0] <= 0.0 || t.windows(2).any(|w| w[1] <= w[0]) {
            errors.push("experiment.eventset.t_values must be positive and increasing".into());
        }
        if !(e.ps_bench.tolerance > 0.0) {
            errors.push("experiment.ps_bench.tolerance must be positive".into());
        }
        if e.kind == ExperimentKind::PsBench && !self.is_single_link_poisson() {
            errors.push("ps-bench needs one unit-capacity link, one route and exponential interarrivals".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(errors))
        }
    }

    fn is_single_link_poisson(&self) -> bool {
        self.topology.capacity == [1.0]
            && self.traffic.num_routes() == 1
            && matches!(
                self.traffic.routes[0].interarrival,
                wmmf::DistributionSpec::Exponential { .. }
            )
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
