//! Run configuration: one strict TOML file drives the whole pipeline.
//!
//! Parsing is strict both ways: unknown keys are rejected by name, and the
//! required keys (seed, workspace, data section, surrogate task, ppo
//! total_steps, generation n, bayesopt trials) must be present. `--set
//! section.key=value` overrides are applied to the raw TOML before
//! deserialization so they face the same strictness.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use simforge_core::data::SplitFractions;
use simforge_core::env::Direction;
use simforge_core::oracle::OracleKind;
use simforge_core::surrogate::Task;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workspace: PathBuf,
    pub data: DataConfig,
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub environment: EnvironmentConfig,
    pub ppo: PpoSection,
    pub generation: GenerationConfig,
    pub bayesopt: BayesoptConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory the config file lives in; resolves relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub kind: String,
    pub n: usize,
    pub outcome: String,
    pub space: PathBuf,
    pub fractions: SplitFractions,
}

impl DataConfig {
    pub fn oracle_kind(&self) -> Result<OracleKind> {
        match self.kind.as_str() {
            "rupture" => Ok(OracleKind::Rupture),
            "material" => Ok(OracleKind::Material),
            other => bail!("unknown data.kind `{other}` (expected rupture|material)"),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    pub task: Task,
    #[serde(default = "default_n_trees")]
    pub n_trees: usize,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    #[serde(default = "default_gbdt_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_min_samples_leaf")]
    pub min_samples_leaf: usize,
    #[serde(default = "default_subsample")]
    pub subsample: f64,
}

fn default_n_trees() -> usize {
    200
}
fn default_max_depth() -> usize {
    4
}
fn default_gbdt_lr() -> f64 {
    0.1
}
fn default_min_samples_leaf() -> usize {
    5
}
fn default_subsample() -> f64 {
    1.0
}

impl SurrogateConfig {
    pub fn gbdt(&self, seed: u64) -> simforge_core::surrogate::GbdtConfig {
        simforge_core::surrogate::GbdtConfig {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            learning_rate: self.learning_rate,
            min_samples_leaf: self.min_samples_leaf,
            subsample: self.subsample,
            seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    #[serde(default = "default_direction")]
    pub direction: Direction,
    #[serde(default = "default_invalid_penalty")]
    pub invalid_penalty: f64,
    #[serde(default = "default_range_margin")]
    pub range_margin: f64,
}

fn default_direction() -> Direction {
    Direction::Maximize
}
fn default_invalid_penalty() -> f64 {
    -1.0
}
fn default_range_margin() -> f64 {
    0.1
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        EnvironmentConfig {
            direction: default_direction(),
            invalid_penalty: default_invalid_penalty(),
            range_margin: default_range_margin(),
        }
    }
}

impl EnvironmentConfig {
    pub fn reward(&self) -> simforge_core::env::RewardConfig {
        simforge_core::env::RewardConfig {
            direction: self.direction,
            invalid_penalty: self.invalid_penalty,
            range_margin: self.range_margin,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PpoSection {
    pub total_steps: usize,
    #[serde(default = "default_clip_eps")]
    pub clip_eps: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_gae_lambda")]
    pub gae_lambda: f64,
    #[serde(default = "default_ppo_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_rollout_size")]
    pub rollout_size: usize,
    #[serde(default = "default_minibatch")]
    pub minibatch: usize,
    #[serde(default = "default_epochs")]
    pub epochs_per_update: usize,
    #[serde(default)]
    pub entropy_coef: f64,
    #[serde(default = "default_value_coef")]
    pub value_coef: f64,
}

fn default_clip_eps() -> f64 {
    0.2
}
fn default_gamma() -> f64 {
    0.99
}
fn default_gae_lambda() -> f64 {
    0.95
}
fn default_ppo_lr() -> f64 {
    3e-4
}
fn default_rollout_size() -> usize {
    2048
}
fn default_minibatch() -> usize {
    64
}
fn default_epochs() -> usize {
    10
}
fn default_value_coef() -> f64 {
    0.5
}

impl PpoSection {
    pub fn ppo(&self, seed: u64) -> simforge_core::ppo::PpoConfig {
        simforge_core::ppo::PpoConfig {
            clip_eps: self.clip_eps,
            gamma: self.gamma,
            gae_lambda: self.gae_lambda,
            learning_rate: self.learning_rate,
            rollout_size: self.rollout_size,
            minibatch: self.minibatch,
            epochs_per_update: self.epochs_per_update,
            total_steps: self.total_steps,
            entropy_coef: self.entropy_coef,
            value_coef: self.value_coef,
            seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub n: usize,
    #[serde(default = "default_histogram_bins")]
    pub histogram_bins: usize,
}

fn default_histogram_bins() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BayesoptConfig {
    pub trials: usize,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_contour_pairs")]
    pub contour_pairs: Vec<(String, String)>,
}

fn default_n_init() -> usize {
    20
}
fn default_resolution() -> usize {
    50
}
fn default_contour_pairs() -> Vec<(String, String)> {
    vec![("height".into(), "width".into())]
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_scatter_pairs")]
    pub scatter_pairs: Vec<(String, String)>,
}

fn default_scatter_pairs() -> Vec<(String, String)> {
    vec![("height".into(), "width".into())]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            scatter_pairs: default_scatter_pairs(),
        }
    }
}

impl RunConfig {
    /// Load, apply `--set` overrides and flag overrides, and validate.
    pub fn load(
        path: &Path,
        overrides: &[String],
        seed_override: Option<u64>,
        workspace_override: Option<PathBuf>,
    ) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let table: toml::Table = text
            .parse()
            .with_context(|| format!("parsing config {}", path.display()))?;
        let mut value = toml::Value::Table(table);
        for entry in overrides {
            apply_override(&mut value, entry)?;
        }
        let mut config: RunConfig = value
            .try_into()
            .with_context(|| format!("validating config {}", path.display()))?;
        if let Some(seed) = seed_override {
            config.seed = seed;
        }
        if let Some(workspace) = workspace_override {
            config.workspace = workspace;
        }
        config.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(config)
    }

    /// Space definition path resolved against the config file location.
    pub fn space_path(&self) -> PathBuf {
        if self.data.space.is_absolute() {
            self.data.space.clone()
        } else {
            self.base_dir.join(&self.data.space)
        }
    }

    /// Workspace path resolved against the current directory (absolute paths
    /// pass through).
    pub fn workspace_dir(&self) -> PathBuf {
        self.workspace.clone()
    }
}

/// Apply one `section.key=value` (or bare `key=value`) override to the raw
/// TOML document. The value is parsed as bool, integer, float, then string.
fn apply_override(root: &mut toml::Value, entry: &str) -> Result<()> {
    let (path, raw_value) = entry
        .split_once('=')
        .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{entry}`"))?;
    let parsed: toml::Value = if let Ok(b) = raw_value.parse::<bool>() {
        toml::Value::Boolean(b)
    } else if let Ok(i) = raw_value.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = raw_value.parse::<f64>() {
        toml::Value::Float(f)
    } else {
        toml::Value::String(raw_value.to_string())
    };

    let segments: Vec<&str> = path.split('.').collect();
    if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
        bail!("--set key `{path}` is malformed");
    }
    let mut current = root;
    for segment in &segments[..segments.len() - 1] {
        let table = current
            .as_table_mut()
            .ok_or_else(|| anyhow!("--set key `{path}`: `{segment}` is not a table"))?;
        current = table
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = current
        .as_table_mut()
        .ok_or_else(|| anyhow!("--set key `{path}` does not address a table entry"))?;
    table.insert(segments.last().unwrap().to_string(), parsed);
    Ok(())
}
