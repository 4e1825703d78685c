//! Pipeline stage implementations.
//!
//! Each stage reads its declared input artifacts from the workspace and
//! writes its outputs atomically, so a rerun with the same config and seed
//! reproduces every file byte for byte. `pipeline` is literally the six
//! stages in order.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use simforge_core::bayesopt::{contour_grid, run_study, BoStudy};
use simforge_core::data::{
    load_dataset, split_dataset, Dataset, ParameterSpace, SplitTag,
};
use simforge_core::env::GenEnvironment;
use simforge_core::generator::{
    filter_valid, generate_batch, histogram_outcomes, summarize_ranges, GeneratedDataset,
    RangeSummary,
};
use simforge_core::ppo::{collect_rollouts, train_agent, PolicyBundle, PolicyNetwork, ValueNetwork};
use simforge_core::surrogate::{
    evaluate_binary, evaluate_regression, fit, Metrics, SurrogateModel, Task,
};
use simforge_core::util::rng_from_seed;

use crate::config::RunConfig;
use crate::fsio::{sha256_hex, write_atomic};
use crate::seeds;

pub const DATASET_CSV: &str = "dataset.csv";
pub const SURROGATE_MODEL: &str = "surrogate.model";
pub const METRICS_JSON: &str = "metrics.json";
pub const AGENT_POLICY: &str = "agent.policy";
pub const CURVE_CSV: &str = "curve.csv";
pub const GENERATED_CSV: &str = "generated.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const STUDY_JSON: &str = "study.json";
pub const GRID_CSV: &str = "grid.csv";

pub fn artifact(config: &RunConfig, name: &str) -> PathBuf {
    config.workspace_dir().join(name)
}

fn require(path: &Path, produced_by: &str) -> Result<()> {
    if !path.exists() {
        bail!(
            "missing artifact {}; run `{produced_by}` first",
            path.display()
        );
    }
    Ok(())
}

fn load_space(config: &RunConfig) -> Result<ParameterSpace> {
    let path = config.space_path();
    ParameterSpace::load(&path)
        .with_context(|| format!("loading parameter space {}", path.display()))
}

fn load_data(config: &RunConfig) -> Result<Dataset> {
    let path = artifact(config, DATASET_CSV);
    require(&path, "simulate")?;
    let space = load_space(config)?;
    load_dataset(&path, &space, &config.data.outcome)
        .with_context(|| format!("loading {}", path.display()))
}

fn load_model(config: &RunConfig) -> Result<SurrogateModel> {
    let path = artifact(config, SURROGATE_MODEL);
    require(&path, "train-surrogate")?;
    SurrogateModel::load(&path).with_context(|| format!("loading {}", path.display()))
}

fn load_policy(config: &RunConfig) -> Result<PolicyBundle> {
    let path = artifact(config, AGENT_POLICY);
    require(&path, "train-agent")?;
    PolicyBundle::load(&path).with_context(|| format!("loading {}", path.display()))
}

fn split_for(config: &RunConfig, ds: &Dataset) -> Result<Dataset> {
    Ok(split_dataset(
        ds,
        config.data.fractions,
        seeds::derive(config.seed, seeds::TAG_SPLIT),
    )?)
}

/// Environment wired from the surrogate plus full-dataset ranges.
fn build_env(
    config: &RunConfig,
    model: SurrogateModel,
    ds: &Dataset,
    seed: u64,
) -> Result<GenEnvironment<SurrogateModel>> {
    Ok(GenEnvironment::new(
        model,
        config.environment.reward(),
        ds.parameter_ranges(),
        ds.outcome_range(),
        seed,
    )?)
}

/// Normalize outcomes/predictions into [0, 1] for histogramming: binary
/// values pass through, regression values min-max normalize by the training
/// outcome range and clamp.
fn normalize_for_histogram(values: &[f64], task: Task, outcome_range: (f64, f64)) -> Vec<f64> {
    match task {
        Task::Binary => values.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        Task::Regression => {
            let (lo, hi) = outcome_range;
            let width = (hi - lo).max(1e-12);
            values
                .iter()
                .map(|v| ((v - lo) / width).clamp(0.0, 1.0))
                .collect()
        }
    }
}

/// Stage 1: sample the analytic oracle over the space box.
pub fn simulate(config: &RunConfig) -> Result<()> {
    let space = load_space(config)?;
    let kind = config.data.oracle_kind()?;
    let ds = simforge_core::oracle::synth_dataset(
        kind,
        config.data.n,
        seeds::derive(config.seed, seeds::TAG_SIMULATE),
        &space,
    )?;
    let path = artifact(config, DATASET_CSV);
    write_atomic(&path, |tmp| Ok(ds.write_csv(tmp, &config.data.outcome)?))?;
    println!("wrote {} ({} rows)", path.display(), ds.n_rows());
    Ok(())
}

/// Stage 2: fit the boosted surrogate on the train split.
pub fn train_surrogate(config: &RunConfig) -> Result<()> {
    let ds = load_data(config)?;
    let split = split_for(config, &ds)?;
    let train = split.select_rows(&split.split_indices(SplitTag::Train));
    if train.n_rows() == 0 {
        bail!("train split is empty");
    }
    let gbdt = config
        .surrogate
        .gbdt(seeds::derive(config.seed, seeds::TAG_SURROGATE));
    let model = fit(&train, &gbdt, config.surrogate.task)?;
    let path = artifact(config, SURROGATE_MODEL);
    write_atomic(&path, |tmp| Ok(model.save(tmp)?))?;
    println!(
        "wrote {} ({} trees on {} rows)",
        path.display(),
        model.trees.len(),
        train.n_rows()
    );
    Ok(())
}

#[derive(Serialize)]
struct MetricsReport<'a> {
    task: Task,
    split: &'a str,
    n_rows: usize,
    metrics: &'a Metrics,
}

/// Stage 3: evaluate the surrogate on a split and write the metrics report.
pub fn eval(config: &RunConfig, split_name: &str) -> Result<()> {
    let tag = match split_name {
        "train" => SplitTag::Train,
        "validation" => SplitTag::Validation,
        "test" => SplitTag::Test,
        other => bail!("unknown split `{other}` (expected train|validation|test)"),
    };
    let ds = load_data(config)?;
    let model = load_model(config)?;
    let split = split_for(config, &ds)?;
    let subset = split.select_rows(&split.split_indices(tag));
    if subset.n_rows() == 0 {
        bail!("split `{split_name}` contains no rows");
    }
    let metrics = match config.surrogate.task {
        Task::Binary => evaluate_binary(&model, &subset)?,
        Task::Regression => evaluate_regression(&model, &subset)?,
    };
    let report = MetricsReport {
        task: config.surrogate.task,
        split: split_name,
        n_rows: subset.n_rows(),
        metrics: &metrics,
    };
    let path = artifact(config, METRICS_JSON);
    write_atomic(&path, |tmp| {
        Ok(std::fs::write(tmp, serde_json::to_string_pretty(&report)?)?)
    })?;
    match config.surrogate.task {
        Task::Binary => println!(
            "wrote {} (roc_auc {:.4}, macro_f1 {:.4})",
            path.display(),
            metrics.roc_auc.unwrap_or(f64::NAN),
            metrics.macro_f1.unwrap_or(f64::NAN),
        ),
        Task::Regression => println!(
            "wrote {} (r2 {:.4}, rmse {:.4})",
            path.display(),
            metrics.r2.unwrap_or(f64::NAN),
            metrics.rmse.unwrap_or(f64::NAN),
        ),
    }
    Ok(())
}

/// Stage 4: train the PPO agent against the surrogate-backed environment.
pub fn train_agent_cmd(config: &RunConfig) -> Result<()> {
    let ds = load_data(config)?;
    let model = load_model(config)?;
    let mut env = build_env(
        config,
        model,
        &ds,
        seeds::derive(config.seed, seeds::TAG_ENV),
    )?;
    let ppo = config
        .ppo
        .ppo(seeds::derive(config.seed, seeds::TAG_AGENT));
    let (bundle, curve) = train_agent(&mut env, &ppo)?;

    let policy_path = artifact(config, AGENT_POLICY);
    write_atomic(&policy_path, |tmp| Ok(bundle.save(tmp)?))?;
    let curve_path = artifact(config, CURVE_CSV);
    write_atomic(&curve_path, |tmp| Ok(curve.write_csv(tmp)?))?;
    let last = curve.entries.last().expect("at least one rollout");
    println!(
        "wrote {} and {} (final mean reward {:.4})",
        policy_path.display(),
        curve_path.display(),
        last.mean_reward
    );
    Ok(())
}

#[derive(Serialize)]
struct GenerationSummary {
    n_requested: usize,
    n_valid: usize,
    retained_fraction: f64,
    ranges: RangeSummary,
    histogram_bins: usize,
    /// Counts over the filtered predictions, normalized to [0, 1].
    histogram: Vec<usize>,
    provenance: ProvenanceSummary,
}

#[derive(Serialize)]
struct ProvenanceSummary {
    policy_id: String,
    surrogate_id: String,
    seed: u64,
}

/// Stage 5: synthesize a parameter batch with the trained policy.
pub fn generate(config: &RunConfig) -> Result<()> {
    let ds = load_data(config)?;
    let model = load_model(config)?;
    let bundle = load_policy(config)?;
    let outcome_range = ds.outcome_range();
    let seed = seeds::derive(config.seed, seeds::TAG_GENERATE);
    let env = build_env(config, model, &ds, seed)?;
    let mut gd = generate_batch(&bundle, &env, config.generation.n, seed)?;
    gd.provenance.policy_id = sha256_hex(&artifact(config, AGENT_POLICY))?;
    gd.provenance.surrogate_id = sha256_hex(&artifact(config, SURROGATE_MODEL))?;

    let filtered = filter_valid(&gd);
    if filtered.n_rows() == 0 {
        eprintln!("warning: no generated rows survived the validity filter");
    }

    let csv_path = artifact(config, GENERATED_CSV);
    write_atomic(&csv_path, |tmp| Ok(gd.write_csv(tmp)?))?;

    let summary_path = artifact(config, SUMMARY_JSON);
    let normalized = normalize_for_histogram(
        &filtered.predicted,
        config.surrogate.task,
        outcome_range,
    );
    let histogram = histogram_outcomes(&normalized, config.generation.histogram_bins)?;
    let summary = GenerationSummary {
        n_requested: config.generation.n,
        n_valid: filtered.n_rows(),
        retained_fraction: gd.retained_fraction(),
        ranges: summarize_ranges(&gd).unwrap_or(RangeSummary {
            names: vec![],
            min: vec![],
            max: vec![],
        }),
        histogram_bins: config.generation.histogram_bins,
        histogram,
        provenance: ProvenanceSummary {
            policy_id: gd.provenance.policy_id.clone(),
            surrogate_id: gd.provenance.surrogate_id.clone(),
            seed,
        },
    };
    write_atomic(&summary_path, |tmp| {
        Ok(std::fs::write(tmp, serde_json::to_string_pretty(&summary)?)?)
    })?;
    println!(
        "wrote {} and {} (retained {:.3})",
        csv_path.display(),
        summary_path.display(),
        gd.retained_fraction()
    );
    Ok(())
}

/// Resolve a named contour pair against the space.
pub fn resolve_pair(space: &ParameterSpace, pair: &(String, String)) -> Result<(usize, usize)> {
    let find = |name: &str| {
        space
            .index_of(name)
            .ok_or_else(|| anyhow!("contour parameter `{name}` not in the space"))
    };
    Ok((find(&pair.0)?, find(&pair.1)?))
}

/// Stage 6: Bayesian optimization over ranges of the valid generated rows.
pub fn optimize(config: &RunConfig) -> Result<()> {
    let model = load_model(config)?;
    let generated_path = artifact(config, GENERATED_CSV);
    require(&generated_path, "generate")?;
    let gd = GeneratedDataset::read_csv(&generated_path, &model.space)?;
    let filtered = filter_valid(&gd);
    let ranges = summarize_ranges(&filtered)
        .context("optimization needs at least one valid generated row")?
        .ranges();

    let study = run_study(
        |params| model.predict_params(params).unwrap_or(f64::NAN),
        ranges.clone(),
        config.bayesopt.trials,
        config.bayesopt.n_init,
        seeds::derive(config.seed, seeds::TAG_BAYESOPT),
    )?;

    let study_path = artifact(config, STUDY_JSON);
    write_atomic(&study_path, |tmp| Ok(study.save(tmp)?))?;

    let best = study.best.as_ref().expect("study ran at least one trial");
    let pair_names = config
        .bayesopt
        .contour_pairs
        .first()
        .cloned()
        .ok_or_else(|| anyhow!("bayesopt.contour_pairs must name at least one pair"))?;
    let pair = resolve_pair(&model.space, &pair_names)?;
    let grid = contour_grid(
        &model,
        pair,
        &ranges,
        config.bayesopt.resolution,
        &best.params,
    )?;
    let grid_path = artifact(config, GRID_CSV);
    write_atomic(&grid_path, |tmp| Ok(grid.write_csv(tmp)?))?;
    println!(
        "wrote {} and {} (best value {:.4})",
        study_path.display(),
        grid_path.display(),
        best.value
    );
    Ok(())
}

/// All six stages in order.
pub fn pipeline(config: &RunConfig) -> Result<()> {
    simulate(config)?;
    train_surrogate(config)?;
    eval(config, "test")?;
    train_agent_cmd(config)?;
    generate(config)?;
    optimize(config)?;
    Ok(())
}

/// Mean reward of a freshly initialized (untrained) policy, measured over one
/// rollout. This is the random-policy baseline that trained agents are judged
/// against.
pub fn random_policy_baseline(config: &RunConfig, n: usize) -> Result<f64> {
    let ds = load_data(config)?;
    let model = load_model(config)?;
    let mut env = build_env(
        config,
        model,
        &ds,
        seeds::derive(config.seed, seeds::TAG_ENV),
    )?;
    let mut rng = rng_from_seed(seeds::derive(config.seed, seeds::TAG_AGENT));
    let policy = PolicyNetwork::new(env.dim(), &mut rng);
    let value = ValueNetwork::new(env.dim(), &mut rng);
    let batch = collect_rollouts(&mut env, &policy, &value, n, &mut rng)?;
    Ok(batch.mean_reward())
}

/// Load the study back from the workspace (used by report and tests).
pub fn load_study(config: &RunConfig) -> Result<BoStudy> {
    let path = artifact(config, STUDY_JSON);
    require(&path, "optimize")?;
    let text = std::fs::read_to_string(&path)?;
    Ok(serde_json::from_str(&text)?)
}
