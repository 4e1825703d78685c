//! Consolidated plot-ready report: outcome histograms (training vs
//! generated), 2-D scatter extracts, contour grids, range summary, metrics.
//! Data files only, no image rendering.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use simforge_core::bayesopt::contour_grid;
use simforge_core::generator::{filter_valid, histogram_outcomes, summarize_ranges, GeneratedDataset, RangeSummary};
use simforge_core::surrogate::SurrogateModel;
use simforge_core::util::fmt_f64;

use crate::commands::{
    artifact, load_study, resolve_pair, DATASET_CSV, GENERATED_CSV, METRICS_JSON, STUDY_JSON,
    SURROGATE_MODEL,
};
use crate::config::RunConfig;
use crate::fsio::write_atomic;

const REPORT_DIR: &str = "report";

#[derive(Serialize)]
struct ReportIndex {
    metrics: serde_json::Value,
    retained_fraction: f64,
    n_valid: usize,
    ranges: RangeSummary,
    histogram_bins: usize,
    train_histogram: Vec<usize>,
    generated_histogram: Vec<usize>,
    generated_occupied_bins: usize,
    best_trial_value: f64,
    best_trial_params: Vec<f64>,
    files: Vec<String>,
}

/// Build every report file from the pipeline artifacts. Fails up front with
/// the full list of missing artifacts.
pub fn report(config: &RunConfig) -> Result<()> {
    let required = [
        DATASET_CSV,
        SURROGATE_MODEL,
        METRICS_JSON,
        GENERATED_CSV,
        STUDY_JSON,
    ];
    let missing: Vec<String> = required
        .iter()
        .filter(|name| !artifact(config, name).exists())
        .map(|name| artifact(config, name).display().to_string())
        .collect();
    if !missing.is_empty() {
        bail!("missing artifacts: {}", missing.join(", "));
    }

    let model = SurrogateModel::load(&artifact(config, SURROGATE_MODEL))?;
    // The model embeds the authoritative space (including derived features).
    let space = model.space.clone();
    let ds = simforge_core::data::load_dataset(
        &artifact(config, DATASET_CSV),
        &space,
        &config.data.outcome,
    )?;
    let gd = GeneratedDataset::read_csv(&artifact(config, GENERATED_CSV), &space)?;
    let filtered = filter_valid(&gd);
    let study = load_study(config)?;
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(artifact(config, METRICS_JSON))?)?;

    let report_dir = config.workspace_dir().join(REPORT_DIR);
    let mut files = Vec::new();
    let bins = config.generation.histogram_bins;
    let outcome_range = ds.outcome_range();

    // Outcome histogram: training labels vs generated predictions, one CSV.
    let normalize = |values: &[f64]| -> Vec<f64> {
        match config.surrogate.task {
            simforge_core::surrogate::Task::Binary => {
                values.iter().map(|v| v.clamp(0.0, 1.0)).collect()
            }
            simforge_core::surrogate::Task::Regression => {
                let (lo, hi) = outcome_range;
                let width = (hi - lo).max(1e-12);
                values
                    .iter()
                    .map(|v| ((v - lo) / width).clamp(0.0, 1.0))
                    .collect()
            }
        }
    };
    let train_hist = histogram_outcomes(&normalize(&ds.outcomes), bins)?;
    let generated_hist = histogram_outcomes(&normalize(&filtered.predicted), bins)?;
    let hist_path = report_dir.join("outcome_hist.csv");
    write_atomic(&hist_path, |tmp| {
        let mut writer = csv::Writer::from_path(tmp)?;
        writer.write_record(["bin_lo", "bin_hi", "train_count", "generated_count"])?;
        for b in 0..bins {
            writer.write_record([
                fmt_f64(b as f64 / bins as f64),
                fmt_f64((b + 1) as f64 / bins as f64),
                train_hist[b].to_string(),
                generated_hist[b].to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    })?;
    files.push(rel(&hist_path, config));

    // Scatter extracts: (a, b, source) with training rows then valid
    // generated rows.
    for pair in &config.output.scatter_pairs {
        let (i, j) = resolve_pair(&space, pair)?;
        let path = report_dir.join(format!("scatter_{}_{}.csv", pair.0, pair.1));
        write_atomic(&path, |tmp| {
            let mut writer = csv::Writer::from_path(tmp)?;
            writer.write_record([pair.0.as_str(), pair.1.as_str(), "source"])?;
            for row in ds.rows.rows() {
                writer.write_record([fmt_f64(row[i]), fmt_f64(row[j]), "train".into()])?;
            }
            for row in filtered.rows_raw.rows() {
                writer.write_record([fmt_f64(row[i]), fmt_f64(row[j]), "generated".into()])?;
            }
            writer.flush()?;
            Ok(())
        })?;
        files.push(rel(&path, config));
    }

    // Contour grids at the study's best-parameter baseline.
    let best = study
        .best
        .as_ref()
        .context("study report has no best trial")?;
    let ranges = study.ranges.clone();
    for pair in &config.bayesopt.contour_pairs {
        let indices = resolve_pair(&space, pair)?;
        let grid = contour_grid(
            &model,
            indices,
            &ranges,
            config.bayesopt.resolution,
            &best.params,
        )?;
        let path = report_dir.join(format!("contour_{}_{}.csv", pair.0, pair.1));
        write_atomic(&path, |tmp| Ok(grid.write_csv(tmp)?))?;
        files.push(rel(&path, config));
    }

    let occupied = generated_hist.iter().filter(|&&c| c > 0).count();
    let ranges_summary = summarize_ranges(&gd).unwrap_or(RangeSummary {
        names: vec![],
        min: vec![],
        max: vec![],
    });
    let index = ReportIndex {
        metrics,
        retained_fraction: gd.retained_fraction(),
        n_valid: filtered.n_rows(),
        ranges: ranges_summary,
        histogram_bins: bins,
        train_histogram: train_hist,
        generated_histogram: generated_hist,
        generated_occupied_bins: occupied,
        best_trial_value: best.value,
        best_trial_params: best.params.clone(),
        files,
    };
    let index_path = report_dir.join("report.json");
    write_atomic(&index_path, |tmp| {
        Ok(std::fs::write(tmp, serde_json::to_string_pretty(&index)?)?)
    })?;
    println!("wrote {}", index_path.display());
    Ok(())
}

fn rel(path: &PathBuf, config: &RunConfig) -> String {
    path.strip_prefix(config.workspace_dir())
        .map(|p| p.display().to_string())
        .unwrap_or_else(|_| path.display().to_string())
}
