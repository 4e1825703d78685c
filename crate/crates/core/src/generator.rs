//! Batch synthesis from a trained policy, validity filtering, and summaries.
//!
//! Generation re-samples fresh standard-normal states rather than replaying
//! training states: the point is to measure the learned action distribution,
//! not memorization. Output rows are physical units; predictions and validity
//! flags ride along so downstream stages never recompute context.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::ParameterSpace;
use crate::env::{GenEnvironment, RewardModel};
use crate::ppo::PolicyBundle;
use crate::util::{fmt_f64, rng_from_seed};
use crate::{Error, Result};

/// Synthesized parameter rows with predictions and validity flags.
#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub space: ParameterSpace,
    /// Physical-units rows, one generated sample per row.
    pub rows_raw: Array2<f64>,
    /// Link-applied surrogate prediction per row.
    pub predicted: Vec<f64>,
    pub valid: Vec<bool>,
    pub provenance: Provenance,
}

/// Where a generated dataset came from. The timestamp is kept in memory only;
/// artifacts must stay byte-identical across reruns of the same seed.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub policy_id: String,
    pub surrogate_id: String,
    pub seed: u64,
    #[serde(skip)]
    pub created_unix: Option<u64>,
}

/// Per-parameter (min, max) over valid rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeSummary {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl RangeSummary {
    pub fn ranges(&self) -> Vec<(f64, f64)> {
        self.min.iter().copied().zip(self.max.iter().copied()).collect()
    }
}

impl GeneratedDataset {
    pub fn n_rows(&self) -> usize {
        self.rows_raw.nrows()
    }

    pub fn retained_fraction(&self) -> f64 {
        if self.valid.is_empty() {
            return 0.0;
        }
        self.valid.iter().filter(|&&v| v).count() as f64 / self.valid.len() as f64
    }

    /// Write `parameter columns + predicted + valid` as CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.space.specs.iter().map(|s| s.name.clone()).collect();
        header.push("predicted".into());
        header.push("valid".into());
        writer.write_record(&header)?;
        for (i, row) in self.rows_raw.rows().into_iter().enumerate() {
            let mut record: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            record.push(fmt_f64(self.predicted[i]));
            record.push(self.valid[i].to_string());
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Read a generated dataset back (provenance is not stored in the CSV).
    pub fn read_csv(path: &Path, space: &ParameterSpace) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let header = reader.headers()?.clone();
        let find = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("missing column `{name}` in {}", path.display())))
        };
        let param_cols: Vec<usize> = space
            .specs
            .iter()
            .map(|s| find(&s.name))
            .collect::<Result<_>>()?;
        let predicted_col = find("predicted")?;
        let valid_col = find("valid")?;

        let mut values = Vec::new();
        let mut predicted = Vec::new();
        let mut valid = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let line = i + 2;
            let cell = |col: usize| -> Result<&str> {
                record
                    .get(col)
                    .ok_or_else(|| Error::Parse(format!("row {line}: missing field {col}")))
            };
            for &col in &param_cols {
                let text = cell(col)?;
                values.push(text.trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!("row {line}: cannot parse `{text}` as a number"))
                })?);
            }
            let text = cell(predicted_col)?;
            predicted.push(text.trim().parse::<f64>().map_err(|_| {
                Error::Parse(format!("row {line}: cannot parse `{text}` as a number"))
            })?);
            let text = cell(valid_col)?;
            valid.push(match text.trim() {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Error::Parse(format!(
                        "row {line}: cannot parse `{other}` as a boolean"
                    )))
                }
            });
        }
        let rows_raw = Array2::from_shape_vec((predicted.len(), space.dim()), values)
            .map_err(|e| Error::InvalidData(e.to_string()))?;
        Ok(GeneratedDataset {
            space: space.clone(),
            rows_raw,
            predicted,
            valid,
            provenance: Provenance::default(),
        })
    }
}

/// Sample `n` actions from the policy on fresh standard-normal states,
/// destandardize to physical units, predict, and flag validity.
pub fn generate_batch<M: RewardModel>(
    policy: &PolicyBundle,
    env: &GenEnvironment<M>,
    n: usize,
    seed: u64,
) -> Result<GeneratedDataset> {
    let dim = env.dim();
    if policy.policy.action_dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: policy.policy.action_dim(),
        });
    }
    let model = env.model();
    let mut rng = rng_from_seed(seed);
    let mut rows = Array2::zeros((n, dim));
    let mut predicted = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for i in 0..n {
        // Fresh state draw, then one policy sample conditioned on it.
        let state: Vec<f64> = crate::ppo::gaussian_sample_standard(dim, &mut rng);
        let (action, _) = policy.policy.sample_action(&state, &mut rng)?;
        let raw = model.scaling().destandardize_row(&action)?;
        for (j, &v) in raw.iter().enumerate() {
            rows[(i, j)] = v;
        }
        let ok = env.check_validity(&raw)?.is_valid();
        // Out-of-range rows still get a prediction; filtering happens later.
        predicted.push(model.predict_raw(&raw)?);
        valid.push(ok);
    }
    Ok(GeneratedDataset {
        space: model.space().clone(),
        rows_raw: rows,
        predicted,
        valid,
        provenance: Provenance {
            policy_id: String::new(),
            surrogate_id: String::new(),
            seed,
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .ok()
                .map(|d| d.as_secs()),
        },
    })
}

/// Keep exactly the rows flagged valid. Idempotent; an empty result is legal.
pub fn filter_valid(gd: &GeneratedDataset) -> GeneratedDataset {
    let keep: Vec<usize> = gd
        .valid
        .iter()
        .enumerate()
        .filter(|(_, &v)| v)
        .map(|(i, _)| i)
        .collect();
    let mut rows = Array2::zeros((keep.len(), gd.rows_raw.ncols()));
    let mut predicted = Vec::with_capacity(keep.len());
    for (k, &i) in keep.iter().enumerate() {
        rows.row_mut(k).assign(&gd.rows_raw.row(i));
        predicted.push(gd.predicted[i]);
    }
    GeneratedDataset {
        space: gd.space.clone(),
        rows_raw: rows,
        predicted,
        valid: vec![true; keep.len()],
        provenance: gd.provenance.clone(),
    }
}

/// Per-parameter min/max over valid rows.
pub fn summarize_ranges(gd: &GeneratedDataset) -> Result<RangeSummary> {
    let valid_rows: Vec<usize> = gd
        .valid
        .iter()
        .enumerate()
        .filter(|(_, &v)| v)
        .map(|(i, _)| i)
        .collect();
    if valid_rows.is_empty() {
        return Err(Error::InvalidData(
            "range summary needs at least one valid row".into(),
        ));
    }
    let dim = gd.space.dim();
    let mut min = vec![f64::INFINITY; dim];
    let mut max = vec![f64::NEG_INFINITY; dim];
    for &i in &valid_rows {
        for j in 0..dim {
            let v = gd.rows_raw[(i, j)];
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    Ok(RangeSummary {
        names: gd.space.specs.iter().map(|s| s.name.clone()).collect(),
        min,
        max,
    })
}

/// Equal-width histogram over [0, 1]; the last bin is right-closed. Errors
/// on values outside [0, 1].
pub fn histogram_outcomes(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins < 2 {
        return Err(Error::InvalidConfig("histogram needs bins >= 2".into()));
    }
    let mut counts = vec![0usize; bins];
    for &v in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidData(format!(
                "histogram value {v} outside [0, 1]"
            )));
        }
        let bin = ((v * bins as f64).floor() as usize).min(bins - 1);
        counts[bin] += 1;
    }
    Ok(counts)
}
