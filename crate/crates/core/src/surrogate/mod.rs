//! From-scratch gradient-boosted decision trees for outcome prediction.
//!
//! Stage-wise fitting on negative gradients with Newton leaf values: squared
//! loss for regression (leaf = residual mean), logistic loss for binary
//! breakthrough prediction (leaf = sum(y - p) / sum(p(1 - p))). The fitted
//! model embeds the parameter space and scaling stats so downstream stages
//! can act on raw actions without extra context.

mod metrics;
mod tree;

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{derive_features, fit_scaling, Dataset, ParameterSpace, ScalingStats};
use crate::util::rng_from_seed;
use crate::{Error, Result};

pub use metrics::{binary_metrics, regression_metrics, roc_auc, Confusion, Metrics};
pub use tree::{best_split, Node, RegressionTree, SplitCandidate};

const MODEL_VERSION: u32 = 1;

/// Prediction task of the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Regression,
}

/// Boosting hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_trees: 200,
            max_depth: 4,
            learning_rate: 0.1,
            min_samples_leaf: 5,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("n_trees must be >= 1".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidConfig("max_depth must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig(
                "learning_rate must lie in (0, 1]".into(),
            ));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidConfig("min_samples_leaf must be >= 1".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::InvalidConfig("subsample must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Fitted boosted ensemble plus the preprocessing context it was trained
/// under (parameter space with derived-feature recipes, raw-column scaling).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub task: Task,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    pub space: ParameterSpace,
    pub scaling: ScalingStats,
}

/// Per-stage training losses recorded during fitting.
#[derive(Debug, Clone)]
pub struct FitTrace {
    pub losses: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl SurrogateModel {
    /// Number of features the trees consume (raw parameters + derived).
    pub fn feature_count(&self) -> usize {
        self.space.feature_count()
    }

    /// Raw additive score before the link function.
    pub fn predict_margin(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.feature_count() {
            return Err(Error::Dimension {
                expected: self.feature_count(),
                got: features.len(),
            });
        }
        let mut score = self.base_score;
        for tree in &self.trees {
            score += self.learning_rate * tree.predict_row(features);
        }
        Ok(score)
    }

    /// Link-applied prediction: probability in [0,1] for binary, unbounded
    /// real for regression.
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        let margin = self.predict_margin(features)?;
        Ok(match self.task {
            Task::Binary => sigmoid(margin),
            Task::Regression => margin,
        })
    }

    /// Prediction from a raw parameter vector (derived features computed
    /// internally).
    pub fn predict_params(&self, raw: &[f64]) -> Result<f64> {
        if raw.len() != self.space.dim() {
            return Err(Error::Dimension {
                expected: self.space.dim(),
                got: raw.len(),
            });
        }
        self.predict(&self.space.featurize_row(raw))
    }

    /// Predictions for every row of a feature matrix.
    pub fn predict_matrix(&self, features: &Array2<f64>) -> Result<Vec<f64>> {
        features
            .rows()
            .into_iter()
            .map(|row| self.predict(row.as_slice().expect("contiguous row")))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            version: MODEL_VERSION,
            task: self.task,
            base_score: self.base_score,
            learning_rate: self.learning_rate,
            trees: self.trees.clone(),
            space: self.space.clone(),
            scaling: self.scaling.clone(),
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.version != MODEL_VERSION {
            return Err(Error::Version(file.version, MODEL_VERSION));
        }
        let model = SurrogateModel {
            task: file.task,
            base_score: file.base_score,
            learning_rate: file.learning_rate,
            trees: file.trees,
            space: file.space,
            scaling: file.scaling,
        };
        let feature_count = model.feature_count();
        for tree in &model.trees {
            if let Some(max) = tree.max_feature_index() {
                if max >= feature_count {
                    return Err(Error::InvalidData(format!(
                        "tree references feature {max}, model has {feature_count}"
                    )));
                }
            }
        }
        Ok(model)
    }
}

/// Versioned self-describing model document.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    task: Task,
    base_score: f64,
    learning_rate: f64,
    trees: Vec<RegressionTree>,
    space: ParameterSpace,
    scaling: ScalingStats,
}

/// Fit a boosted ensemble on a raw dataset (derived features are materialized
/// internally; scaling stats are fitted on the raw parameter columns).
pub fn fit(train: &Dataset, cfg: &GbdtConfig, task: Task) -> Result<SurrogateModel> {
    fit_with_trace(train, cfg, task).map(|(model, _)| model)
}

/// As [`fit`], also returning the per-stage training-loss trace.
pub fn fit_with_trace(
    train: &Dataset,
    cfg: &GbdtConfig,
    task: Task,
) -> Result<(SurrogateModel, FitTrace)> {
    cfg.validate()?;
    if train.n_rows() == 0 {
        return Err(Error::InvalidData("empty training set".into()));
    }
    if train.scaling.is_some() {
        return Err(Error::InvalidData(
            "surrogate training expects raw (unstandardized) rows".into(),
        ));
    }

    let y = &train.outcomes;
    let n = y.len();
    let base_score = match task {
        Task::Regression => y.iter().sum::<f64>() / n as f64,
        Task::Binary => {
            if y.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidData(
                    "binary task requires outcomes in {0, 1}".into(),
                ));
            }
            let positives = y.iter().filter(|&&v| v == 1.0).count();
            if positives == 0 || positives == n {
                return Err(Error::InvalidData(
                    "binary task requires both classes present".into(),
                ));
            }
            let p = positives as f64 / n as f64;
            (p / (1.0 - p)).ln()
        }
    };

    let scaling = fit_scaling(train)?;
    let featurized = derive_features(train)?;
    let columns: Vec<Vec<f64>> = (0..featurized.n_cols())
        .map(|j| featurized.rows.column(j).to_vec())
        .collect();

    let mut margins = vec![base_score; n];
    let mut gradients = vec![0.0; n];
    let mut hessians = vec![0.0; n];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut losses = Vec::with_capacity(cfg.n_trees);
    let mut rng = rng_from_seed(cfg.seed);
    let sample_size = ((cfg.subsample * n as f64).floor() as usize).max(1);

    for _ in 0..cfg.n_trees {
        match task {
            Task::Regression => {
                for i in 0..n {
                    gradients[i] = margins[i] - y[i];
                    hessians[i] = 1.0;
                }
            }
            Task::Binary => {
                for i in 0..n {
                    let p = sigmoid(margins[i]);
                    gradients[i] = p - y[i];
                    hessians[i] = p * (1.0 - p);
                }
            }
        }

        let rows: Vec<usize> = if sample_size < n {
            use rand::seq::SliceRandom;
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            all.truncate(sample_size);
            all.sort_unstable();
            all
        } else {
            (0..n).collect()
        };

        let builder = tree::TreeBuilder {
            columns: &columns,
            gradients: &gradients,
            hessians: &hessians,
            max_depth: cfg.max_depth,
            min_leaf: cfg.min_samples_leaf,
        };
        let fitted = builder.build(rows);
        for i in 0..n {
            let mut features = Vec::with_capacity(columns.len());
            for col in &columns {
                features.push(col[i]);
            }
            margins[i] += cfg.learning_rate * fitted.predict_row(&features);
        }
        trees.push(fitted);

        let loss = match task {
            Task::Regression => {
                margins
                    .iter()
                    .zip(y)
                    .map(|(m, y)| (m - y) * (m - y))
                    .sum::<f64>()
                    / n as f64
            }
            Task::Binary => {
                margins
                    .iter()
                    .zip(y)
                    .map(|(&m, &y)| {
                        // Numerically stable logistic NLL.
                        m.max(0.0) - m * y + (1.0 + (-m.abs()).exp()).ln()
                    })
                    .sum::<f64>()
                    / n as f64
            }
        };
        losses.push(loss);
    }

    Ok((
        SurrogateModel {
            task,
            base_score,
            learning_rate: cfg.learning_rate,
            trees,
            space: train.space.clone(),
            scaling,
        },
        FitTrace { losses },
    ))
}

/// Classification metrics of a model on a raw dataset with {0,1} outcomes.
pub fn evaluate_binary(model: &SurrogateModel, ds: &Dataset) -> Result<Metrics> {
    if model.task != Task::Binary {
        return Err(Error::InvalidConfig(
            "evaluate_binary requires a binary-task model".into(),
        ));
    }
    if ds.outcomes.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidData(
            "binary evaluation requires outcomes in {0, 1}".into(),
        ));
    }
    let scores = predict_raw_dataset(model, ds)?;
    Ok(binary_metrics(&scores, &ds.outcomes))
}

/// Regression metrics of a model on a raw dataset.
pub fn evaluate_regression(model: &SurrogateModel, ds: &Dataset) -> Result<Metrics> {
    if ds.n_rows() == 0 {
        return Err(Error::InvalidData("empty evaluation set".into()));
    }
    let predictions = predict_raw_dataset(model, ds)?;
    Ok(regression_metrics(&predictions, &ds.outcomes))
}

fn predict_raw_dataset(model: &SurrogateModel, ds: &Dataset) -> Result<Vec<f64>> {
    ds.rows
        .rows()
        .into_iter()
        .map(|row| {
            let raw = row.as_slice().expect("contiguous row");
            if raw.len() == model.space.dim() {
                model.predict_params(raw)
            } else {
                model.predict(raw)
            }
        })
        .collect()
}
