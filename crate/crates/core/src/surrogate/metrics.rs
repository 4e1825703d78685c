//! Classification and regression metrics for surrogate evaluation.

use serde::{Deserialize, Serialize};

/// Confusion counts at the fixed 0.5 threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_scores(scores: &[f64], labels: &[f64]) -> Confusion {
        let mut c = Confusion {
            tp: 0,
            tn: 0,
            fp: 0,
            fn_: 0,
        };
        for (&s, &y) in scores.iter().zip(labels) {
            let predicted_positive = s >= 0.5;
            match (predicted_positive, y == 1.0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.tp + self.tn + self.fp + self.fn_;
        (self.tp + self.tn) as f64 / total as f64
    }

    fn f1(tp: f64, fp: f64, fn_: f64) -> f64 {
        let denom = 2.0 * tp + fp + fn_;
        if denom == 0.0 {
            0.0
        } else {
            2.0 * tp / denom
        }
    }

    /// Unweighted mean of the positive-class and negative-class F1 scores.
    pub fn macro_f1(&self) -> f64 {
        let pos = Self::f1(self.tp as f64, self.fp as f64, self.fn_ as f64);
        let neg = Self::f1(self.tn as f64, self.fn_ as f64, self.fp as f64);
        0.5 * (pos + neg)
    }
}

/// Metric report; classification and regression fields are populated per
/// task, the others stay `None`. `roc_auc` is also `None` when only one
/// class is present (undefined), and `r2` when the target variance is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Confusion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roc_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
}

/// Rank-statistic ROC-AUC: probability a random positive outscores a random
/// negative, with ties contributing one half. `None` when a class is absent.
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // Average ranks over tied score groups (1-based ranks).
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1.0 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }

    let n_pos_f = n_pos as f64;
    Some((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Classification metrics from probability scores and {0,1} labels.
pub fn binary_metrics(scores: &[f64], labels: &[f64]) -> Metrics {
    let confusion = Confusion::from_scores(scores, labels);
    Metrics {
        roc_auc: roc_auc(scores, labels),
        macro_f1: Some(confusion.macro_f1()),
        accuracy: Some(confusion.accuracy()),
        confusion: Some(confusion),
        ..Metrics::default()
    }
}

/// Regression metrics from predictions and targets.
pub fn regression_metrics(predictions: &[f64], targets: &[f64]) -> Metrics {
    let n = targets.len() as f64;
    let mse = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / n;
    let mae = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (p - y).abs())
        .sum::<f64>()
        / n;
    let mean = targets.iter().sum::<f64>() / n;
    let ss_tot = targets.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>();
    let r2 = if ss_tot > 0.0 {
        Some(1.0 - mse * n / ss_tot)
    } else {
        None
    };
    Metrics {
        r2,
        mse: Some(mse),
        rmse: Some(mse.sqrt()),
        mae: Some(mae),
        ..Metrics::default()
    }
}
