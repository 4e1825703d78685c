//! Regression trees grown by exact greedy split search.
//!
//! Split finding scans midpoints between consecutive distinct sorted feature
//! values and maximizes the second-order gain `GL^2/HL + GR^2/HR - G^2/H`.
//! No histogram binning: the data is desk-scale and the exact scan is what
//! the brute-force oracle tests compare against.

use serde::{Deserialize, Serialize};

/// One tree node; children are indices into the node array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A fitted regression tree on the boosting residual scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub max_depth: usize,
}

impl RegressionTree {
    /// Raw leaf value for a feature vector. Values `< threshold` go left.
    pub fn predict_row(&self, features: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if features[*feature] < *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn max_feature_index(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

/// Candidate split over a single feature column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub threshold: f64,
    pub gain: f64,
}

fn score(g: f64, h: f64) -> f64 {
    g * g / h.max(1e-16)
}

/// Exact greedy scan for the best split of one feature column.
///
/// `order` must hold the row positions sorted ascending by feature value
/// (ties by original index). Left statistics accumulate along that order and
/// right statistics are `total - left`, which is exactly how the test oracle
/// computes them, so equal instances produce bit-equal gains. Ties in gain
/// resolve to the smallest threshold; returns `None` when no admissible
/// split exists (all values equal, leaf constraints unmet, or no positive
/// gain).
pub fn best_split_sorted(
    values: &[f64],
    gradients: &[f64],
    hessians: &[f64],
    order: &[usize],
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let n = order.len();
    if n < 2 * min_leaf {
        return None;
    }
    let mut g_total = 0.0;
    let mut h_total = 0.0;
    for &i in order {
        g_total += gradients[i];
        h_total += hessians[i];
    }
    let parent = score(g_total, h_total);

    let mut best: Option<SplitCandidate> = None;
    let mut g_left = 0.0;
    let mut h_left = 0.0;
    for (pos, &i) in order.iter().enumerate().take(n - 1) {
        g_left += gradients[i];
        h_left += hessians[i];
        let left_count = pos + 1;
        let (lo, hi) = (values[i], values[order[pos + 1]]);
        if lo == hi {
            continue; // not a boundary between distinct values
        }
        if left_count < min_leaf || n - left_count < min_leaf {
            continue;
        }
        let threshold = 0.5 * (lo + hi);
        if !threshold.is_finite() {
            continue;
        }
        let gain = score(g_left, h_left) + score(g_total - g_left, h_total - h_left) - parent;
        if gain > 0.0 && best.map_or(true, |b| gain > b.gain) {
            best = Some(SplitCandidate { threshold, gain });
        }
    }
    best
}

/// Sort row positions of a column ascending by value, ties by index.
pub fn sorted_order(values: &[f64], rows: &[usize]) -> Vec<usize> {
    let mut order = rows.to_vec();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .expect("finite feature values")
    });
    order
}

/// Public single-column entry point: best split over the full column.
pub fn best_split(
    values: &[f64],
    gradients: &[f64],
    hessians: &[f64],
    min_leaf: usize,
) -> Option<SplitCandidate> {
    assert_eq!(values.len(), gradients.len());
    assert_eq!(values.len(), hessians.len());
    assert!(min_leaf >= 1);
    let rows: Vec<usize> = (0..values.len()).collect();
    let order = sorted_order(values, &rows);
    best_split_sorted(values, gradients, hessians, &order, min_leaf)
}

pub(crate) struct TreeBuilder<'a> {
    /// Column-major feature matrix: `columns[f][row]`.
    pub columns: &'a [Vec<f64>],
    pub gradients: &'a [f64],
    pub hessians: &'a [f64],
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl TreeBuilder<'_> {
    pub fn build(&self, rows: Vec<usize>) -> RegressionTree {
        let mut nodes = Vec::new();
        self.grow(rows, 0, &mut nodes);
        RegressionTree {
            nodes,
            max_depth: self.max_depth,
        }
    }

    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let mut g = 0.0;
        let mut h = 0.0;
        for &i in rows {
            g += self.gradients[i];
            h += self.hessians[i];
        }
        -g / h.max(1e-16)
    }

    fn grow(&self, rows: Vec<usize>, depth: usize, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        if depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
            nodes.push(Node::Leaf {
                value: self.leaf_value(&rows),
            });
            return id;
        }

        // Fixed total order across features: strictly-greater gain wins, so
        // ties resolve to the lowest feature index and smallest threshold.
        let mut best: Option<(usize, SplitCandidate)> = None;
        for (feature, column) in self.columns.iter().enumerate() {
            let order = sorted_order(column, &rows);
            if let Some(cand) =
                best_split_sorted(column, self.gradients, self.hessians, &order, self.min_leaf)
            {
                if best.as_ref().map_or(true, |(_, b)| cand.gain > b.gain) {
                    best = Some((feature, cand));
                }
            }
        }

        match best {
            None => {
                nodes.push(Node::Leaf {
                    value: self.leaf_value(&rows),
                });
                id
            }
            Some((feature, cand)) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&i| self.columns[feature][i] < cand.threshold);
                nodes.push(Node::Split {
                    feature,
                    threshold: cand.threshold,
                    left: 0,
                    right: 0,
                });
                let left = self.grow(left_rows, depth + 1, nodes);
                let right = self.grow(right_rows, depth + 1, nodes);
                if let Node::Split {
                    left: l, right: r, ..
                } = &mut nodes[id]
                {
                    *l = left;
                    *r = right;
                }
                id
            }
        }
    }
}
