//! Bayesian optimization over generated parameter ranges plus contour-grid
//! sensitivity slices.
//!
//! GP + expected improvement with a derivative-free acquisition maximizer:
//! 1024 uniform candidates plus 64 local perturbations of the incumbent per
//! trial, deterministic under the study seed.

mod gp;

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::surrogate::SurrogateModel;
use crate::util::{fmt_f64, linspace, rng_from_seed};
use crate::{Error, Result};

pub use gp::{expected_improvement, GpModel};

const UNIFORM_CANDIDATES: usize = 1024;
const INCUMBENT_PERTURBATIONS: usize = 64;
const PERTURBATION_SCALE: f64 = 0.05;
const NOISE_JITTER: f64 = 1e-6;
const REFIT_INTERVAL: usize = 100;

/// One objective evaluation. Failed evaluations carry `-inf`, stored as JSON
/// `null` in study reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub params: Vec<f64>,
    #[serde(with = "failed_as_null")]
    pub value: f64,
}

mod failed_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            serializer.serialize_some(value)
        } else {
            serializer.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(deserializer)?.unwrap_or(f64::NEG_INFINITY))
    }
}

/// Completed (or in-progress) optimization study, maximizing the objective.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoStudy {
    pub ranges: Vec<(f64, f64)>,
    pub trials: Vec<Trial>,
    pub best: Option<Trial>,
    pub n_init: usize,
    pub seed: u64,
}

impl BoStudy {
    pub fn new(ranges: Vec<(f64, f64)>, n_init: usize, seed: u64) -> Self {
        BoStudy {
            ranges,
            trials: Vec::new(),
            best: None,
            n_init,
            seed,
        }
    }

    fn record(&mut self, params: Vec<f64>, value: f64) {
        let trial = Trial { params, value };
        let improved = match &self.best {
            Some(best) => trial.value > best.value,
            None => true,
        };
        if improved {
            self.best = Some(trial.clone());
        }
        self.trials.push(trial);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn uniform_in_ranges(ranges: &[(f64, f64)], rng: &mut ChaCha8Rng) -> Vec<f64> {
    ranges
        .iter()
        .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..hi) } else { lo })
        .collect()
}

fn clamp_to_ranges(params: &mut [f64], ranges: &[(f64, f64)]) {
    for (p, &(lo, hi)) in params.iter_mut().zip(ranges) {
        *p = p.clamp(lo, hi);
    }
}

/// Propose the next trial point. The first `n_init` trials are uniform
/// space-filling draws; afterwards the expected improvement is maximized
/// over random candidates plus local perturbations of the incumbent. The
/// returned point always lies within the ranges.
pub fn suggest_next(study: &BoStudy, gp: &GpModel, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if study.trials.len() < study.n_init || gp.is_empty() {
        return uniform_in_ranges(&study.ranges, rng);
    }
    let incumbent = match &study.best {
        Some(best) if best.value.is_finite() => best.clone(),
        _ => return uniform_in_ranges(&study.ranges, rng),
    };

    let mut candidates = Vec::with_capacity(UNIFORM_CANDIDATES + INCUMBENT_PERTURBATIONS);
    for _ in 0..UNIFORM_CANDIDATES {
        candidates.push(uniform_in_ranges(&study.ranges, rng));
    }
    for _ in 0..INCUMBENT_PERTURBATIONS {
        let mut p = incumbent.params.clone();
        for (v, &(lo, hi)) in p.iter_mut().zip(&study.ranges) {
            let z: f64 = StandardNormal.sample(rng);
            *v += PERTURBATION_SCALE * (hi - lo) * z;
        }
        clamp_to_ranges(&mut p, &study.ranges);
        candidates.push(p);
    }

    let (mu, sigma) = gp.predict_batch(&candidates);
    let mut best_idx = 0;
    let mut best_ei = f64::NEG_INFINITY;
    for (j, (&m, &s)) in mu.iter().zip(&sigma).enumerate() {
        let ei = expected_improvement(m, s, incumbent.value);
        if ei > best_ei {
            best_ei = ei;
            best_idx = j;
        }
    }
    let mut chosen = candidates.swap_remove(best_idx);
    clamp_to_ranges(&mut chosen, &study.ranges);
    chosen
}

/// Run a full study: iterate suggest/observe for `n_trials`. Non-finite
/// objective values are recorded as failed trials (`-inf`) and skipped by
/// the GP; the incumbent is monotone non-decreasing by construction.
pub fn run_study<F>(
    objective: F,
    ranges: Vec<(f64, f64)>,
    n_trials: usize,
    n_init: usize,
    seed: u64,
) -> Result<BoStudy>
where
    F: Fn(&[f64]) -> f64,
{
    if n_init == 0 || n_trials < n_init {
        return Err(Error::InvalidConfig(
            "need n_trials >= n_init >= 1".into(),
        ));
    }
    for &(lo, hi) in &ranges {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidConfig(
                "study ranges must be finite intervals".into(),
            ));
        }
    }
    let mut rng = rng_from_seed(seed);
    let mut study = BoStudy::new(ranges.clone(), n_init, seed);
    let mut gp = GpModel::new(ranges, NOISE_JITTER);
    for _ in 0..n_trials {
        let params = suggest_next(&study, &gp, &mut rng);
        let raw = objective(&params);
        let value = if raw.is_finite() {
            raw
        } else {
            f64::NEG_INFINITY
        };
        study.record(params.clone(), value);
        if value.is_finite() {
            gp.observe(params, value);
            let n = gp.len();
            if n == study.n_init || (n > study.n_init && (n - study.n_init) % REFIT_INTERVAL == 0)
            {
                gp.refit_length_scales();
            }
        }
    }
    Ok(study)
}

/// Surrogate predictions over a 2-D lattice varying parameters `(i, j)` and
/// holding everything else at `baseline`.
#[derive(Debug, Clone)]
pub struct ContourGrid {
    pub pair: (usize, usize),
    pub names: (String, String),
    pub axis_i: Vec<f64>,
    pub axis_j: Vec<f64>,
    /// `grid[(a, b)]` is the prediction at `(axis_i[a], axis_j[b])`.
    pub grid: Array2<f64>,
    pub baseline: Vec<f64>,
}

impl ContourGrid {
    /// Long-format CSV: (param_i value, param_j value, prediction).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record([
            self.names.0.as_str(),
            self.names.1.as_str(),
            "prediction",
        ])?;
        for (a, &vi) in self.axis_i.iter().enumerate() {
            for (b, &vj) in self.axis_j.iter().enumerate() {
                writer.write_record([fmt_f64(vi), fmt_f64(vj), fmt_f64(self.grid[(a, b)])])?;
            }
        }
        writer.flush()?;
        Ok(())
    }
}

/// Evaluate the surrogate on a `resolution x resolution` lattice over the
/// ranges of parameters `i` and `j`, all other coordinates fixed at
/// `baseline` (typically the study's best parameters).
pub fn contour_grid(
    model: &SurrogateModel,
    pair: (usize, usize),
    ranges: &[(f64, f64)],
    resolution: usize,
    baseline: &[f64],
) -> Result<ContourGrid> {
    let (i, j) = pair;
    let dim = model.space.dim();
    if i == j || i >= dim || j >= dim {
        return Err(Error::InvalidConfig(format!(
            "contour pair ({i}, {j}) is not two distinct parameter indices"
        )));
    }
    if resolution < 2 {
        return Err(Error::InvalidConfig("resolution must be >= 2".into()));
    }
    if baseline.len() != dim || ranges.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: baseline.len().min(ranges.len()),
        });
    }
    for (d, (&b, &(lo, hi))) in baseline.iter().zip(ranges).enumerate() {
        if b < lo || b > hi {
            return Err(Error::InvalidData(format!(
                "baseline[{d}] = {b} outside range [{lo}, {hi}]"
            )));
        }
    }

    let axis_i = linspace(ranges[i].0, ranges[i].1, resolution);
    let axis_j = linspace(ranges[j].0, ranges[j].1, resolution);
    let mut grid = Array2::zeros((resolution, resolution));
    let mut point = baseline.to_vec();
    for (a, &vi) in axis_i.iter().enumerate() {
        for (b, &vj) in axis_j.iter().enumerate() {
            point[i] = vi;
            point[j] = vj;
            grid[(a, b)] = model.predict_params(&point)?;
        }
    }
    Ok(ContourGrid {
        pair,
        names: (
            model.space.specs[i].name.clone(),
            model.space.specs[j].name.clone(),
        ),
        axis_i,
        axis_j,
        grid,
        baseline: baseline.to_vec(),
    })
}
