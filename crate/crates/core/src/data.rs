//! Parameter schemas, CSV ingestion, scaling, derived features, and splits.
//!
//! A [`ParameterSpace`] fixes the order and physical meaning of the raw
//! simulation parameters; every vector representation in the pipeline
//! (dataset rows, RL actions, optimization trials) follows that order.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::util::fmt_f64;
use crate::{Error, Result};

/// Physical-plausibility predicate attached to a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Plausibility {
    Positive,
    Nonnegative,
    Negative,
    UnitInterval,
    Unconstrained,
}

impl Plausibility {
    /// Whether a raw value satisfies the predicate. Non-finite values never do.
    pub fn holds(self, x: f64) -> bool {
        if !x.is_finite() {
            return false;
        }
        match self {
            Plausibility::Positive => x > 0.0,
            Plausibility::Nonnegative => x >= 0.0,
            Plausibility::Negative => x < 0.0,
            Plausibility::UnitInterval => (0.0..=1.0).contains(&x),
            Plausibility::Unconstrained => true,
        }
    }
}

/// One raw simulation parameter: name, unit, sampling bounds, plausibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub unit: String,
    pub lower: f64,
    pub upper: f64,
    pub plausibility: Plausibility,
}

impl ParameterSpec {
    fn validate(&self) -> Result<()> {
        if !(self.lower < self.upper) {
            return Err(Error::Schema(format!(
                "parameter `{}`: lower {} must be < upper {}",
                self.name, self.lower, self.upper
            )));
        }
        let consistent = match self.plausibility {
            Plausibility::Positive | Plausibility::Nonnegative => self.lower >= 0.0,
            Plausibility::Negative => self.upper <= 0.0,
            Plausibility::UnitInterval => self.lower >= 0.0 && self.upper <= 1.0,
            Plausibility::Unconstrained => true,
        };
        if !consistent {
            return Err(Error::Schema(format!(
                "parameter `{}`: plausibility {:?} inconsistent with bounds [{}, {}]",
                self.name, self.plausibility, self.lower, self.upper
            )));
        }
        Ok(())
    }
}

/// Formula of an engineered feature over raw parameter indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "operands")]
pub enum FeatureFormula {
    Ratio(usize, usize),
    Difference(usize, usize),
    Product(usize, usize),
}

impl FeatureFormula {
    fn operands(self) -> (usize, usize) {
        match self {
            FeatureFormula::Ratio(a, b)
            | FeatureFormula::Difference(a, b)
            | FeatureFormula::Product(a, b) => (a, b),
        }
    }

    /// Evaluate over a raw parameter row. Ratio denominators are clamped to
    /// magnitude >= 1e-9 (sign preserved, zero treated as positive) so that
    /// near-zero generated values cannot abort the pipeline.
    pub fn eval(self, row: ArrayView1<'_, f64>) -> f64 {
        match self {
            FeatureFormula::Ratio(i, j) => {
                let denom = row[j];
                let sign = if denom < 0.0 { -1.0 } else { 1.0 };
                row[i] / (denom.abs().max(1e-9) * sign)
            }
            FeatureFormula::Difference(i, j) => row[i] - row[j],
            FeatureFormula::Product(i, j) => row[i] * row[j],
        }
    }
}

/// Named engineered feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedFeature {
    pub name: String,
    #[serde(flatten)]
    pub formula: FeatureFormula,
}

/// Ordered schema of raw parameters plus derived-feature recipes. The spec
/// order is authoritative for every vector representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub specs: Vec<ParameterSpec>,
    #[serde(default)]
    pub derived: Vec<DerivedFeature>,
}

impl ParameterSpace {
    pub fn new(specs: Vec<ParameterSpec>, derived: Vec<DerivedFeature>) -> Result<Self> {
        let space = ParameterSpace { specs, derived };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.specs.is_empty() {
            return Err(Error::Schema("parameter space has no parameters".into()));
        }
        let mut seen = HashMap::new();
        for (i, spec) in self.specs.iter().enumerate() {
            spec.validate()?;
            if let Some(prev) = seen.insert(spec.name.clone(), i) {
                return Err(Error::Schema(format!(
                    "duplicate parameter name `{}` (positions {} and {})",
                    spec.name, prev, i
                )));
            }
        }
        for feature in &self.derived {
            if seen.contains_key(&feature.name) {
                return Err(Error::Schema(format!(
                    "derived feature `{}` shadows a parameter name",
                    feature.name
                )));
            }
            let (a, b) = feature.formula.operands();
            if a >= self.specs.len() || b >= self.specs.len() {
                return Err(Error::Schema(format!(
                    "derived feature `{}` references parameter index out of range",
                    feature.name
                )));
            }
        }
        Ok(())
    }

    /// Number of raw parameters.
    pub fn dim(&self) -> usize {
        self.specs.len()
    }

    /// Number of model features: raw parameters plus derived columns.
    pub fn feature_count(&self) -> usize {
        self.specs.len() + self.derived.len()
    }

    /// Raw parameter names followed by derived-feature names.
    pub fn feature_names(&self) -> Vec<String> {
        self.specs
            .iter()
            .map(|s| s.name.clone())
            .chain(self.derived.iter().map(|d| d.name.clone()))
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    /// Full feature vector (raw values plus derived columns) for one raw row.
    pub fn featurize_row(&self, raw: &[f64]) -> Vec<f64> {
        let view = ArrayView1::from(raw);
        let mut out = Vec::with_capacity(self.feature_count());
        out.extend_from_slice(raw);
        for feature in &self.derived {
            out.push(feature.formula.eval(view));
        }
        out
    }

    /// Load a space definition from a TOML file (`[[parameter]]` entries with
    /// name/unit/lower/upper/plausibility, `[[derived]]` entries with
    /// name/kind/operands).
    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct SpaceFile {
            parameter: Vec<ParameterSpec>,
            #[serde(default)]
            derived: Vec<DerivedFeature>,
        }
        let text = std::fs::read_to_string(path)?;
        let file: SpaceFile = toml::from_str(&text)?;
        ParameterSpace::new(file.parameter, file.derived)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct SpaceFile<'a> {
            parameter: &'a [ParameterSpec],
            derived: &'a [DerivedFeature],
        }
        let file = SpaceFile {
            parameter: &self.specs,
            derived: &self.derived,
        };
        let text = toml::to_string_pretty(&file)
            .map_err(|e| Error::Schema(format!("space serialization failed: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Per-column scaling statistics (population standard deviation, so a
/// two-point column {-1, 1} has std exactly 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalingStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize_row(&self, raw: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(raw.len())?;
        Ok(raw
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    pub fn destandardize_row(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(z.len())?;
        Ok(z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(z, (m, s))| z * s + m)
            .collect())
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

/// Split-group tag for one dataset row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

/// Scaling direction for [`apply_scaling`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingDirection {
    Standardize,
    Destandardize,
}

/// Tabular simulation records: one row per simulation, columns in spec order
/// (plus derived columns once materialized), and one outcome per row.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub space: ParameterSpace,
    pub rows: Array2<f64>,
    pub outcomes: Vec<f64>,
    /// Stats the rows are currently standardized under; `None` = raw units.
    pub scaling: Option<ScalingStats>,
    pub split: Option<Vec<SplitTag>>,
}

impl Dataset {
    pub fn new(space: ParameterSpace, rows: Array2<f64>, outcomes: Vec<f64>) -> Result<Self> {
        space.validate()?;
        if rows.ncols() != space.dim() && rows.ncols() != space.feature_count() {
            return Err(Error::Dimension {
                expected: space.dim(),
                got: rows.ncols(),
            });
        }
        if rows.nrows() != outcomes.len() {
            return Err(Error::InvalidData(format!(
                "{} rows but {} outcomes",
                rows.nrows(),
                outcomes.len()
            )));
        }
        Ok(Dataset {
            space,
            rows,
            outcomes,
            scaling: None,
            split: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.ncols()
    }

    /// Row indices tagged with `tag`; empty when no split has been assigned.
    pub fn split_indices(&self, tag: SplitTag) -> Vec<usize> {
        match &self.split {
            Some(tags) => tags
                .iter()
                .enumerate()
                .filter(|(_, t)| **t == tag)
                .map(|(i, _)| i)
                .collect(),
            None => Vec::new(),
        }
    }

    /// New dataset containing only the given rows (split tags dropped).
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let mut rows = Array2::zeros((indices.len(), self.n_cols()));
        let mut outcomes = Vec::with_capacity(indices.len());
        for (k, &i) in indices.iter().enumerate() {
            rows.row_mut(k).assign(&self.rows.row(i));
            outcomes.push(self.outcomes[i]);
        }
        Dataset {
            space: self.space.clone(),
            rows,
            outcomes,
            scaling: self.scaling.clone(),
            split: None,
        }
    }

    /// Per-parameter (min, max) over the raw parameter columns.
    pub fn parameter_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.space.dim())
            .map(|j| {
                let col = self.rows.column(j);
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &v in col.iter() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            })
            .collect()
    }

    /// (min, max) of the outcome vector.
    pub fn outcome_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.outcomes {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Write rows + outcome to CSV with the artifact float format.
    pub fn write_csv(&self, path: &Path, outcome_column: &str) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self
            .space
            .feature_names()
            .into_iter()
            .take(self.n_cols())
            .collect();
        header.push(outcome_column.to_string());
        writer.write_record(&header)?;
        for (i, row) in self.rows.rows().into_iter().enumerate() {
            let mut record: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            record.push(fmt_f64(self.outcomes[i]));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Load a dataset from CSV. The header must contain every parameter name and
/// the outcome column; extra columns are ignored; rows keep file order.
pub fn load_dataset(path: &Path, space: &ParameterSpace, outcome_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers()?.clone();
    let column_index: HashMap<&str, usize> = header
        .iter()
        .enumerate()
        .map(|(i, name)| (name, i))
        .collect();

    let mut param_cols = Vec::with_capacity(space.dim());
    for spec in &space.specs {
        match column_index.get(spec.name.as_str()) {
            Some(&i) => param_cols.push(i),
            None => {
                return Err(Error::Schema(format!(
                    "missing column `{}` in {}",
                    spec.name,
                    path.display()
                )))
            }
        }
    }
    let outcome_col = *column_index.get(outcome_column).ok_or_else(|| {
        Error::Schema(format!(
            "missing column `{}` in {}",
            outcome_column,
            path.display()
        ))
    })?;

    let parse_cell = |record: &csv::StringRecord, line: usize, col: usize| -> Result<f64> {
        let cell = record.get(col).ok_or_else(|| {
            Error::Parse(format!("row {line}: missing field {col}"))
        })?;
        cell.trim().parse::<f64>().map_err(|_| {
            Error::Parse(format!(
                "row {line}, column `{}`: cannot parse `{cell}` as a number",
                header.get(col).unwrap_or("?")
            ))
        })
    };

    let mut values = Vec::new();
    let mut outcomes = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2; // 1-based, after the header
        for &col in &param_cols {
            values.push(parse_cell(&record, line, col)?);
        }
        outcomes.push(parse_cell(&record, line, outcome_col)?);
    }
    if outcomes.is_empty() {
        return Err(Error::InvalidData(format!(
            "{} contains no data rows",
            path.display()
        )));
    }

    let rows = Array2::from_shape_vec((outcomes.len(), space.dim()), values)
        .map_err(|e| Error::InvalidData(e.to_string()))?;
    Dataset::new(space.clone(), rows, outcomes)
}

/// Per-column mean and population standard deviation. Requires at least two
/// rows; rejects constant columns by name.
pub fn fit_scaling(ds: &Dataset) -> Result<ScalingStats> {
    if ds.n_rows() < 2 {
        return Err(Error::InvalidData(
            "scaling requires at least 2 rows".into(),
        ));
    }
    let names = ds.space.feature_names();
    let n = ds.n_rows() as f64;
    let mut mean = Vec::with_capacity(ds.n_cols());
    let mut std = Vec::with_capacity(ds.n_cols());
    for j in 0..ds.n_cols() {
        let col = ds.rows.column(j);
        let m = col.sum() / n;
        let var = col.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / n;
        let s = var.sqrt();
        if s <= 0.0 {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("col{j}"));
            return Err(Error::InvalidData(format!(
                "constant column `{name}` cannot be standardized"
            )));
        }
        mean.push(m);
        std.push(s);
    }
    Ok(ScalingStats { mean, std })
}

/// Standardize (x -> (x-mean)/std) or destandardize (z -> z*std+mean) every
/// column. Standardizing records the stats on the result; destandardizing
/// clears them.
pub fn apply_scaling(
    ds: &Dataset,
    stats: &ScalingStats,
    direction: ScalingDirection,
) -> Result<Dataset> {
    if stats.dim() != ds.n_cols() {
        return Err(Error::Dimension {
            expected: ds.n_cols(),
            got: stats.dim(),
        });
    }
    let mut rows = ds.rows.clone();
    for (j, mut col) in rows.columns_mut().into_iter().enumerate() {
        let (m, s) = (stats.mean[j], stats.std[j]);
        match direction {
            ScalingDirection::Standardize => col.mapv_inplace(|x| (x - m) / s),
            ScalingDirection::Destandardize => col.mapv_inplace(|z| z * s + m),
        }
    }
    Ok(Dataset {
        space: ds.space.clone(),
        rows,
        outcomes: ds.outcomes.clone(),
        scaling: match direction {
            ScalingDirection::Standardize => Some(stats.clone()),
            ScalingDirection::Destandardize => None,
        },
        split: ds.split.clone(),
    })
}

/// Append one column per derived feature, in declaration order. Requires raw
/// (unstandardized) rows; original columns are unchanged.
pub fn derive_features(ds: &Dataset) -> Result<Dataset> {
    if ds.scaling.is_some() {
        return Err(Error::InvalidData(
            "derived features must be computed on raw rows".into(),
        ));
    }
    if ds.n_cols() != ds.space.dim() {
        return Err(Error::InvalidData(
            "derived features already materialized".into(),
        ));
    }
    let n = ds.n_rows();
    let total = ds.space.feature_count();
    let mut rows = Array2::zeros((n, total));
    for (i, raw) in ds.rows.rows().into_iter().enumerate() {
        for (j, &v) in raw.iter().enumerate() {
            rows[(i, j)] = v;
        }
        for (k, feature) in ds.space.derived.iter().enumerate() {
            rows[(i, ds.space.dim() + k)] = feature.formula.eval(raw);
        }
    }
    Ok(Dataset {
        space: ds.space.clone(),
        rows,
        outcomes: ds.outcomes.clone(),
        scaling: None,
        split: ds.split.clone(),
    })
}

/// Fractions of rows assigned to each split group.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
            return Err(Error::InvalidConfig(
                "split fractions must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Tag every row by a seeded uniform shuffle followed by contiguous
/// assignment. Validation and test counts are floor-based; remainder rows go
/// to train.
pub fn split_dataset(ds: &Dataset, fractions: SplitFractions, seed: u64) -> Result<Dataset> {
    fractions.validate()?;
    let n = ds.n_rows();
    // Epsilon absorbs representation error in exact rational fractions
    // (e.g. 23/35 of 35 rows must count as 23).
    let floor_count = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
    let n_val = floor_count(fractions.validation);
    let n_test = floor_count(fractions.test);
    let n_train = n - n_val - n_test;

    let nonzero_groups = [fractions.train, fractions.validation, fractions.test]
        .iter()
        .filter(|&&f| f > 0.0)
        .count();
    if n < nonzero_groups {
        return Err(Error::InvalidData(format!(
            "{n} rows cannot cover {nonzero_groups} split groups"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut crate::util::rng_from_seed(seed));

    let mut tags = vec![SplitTag::Train; n];
    for (pos, &row) in order.iter().enumerate() {
        tags[row] = if pos < n_train {
            SplitTag::Train
        } else if pos < n_train + n_val {
            SplitTag::Validation
        } else {
            SplitTag::Test
        };
    }
    let mut out = ds.clone();
    out.split = Some(tags);
    Ok(out)
}

/// Parse a material model name of the form `t1_t2_t3_t4_d{D}_r{R}` into layer
/// thicknesses, indenter depth, and indenter radius (all nm).
pub fn parse_material_model_name(name: &str) -> Result<([u32; 4], u32, u32)> {
    let err = || Error::Parse(format!("malformed material model name `{name}`"));
    let parts: Vec<&str> = name.split('_').collect();
    if parts.len() != 6 {
        return Err(err());
    }
    let positive = |s: &str| -> Result<u32> {
        let v: u32 = s.parse().map_err(|_| err())?;
        if v == 0 {
            return Err(err());
        }
        Ok(v)
    };
    let mut layers = [0u32; 4];
    for (slot, part) in layers.iter_mut().zip(&parts[..4]) {
        *slot = positive(part)?;
    }
    let depth = positive(parts[4].strip_prefix('d').ok_or_else(err)?)?;
    let radius = positive(parts[5].strip_prefix('r').ok_or_else(err)?)?;
    Ok((layers, depth, radius))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn two_param_space() -> ParameterSpace {
        ParameterSpace::new(
            vec![
                ParameterSpec {
                    name: "width".into(),
                    unit: "km".into(),
                    lower: 0.5,
                    upper: 6.0,
                    plausibility: Plausibility::Positive,
                },
                ParameterSpec {
                    name: "height".into(),
                    unit: "km".into(),
                    lower: 0.1,
                    upper: 3.0,
                    plausibility: Plausibility::Positive,
                },
            ],
            vec![DerivedFeature {
                name: "aspect".into(),
                formula: FeatureFormula::Ratio(0, 1),
            }],
        )
        .unwrap()
    }

    fn dataset(rows: Array2<f64>) -> Dataset {
        let n = rows.nrows();
        Dataset::new(two_param_space(), rows, vec![0.0; n]).unwrap()
    }

    #[test]
    fn scaling_matches_hand_arithmetic() {
        let ds = dataset(array![[1.0, -1.0], [2.0, 1.0], [3.0, 0.0]]);
        let stats = fit_scaling(&ds).unwrap();
        assert_relative_eq!(stats.mean[0], 2.0);
        assert_relative_eq!(stats.std[0], (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        let z = apply_scaling(&ds, &stats, ScalingDirection::Standardize).unwrap();
        assert_relative_eq!(z.rows[(0, 0)], -1.224744871391589, epsilon = 1e-12);
        assert_relative_eq!(z.rows[(1, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(z.rows[(2, 0)], 1.224744871391589, epsilon = 1e-12);
    }

    #[test]
    fn two_point_column_has_unit_std() {
        let ds = dataset(array![[-1.0, 0.0], [1.0, 1.0]]);
        let stats = fit_scaling(&ds).unwrap();
        assert_eq!(stats.mean[0], 0.0);
        assert_eq!(stats.std[0], 1.0);
    }

    #[test]
    fn constant_column_is_rejected_by_name() {
        let ds = dataset(array![[5.0, 0.0], [5.0, 1.0], [5.0, 2.0]]);
        let err = fit_scaling(&ds).unwrap_err();
        assert!(err.to_string().contains("width"), "{err}");
    }

    #[test]
    fn identity_stats_standardize_is_identity() {
        let ds = dataset(array![[1.5, 2.5], [0.5, -2.5]]);
        let stats = ScalingStats {
            mean: vec![0.0, 0.0],
            std: vec![1.0, 1.0],
        };
        let z = apply_scaling(&ds, &stats, ScalingDirection::Standardize).unwrap();
        assert_eq!(z.rows, ds.rows);
    }

    #[test]
    fn standardized_columns_are_centered_and_unit() {
        let ds = dataset(array![[1.0, 4.0], [2.0, -1.0], [4.0, 0.5], [7.0, 2.0]]);
        let stats = fit_scaling(&ds).unwrap();
        let z = apply_scaling(&ds, &stats, ScalingDirection::Standardize).unwrap();
        for j in 0..2 {
            let col = z.rows.column(j);
            let n = col.len() as f64;
            let m = col.sum() / n;
            let var = col.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / n;
            assert!(m.abs() < 1e-9);
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        // Round-trip identity across random matrices (100 cases = 100 seeds).
        #[test]
        fn scaling_round_trip_is_identity(seed in 0u64..100) {
            use rand::Rng;
            let mut rng = crate::util::rng_from_seed(seed);
            let n = rng.random_range(2..40);
            let rows = Array2::from_shape_fn((n, 2), |_| rng.random_range(-50.0..50.0));
            let ds = dataset(rows);
            if let Ok(stats) = fit_scaling(&ds) {
                let z = apply_scaling(&ds, &stats, ScalingDirection::Standardize).unwrap();
                let back = apply_scaling(&z, &stats, ScalingDirection::Destandardize).unwrap();
                for (a, b) in ds.rows.iter().zip(back.rows.iter()) {
                    let scale = a.abs().max(1.0);
                    prop_assert!((a - b).abs() <= 1e-9 * scale);
                }
            }
        }
    }

    #[test]
    fn derived_features_match_hand_arithmetic() {
        let space = ParameterSpace::new(
            vec![
                ParameterSpec {
                    name: "mu_d".into(),
                    unit: "1".into(),
                    lower: 0.2,
                    upper: 0.6,
                    plausibility: Plausibility::UnitInterval,
                },
                ParameterSpec {
                    name: "sdrop".into(),
                    unit: "1".into(),
                    lower: 0.1,
                    upper: 0.5,
                    plausibility: Plausibility::Positive,
                },
            ],
            vec![
                DerivedFeature {
                    name: "friction_product".into(),
                    formula: FeatureFormula::Product(0, 1),
                },
                DerivedFeature {
                    name: "friction_difference".into(),
                    formula: FeatureFormula::Difference(0, 1),
                },
            ],
        )
        .unwrap();
        let ds = Dataset::new(space, array![[0.4, 0.2]], vec![1.0]).unwrap();
        let with = derive_features(&ds).unwrap();
        assert_relative_eq!(with.rows[(0, 2)], 0.08, epsilon = 1e-15);
        assert_relative_eq!(with.rows[(0, 3)], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn ratio_and_difference_examples() {
        let ds = dataset(array![[2.0, 1.0]]);
        let with = derive_features(&ds).unwrap();
        assert_eq!(with.rows[(0, 2)], 2.0);

        let space = ParameterSpace::new(
            vec![
                ParameterSpec {
                    name: "sigma_xx".into(),
                    unit: "MPa".into(),
                    lower: -120.0,
                    upper: -60.0,
                    plausibility: Plausibility::Negative,
                },
                ParameterSpec {
                    name: "sigma_yy".into(),
                    unit: "MPa".into(),
                    lower: -120.0,
                    upper: -60.0,
                    plausibility: Plausibility::Negative,
                },
            ],
            vec![DerivedFeature {
                name: "stress_difference".into(),
                formula: FeatureFormula::Difference(0, 1),
            }],
        )
        .unwrap();
        let ds = Dataset::new(space, array![[-100.0, -80.0]], vec![0.0]).unwrap();
        let with = derive_features(&ds).unwrap();
        assert_eq!(with.rows[(0, 2)], -20.0);
    }

    #[test]
    fn ratio_denominator_is_clamped_not_an_error() {
        let ds = dataset(array![[2.0, 0.0]]);
        let with = derive_features(&ds).unwrap();
        assert_relative_eq!(with.rows[(0, 2)], 2.0e9);
    }

    #[test]
    fn derived_features_are_pure() {
        let ds = dataset(array![[2.0, 1.0], [3.5, 0.7]]);
        let a = derive_features(&ds).unwrap();
        let b = derive_features(&ds.clone()).unwrap();
        assert_eq!(a.rows, b.rows);

        // A no-op scaling round-trip (identity stats) leaves derived values
        // bit-equal.
        let stats = ScalingStats {
            mean: vec![0.0, 0.0],
            std: vec![1.0, 1.0],
        };
        let round = apply_scaling(
            &apply_scaling(&ds, &stats, ScalingDirection::Standardize).unwrap(),
            &stats,
            ScalingDirection::Destandardize,
        )
        .unwrap();
        let c = derive_features(&round).unwrap();
        assert_eq!(a.rows, c.rows);
    }

    #[test]
    fn split_counts_follow_floor_remainder_rule() {
        let ds = dataset(Array2::zeros((2000, 2)));
        let fractions = SplitFractions {
            train: 0.8,
            validation: 0.0,
            test: 0.2,
        };
        let split = split_dataset(&ds, fractions, 11).unwrap();
        assert_eq!(split.split_indices(SplitTag::Train).len(), 1600);
        assert_eq!(split.split_indices(SplitTag::Validation).len(), 0);
        assert_eq!(split.split_indices(SplitTag::Test).len(), 400);
    }

    #[test]
    fn split_handles_exact_rational_fractions() {
        let ds = dataset(Array2::zeros((35, 2)));
        let fractions = SplitFractions {
            train: 23.0 / 35.0,
            validation: 5.0 / 35.0,
            test: 7.0 / 35.0,
        };
        let split = split_dataset(&ds, fractions, 3).unwrap();
        assert_eq!(split.split_indices(SplitTag::Train).len(), 23);
        assert_eq!(split.split_indices(SplitTag::Validation).len(), 5);
        assert_eq!(split.split_indices(SplitTag::Test).len(), 7);
    }

    #[test]
    fn split_is_deterministic_and_a_partition() {
        let ds = dataset(Array2::zeros((101, 2)));
        let fractions = SplitFractions {
            train: 0.7,
            validation: 0.15,
            test: 0.15,
        };
        let a = split_dataset(&ds, fractions, 42).unwrap();
        let b = split_dataset(&ds, fractions, 42).unwrap();
        assert_eq!(a.split, b.split);
        // Remainder to train: floor(15.15) = 15 twice, train = 101-30 = 71.
        assert_eq!(a.split_indices(SplitTag::Train).len(), 71);
        assert_eq!(a.split_indices(SplitTag::Validation).len(), 15);
        assert_eq!(a.split_indices(SplitTag::Test).len(), 15);
        let total: usize = [SplitTag::Train, SplitTag::Validation, SplitTag::Test]
            .iter()
            .map(|&t| a.split_indices(t).len())
            .sum();
        assert_eq!(total, 101);
    }

    #[test]
    fn split_rejects_too_few_rows() {
        let ds = dataset(Array2::zeros((2, 2)));
        let fractions = SplitFractions {
            train: 0.4,
            validation: 0.3,
            test: 0.3,
        };
        assert!(split_dataset(&ds, fractions, 0).is_err());
    }

    #[test]
    fn material_name_parses_per_encoding() {
        assert_eq!(
            parse_material_model_name("6_2_9_1_d7_r10").unwrap(),
            ([6, 2, 9, 1], 7, 10)
        );
        assert_eq!(
            parse_material_model_name("3_4_5_2_d5_r20").unwrap(),
            ([3, 4, 5, 2], 5, 20)
        );
    }

    #[test]
    fn material_name_rejects_malformed_input() {
        for bad in ["6_2_9_d7_r10", "6_2_9_1_7_r10", "6_2_9_1_d7_rx", "", "6_2_9_1_d0_r10"] {
            let err = parse_material_model_name(bad).unwrap_err();
            assert!(err.to_string().contains(bad), "{err}");
        }
    }

    #[test]
    fn csv_round_trip_preserves_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(
            &path,
            "height,extra,width,label\n1.0,9,2.0,1\n0.25,9,4.5,0\n",
        )
        .unwrap();
        let ds = load_dataset(&path, &two_param_space(), "label").unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(ds.rows[(0, 0)], 2.0); // width column reordered per space
        assert_eq!(ds.rows[(0, 1)], 1.0);
        assert_eq!(ds.outcomes, vec![1.0, 0.0]);
    }

    #[test]
    fn csv_single_row_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.csv");
        std::fs::write(&path, "width,height,label\n1.2345678912345,0.5,1\n").unwrap();
        let ds = load_dataset(&path, &two_param_space(), "label").unwrap();
        assert_eq!(ds.n_rows(), 1);
        assert_eq!(ds.rows[(0, 0)], 1.2345678912345_f64);
    }

    #[test]
    fn csv_missing_column_names_it() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "width,label\n1.0,1\n").unwrap();
        let err = load_dataset(&path, &two_param_space(), "label").unwrap_err();
        assert!(err.to_string().contains("height"), "{err}");
    }

    #[test]
    fn csv_bad_cell_reports_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "width,height,label\n1.0,oops,1\n").unwrap();
        let err = load_dataset(&path, &two_param_space(), "label").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("height"), "{msg}");
    }

    #[test]
    fn csv_empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "width,height,label\n").unwrap();
        assert!(load_dataset(&path, &two_param_space(), "label").is_err());
    }

    #[test]
    fn space_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("space.toml");
        let space = two_param_space();
        space.save(&path).unwrap();
        let loaded = ParameterSpace::load(&path).unwrap();
        assert_eq!(space, loaded);
    }

    #[test]
    fn space_rejects_inconsistent_plausibility() {
        let bad = ParameterSpace::new(
            vec![ParameterSpec {
                name: "x".into(),
                unit: "1".into(),
                lower: -1.0,
                upper: 1.0,
                plausibility: Plausibility::Positive,
            }],
            vec![],
        );
        assert!(bad.is_err());
    }
}
