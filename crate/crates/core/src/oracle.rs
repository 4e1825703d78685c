//! Analytic stand-ins for the expensive simulators.
//!
//! The rupture oracle labels an 8-parameter fault configuration with a binary
//! breakthrough outcome; the friction oracle maps a layered-material
//! nano-scratching configuration to a friction coefficient. Both are cheap,
//! deterministic, and monotone in the physically meaningful directions, which
//! is what the end-to-end tests lean on. None of the constants are physical;
//! they are tuned so the toy tasks stay balanced and learnable.

use ndarray::Array2;
use rand::Rng;

use crate::data::{
    Dataset, DerivedFeature, FeatureFormula, ParameterSpace, ParameterSpec, Plausibility,
};
use crate::util::rng_from_seed;
use crate::{Error, Result};

/// Raw rupture-simulation parameters. Stresses are in MPa (compressive
/// normal stresses are negative), `d_c` in meters, barrier width/height in km.
#[derive(Debug, Clone, Copy)]
pub struct RuptureParams {
    pub sigma_xx: f64,
    pub sigma_yy: f64,
    pub sigma_xy: f64,
    pub mu_d: f64,
    pub sdrop: f64,
    pub d_c: f64,
    pub width: f64,
    pub height: f64,
}

impl RuptureParams {
    pub fn from_row(row: &[f64]) -> Result<Self> {
        if row.len() != 8 {
            return Err(Error::Dimension {
                expected: 8,
                got: row.len(),
            });
        }
        let p = RuptureParams {
            sigma_xx: row[0],
            sigma_yy: row[1],
            sigma_xy: row[2],
            mu_d: row[3],
            sdrop: row[4],
            d_c: row[5],
            width: row[6],
            height: row[7],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, bool); 8] = [
            ("sigma_xx", self.sigma_xx < 0.0),
            ("sigma_yy", self.sigma_yy < 0.0),
            ("sigma_xy", self.sigma_xy > 0.0),
            ("mu_d", self.mu_d > 0.0 && self.mu_d < 1.0),
            ("sdrop", self.sdrop > 0.0 && self.mu_d + self.sdrop < 1.5),
            ("d_c", self.d_c > 0.0),
            ("width", self.width > 0.0),
            ("height", self.height > 0.0),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::InvalidData(format!(
                    "rupture parameter `{name}` violates its physical range"
                )));
            }
        }
        Ok(())
    }
}

/// Continuous breakthrough score; the binary label is `score >= 0`.
///
/// With `|syy|` the magnitude of the y normal stress:
/// strength excess `S = (sxy - mu_d*|syy|) / (sdrop*|syy|)`, stress asymmetry
/// `D = (sxx - syy)/|syy|`, barrier factor `B = hw/(hw + 4 km^2)`, slip
/// factor `Dc = d_c / 0.8 m`, and
/// `score = 2.0*S + 0.3*D - 1.5*B - 0.8*Dc - 0.25`.
pub fn rupture_score(p: &RuptureParams) -> f64 {
    let syy = p.sigma_yy.abs();
    let strength_excess = (p.sigma_xy - p.mu_d * syy) / (p.sdrop * syy);
    let stress_asymmetry = (p.sigma_xx - p.sigma_yy) / syy;
    let area = p.height * p.width;
    let barrier = area / (area + 4.0);
    let slip = p.d_c / 0.8;
    2.0 * strength_excess + 0.3 * stress_asymmetry - 1.5 * barrier - 0.8 * slip - 0.25
}

/// Binary breakthrough outcome: 1 when the rupture crosses the barrier.
pub fn rupture_oracle(p: &RuptureParams) -> Result<u8> {
    p.validate()?;
    Ok(if rupture_score(p) >= 0.0 { 1 } else { 0 })
}

/// Nano-scratching configuration: four layer thicknesses (nm), indenter depth
/// (nm), indenter radius (nm), scratch distance travelled (nm).
#[derive(Debug, Clone, Copy)]
pub struct MaterialConfig {
    pub layers: [f64; 4],
    pub depth: f64,
    pub radius: f64,
    pub distance: f64,
}

impl MaterialConfig {
    pub fn from_row(row: &[f64]) -> Result<Self> {
        if row.len() != 7 {
            return Err(Error::Dimension {
                expected: 7,
                got: row.len(),
            });
        }
        let m = MaterialConfig {
            layers: [row[0], row[1], row[2], row[3]],
            depth: row[4],
            radius: row[5],
            distance: row[6],
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let layers_ok = self.layers.iter().all(|&t| t > 0.0);
        let checks = [
            ("layers", layers_ok),
            ("depth", (3.0..=7.0).contains(&self.depth)),
            ("radius", (5.0..=40.0).contains(&self.radius)),
            ("distance", (0.0..=20.0).contains(&self.distance)),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::InvalidData(format!(
                    "material parameter `{name}` violates its physical range"
                )));
            }
        }
        Ok(())
    }
}

/// Friction coefficient along the scratch: `mu_inf * tanh(distance / 4 nm)`
/// with `mu_inf = 0.35 + 0.02*t2 - 0.005*radius + 0.01*depth` clamped to
/// [0.05, 1.0]. Larger indenter radii lower the plateau; friction builds up
/// from zero as the scratch progresses.
pub fn friction_oracle(m: &MaterialConfig) -> Result<f64> {
    m.validate()?;
    let mu_inf =
        (0.35 + 0.02 * m.layers[1] - 0.005 * m.radius + 0.01 * m.depth).clamp(0.05, 1.0);
    Ok(mu_inf * (m.distance / 4.0).tanh())
}

/// Which analytic oracle backs a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    Rupture,
    Material,
}

/// Parameter space for the rupture task: the eight varied fault parameters
/// plus the engineered features the surrogate trains on. Bounds double as
/// the uniform sampling box.
pub fn rupture_space() -> ParameterSpace {
    let spec = |name: &str, unit: &str, lower: f64, upper: f64, plausibility| ParameterSpec {
        name: name.into(),
        unit: unit.into(),
        lower,
        upper,
        plausibility,
    };
    ParameterSpace::new(
        vec![
            spec("sigma_xx", "MPa", -120.0, -60.0, Plausibility::Negative),
            spec("sigma_yy", "MPa", -120.0, -60.0, Plausibility::Negative),
            spec("sigma_xy", "MPa", 30.0, 90.0, Plausibility::Positive),
            spec("mu_d", "dimensionless", 0.2, 0.6, Plausibility::UnitInterval),
            spec("sdrop", "dimensionless", 0.1, 0.5, Plausibility::Positive),
            spec("d_c", "m", 0.1, 0.8, Plausibility::Positive),
            spec("width", "km", 0.5, 6.0, Plausibility::Positive),
            spec("height", "km", 0.1, 3.0, Plausibility::Positive),
        ],
        vec![
            DerivedFeature {
                name: "aspect".into(),
                // width / height
                formula: FeatureFormula::Ratio(6, 7),
            },
            DerivedFeature {
                name: "stress_difference".into(),
                // sigma_xx - sigma_yy
                formula: FeatureFormula::Difference(0, 1),
            },
            DerivedFeature {
                name: "friction_product".into(),
                // mu_d * sdrop
                formula: FeatureFormula::Product(3, 4),
            },
            DerivedFeature {
                name: "friction_difference".into(),
                // mu_d - sdrop
                formula: FeatureFormula::Difference(3, 4),
            },
        ],
    )
    .expect("rupture space is statically valid")
}

/// Parameter space for the material task: layer thicknesses, indenter depth
/// and radius, scratch distance.
pub fn material_space() -> ParameterSpace {
    let spec = |name: &str, lower: f64, upper: f64, plausibility| ParameterSpec {
        name: name.into(),
        unit: "nm".into(),
        lower,
        upper,
        plausibility,
    };
    ParameterSpace::new(
        vec![
            spec("t1", 1.0, 10.0, Plausibility::Positive),
            spec("t2", 1.0, 10.0, Plausibility::Positive),
            spec("t3", 1.0, 10.0, Plausibility::Positive),
            spec("t4", 1.0, 10.0, Plausibility::Positive),
            spec("depth", 3.0, 7.0, Plausibility::Positive),
            spec("radius", 5.0, 40.0, Plausibility::Positive),
            spec("distance", 0.0, 20.0, Plausibility::Nonnegative),
        ],
        vec![DerivedFeature {
            name: "depth_radius_ratio".into(),
            formula: FeatureFormula::Ratio(4, 5),
        }],
    )
    .expect("material space is statically valid")
}

/// Default parameter space for an oracle kind.
pub fn default_space(kind: OracleKind) -> ParameterSpace {
    match kind {
        OracleKind::Rupture => rupture_space(),
        OracleKind::Material => material_space(),
    }
}

/// Outcome column name used by the bundled datasets.
pub fn outcome_name(kind: OracleKind) -> &'static str {
    match kind {
        OracleKind::Rupture => "label",
        OracleKind::Material => "friction",
    }
}

/// Sample `n` rows uniformly over the sampling box (the space bounds) and
/// label them with the oracle. Deterministic under the seed.
pub fn synth_dataset(kind: OracleKind, n: usize, seed: u64, space: &ParameterSpace) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidConfig("synthetic dataset needs n >= 1".into()));
    }
    let expected_dim = match kind {
        OracleKind::Rupture => 8,
        OracleKind::Material => 7,
    };
    if space.dim() != expected_dim {
        return Err(Error::Dimension {
            expected: expected_dim,
            got: space.dim(),
        });
    }
    for spec in &space.specs {
        if !spec.lower.is_finite() || !spec.upper.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sampling box for `{}` must be finite",
                spec.name
            )));
        }
    }

    let mut rng = rng_from_seed(seed);
    let dim = space.dim();
    let mut rows = Array2::zeros((n, dim));
    let mut outcomes = Vec::with_capacity(n);
    for i in 0..n {
        for (j, spec) in space.specs.iter().enumerate() {
            rows[(i, j)] = rng.random_range(spec.lower..spec.upper);
        }
        let row: Vec<f64> = rows.row(i).to_vec();
        let y = match kind {
            OracleKind::Rupture => f64::from(rupture_oracle(&RuptureParams::from_row(&row)?)?),
            OracleKind::Material => friction_oracle(&MaterialConfig::from_row(&row)?)?,
        };
        outcomes.push(y);
    }
    let mut ds = Dataset::new(space.clone(), rows, outcomes)?;
    ds.scaling = None;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base_params() -> RuptureParams {
        RuptureParams {
            sigma_xx: -100.0,
            sigma_yy: -100.0,
            sigma_xy: 60.0,
            mu_d: 0.4,
            sdrop: 0.2,
            d_c: 0.4,
            width: 2.0,
            height: 1.0,
        }
    }

    #[test]
    fn rupture_score_matches_hand_evaluation() {
        // S=1, D=0, B=1/3, Dc=0.5 -> 2.0 - 0.5 - 0.4 - 0.25 = 0.85.
        let p = base_params();
        assert_relative_eq!(rupture_score(&p), 0.85, epsilon = 1e-12);
        assert_eq!(rupture_oracle(&p).unwrap(), 1);
    }

    #[test]
    fn zero_barrier_limit_breaks_through() {
        let mut p = base_params();
        p.width = 1e-9;
        p.height = 1e-9;
        // B -> 0: score -> 2.0 - 0.4 - 0.25 = 1.35.
        assert_relative_eq!(rupture_score(&p), 1.35, epsilon = 1e-6);
        assert_eq!(rupture_oracle(&p).unwrap(), 1);
    }

    #[test]
    fn zero_strength_excess_never_breaks() {
        let mut p = base_params();
        p.sigma_xy = p.mu_d * p.sigma_yy.abs(); // S = 0
        assert!(rupture_score(&p) <= -0.25);
        assert_eq!(rupture_oracle(&p).unwrap(), 0);
    }

    #[test]
    fn rupture_rejects_implausible_parameters() {
        let mut p = base_params();
        p.height = -1.0;
        assert!(rupture_oracle(&p).is_err());
        let mut p = base_params();
        p.mu_d = 1.2;
        assert!(rupture_oracle(&p).is_err());
    }

    #[test]
    fn rupture_score_is_monotone_in_each_lever() {
        let mut rng = rng_from_seed(99);
        let space = rupture_space();
        for _ in 0..10_000 {
            let row: Vec<f64> = space
                .specs
                .iter()
                .map(|s| rng.random_range(s.lower..s.upper))
                .collect();
            let p = RuptureParams::from_row(&row).unwrap();
            let s0 = rupture_score(&p);

            let mut bigger_barrier = p;
            bigger_barrier.width *= 1.1;
            bigger_barrier.height *= 1.1;
            assert!(rupture_score(&bigger_barrier) <= s0);

            let mut more_slip = p;
            more_slip.d_c += 0.05;
            assert!(rupture_score(&more_slip) <= s0);

            let mut more_shear = p;
            more_shear.sigma_xy += 1.0;
            assert!(rupture_score(&more_shear) >= s0);

            let mut more_asymmetry = p;
            more_asymmetry.sigma_xx += 1.0; // raises sigma_xx - sigma_yy
            assert!(rupture_score(&more_asymmetry) >= s0);
        }
    }

    #[test]
    fn friction_matches_hand_evaluation() {
        let m = MaterialConfig {
            layers: [6.0, 2.0, 9.0, 1.0],
            depth: 7.0,
            radius: 10.0,
            distance: 20.0,
        };
        let mu = friction_oracle(&m).unwrap();
        assert!((mu - 0.41).abs() < 1e-3, "mu = {mu}");
    }

    #[test]
    fn friction_is_zero_before_the_scratch_starts() {
        let m = MaterialConfig {
            layers: [6.0, 2.0, 9.0, 1.0],
            depth: 5.0,
            radius: 10.0,
            distance: 0.0,
        };
        assert_eq!(friction_oracle(&m).unwrap(), 0.0);
    }

    #[test]
    fn larger_radius_lowers_friction() {
        let mut m = MaterialConfig {
            layers: [6.0, 2.0, 9.0, 1.0],
            depth: 7.0,
            radius: 10.0,
            distance: 15.0,
        };
        let small = friction_oracle(&m).unwrap();
        m.radius = 20.0;
        let large = friction_oracle(&m).unwrap();
        assert!(large < small);
    }

    #[test]
    fn friction_is_monotone_in_distance_and_bounded() {
        let mut rng = rng_from_seed(5);
        for _ in 0..2000 {
            let layers = [
                rng.random_range(1.0..10.0),
                rng.random_range(1.0..10.0),
                rng.random_range(1.0..10.0),
                rng.random_range(1.0..10.0),
            ];
            let depth = rng.random_range(3.0..7.0);
            let radius = rng.random_range(5.0..40.0);
            let d1 = rng.random_range(0.0..19.0);
            let d2 = d1 + rng.random_range(0.0..(20.0 - d1));
            let f = |distance| {
                friction_oracle(&MaterialConfig {
                    layers,
                    depth,
                    radius,
                    distance,
                })
                .unwrap()
            };
            let (m1, m2) = (f(d1), f(d2));
            assert!(m2 >= m1);
            assert!((0.0..=1.0).contains(&m1));
        }
    }

    #[test]
    fn synth_rupture_is_balanced_and_deterministic() {
        let space = rupture_space();
        let a = synth_dataset(OracleKind::Rupture, 2000, 7, &space).unwrap();
        let b = synth_dataset(OracleKind::Rupture, 2000, 7, &space).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.outcomes, b.outcomes);
        let positives = a.outcomes.iter().filter(|&&y| y == 1.0).count() as f64 / 2000.0;
        assert!(
            (0.25..=0.75).contains(&positives),
            "positive fraction {positives}"
        );
    }

    #[test]
    fn synth_single_row_is_consistent_with_the_oracle() {
        let space = rupture_space();
        let ds = synth_dataset(OracleKind::Rupture, 1, 3, &space).unwrap();
        let row: Vec<f64> = ds.rows.row(0).to_vec();
        let label = rupture_oracle(&RuptureParams::from_row(&row).unwrap()).unwrap();
        assert_eq!(f64::from(label), ds.outcomes[0]);
    }

    #[test]
    fn labels_survive_csv_serialization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        let space = rupture_space();
        let ds = synth_dataset(OracleKind::Rupture, 500, 21, &space).unwrap();
        ds.write_csv(&path, "label").unwrap();
        let back = crate::data::load_dataset(&path, &space, "label").unwrap();
        for (i, &stored) in back.outcomes.iter().enumerate() {
            let row: Vec<f64> = back.rows.row(i).to_vec();
            let recomputed = rupture_oracle(&RuptureParams::from_row(&row).unwrap()).unwrap();
            assert_eq!(f64::from(recomputed), stored, "row {i}");
        }
    }
}
