//! One-step generative RL environment.
//!
//! States are standard-normal draws, actions are standardized parameter
//! vectors, and the reward is the surrogate's prediction for the
//! destandardized action — or a fixed penalty when the action is implausible
//! or leaves the surrogate's region of competence. Episodes have length one:
//! the next state is a fresh draw regardless of the action, so the Bellman
//! recursion collapses to V(s) = E_a[R(s,a)].

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ParameterSpace, ScalingStats};
use crate::surrogate::{SurrogateModel, Task};
use crate::util::rng_from_seed;
use crate::{Error, Result};

/// Optimization sense of the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

/// Reward shaping knobs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RewardConfig {
    pub direction: Direction,
    /// Reward for implausible or out-of-range actions; must stay below every
    /// valid reward so the agent always prefers validity.
    pub invalid_penalty: f64,
    /// Fractional expansion of the training range on each side when deciding
    /// whether an action is inside the surrogate's region of competence.
    pub range_margin: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            direction: Direction::Maximize,
            invalid_penalty: -1.0,
            range_margin: 0.1,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.invalid_penalty < 0.0) {
            return Err(Error::InvalidConfig(
                "invalid_penalty must be negative".into(),
            ));
        }
        if !(self.range_margin >= 0.0) {
            return Err(Error::InvalidConfig(
                "range_margin must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Validity verdict for a raw action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Invalid { parameter: String, reason: String },
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid)
    }
}

/// What the environment needs from a surrogate. Implemented by
/// [`SurrogateModel`]; tests inject closed-form stubs.
pub trait RewardModel {
    fn space(&self) -> &ParameterSpace;
    fn scaling(&self) -> &ScalingStats;
    fn task(&self) -> Task;
    /// Link-applied prediction for a raw parameter vector.
    fn predict_raw(&self, raw: &[f64]) -> Result<f64>;
}

impl RewardModel for SurrogateModel {
    fn space(&self) -> &ParameterSpace {
        &self.space
    }

    fn scaling(&self) -> &ScalingStats {
        &self.scaling
    }

    fn task(&self) -> Task {
        self.task
    }

    fn predict_raw(&self, raw: &[f64]) -> Result<f64> {
        self.predict_params(raw)
    }
}

/// One-step environment around a reward model.
pub struct GenEnvironment<M: RewardModel> {
    model: M,
    reward: RewardConfig,
    dim: usize,
    /// Per-parameter (min, max) observed in the raw training data.
    train_ranges: Vec<(f64, f64)>,
    /// (min, max) of the training outcomes; normalizes regression rewards.
    outcome_range: (f64, f64),
    rng: ChaCha8Rng,
}

impl<M: RewardModel> GenEnvironment<M> {
    pub fn new(
        model: M,
        reward: RewardConfig,
        train_ranges: Vec<(f64, f64)>,
        outcome_range: (f64, f64),
        seed: u64,
    ) -> Result<Self> {
        reward.validate()?;
        let dim = model.space().dim();
        if dim == 0 {
            return Err(Error::InvalidConfig("environment needs dim >= 1".into()));
        }
        if train_ranges.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: train_ranges.len(),
            });
        }
        for (i, &(lo, hi)) in train_ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig(format!(
                    "training range for parameter {i} is not a finite interval"
                )));
            }
        }
        if model.scaling().dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: model.scaling().dim(),
            });
        }
        Ok(GenEnvironment {
            model,
            reward,
            dim,
            train_ranges,
            outcome_range,
            rng: rng_from_seed(seed),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward
    }

    pub fn train_ranges(&self) -> &[(f64, f64)] {
        &self.train_ranges
    }

    /// Fresh state: `dim` independent standard-normal draws.
    pub fn reset(&mut self) -> Vec<f64> {
        (0..self.dim)
            .map(|_| StandardNormal.sample(&mut self.rng))
            .collect()
    }

    /// Check a raw (physical-units) action: every parameter must satisfy its
    /// plausibility predicate and lie inside the margin-expanded training
    /// range.
    pub fn check_validity(&self, action_raw: &[f64]) -> Result<Validity> {
        if action_raw.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: action_raw.len(),
            });
        }
        for (i, spec) in self.model.space().specs.iter().enumerate() {
            let x = action_raw[i];
            if !x.is_finite() {
                return Ok(Validity::Invalid {
                    parameter: spec.name.clone(),
                    reason: "non-finite".into(),
                });
            }
            if !spec.plausibility.holds(x) {
                return Ok(Validity::Invalid {
                    parameter: spec.name.clone(),
                    reason: format!("implausible ({:?})", spec.plausibility),
                });
            }
            let (lo, hi) = self.train_ranges[i];
            let margin = self.reward.range_margin * (hi - lo);
            if x < lo - margin || x > hi + margin {
                return Ok(Validity::Invalid {
                    parameter: spec.name.clone(),
                    reason: "out-of-range".into(),
                });
            }
        }
        Ok(Validity::Valid)
    }

    /// Normalized outcome in [0, 1]: binary predictions pass through,
    /// regression predictions are min-max normalized by the training-outcome
    /// range and clipped.
    fn normalized_outcome(&self, prediction: f64) -> f64 {
        match self.model.task() {
            Task::Binary => prediction.clamp(0.0, 1.0),
            Task::Regression => {
                let (lo, hi) = self.outcome_range;
                if hi > lo {
                    ((prediction - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            }
        }
    }

    /// Reward for a standardized action: the penalty when invalid, otherwise
    /// the (direction-adjusted) normalized surrogate prediction.
    pub fn compute_reward(&self, action_std: &[f64]) -> Result<f64> {
        let raw = self.model.scaling().destandardize_row(action_std)?;
        if !self.check_validity(&raw)?.is_valid() {
            return Ok(self.reward.invalid_penalty);
        }
        let prediction = self.model.predict_raw(&raw)?;
        let value = self.normalized_outcome(prediction);
        Ok(match self.reward.direction {
            Direction::Maximize => value,
            Direction::Minimize => 1.0 - value,
        })
    }

    /// One environment step. Episodes always terminate; the successor state
    /// is a fresh draw from the reset distribution.
    pub fn step(&mut self, action_std: &[f64]) -> Result<(Vec<f64>, f64, bool)> {
        let reward = self.compute_reward(action_std)?;
        Ok((self.reset(), reward, true))
    }
}

/// Destandardize a batch of standardized actions into raw rows.
pub fn destandardize_actions(scaling: &ScalingStats, actions: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    actions
        .iter()
        .map(|a| scaling.destandardize_row(a))
        .collect()
}


#[cfg(test)]
mod tests {
    use super::stub::*;
    use super::*;
    use crate::oracle::rupture_space;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn unit_scaling(dim: usize) -> ScalingStats {
        ScalingStats {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Environment over the rupture space with scaling/ranges centered on
    /// the sampling box, backed by a constant-output stub.
    fn boxed_env(value: f64, direction: Direction, seed: u64) -> GenEnvironment<ConstantStub> {
        let space = rupture_space();
        // Scaling that maps the box to roughly +-1.73 standardized units,
        // mimicking stats fitted on uniform box samples.
        let (mean, std): (Vec<f64>, Vec<f64>) = space
            .specs
            .iter()
            .map(|s| {
                let mid = 0.5 * (s.lower + s.upper);
                let sd = (s.upper - s.lower) / 12f64.sqrt();
                (mid, sd)
            })
            .unzip();
        let ranges: Vec<(f64, f64)> = space.specs.iter().map(|s| (s.lower, s.upper)).collect();
        let stub = ConstantStub {
            space,
            scaling: ScalingStats { mean, std },
            value,
        };
        GenEnvironment::new(stub, RewardConfig { direction, ..RewardConfig::default() }, ranges, (0.0, 1.0), seed)
            .unwrap()
    }

    #[test]
    fn reset_is_deterministic_and_shaped() {
        let mut a = boxed_env(0.5, Direction::Maximize, 42);
        let mut b = boxed_env(0.5, Direction::Maximize, 42);
        let (sa, sb) = (a.reset(), b.reset());
        assert_eq!(sa.len(), 8);
        assert_eq!(sa, sb);
        assert_ne!(a.reset(), sa, "successive draws differ");
    }

    #[test]
    fn reset_draws_pass_a_ks_test_against_standard_normal() {
        let mut env = boxed_env(0.5, Direction::Maximize, 7);
        let n = 10_000;
        let mut per_coord: Vec<Vec<f64>> = vec![Vec::with_capacity(n); env.dim()];
        for _ in 0..n {
            for (k, v) in env.reset().into_iter().enumerate() {
                per_coord[k].push(v);
            }
        }
        let normal = Normal::new(0.0, 1.0).unwrap();
        // Kolmogorov critical value at alpha = 0.01.
        let critical = 1.6276 / (n as f64).sqrt();
        for (k, column) in per_coord.iter_mut().enumerate() {
            column.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut d: f64 = 0.0;
            for (i, &x) in column.iter().enumerate() {
                let cdf = normal.cdf(x);
                let hi = (i + 1) as f64 / n as f64 - cdf;
                let lo = cdf - i as f64 / n as f64;
                d = d.max(hi.max(lo));
            }
            assert!(d < critical, "coordinate {k}: KS statistic {d} >= {critical}");
        }
    }

    #[test]
    fn negative_height_is_invalid_and_names_the_parameter() {
        let env = boxed_env(0.5, Direction::Maximize, 1);
        let mut raw: Vec<f64> = env
            .train_ranges()
            .iter()
            .map(|&(lo, hi)| 0.5 * (lo + hi))
            .collect();
        raw[7] = -2.0; // height, km
        match env.check_validity(&raw).unwrap() {
            Validity::Invalid { parameter, .. } => assert_eq!(parameter, "height"),
            Validity::Valid => panic!("negative height accepted"),
        }
    }

    #[test]
    fn training_midpoints_are_valid() {
        let env = boxed_env(0.5, Direction::Maximize, 1);
        let raw: Vec<f64> = env
            .train_ranges()
            .iter()
            .map(|&(lo, hi)| 0.5 * (lo + hi))
            .collect();
        assert!(env.check_validity(&raw).unwrap().is_valid());
    }

    #[test]
    fn margin_boundary_arithmetic() {
        let env = boxed_env(0.5, Direction::Maximize, 1);
        let mid: Vec<f64> = env
            .train_ranges()
            .iter()
            .map(|&(lo, hi)| 0.5 * (lo + hi))
            .collect();
        let (lo, hi) = env.train_ranges()[2]; // sigma_xy: [30, 90]
        let range = hi - lo;

        let mut inside = mid.clone();
        inside[2] = hi + 0.05 * range; // within the 10% margin
        assert!(env.check_validity(&inside).unwrap().is_valid());

        let mut outside = mid;
        outside[2] = hi + 0.2 * range; // beyond the margin
        match env.check_validity(&outside).unwrap() {
            Validity::Invalid { parameter, reason } => {
                assert_eq!(parameter, "sigma_xy");
                assert_eq!(reason, "out-of-range");
            }
            Validity::Valid => panic!("out-of-range action accepted"),
        }
    }

    #[test]
    fn non_finite_actions_are_invalid_with_reason() {
        let env = boxed_env(0.5, Direction::Maximize, 1);
        let mut raw: Vec<f64> = env
            .train_ranges()
            .iter()
            .map(|&(lo, hi)| 0.5 * (lo + hi))
            .collect();
        raw[0] = f64::NAN;
        match env.check_validity(&raw).unwrap() {
            Validity::Invalid { reason, .. } => assert_eq!(reason, "non-finite"),
            Validity::Valid => panic!("NaN accepted"),
        }
    }

    #[test]
    fn reward_passes_through_stub_prediction() {
        let env = boxed_env(0.83, Direction::Maximize, 1);
        let reward = env.compute_reward(&vec![0.0; 8]).unwrap();
        assert!((reward - 0.83).abs() < 1e-12);

        let env = boxed_env(0.83, Direction::Minimize, 1);
        let reward = env.compute_reward(&vec![0.0; 8]).unwrap();
        assert!((reward - 0.17).abs() < 1e-12);
    }

    #[test]
    fn invalid_action_earns_the_penalty() {
        let env = boxed_env(0.83, Direction::Maximize, 1);
        // Destandardizing +100 sigma leaves every parameter far out of range.
        let reward = env.compute_reward(&vec![100.0; 8]).unwrap();
        assert_eq!(reward, -1.0);
    }

    #[test]
    fn reward_is_bounded_and_penalty_iff_invalid() {
        let mut env = boxed_env(0.6, Direction::Maximize, 5);
        use rand::Rng;
        let mut rng = crate::util::rng_from_seed(17);
        for _ in 0..2000 {
            let action: Vec<f64> = (0..8)
                .map(|_| {
                    if rng.random_bool(0.2) {
                        rng.random_range(-1e6..1e6)
                    } else {
                        rng.random_range(-3.0..3.0)
                    }
                })
                .collect();
            let reward = env.compute_reward(&action).unwrap();
            assert!((-1.0..=1.0).contains(&reward), "reward {reward}");
            let raw = env.model().scaling().destandardize_row(&action).unwrap();
            let valid = env.check_validity(&raw).unwrap().is_valid();
            assert_eq!(valid, reward != -1.0, "validity/penalty mismatch");
            let (_, step_reward, done) = env.step(&action).unwrap();
            assert!(done, "episodes are one step by construction");
            assert_eq!(step_reward, reward);
        }
    }

    #[test]
    fn identically_seeded_envs_produce_identical_traces() {
        let mut a = boxed_env(0.7, Direction::Maximize, 99);
        let mut b = boxed_env(0.7, Direction::Maximize, 99);
        for i in 0..50 {
            let action = vec![(i as f64) * 0.01 - 0.25; 8];
            let (sa, ra, _) = a.step(&action).unwrap();
            let (sb, rb, _) = b.step(&action).unwrap();
            assert_eq!(sa, sb);
            assert_eq!(ra, rb);
        }
    }

    #[test]
    fn zero_dim_space_is_rejected_at_construction() {
        let space = ParameterSpace {
            specs: vec![],
            derived: vec![],
        };
        let stub = ConstantStub {
            space,
            scaling: unit_scaling(0),
            value: 0.5,
        };
        assert!(GenEnvironment::new(
            stub,
            RewardConfig::default(),
            vec![],
            (0.0, 1.0),
            0
        )
        .is_err());
    }

    #[test]
    fn empirical_mean_reward_converges_at_root_n() {
        // One-step episodes collapse the Bellman recursion: the value of any
        // fixed stochastic policy is E_a[R(s,a)], so batch means at N and
        // 100N must agree within a few standard errors.
        let mut env = boxed_env(0.9, Direction::Maximize, 31);
        use rand::Rng;
        let mut rng = crate::util::rng_from_seed(8);
        let sample_mean = |n: usize, env: &mut GenEnvironment<ConstantStub>, rng: &mut rand_chacha::ChaCha8Rng| {
            let mut rewards = Vec::with_capacity(n);
            for _ in 0..n {
                let action: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
                rewards.push(env.compute_reward(&action).unwrap());
            }
            let mean = rewards.iter().sum::<f64>() / n as f64;
            let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
            (mean, var.sqrt())
        };
        let (m_small, _) = sample_mean(1_000, &mut env, &mut rng);
        let (m_large, sd) = sample_mean(100_000, &mut env, &mut rng);
        let standard_error = sd / 1000f64.sqrt();
        assert!(
            (m_small - m_large).abs() < 5.0 * standard_error,
            "|{m_small} - {m_large}| vs 5se = {}",
            5.0 * standard_error
        );
    }
}
