//! From-scratch proximal policy optimization for the one-step generator task.
//!
//! Diagonal-Gaussian policy (state-independent learned log-std), separate
//! value network, clipped surrogate objective, GAE, and Adam. Training is
//! single-threaded and bit-deterministic under its seed.

mod gaussian;
mod net;
mod rollout;

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{GenEnvironment, RewardModel};
use crate::util::{fmt_f64, rng_from_seed};
use crate::{Error, Result};

pub use gaussian::{
    entropy as gaussian_entropy, log_prob as gaussian_log_prob,
    sample_standard as gaussian_sample_standard,
};
pub use net::{Adam, Linear, Mlp, MlpCache, MlpGrads};
pub use rollout::{collect_rollouts, compute_gae, RolloutBatch};

const BUNDLE_VERSION: u32 = 1;
const HIDDEN: [usize; 2] = [64, 64];
const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;

/// PPO hyperparameters. `gamma` is kept for the GAE machinery even though
/// one-step episodes never exercise the recursive term.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub rollout_size: usize,
    pub minibatch: usize,
    pub epochs_per_update: usize,
    pub total_steps: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_eps: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            learning_rate: 3e-4,
            rollout_size: 2048,
            minibatch: 64,
            epochs_per_update: 10,
            total_steps: 200_000,
            entropy_coef: 0.0,
            value_coef: 0.5,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::InvalidConfig("clip_eps must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::InvalidConfig(
                "gamma and gae_lambda must lie in [0, 1]".into(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.rollout_size == 0 || self.minibatch == 0 || self.epochs_per_update == 0 {
            return Err(Error::InvalidConfig(
                "rollout_size, minibatch, epochs_per_update must be >= 1".into(),
            ));
        }
        if self.minibatch > self.rollout_size {
            return Err(Error::InvalidConfig(
                "minibatch cannot exceed rollout_size".into(),
            ));
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return Err(Error::InvalidConfig(
                "entropy_coef and value_coef must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Gaussian policy: an MLP produces the action mean; the per-dimension
/// log-std is a learned state-independent parameter clamped to [-5, 2].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyNetwork {
    pub mlp: Mlp,
    pub log_std: Vec<f64>,
}

impl PolicyNetwork {
    /// Default architecture `dim -> 64 -> 64 -> dim` with orthogonal-style
    /// init; the output layer is scaled by 0.01 so early actions stay near
    /// the standardized training-data center.
    pub fn new(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::with_hidden(dim, dim, &HIDDEN, rng)
    }

    pub fn with_hidden(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut dims = vec![state_dim];
        dims.extend_from_slice(hidden);
        dims.push(action_dim);
        let mut gains = vec![2f64.sqrt(); hidden.len()];
        gains.push(0.01);
        PolicyNetwork {
            mlp: Mlp::new(&dims, &gains, rng),
            log_std: vec![0.0; action_dim],
        }
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    /// Action mean for a state.
    pub fn mean(&self, state: &[f64]) -> Vec<f64> {
        self.mlp.forward(state)
    }

    /// Draw an action and its exact log-density.
    pub fn sample_action(
        &self,
        state: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, f64)> {
        let mean = self.mean(state);
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged("policy mean is non-finite".into()));
        }
        let action = gaussian::sample(&mean, &self.log_std, rng);
        let log_prob = gaussian::log_prob(&mean, &self.log_std, &action);
        Ok((action, log_prob))
    }

    /// Exact log-density of `action` given `state`.
    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> f64 {
        gaussian::log_prob(&self.mean(state), &self.log_std, action)
    }

    pub fn entropy(&self) -> f64 {
        gaussian::entropy(&self.log_std)
    }

    fn clamp_log_std(&mut self) {
        for ls in &mut self.log_std {
            *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn n_params(&self) -> usize {
        self.mlp.n_params() + self.log_std.len()
    }
}

/// State-value network `dim -> 64 -> 64 -> 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueNetwork {
    pub mlp: Mlp,
}

impl ValueNetwork {
    pub fn new(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::with_hidden(dim, &HIDDEN, rng)
    }

    pub fn with_hidden(state_dim: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut dims = vec![state_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut gains = vec![2f64.sqrt(); hidden.len()];
        gains.push(1.0);
        ValueNetwork {
            mlp: Mlp::new(&dims, &gains, rng),
        }
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        self.mlp.forward(state)[0]
    }
}

/// Loss terms of one PPO evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

impl LossTerms {
    /// Scalar objective minimized by the optimizer.
    pub fn objective(&self, cfg: &PpoConfig) -> f64 {
        self.policy_loss + cfg.value_coef * self.value_loss - cfg.entropy_coef * self.entropy
    }
}

/// Flat gradients of the total objective, grouped per parameter block.
#[derive(Debug, Clone)]
pub struct ObjectiveGradients {
    pub policy: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: Vec<f64>,
}

/// Evaluate the clipped-surrogate loss terms over `idx` (advantages must be
/// populated).
pub fn ppo_loss(
    policy: &PolicyNetwork,
    value: &ValueNetwork,
    batch: &RolloutBatch,
    idx: &[usize],
    cfg: &PpoConfig,
) -> Result<LossTerms> {
    evaluate(policy, value, batch, idx, cfg, None)
}

/// Loss terms plus analytic gradients of the total objective over `idx`.
pub fn ppo_loss_and_gradients(
    policy: &PolicyNetwork,
    value: &ValueNetwork,
    batch: &RolloutBatch,
    idx: &[usize],
    cfg: &PpoConfig,
) -> Result<(LossTerms, ObjectiveGradients)> {
    let mut grads = Gradients {
        policy: MlpGrads::zeros_like(&policy.mlp),
        log_std: vec![0.0; policy.log_std.len()],
        value: MlpGrads::zeros_like(&value.mlp),
    };
    let terms = evaluate(policy, value, batch, idx, cfg, Some(&mut grads))?;
    let mut policy_flat = Vec::with_capacity(policy.mlp.n_params());
    grads.policy.flatten_into(&mut policy_flat);
    let mut value_flat = Vec::with_capacity(value.mlp.n_params());
    grads.value.flatten_into(&mut value_flat);
    Ok((
        terms,
        ObjectiveGradients {
            policy: policy_flat,
            log_std: grads.log_std,
            value: value_flat,
        },
    ))
}

struct Gradients {
    policy: MlpGrads,
    log_std: Vec<f64>,
    value: MlpGrads,
}

fn evaluate(
    policy: &PolicyNetwork,
    value: &ValueNetwork,
    batch: &RolloutBatch,
    idx: &[usize],
    cfg: &PpoConfig,
    mut grads: Option<&mut Gradients>,
) -> Result<LossTerms> {
    if batch.advantages.len() != batch.len() {
        return Err(Error::InvalidData(
            "advantages not computed; run compute_gae first".into(),
        ));
    }
    if idx.is_empty() {
        return Err(Error::InvalidData("empty minibatch".into()));
    }
    let m = idx.len() as f64;
    let eps = cfg.clip_eps;
    let mut policy_loss = 0.0;
    let mut value_loss = 0.0;

    for &i in idx {
        let state = &batch.states[i];
        let action = &batch.actions[i];
        let advantage = batch.advantages[i];

        let (mean, policy_cache) = policy.mlp.forward_cached(state);
        let lp_new = gaussian::log_prob(&mean, &policy.log_std, action);
        let ratio = (lp_new - batch.log_probs[i]).exp();
        if !ratio.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite probability ratio at sample {i}"
            )));
        }
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
        let unclipped_term = ratio * advantage;
        let clipped_term = clipped * advantage;
        let surrogate = unclipped_term.min(clipped_term);
        policy_loss -= surrogate / m;

        let (v_out, value_cache) = value.mlp.forward_cached(state);
        let v = v_out[0];
        let err = v - batch.returns[i];
        value_loss += err * err / m;

        if let Some(g) = grads.as_deref_mut() {
            // d(surrogate)/d(ratio): the selected min branch; the clipped
            // branch has zero slope once the clamp saturates.
            let d_ratio = if unclipped_term <= clipped_term {
                advantage
            } else if ratio > 1.0 - eps && ratio < 1.0 + eps {
                advantage
            } else {
                0.0
            };
            // policy_loss = -mean(surrogate); d(ratio)/d(lp_new) = ratio.
            let d_lp = -(d_ratio * ratio) / m;
            if d_lp != 0.0 {
                let mut d_mean = vec![0.0; mean.len()];
                for d in 0..mean.len() {
                    let inv_var = (-2.0 * policy.log_std[d]).exp();
                    let centered = action[d] - mean[d];
                    d_mean[d] = d_lp * centered * inv_var;
                    g.log_std[d] += d_lp * (centered * centered * inv_var - 1.0);
                }
                policy.mlp.backward(&policy_cache, &d_mean, &mut g.policy);
            }
            let d_v = cfg.value_coef * 2.0 * err / m;
            value.mlp.backward(&value_cache, &[d_v], &mut g.value);
        }
    }

    let entropy = policy.entropy();
    if let Some(g) = grads.as_deref_mut() {
        // Objective subtracts entropy_coef * entropy; dH/d(log_std_d) = 1.
        for slot in g.log_std.iter_mut() {
            *slot -= cfg.entropy_coef;
        }
    }

    let terms = LossTerms {
        policy_loss,
        value_loss,
        entropy,
    };
    if !terms.policy_loss.is_finite() || !terms.value_loss.is_finite() {
        return Err(Error::Diverged("non-finite PPO loss".into()));
    }
    Ok(terms)
}

/// One training-curve row (one rollout/update cycle).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurveEntry {
    pub step: usize,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

/// Mean reward and loss history, one entry per rollout.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub entries: Vec<CurveEntry>,
}

impl TrainingCurve {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["step", "mean_reward", "policy_loss", "value_loss"])?;
        for e in &self.entries {
            writer.write_record([
                e.step.to_string(),
                fmt_f64(e.mean_reward),
                fmt_f64(e.policy_loss),
                fmt_f64(e.value_loss),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Trained policy + value networks with the config that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyBundle {
    pub policy: PolicyNetwork,
    pub value: ValueNetwork,
    pub cfg: PpoConfig,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    version: u32,
    state_dim: usize,
    action_dim: usize,
    policy: PolicyNetwork,
    value: ValueNetwork,
    cfg: PpoConfig,
}

impl PolicyBundle {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = BundleFile {
            version: BUNDLE_VERSION,
            state_dim: self.policy.mlp.in_dim(),
            action_dim: self.policy.action_dim(),
            policy: self.policy.clone(),
            value: self.value.clone(),
            cfg: self.cfg.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: BundleFile = serde_json::from_str(&text)?;
        if file.version != BUNDLE_VERSION {
            return Err(Error::Version(file.version, BUNDLE_VERSION));
        }
        if file.policy.mlp.in_dim() != file.state_dim
            || file.policy.action_dim() != file.action_dim
        {
            return Err(Error::InvalidData(
                "policy bundle dims are inconsistent".into(),
            ));
        }
        Ok(PolicyBundle {
            policy: file.policy,
            value: file.value,
            cfg: file.cfg,
        })
    }
}

/// Alternate collect/update until `total_steps` environment steps.
pub fn train_agent<M: RewardModel>(
    env: &mut GenEnvironment<M>,
    cfg: &PpoConfig,
) -> Result<(PolicyBundle, TrainingCurve)> {
    cfg.validate()?;
    if cfg.total_steps < cfg.rollout_size {
        return Err(Error::InvalidConfig(
            "total_steps must cover at least one rollout".into(),
        ));
    }
    let dim = env.dim();
    let mut rng = rng_from_seed(cfg.seed);
    let mut policy = PolicyNetwork::new(dim, &mut rng);
    let mut value = ValueNetwork::new(dim, &mut rng);

    let n_policy = policy.mlp.n_params();
    let n_log_std = policy.log_std.len();
    let n_value = value.mlp.n_params();
    let mut adam = Adam::new(cfg.learning_rate, n_policy + n_log_std + n_value);
    let mut flat_params = vec![0.0; n_policy + n_log_std + n_value];
    let mut flat_grads = vec![0.0; n_policy + n_log_std + n_value];

    let mut curve = TrainingCurve::default();
    let mut steps = 0usize;
    while steps < cfg.total_steps {
        let mut batch = collect_rollouts(env, &policy, &value, cfg.rollout_size, &mut rng)?;
        compute_gae(&mut batch, cfg.gamma, cfg.gae_lambda);
        steps += cfg.rollout_size;

        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut policy_loss_sum = 0.0;
        let mut value_loss_sum = 0.0;
        let mut n_minibatches = 0usize;
        for _ in 0..cfg.epochs_per_update {
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.minibatch) {
                let (terms, grads) =
                    ppo_loss_and_gradients(&policy, &value, &batch, chunk, cfg)?;
                policy_loss_sum += terms.policy_loss;
                value_loss_sum += terms.value_loss;
                n_minibatches += 1;

                flat_params.clear();
                policy.mlp.params_into(&mut flat_params);
                flat_params.extend_from_slice(&policy.log_std);
                value.mlp.params_into(&mut flat_params);

                flat_grads.clear();
                flat_grads.extend_from_slice(&grads.policy);
                flat_grads.extend_from_slice(&grads.log_std);
                flat_grads.extend_from_slice(&grads.value);

                adam.step(&mut flat_params, &flat_grads);

                policy.mlp.set_params(&flat_params[..n_policy]);
                policy
                    .log_std
                    .copy_from_slice(&flat_params[n_policy..n_policy + n_log_std]);
                policy.clamp_log_std();
                value.mlp.set_params(&flat_params[n_policy + n_log_std..]);
            }
        }

        if !policy.mlp.is_finite()
            || !value.mlp.is_finite()
            || policy.log_std.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Diverged(format!(
                "non-finite network parameters after {steps} steps"
            )));
        }

        curve.entries.push(CurveEntry {
            step: steps,
            mean_reward: batch.mean_reward(),
            policy_loss: policy_loss_sum / n_minibatches as f64,
            value_loss: value_loss_sum / n_minibatches as f64,
        });
    }

    Ok((
        PolicyBundle {
            policy,
            value,
            cfg: cfg.clone(),
        },
        curve,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ScalingStats;
    use crate::env::stub::LogisticStub;
    use crate::env::{GenEnvironment, RewardConfig};
    use crate::oracle::rupture_space;

    /// Random batch sampled from the given policy (so stored log-probs are
    /// the policy's own).
    fn tiny_batch(policy: &PolicyNetwork, value: &ValueNetwork, n: usize, seed: u64) -> RolloutBatch {
        use rand::Rng;
        let mut rng = rng_from_seed(seed);
        let mut batch = RolloutBatch::default();
        for _ in 0..n {
            let state: Vec<f64> = (0..policy.mlp.in_dim())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let (action, lp) = policy.sample_action(&state, &mut rng).unwrap();
            batch.values.push(value.value(&state));
            batch.states.push(state);
            batch.actions.push(action);
            batch.log_probs.push(lp);
            batch.rewards.push(rng.random_range(-1.0..1.0));
            batch.dones.push(true);
        }
        compute_gae(&mut batch, 0.99, 0.95);
        batch
    }

    #[test]
    fn sample_action_log_prob_is_self_consistent() {
        let mut rng = rng_from_seed(2);
        let policy = PolicyNetwork::new(8, &mut rng);
        let state = vec![0.3; 8];
        let (action, lp) = policy.sample_action(&state, &mut rng).unwrap();
        let lp2 = policy.log_prob(&state, &action);
        assert!((lp - lp2).abs() < 1e-12);

        // Same seed, same draw.
        let mut rng_a = rng_from_seed(77);
        let mut rng_b = rng_from_seed(77);
        let a = policy.sample_action(&state, &mut rng_a).unwrap();
        let b = policy.sample_action(&state, &mut rng_b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn clip_arithmetic_single_samples() {
        // Construct a batch of one sample and force the ratio by editing the
        // stored old log-prob.
        let mut rng = rng_from_seed(4);
        let policy = PolicyNetwork::with_hidden(2, 2, &[4], &mut rng);
        let value = ValueNetwork::with_hidden(2, &[4], &mut rng);
        let mut batch = tiny_batch(&policy, &value, 1, 5);
        let cfg = PpoConfig::default();

        // ratio = 1.5, advantage = +1 -> objective min(1.5, 1.2) = 1.2.
        let lp_new = policy.log_prob(&batch.states[0], &batch.actions[0]);
        batch.log_probs[0] = lp_new - 1.5f64.ln();
        batch.advantages = vec![1.0];
        batch.returns = vec![batch.values[0]];
        let terms = ppo_loss(&policy, &value, &batch, &[0], &cfg).unwrap();
        assert!((terms.policy_loss - (-1.2)).abs() < 1e-9, "{terms:?}");

        // ratio = 0.5, advantage = -1 -> min(-0.5, -0.8) = -0.8 (clipped).
        batch.log_probs[0] = lp_new - 0.5f64.ln();
        batch.advantages = vec![-1.0];
        let terms = ppo_loss(&policy, &value, &batch, &[0], &cfg).unwrap();
        assert!((terms.policy_loss - 0.8).abs() < 1e-9, "{terms:?}");
    }

    #[test]
    fn identity_ratio_gives_negative_mean_advantage() {
        let mut rng = rng_from_seed(6);
        let policy = PolicyNetwork::with_hidden(3, 3, &[8], &mut rng);
        let value = ValueNetwork::with_hidden(3, &[8], &mut rng);
        let batch = tiny_batch(&policy, &value, 64, 7);
        let idx: Vec<usize> = (0..batch.len()).collect();
        let cfg = PpoConfig::default();
        let terms = ppo_loss(&policy, &value, &batch, &idx, &cfg).unwrap();
        // Fresh batch: stored log-probs came from this same policy, so
        // rho == 1 and policy_loss = -mean(A) = 0 for normalized advantages.
        assert!(terms.policy_loss.abs() < 1e-9, "{terms:?}");
    }

    #[test]
    fn clipping_is_inactive_when_ratios_are_inside_the_band() {
        let mut rng = rng_from_seed(8);
        let policy = PolicyNetwork::with_hidden(2, 2, &[6], &mut rng);
        let value = ValueNetwork::with_hidden(2, &[6], &mut rng);
        let mut batch = tiny_batch(&policy, &value, 32, 9);
        // Nudge old log-probs so ratios sit strictly inside [1-eps, 1+eps].
        use rand::Rng;
        let mut nudge_rng = rng_from_seed(10);
        for i in 0..batch.len() {
            let lp_new = policy.log_prob(&batch.states[i], &batch.actions[i]);
            let ratio = nudge_rng.random_range(0.85..1.15);
            batch.log_probs[i] = lp_new - f64::ln(ratio);
        }
        let idx: Vec<usize> = (0..batch.len()).collect();
        let cfg = PpoConfig::default();
        let terms = ppo_loss(&policy, &value, &batch, &idx, &cfg).unwrap();
        // Unclipped surrogate computed directly.
        let mut unclipped = 0.0;
        for i in 0..batch.len() {
            let lp_new = policy.log_prob(&batch.states[i], &batch.actions[i]);
            let ratio = (lp_new - batch.log_probs[i]).exp();
            unclipped -= ratio * batch.advantages[i] / batch.len() as f64;
        }
        assert!((terms.policy_loss - unclipped).abs() < 1e-12);
    }

    #[test]
    fn first_epoch_gradient_equals_vanilla_policy_gradient() {
        let mut rng = rng_from_seed(12);
        let policy = PolicyNetwork::with_hidden(3, 3, &[8], &mut rng);
        let value = ValueNetwork::with_hidden(3, &[8], &mut rng);
        let batch = tiny_batch(&policy, &value, 48, 13);
        let idx: Vec<usize> = (0..batch.len()).collect();
        let cfg = PpoConfig {
            value_coef: 0.0,
            ..PpoConfig::default()
        };
        let (_, ppo_grads) = ppo_loss_and_gradients(&policy, &value, &batch, &idx, &cfg).unwrap();

        // Vanilla PG: d/dtheta of -mean(A * log pi); at rho == 1 both match.
        let mut pg = MlpGrads::zeros_like(&policy.mlp);
        let mut pg_log_std = vec![0.0; policy.log_std.len()];
        let m = idx.len() as f64;
        for &i in &idx {
            let (mean, cache) = policy.mlp.forward_cached(&batch.states[i]);
            let d_lp = -batch.advantages[i] / m;
            let mut d_mean = vec![0.0; mean.len()];
            for d in 0..mean.len() {
                let inv_var = (-2.0 * policy.log_std[d]).exp();
                let centered = batch.actions[i][d] - mean[d];
                d_mean[d] = d_lp * centered * inv_var;
                pg_log_std[d] += d_lp * (centered * centered * inv_var - 1.0);
            }
            policy.mlp.backward(&cache, &d_mean, &mut pg);
        }
        let mut pg_flat = Vec::new();
        pg.flatten_into(&mut pg_flat);
        for (a, b) in ppo_grads.policy.iter().zip(&pg_flat) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        for (a, b) in ppo_grads.log_std.iter().zip(&pg_log_std) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        // 10 random small configurations: dim <= 3, width <= 8.
        for seed in 0..10u64 {
            let mut rng = rng_from_seed(1000 + seed);
            use rand::Rng;
            let state_dim = rng.random_range(1..=3usize);
            let action_dim = rng.random_range(1..=3usize);
            let width = rng.random_range(2..=8usize);
            let mut policy =
                PolicyNetwork::with_hidden(state_dim, action_dim, &[width], &mut rng);
            for ls in &mut policy.log_std {
                *ls = rng.random_range(-1.0..0.5);
            }
            let mut value = ValueNetwork::with_hidden(state_dim, &[width], &mut rng);
            let mut batch = tiny_batch(&policy, &value, 16, 2000 + seed);
            // Make old log-probs differ so clip branches get exercised.
            for lp in &mut batch.log_probs {
                *lp += rng.random_range(-0.3..0.3);
            }
            let cfg = PpoConfig {
                entropy_coef: if seed % 2 == 0 { 0.01 } else { 0.0 },
                ..PpoConfig::default()
            };
            let idx: Vec<usize> = (0..batch.len()).collect();
            let (_, grads) =
                ppo_loss_and_gradients(&policy, &value, &batch, &idx, &cfg).unwrap();

            let objective = |policy: &PolicyNetwork, value: &ValueNetwork| {
                ppo_loss(policy, value, &batch, &idx, &cfg)
                    .unwrap()
                    .objective(&cfg)
            };

            let h = 1e-5;
            let check = |analytic: f64, numeric: f64, what: &str| {
                let denominator = analytic.abs().max(numeric.abs()).max(1e-6);
                let rel = (analytic - numeric).abs() / denominator;
                assert!(
                    rel < 1e-4,
                    "seed {seed} {what}: analytic {analytic}, numeric {numeric}, rel {rel}"
                );
            };

            let mut flat = Vec::new();
            policy.mlp.params_into(&mut flat);
            for k in 0..flat.len() {
                let orig = flat[k];
                flat[k] = orig + h;
                policy.mlp.set_params(&flat);
                let up = objective(&policy, &value);
                flat[k] = orig - h;
                policy.mlp.set_params(&flat);
                let down = objective(&policy, &value);
                flat[k] = orig;
                policy.mlp.set_params(&flat);
                check(grads.policy[k], (up - down) / (2.0 * h), "policy");
            }
            for d in 0..policy.log_std.len() {
                let orig = policy.log_std[d];
                policy.log_std[d] = orig + h;
                let up = objective(&policy, &value);
                policy.log_std[d] = orig - h;
                let down = objective(&policy, &value);
                policy.log_std[d] = orig;
                check(grads.log_std[d], (up - down) / (2.0 * h), "log_std");
            }
            let mut vflat = Vec::new();
            value.mlp.params_into(&mut vflat);
            for k in 0..vflat.len() {
                let orig = vflat[k];
                vflat[k] = orig + h;
                value.mlp.set_params(&vflat);
                let up = objective(&policy, &value);
                vflat[k] = orig - h;
                value.mlp.set_params(&vflat);
                let down = objective(&policy, &value);
                vflat[k] = orig;
                value.mlp.set_params(&vflat);
                check(grads.value[k], (up - down) / (2.0 * h), "value");
            }
        }
    }

    fn stub_env(seed: u64) -> GenEnvironment<LogisticStub> {
        let space = rupture_space();
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
        // Reward rises with shear stress and drops with barrier size.
        let mut weights = vec![0.0; 8];
        weights[2] = 0.05; // sigma_xy
        weights[6] = -0.4; // width
        weights[7] = -0.6; // height
        let stub = LogisticStub {
            space,
            scaling: ScalingStats { mean, std },
            weights,
            bias: 0.0,
        };
        GenEnvironment::new(stub, RewardConfig::default(), ranges, (0.0, 1.0), seed).unwrap()
    }

    #[test]
    fn collect_rollouts_shapes_and_bounds() {
        let mut env = stub_env(3);
        let mut rng = rng_from_seed(4);
        let policy = PolicyNetwork::new(8, &mut rng);
        let value = ValueNetwork::new(8, &mut rng);
        let batch = collect_rollouts(&mut env, &policy, &value, 256, &mut rng).unwrap();
        assert_eq!(batch.len(), 256);
        assert!(batch.dones.iter().all(|&d| d));
        assert!(batch
            .rewards
            .iter()
            .all(|&r| (-1.0..=1.0).contains(&r)));
    }

    #[test]
    fn identical_seeds_give_identical_batches() {
        let collect = |seed: u64| {
            let mut env = stub_env(100 + seed);
            let mut rng = rng_from_seed(seed);
            let policy = PolicyNetwork::new(8, &mut rng);
            let value = ValueNetwork::new(8, &mut rng);
            collect_rollouts(&mut env, &policy, &value, 64, &mut rng).unwrap()
        };
        let (a, b) = (collect(5), collect(5));
        assert_eq!(a.states, b.states);
        assert_eq!(a.actions, b.actions);
        assert_eq!(a.rewards, b.rewards);
        assert_eq!(a.log_probs, b.log_probs);
    }

    #[test]
    fn constant_reward_keeps_the_curve_flat() {
        use crate::env::stub::ConstantStub;
        let space = rupture_space();
        // Tight scaling centered on the box keeps every sampled action
        // plausible and in range, so the reward is the stub constant always.
        let (mean, std): (Vec<f64>, Vec<f64>) = space
            .specs
            .iter()
            .map(|s| (0.5 * (s.lower + s.upper), (s.upper - s.lower) / 100.0))
            .unzip();
        let ranges: Vec<(f64, f64)> = space.specs.iter().map(|s| (s.lower, s.upper)).collect();
        let stub = ConstantStub {
            space,
            scaling: ScalingStats { mean, std },
            value: 0.9,
        };
        let mut env =
            GenEnvironment::new(stub, RewardConfig::default(), ranges, (0.0, 1.0), 1).unwrap();
        let cfg = PpoConfig {
            rollout_size: 256,
            minibatch: 64,
            epochs_per_update: 2,
            total_steps: 1024,
            seed: 2,
            ..PpoConfig::default()
        };
        let (_, curve) = train_agent(&mut env, &cfg).unwrap();
        for e in &curve.entries {
            assert!(
                (e.mean_reward - 0.9).abs() < 1e-12,
                "flat landscape must stay flat, got {}",
                e.mean_reward
            );
        }
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut env = stub_env(50);
            let cfg = PpoConfig {
                rollout_size: 128,
                minibatch: 32,
                epochs_per_update: 2,
                total_steps: 512,
                seed: 3,
                ..PpoConfig::default()
            };
            train_agent(&mut env, &cfg).unwrap()
        };
        let (bundle_a, curve_a) = run();
        let (bundle_b, curve_b) = run();
        assert_eq!(
            serde_json::to_string(&bundle_a.policy).unwrap(),
            serde_json::to_string(&bundle_b.policy).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&curve_a).unwrap(),
            serde_json::to_string(&curve_b).unwrap()
        );
    }

    #[test]
    fn bundle_serialization_round_trips() {
        let mut rng = rng_from_seed(31);
        let bundle = PolicyBundle {
            policy: PolicyNetwork::new(4, &mut rng),
            value: ValueNetwork::new(4, &mut rng),
            cfg: PpoConfig::default(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.policy");
        bundle.save(&path).unwrap();
        let loaded = PolicyBundle::load(&path).unwrap();
        let state = vec![0.2; 4];
        assert_eq!(bundle.policy.mean(&state), loaded.policy.mean(&state));
        assert_eq!(bundle.value.value(&state), loaded.value.value(&state));
    }
}
