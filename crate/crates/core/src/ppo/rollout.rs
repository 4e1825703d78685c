//! On-policy rollout storage and generalized advantage estimation.

use rand_chacha::ChaCha8Rng;

use crate::env::{GenEnvironment, RewardModel};
use crate::Result;

use super::{PolicyNetwork, ValueNetwork};

/// Parallel arrays of one rollout. `advantages`/`returns` stay empty until
/// [`compute_gae`] fills them.
#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn mean_reward(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.rewards.iter().sum::<f64>() / self.len() as f64
    }
}

/// Collect `n` one-step transitions. The environment owns the state stream;
/// `rng` drives action sampling only, so the two randomness sources stay
/// independent and seeded.
pub fn collect_rollouts<M: RewardModel>(
    env: &mut GenEnvironment<M>,
    policy: &PolicyNetwork,
    value: &ValueNetwork,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RolloutBatch> {
    let mut batch = RolloutBatch::default();
    let mut state = env.reset();
    for _ in 0..n {
        let (action, log_prob) = policy.sample_action(&state, rng)?;
        let v = value.value(&state);
        let (next_state, reward, done) = env.step(&action)?;
        batch.states.push(state);
        batch.actions.push(action);
        batch.log_probs.push(log_prob);
        batch.rewards.push(reward);
        batch.values.push(v);
        batch.dones.push(done);
        state = next_state;
    }
    Ok(batch)
}

/// Standard GAE recursion with episode truncation at `done` flags, then
/// per-batch advantage normalization (zero mean, unit population std).
/// Returns are `raw_advantage + value`, computed before normalization.
pub fn compute_gae(batch: &mut RolloutBatch, gamma: f64, lambda: f64) {
    let n = batch.len();
    batch.advantages = vec![0.0; n];
    batch.returns = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let not_done = if batch.dones[t] { 0.0 } else { 1.0 };
        // Value bootstrap beyond the batch is zero; every episode in the
        // one-step environment ends with done anyway.
        let next_value = if t + 1 < n { batch.values[t + 1] } else { 0.0 };
        let delta = batch.rewards[t] + gamma * next_value * not_done - batch.values[t];
        running = delta + gamma * lambda * not_done * running;
        batch.advantages[t] = running;
        batch.returns[t] = running + batch.values[t];
    }

    let mean = batch.advantages.iter().sum::<f64>() / n as f64;
    let var = batch
        .advantages
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / n as f64;
    let std = var.sqrt();
    if std > 1e-12 {
        for a in &mut batch.advantages {
            *a = (*a - mean) / std;
        }
    } else {
        for a in &mut batch.advantages {
            *a -= mean;
        }
    }
}
