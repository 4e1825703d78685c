//! Diagonal-Gaussian action distribution in closed form.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const LN_2PI: f64 = 1.8378770664093453;

/// Exact log-density of a diagonal Gaussian at `action`.
pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    debug_assert_eq!(mean.len(), log_std.len());
    debug_assert_eq!(mean.len(), action.len());
    let mut lp = 0.0;
    for ((m, ls), a) in mean.iter().zip(log_std).zip(action) {
        let inv_std = (-ls).exp();
        let z = (a - m) * inv_std;
        lp += -0.5 * LN_2PI - ls - 0.5 * z * z;
    }
    lp
}

/// Draw `mean + std * z` with `z ~ N(0, I)`.
pub fn sample(mean: &[f64], log_std: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    mean.iter()
        .zip(log_std)
        .map(|(m, ls)| {
            let z: f64 = StandardNormal.sample(rng);
            m + ls.exp() * z
        })
        .collect()
}

/// Differential entropy: `sum_d(log_std_d + 0.5*ln(2*pi*e))`. State-independent.
pub fn entropy(log_std: &[f64]) -> f64 {
    let c = 0.5 * (LN_2PI + 1.0);
    log_std.iter().map(|ls| ls + c).sum()
}

/// `dim` independent standard-normal draws.
pub fn sample_standard(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}
