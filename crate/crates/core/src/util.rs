//! Small shared helpers: seeded RNG construction and artifact float formatting.

use rand_chacha::ChaCha8Rng;

/// All stochastic components draw from ChaCha8 so that seeded runs are
/// reproducible across platforms and releases.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fixed-decimal float formatting used by every CSV artifact (9 fractional
/// digits). Byte-identical reruns depend on this being the only float path
/// into text outputs.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.9}")
}

/// `n` evenly spaced values covering `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}
