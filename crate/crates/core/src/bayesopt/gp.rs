//! Gaussian-process regression backing the optimization study.
//!
//! Squared-exponential kernel with per-dimension length scales tied to the
//! search ranges (`l_d = c * range_d`); the shared multiplier `c` is fitted
//! by maximizing the log marginal likelihood over a fixed log-grid, no
//! iterative optimizer. Observations are standardized internally. The
//! Cholesky factor grows incrementally (O(n^2) per new point); full O(n^3)
//! refactorizations happen only on the hyperparameter refit schedule.

/// Fixed log-grid of length-scale multipliers.
const LENGTH_SCALE_GRID: [f64; 5] = [0.05, 0.1, 0.2, 0.4, 0.8];
const DEFAULT_MULTIPLIER: f64 = 0.2;

/// GP over observed (params, value) pairs.
#[derive(Debug, Clone)]
pub struct GpModel {
    ranges: Vec<(f64, f64)>,
    multiplier: f64,
    noise: f64,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    y_mean: f64,
    y_std: f64,
    /// Packed row-major lower-triangular Cholesky factor of K + noise*I.
    chol: Vec<f64>,
    /// (K + noise*I)^-1 y_standardized.
    alpha: Vec<f64>,
}

impl GpModel {
    pub fn new(ranges: Vec<(f64, f64)>, noise: f64) -> Self {
        GpModel {
            ranges,
            multiplier: DEFAULT_MULTIPLIER,
            noise,
            x: Vec::new(),
            y: Vec::new(),
            y_mean: 0.0,
            y_std: 1.0,
            chol: Vec::new(),
            alpha: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn length_scales(&self) -> Vec<f64> {
        self.ranges
            .iter()
            .map(|&(lo, hi)| self.multiplier * (hi - lo).max(1e-12))
            .collect()
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut sq = 0.0;
        for (d, &(lo, hi)) in self.ranges.iter().enumerate() {
            let l = self.multiplier * (hi - lo).max(1e-12);
            let z = (a[d] - b[d]) / l;
            sq += z * z;
        }
        (-0.5 * sq).exp()
    }

    /// Add one observation; grows the Cholesky factor by one row.
    pub fn observe(&mut self, params: Vec<f64>, value: f64) {
        debug_assert!(value.is_finite());
        let n = self.x.len();
        let k_new: Vec<f64> = self.x.iter().map(|xi| self.kernel(xi, &params)).collect();
        // Solve L row = k_new by forward substitution.
        let mut row = k_new;
        for i in 0..n {
            let mut acc = row[i];
            for j in 0..i {
                acc -= self.chol[i * (i + 1) / 2 + j] * row[j];
            }
            row[i] = acc / self.chol[i * (i + 1) / 2 + i];
        }
        let diag_sq = 1.0 + self.noise - row.iter().map(|v| v * v).sum::<f64>();
        self.chol.extend_from_slice(&row);
        self.chol.push(diag_sq.max(1e-12).sqrt());

        self.x.push(params);
        self.y.push(value);
        self.restandardize();
        self.recompute_alpha();
    }

    fn restandardize(&mut self) {
        let n = self.y.len() as f64;
        self.y_mean = self.y.iter().sum::<f64>() / n;
        let var = self
            .y
            .iter()
            .map(|v| (v - self.y_mean) * (v - self.y_mean))
            .sum::<f64>()
            / n;
        self.y_std = var.sqrt().max(1e-12);
    }

    fn standardized_y(&self) -> Vec<f64> {
        self.y
            .iter()
            .map(|v| (v - self.y_mean) / self.y_std)
            .collect()
    }

    fn recompute_alpha(&mut self) {
        let n = self.x.len();
        let mut z = self.standardized_y();
        // Forward solve L z' = y~.
        for i in 0..n {
            let mut acc = z[i];
            for j in 0..i {
                acc -= self.chol[i * (i + 1) / 2 + j] * z[j];
            }
            z[i] = acc / self.chol[i * (i + 1) / 2 + i];
        }
        // Back solve L^T alpha = z'.
        for i in (0..n).rev() {
            let mut acc = z[i];
            for k in (i + 1)..n {
                acc -= self.chol[k * (k + 1) / 2 + i] * z[k];
            }
            z[i] = acc / self.chol[i * (i + 1) / 2 + i];
        }
        self.alpha = z;
    }

    /// Rebuild the factorization from scratch for the current multiplier.
    fn refactorize(&mut self) {
        let n = self.x.len();
        let mut chol = vec![0.0; n * (n + 1) / 2];
        for i in 0..n {
            for j in 0..=i {
                let mut acc = self.kernel(&self.x[i], &self.x[j]);
                if i == j {
                    acc += self.noise;
                }
                for k in 0..j {
                    acc -= chol[i * (i + 1) / 2 + k] * chol[j * (j + 1) / 2 + k];
                }
                chol[i * (i + 1) / 2 + j] = if i == j {
                    acc.max(1e-12).sqrt()
                } else {
                    acc / chol[j * (j + 1) / 2 + j]
                };
            }
        }
        self.chol = chol;
        self.recompute_alpha();
    }

    fn log_marginal_likelihood(&self) -> f64 {
        let n = self.x.len();
        let y = self.standardized_y();
        let data_fit: f64 = y.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let log_det: f64 = (0..n)
            .map(|i| self.chol[i * (i + 1) / 2 + i].ln())
            .sum();
        -0.5 * data_fit - log_det - 0.5 * n as f64 * std::f64::consts::TAU.ln()
    }

    /// Grid-search the length-scale multiplier by marginal likelihood.
    /// Deterministic: ties keep the first (smallest) grid value.
    pub fn refit_length_scales(&mut self) {
        if self.x.len() < 2 {
            return;
        }
        let mut best = (f64::NEG_INFINITY, self.multiplier);
        for &c in &LENGTH_SCALE_GRID {
            self.multiplier = c;
            self.refactorize();
            let lml = self.log_marginal_likelihood();
            if lml > best.0 {
                best = (lml, c);
            }
        }
        self.multiplier = best.1;
        self.refactorize();
    }

    /// Posterior mean and standard deviation at each candidate.
    pub fn predict_batch(&self, candidates: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let n = self.x.len();
        let m = candidates.len();
        if n == 0 {
            return (vec![self.y_mean; m], vec![self.y_std.max(1.0); m]);
        }
        // kstar laid out row-major by observation: kstar[i*m + j].
        let mut kstar = vec![0.0; n * m];
        for (i, xi) in self.x.iter().enumerate() {
            for (j, c) in candidates.iter().enumerate() {
                kstar[i * m + j] = self.kernel(xi, c);
            }
        }

        let mut mu = vec![0.0; m];
        for i in 0..n {
            let a = self.alpha[i];
            let row = &kstar[i * m..(i + 1) * m];
            for (slot, k) in mu.iter_mut().zip(row) {
                *slot += a * k;
            }
        }
        for slot in &mut mu {
            *slot = self.y_mean + self.y_std * *slot;
        }

        // In-place blocked forward solve: kstar becomes V = L^-1 K*.
        for i in 0..n {
            let (before, current) = kstar.split_at_mut(i * m);
            let row_i = &mut current[..m];
            for j in 0..i {
                let l = self.chol[i * (i + 1) / 2 + j];
                if l != 0.0 {
                    let row_j = &before[j * m..(j + 1) * m];
                    for (slot, v) in row_i.iter_mut().zip(row_j) {
                        *slot -= l * v;
                    }
                }
            }
            let d = self.chol[i * (i + 1) / 2 + i];
            for slot in row_i.iter_mut() {
                *slot /= d;
            }
        }

        let mut sigma = vec![0.0; m];
        for j in 0..m {
            let mut sq = 0.0;
            for i in 0..n {
                let v = kstar[i * m + j];
                sq += v * v;
            }
            sigma[j] = self.y_std * (1.0 - sq).max(0.0).sqrt();
        }
        (mu, sigma)
    }

    /// Posterior at a single point.
    pub fn predict_one(&self, params: &[f64]) -> (f64, f64) {
        let (mu, sigma) = self.predict_batch(std::slice::from_ref(&params.to_vec()));
        (mu[0], sigma[0])
    }
}

/// Expected improvement for maximization: `(mu-best)*Phi(z) + sigma*phi(z)`
/// with `z = (mu-best)/sigma`; the zero-uncertainty limit is
/// `max(mu - best, 0)`.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    if sigma <= 0.0 {
        return (mu - best).max(0.0);
    }
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};
    let standard = Normal::new(0.0, 1.0).expect("standard normal");
    let z = (mu - best) / sigma;
    ((mu - best) * standard.cdf(z) + sigma * standard.pdf(z)).max(0.0)
}
