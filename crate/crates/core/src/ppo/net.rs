//! Fully-connected networks with hand-rolled backprop and Adam.
//!
//! Everything is f64 and allocation-light; the tanh MLPs here are small
//! (default 64x64 hidden) and the whole training loop is single-threaded and
//! deterministic under its seed.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Dense layer; weights are row-major `[out_dim x in_dim]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            out.push(acc);
        }
    }

    fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Orthogonal-style init: a Gaussian matrix orthonormalized by modified
/// Gram-Schmidt, scaled by `gain`. Seed-determined through the caller's RNG.
fn orthogonal(out_dim: usize, in_dim: usize, gain: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (m, n, transpose) = if out_dim >= in_dim {
        (out_dim, in_dim, false)
    } else {
        (in_dim, out_dim, true)
    };
    // Column-major working copy: columns are the vectors to orthonormalize.
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    for j in 0..n {
        for k in 0..j {
            let dot: f64 = cols[j].iter().zip(&cols[k]).map(|(a, b)| a * b).sum();
            for i in 0..m {
                cols[j][i] -= dot * cols[k][i];
            }
        }
        let norm: f64 = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in &mut cols[j] {
            *v /= norm;
        }
    }
    let mut w = vec![0.0; out_dim * in_dim];
    for o in 0..out_dim {
        for i in 0..in_dim {
            let q = if transpose { cols[o][i] } else { cols[i][o] };
            w[o * in_dim + i] = gain * q;
        }
    }
    w
}

/// Tanh MLP: activation after every layer except the last.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Per-layer activations kept for backprop: `acts[0]` is the input,
/// `acts[l + 1]` the (post-activation) output of layer `l`.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub acts: Vec<Vec<f64>>,
}

/// Gradient accumulator shaped like an [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            layers: mlp
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for (dw, db) in &self.layers {
            out.extend_from_slice(dw);
            out.extend_from_slice(db);
        }
    }
}

impl Mlp {
    /// Build `dims[0] -> dims[1] -> ... -> dims.last()` with per-layer init
    /// gains (`gains.len() == dims.len() - 1`).
    pub fn new(dims: &[usize], gains: &[f64], rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2);
        assert_eq!(gains.len(), dims.len() - 1);
        let layers = dims
            .windows(2)
            .zip(gains)
            .map(|(pair, &gain)| Linear {
                w: orthogonal(pair[1], pair[0], gain, rng),
                b: vec![0.0; pair[1]],
                in_dim: pair[0],
                out_dim: pair[1],
            })
            .collect();
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().expect("non-empty mlp").in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty mlp").out_dim
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut current = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&current, &mut next);
            if l != last {
                for v in &mut next {
                    *v = v.tanh();
                }
            }
            std::mem::swap(&mut current, &mut next);
        }
        current
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.forward_into(acts.last().expect("input present"), &mut out);
            if l != last {
                for v in &mut out {
                    *v = v.tanh();
                }
            }
            acts.push(out);
        }
        (acts.last().expect("output present").clone(), MlpCache { acts })
    }

    /// Accumulate parameter gradients for one sample given d(loss)/d(output).
    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64], grads: &mut MlpGrads) {
        let last = self.layers.len() - 1;
        let mut delta = grad_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &cache.acts[l];
            let output = &cache.acts[l + 1];
            // delta currently holds d(loss)/d(post-activation output of l).
            if l != last {
                for (d, a) in delta.iter_mut().zip(output) {
                    *d *= 1.0 - a * a; // tanh'
                }
            }
            let (dw, db) = &mut grads.layers[l];
            for o in 0..layer.out_dim {
                db[o] += delta[o];
                let row = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (slot, x) in row.iter_mut().zip(input) {
                    *slot += delta[o] * x;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (slot, w) in prev.iter_mut().zip(row) {
                        *slot += delta[o] * w;
                    }
                }
                delta = prev;
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Linear::n_params).sum()
    }

    pub fn params_into(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend_from_slice(&layer.w);
            out.extend_from_slice(&layer.b);
        }
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.w.len();
            layer.w.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = layer.b.len();
            layer.b.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        assert_eq!(offset, flat.len());
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }
}

/// Adam with bias correction over one flat parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from_seed;

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        let mut rng = rng_from_seed(3);
        let w = orthogonal(8, 4, 1.0, &mut rng);
        // Columns of the 8x4 matrix should be orthonormal.
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = (0..8).map(|i| w[i * 4 + a] * w[i * 4 + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "col {a}.col {b} = {dot}");
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = rng_from_seed(11);
        let mut mlp = Mlp::new(&[3, 5, 2], &[1.0, 1.0], &mut rng);
        let x = [0.3, -0.7, 1.1];
        // Loss = sum of outputs; d(loss)/d(output) = 1.
        let loss = |mlp: &Mlp| mlp.forward(&x).iter().sum::<f64>();

        let (_, cache) = mlp.forward_cached(&x);
        let mut grads = MlpGrads::zeros_like(&mlp);
        mlp.backward(&cache, &[1.0, 1.0], &mut grads);
        let mut analytic = Vec::new();
        grads.flatten_into(&mut analytic);

        let mut flat = Vec::new();
        mlp.params_into(&mut flat);
        let h = 1e-6;
        for (k, a) in analytic.iter().enumerate() {
            let orig = flat[k];
            flat[k] = orig + h;
            mlp.set_params(&flat);
            let up = loss(&mlp);
            flat[k] = orig - h;
            mlp.set_params(&flat);
            let down = loss(&mlp);
            flat[k] = orig;
            mlp.set_params(&flat);
            let numeric = (up - down) / (2.0 * h);
            assert!(
                (numeric - a).abs() <= 1e-6 * (1.0 + a.abs()),
                "param {k}: analytic {a}, numeric {numeric}"
            );
        }
    }

    #[test]
    fn params_round_trip() {
        let mut rng = rng_from_seed(5);
        let mlp = Mlp::new(&[2, 4, 1], &[2f64.sqrt(), 0.01], &mut rng);
        let mut flat = Vec::new();
        mlp.params_into(&mut flat);
        assert_eq!(flat.len(), mlp.n_params());
        let mut copy = mlp.clone();
        copy.set_params(&flat);
        assert_eq!(copy.forward(&[0.1, 0.2]), mlp.forward(&[0.1, 0.2]));
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut adam = Adam::new(0.1, 1);
        let mut theta = [5.0];
        for _ in 0..500 {
            let grad = [2.0 * theta[0]];
            adam.step(&mut theta, &grad);
        }
        assert!(theta[0].abs() < 0.05, "theta = {}", theta[0]);
    }
}
