//! Minimal dense-layer machinery shared by the dynamics models and the
//! Q-network agents. Plain SGD, ReLU hidden activations, seeded uniform
//! init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Linear {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out x n_in`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    pub fn new(n_in: usize, n_out: usize, rng: &mut ChaCha20Rng) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let w = (0..n_in * n_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let b = (0..n_out).map(|_| rng.gen_range(-bound..bound)).collect();
        Linear { n_in, n_out, w, b }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_in);
        let mut out = self.b.clone();
        for (o, row) in out.iter_mut().zip(self.w.chunks(self.n_in)) {
            for (wij, xj) in row.iter().zip(x) {
                *o += wij * xj;
            }
        }
        out
    }

    /// Accumulates gradients for `dL/dy` into `gw`/`gb` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], grad_out: &[f64], gw: &mut [f64], gb: &mut [f64]) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.n_in];
        for (i, go) in grad_out.iter().enumerate() {
            gb[i] += go;
            let row = &self.w[i * self.n_in..(i + 1) * self.n_in];
            let grow = &mut gw[i * self.n_in..(i + 1) * self.n_in];
            for j in 0..self.n_in {
                grow[j] += go * x[j];
                grad_in[j] += go * row[j];
            }
        }
        grad_in
    }

    pub fn apply_sgd(&mut self, gw: &[f64], gb: &[f64], lr: f64, scale: f64) {
        for (w, g) in self.w.iter_mut().zip(gw) {
            *w -= lr * g * scale;
        }
        for (b, g) in self.b.iter_mut().zip(gb) {
            *b -= lr * g * scale;
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

/// Gradient of ReLU given its pre-activation input.
pub fn relu_backward(pre: &[f64], grad: &[f64]) -> Vec<f64> {
    pre.iter()
        .zip(grad)
        .map(|(p, g)| if *p > 0.0 { *g } else { 0.0 })
        .collect()
}

pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
