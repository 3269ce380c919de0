//! Experiment-mode network: two hidden ReLU layers with biases, trained by
//! minibatch Adam. The theory network in [`super::net`] is what the
//! guarantees and the acceptance checks use; this one mirrors the
//! configuration practitioners usually run.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::error::{Result, ViperError};
use crate::linalg::SparseVec;
use crate::rng::{self, Purpose};

/// `d -> m -> m -> 1`. Parameters are flattened as
/// `[W1 (m x d), b1 (m), W2 (m x m), b2 (m), w3 (m), b3 (1)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeepNet {
    pub input_dim: usize,
    pub width: usize,
}

struct Offsets {
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
}

impl DeepNet {
    fn offsets(&self) -> Offsets {
        let (d, m) = (self.input_dim, self.width);
        let b1 = m * d;
        let w2 = b1 + m;
        let b2 = w2 + m * m;
        let w3 = b2 + m;
        let b3 = w3 + m;
        Offsets { b1, w2, b2, w3, b3 }
    }

    /// He-normal weights, zero biases.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let (d, m) = (self.input_dim, self.width);
        let o = self.offsets();
        let mut rng = rng::substream(seed, Purpose::Init, 1, 0);
        let mut p = vec![0.0; self.param_dim()];
        let s1 = (2.0 / d as f64).sqrt();
        let s2 = (2.0 / m as f64).sqrt();
        p[..o.b1].iter_mut().for_each(|w| *w = s1 * rng::standard_normal(&mut rng));
        p[o.w2..o.b2].iter_mut().for_each(|w| *w = s2 * rng::standard_normal(&mut rng));
        p[o.w3..o.b3].iter_mut().for_each(|w| *w = s2 * rng::standard_normal(&mut rng));
        p
    }

    /// Hidden activations of both layers and the output.
    fn forward(&self, p: &[f64], x: &SparseVec) -> (Vec<f64>, Vec<f64>, f64) {
        let (d, m) = (self.input_dim, self.width);
        let o = self.offsets();
        let h1: Vec<f64> = (0..m)
            .map(|i| (x.dot_dense(&p[i * d..(i + 1) * d]) + p[o.b1 + i]).max(0.0))
            .collect();
        let h2: Vec<f64> = (0..m)
            .map(|i| {
                let row = &p[o.w2 + i * m..o.w2 + (i + 1) * m];
                (crate::linalg::dot(row, &h1) + p[o.b2 + i]).max(0.0)
            })
            .collect();
        let out = crate::linalg::dot(&p[o.w3..o.b3], &h2) + p[o.b3];
        (h1, h2, out)
    }
}

impl Regressor for DeepNet {
    fn param_dim(&self) -> usize {
        let (d, m) = (self.input_dim, self.width);
        m * d + m + m * m + m + m + 1
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn predict(&self, params: &[f64], x: &SparseVec) -> f64 {
        self.forward(params, x).2
    }

    fn add_grad(&self, p: &[f64], x: &SparseVec, scale: f64, out: &mut [f64]) {
        let (d, m) = (self.input_dim, self.width);
        let o = self.offsets();
        let (h1, h2, _) = self.forward(p, x);
        out[o.b3] += scale;
        let mut delta2 = vec![0.0; m];
        for i in 0..m {
            out[o.w3 + i] += scale * h2[i];
            if h2[i] > 0.0 {
                delta2[i] = scale * p[o.w3 + i];
            }
        }
        let mut delta1 = vec![0.0; m];
        for i in 0..m {
            if delta2[i] == 0.0 {
                continue;
            }
            out[o.b2 + i] += delta2[i];
            let row = o.w2 + i * m;
            for j in 0..m {
                out[row + j] += delta2[i] * h1[j];
                if h1[j] > 0.0 {
                    delta1[j] += delta2[i] * p[row + j];
                }
            }
        }
        for (i, &g) in delta1.iter().enumerate() {
            if g != 0.0 {
                out[o.b1 + i] += g;
                x.axpy_into(g, &mut out[i * d..(i + 1) * d]);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lambda: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, epochs: 50, batch: 64, lambda: 0.01 }
    }
}

/// Minibatch Adam on `mean_batch 1/2 (f - y)^2 + lambda/(2K) |W + zeta - W0|^2`.
pub fn train_adam<R: Regressor + ?Sized>(
    model: &R,
    cfg: &AdamConfig,
    inputs: &[SparseVec],
    targets: &[f64],
    zeta: &[f64],
    w0: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    let p = model.param_dim();
    let k = inputs.len();
    if k == 0 || k != targets.len() || zeta.len() != p || w0.len() != p {
        return Err(ViperError::domain("train_adam: inconsistent shapes or empty data"));
    }
    if cfg.batch == 0 || !(cfg.lr > 0.0) || !(cfg.lambda >= 0.0) {
        return Err(ViperError::config("train_adam: batch, lr must be positive and lambda >= 0"));
    }
    let mut rng = rng::substream(seed, Purpose::Misc, 1, 0);
    let mut w = w0.to_vec();
    let (mut m1, mut m2) = (vec![0.0; p], vec![0.0; p]);
    let mut grad = vec![0.0; p];
    let mut order: Vec<usize> = (0..k).collect();
    let mut t = 0i32;
    let reg = cfg.lambda / k as f64;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let xs: Vec<SparseVec> = chunk.iter().map(|&i| inputs[i].clone()).collect();
            let ys: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let loss = model.data_loss_grad(&w, &xs, &ys, &mut grad);
            if !loss.is_finite() {
                return Err(ViperError::numeric(format!("adam diverged in epoch {epoch}")));
            }
            let inv = 1.0 / chunk.len() as f64;
            t += 1;
            let c1 = 1.0 - cfg.beta1.powi(t);
            let c2 = 1.0 - cfg.beta2.powi(t);
            for j in 0..p {
                let g = grad[j] * inv + reg * (w[j] + zeta[j] - w0[j]);
                m1[j] = cfg.beta1 * m1[j] + (1.0 - cfg.beta1) * g;
                m2[j] = cfg.beta2 * m2[j] + (1.0 - cfg.beta2) * g * g;
                w[j] -= cfg.lr * (m1[j] / c1) / ((m2[j] / c2).sqrt() + cfg.eps);
            }
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::unit_sphere;

    #[test]
    fn gradient_matches_finite_differences() {
        let net = DeepNet { input_dim: 3, width: 5 };
        let p = net.init(4);
        let mut rng = rng::substream(4, Purpose::Misc, 9, 0);
        let x = SparseVec::from_dense(&unit_sphere(&mut rng, 3));
        let mut g = vec![0.0; net.param_dim()];
        net.add_grad(&p, &x, 1.0, &mut g);
        let h = 1e-6;
        for j in 0..net.param_dim() {
            let mut a = p.clone();
            let mut b = p.clone();
            a[j] += h;
            b[j] -= h;
            let fd = (net.predict(&a, &x) - net.predict(&b, &x)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-5, "param {j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn adam_fits_a_smooth_target() {
        let net = DeepNet { input_dim: 2, width: 16 };
        let mut rng = rng::substream(5, Purpose::Misc, 9, 1);
        let xs: Vec<SparseVec> = (0..64).map(|_| SparseVec::from_dense(&unit_sphere(&mut rng, 2))).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.to_dense()[0]).collect();
        let w0 = net.init(5);
        let zeta = vec![0.0; w0.len()];
        let cfg = AdamConfig { lr: 1e-2, epochs: 300, batch: 16, lambda: 1e-4, ..Default::default() };
        let w = train_adam(&net, &cfg, &xs, &ys, &zeta, &w0, 5).unwrap();
        let mse: f64 = xs.iter().zip(&ys).map(|(x, y)| (net.predict(&w, x) - y).powi(2)).sum::<f64>() / 64.0;
        assert!(mse < 1e-2, "mse {mse}");
    }
}
