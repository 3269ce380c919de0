//! Two-layer ReLU network `f(x; W) = m^{-1/2} sum_i b_i relu(<w_i, x>)`
//! with frozen output signs `b`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::error::{Result, ViperError};
use crate::linalg::SparseVec;
use crate::rng::{self, Purpose};

/// Architecture: width, input dimension and the frozen signs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerNet {
    pub width: usize,
    pub input_dim: usize,
    pub signs: Vec<f64>,
}

impl TwoLayerNet {
    fn scale(&self) -> f64 {
        1.0 / (self.width as f64).sqrt()
    }

    /// Pre-activations `<w_i, x>` for every hidden unit.
    fn preactivations(&self, params: &[f64], x: &SparseVec, pre: &mut [f64]) {
        let d = self.input_dim;
        for (i, p) in pre.iter_mut().enumerate() {
            let row = &params[i * d..(i + 1) * d];
            *p = x.dot_dense(row);
        }
    }
}

impl Regressor for TwoLayerNet {
    fn param_dim(&self) -> usize {
        self.width * self.input_dim
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn predict(&self, params: &[f64], x: &SparseVec) -> f64 {
        let d = self.input_dim;
        let mut s = 0.0;
        for (i, b) in self.signs.iter().enumerate() {
            // Branch-free so the cost does not depend on the weights.
            s += b * x.dot_dense(&params[i * d..(i + 1) * d]).max(0.0);
        }
        s * self.scale()
    }

    // ReLU subgradient at 0 is taken as 0.
    fn add_grad(&self, params: &[f64], x: &SparseVec, scale: f64, out: &mut [f64]) {
        let d = self.input_dim;
        let c = scale * self.scale();
        for (i, b) in self.signs.iter().enumerate() {
            let row = &params[i * d..(i + 1) * d];
            if x.dot_dense(row) > 0.0 {
                x.axpy_into(c * b, &mut out[i * d..(i + 1) * d]);
            }
        }
    }

    fn grad_sparse(&self, params: &[f64], x: &SparseVec) -> SparseVec {
        let d = self.input_dim;
        let c = self.scale();
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (i, b) in self.signs.iter().enumerate() {
            if x.dot_dense(&params[i * d..(i + 1) * d]) > 0.0 {
                for (j, v) in x.iter() {
                    idx.push((i * d + j) as u32);
                    val.push(c * b * v);
                }
            }
        }
        SparseVec { dim: self.param_dim(), idx, val }
    }

    fn data_loss_grad(&self, params: &[f64], inputs: &[SparseVec], targets: &[f64], out: &mut [f64]) -> f64 {
        let d = self.input_dim;
        let c = self.scale();
        let mut pre = vec![0.0; self.width];
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(targets) {
            self.preactivations(params, x, &mut pre);
            let f: f64 = pre
                .iter()
                .zip(&self.signs)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, b)| b * p)
                .sum::<f64>()
                * c;
            let r = f - y;
            loss += 0.5 * r * r;
            if r == 0.0 {
                continue;
            }
            for (i, (p, b)) in pre.iter().zip(&self.signs).enumerate() {
                if *p > 0.0 {
                    x.axpy_into(r * c * b, &mut out[i * d..(i + 1) * d]);
                }
            }
        }
        loss
    }
}

/// Network plus current weights and the snapshot `W0` taken at
/// initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub net: TwoLayerNet,
    pub weights: Vec<f64>,
    pub init: Vec<f64>,
}

/// Symmetric initialization: for `i < m/2`, `w_i = w_{m/2+i} ~ N(0, I_d/d)`
/// and `b_{m/2+i} = -b_i ~ Unif{-1, +1}`. This makes `f(x; W0) = 0` and
/// `<g(x; W0), W0> = 0` for every `x`.
pub fn symmetric_init(width: usize, input_dim: usize, seed: u64) -> Result<NetParams> {
    if width < 2 || width % 2 != 0 {
        return Err(ViperError::config(format!("network width must be even and >= 2, got {width}")));
    }
    if input_dim == 0 {
        return Err(ViperError::config("input dimension must be positive"));
    }
    let mut rng = rng::substream(seed, Purpose::Init, 0, 0);
    let half = width / 2;
    let std = 1.0 / (input_dim as f64).sqrt();
    let mut weights = vec![0.0; width * input_dim];
    let mut signs = vec![0.0; width];
    for i in 0..half {
        for j in 0..input_dim {
            let w = std * rng::standard_normal(&mut rng);
            weights[i * input_dim + j] = w;
            weights[(half + i) * input_dim + j] = w;
        }
        let b = if rng.random::<bool>() { 1.0 } else { -1.0 };
        signs[i] = b;
        signs[half + i] = -b;
    }
    Ok(NetParams {
        net: TwoLayerNet { width, input_dim, signs },
        init: weights.clone(),
        weights,
    })
}

impl NetParams {
    fn check(&self, x: &[f64]) -> Result<SparseVec> {
        if x.len() != self.net.input_dim {
            return Err(ViperError::domain(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.net.input_dim
            )));
        }
        let n2: f64 = x.iter().map(|v| v * v).sum();
        if (n2 - 1.0).abs() > 1e-6 {
            log::warn!("network input is not unit-norm (|x|^2 = {n2})");
        }
        Ok(SparseVec::from_dense(x))
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        let sx = self.check(x)?;
        Ok(self.net.predict(&self.weights, &sx))
    }

    /// `g(x; W)`, laid out like `W` (row `i` is the block of unit `i`).
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let sx = self.check(x)?;
        let mut g = vec![0.0; self.net.param_dim()];
        self.net.add_grad(&self.weights, &sx, 1.0, &mut g);
        Ok(g)
    }

    /// `g(x; W0)`.
    pub fn init_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let sx = self.check(x)?;
        let mut g = vec![0.0; self.net.param_dim()];
        self.net.add_grad(&self.init, &sx, 1.0, &mut g);
        Ok(g)
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Self {
        NetParams { net: self.net.clone(), weights, init: self.init.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, norm, sub};
    use crate::rng::unit_sphere;

    fn tiny(w1: Vec<f64>, w2: Vec<f64>) -> NetParams {
        let mut weights = w1;
        weights.extend(w2);
        NetParams {
            net: TwoLayerNet { width: 2, input_dim: weights.len() / 2, signs: vec![1.0, -1.0] },
            init: weights.clone(),
            weights,
        }
    }

    #[test]
    fn odd_width_rejected() {
        assert!(symmetric_init(3, 4, 0).is_err());
        assert!(symmetric_init(0, 4, 0).is_err());
    }

    #[test]
    fn symmetric_init_zero_output_and_inner_product() {
        let p = symmetric_init(64, 5, 3).unwrap();
        let mut rng = crate::rng::substream(1, Purpose::Misc, 0, 0);
        for _ in 0..50 {
            let x = unit_sphere(&mut rng, 5);
            assert!(p.forward(&x).unwrap().abs() <= 1e-12);
            assert!(dot(&p.grad(&x).unwrap(), &p.init).abs() <= 1e-12);
        }
        for i in 0..32 {
            assert_eq!(p.net.signs[i], -p.net.signs[32 + i]);
            assert_eq!(&p.init[i * 5..(i + 1) * 5], &p.init[(32 + i) * 5..(33 + i) * 5]);
        }
    }

    #[test]
    fn init_covariance_matches_identity_over_d() {
        let d = 4;
        let m = 100_000;
        let p = symmetric_init(2 * m, d, 11).unwrap();
        let mut cov = vec![0.0; d * d];
        for i in 0..m {
            let w = &p.init[i * d..(i + 1) * d];
            for a in 0..d {
                for b in 0..d {
                    cov[a * d + b] += w[a] * w[b] / m as f64;
                }
            }
        }
        let mut target = vec![0.0; d * d];
        (0..d).for_each(|a| target[a * d + a] = 1.0 / d as f64);
        let rel = norm(&sub(&cov, &target)) / norm(&target);
        assert!(rel < 0.05, "relative Frobenius error {rel}");
    }

    #[test]
    fn forward_examples() {
        let same = tiny(vec![0.3, -0.4], vec![0.3, -0.4]);
        assert_eq!(same.forward(&[0.6, 0.8]).unwrap(), 0.0);
        let p = tiny(vec![1.0, 0.0], vec![0.0, 1.0]);
        assert!((p.forward(&[1.0, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        let doubled = p.with_weights(p.weights.iter().map(|w| 2.0 * w).collect());
        let x = [0.8, 0.6];
        assert!((doubled.forward(&x).unwrap() - 2.0 * p.forward(&x).unwrap()).abs() < 1e-12);
        assert!(p.forward(&[1.0]).is_err());
    }

    #[test]
    fn inactive_block_is_zero_and_grad_bounded() {
        let p = tiny(vec![1.0, 0.0], vec![-1.0, 0.0]);
        let g = p.grad(&[1.0, 0.0]).unwrap();
        assert_eq!(&g[2..], &[0.0, 0.0]);
        let q = symmetric_init(128, 6, 2).unwrap();
        let mut rng = crate::rng::substream(2, Purpose::Misc, 0, 0);
        for _ in 0..20 {
            let x = unit_sphere(&mut rng, 6);
            assert!(norm(&q.grad(&x).unwrap()) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let base = symmetric_init(16, 5, 4).unwrap();
        let mut rng = crate::rng::substream(3, Purpose::Misc, 0, 0);
        let mut checked = 0;
        while checked < 100 {
            // move away from W0 so the function is not identically paired
            let w: Vec<f64> = base.init.iter().map(|v| v + 0.3 * crate::rng::standard_normal(&mut rng)).collect();
            let p = base.with_weights(w);
            let x = unit_sphere(&mut rng, 5);
            let pre_min = (0..16)
                .map(|i| dot(&p.weights[i * 5..(i + 1) * 5], &x).abs())
                .fold(f64::INFINITY, f64::min);
            if pre_min < 1e-3 {
                continue; // too close to a kink
            }
            let dir = unit_sphere(&mut rng, 80);
            let h = 1e-6;
            let plus = p.with_weights(p.weights.iter().zip(&dir).map(|(a, b)| a + h * b).collect());
            let minus = p.with_weights(p.weights.iter().zip(&dir).map(|(a, b)| a - h * b).collect());
            let fd = (plus.forward(&x).unwrap() - minus.forward(&x).unwrap()) / (2.0 * h);
            let an = dot(&p.grad(&x).unwrap(), &dir);
            assert!((fd - an).abs() <= 1e-5, "fd {fd} vs analytic {an}");
            assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-2));
            checked += 1;
        }
    }

    #[test]
    fn linearization_error_shrinks_with_width() {
        let mut errs = Vec::new();
        for m in [256usize, 4096] {
            let p = symmetric_init(m, 6, 5).unwrap();
            let mut rng = crate::rng::substream(5, Purpose::Misc, m as u64, 0);
            let mut worst: f64 = 0.0;
            for _ in 0..20 {
                let dir = unit_sphere(&mut rng, m * 6);
                let w: Vec<f64> = p.init.iter().zip(&dir).map(|(a, b)| a + 0.1 * b).collect();
                let moved = p.with_weights(w.clone());
                let x = unit_sphere(&mut rng, 6);
                let lin = dot(&p.init_grad(&x).unwrap(), &sub(&w, &p.init));
                worst = worst.max((moved.forward(&x).unwrap() - lin).abs());
            }
            errs.push(worst);
        }
        assert!(errs[1] < 0.01, "m=4096 linearization error {}", errs[1]);
        assert!(errs[1] < errs[0]);
    }
}
