use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::error::{Result, ViperError};
use crate::linalg::SparseVec;

/// Full-batch gradient descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub lambda: f64,
    pub eta: f64,
    pub iters: usize,
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(ViperError::config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(ViperError::config(format!("eta must be > 0, got {}", self.eta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GdOutcome {
    pub params: Vec<f64>,
    pub final_loss: f64,
}

/// Run exactly `iters` steps of `W <- W - eta grad L(W)` from `w0` on
///
/// `L(W) = 1/2 sum_k (f(x_k; W) - y_k)^2 + lambda/2 |W + zeta - w0|^2`.
pub fn gradient_descent<R: Regressor + ?Sized>(
    model: &R,
    cfg: &GdConfig,
    inputs: &[SparseVec],
    targets: &[f64],
    zeta: &[f64],
    w0: &[f64],
) -> Result<GdOutcome> {
    cfg.validate()?;
    let p = model.param_dim();
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(ViperError::config("gradient descent needs matching nonempty inputs and targets"));
    }
    if zeta.len() != p || w0.len() != p {
        return Err(ViperError::domain(format!(
            "zeta and w0 must have the parameter dimension {p} (got {} and {})",
            zeta.len(),
            w0.len()
        )));
    }
    if let Some(x) = inputs.iter().find(|x| x.dim != model.input_dim()) {
        return Err(ViperError::domain(format!(
            "input has dimension {}, model expects {}",
            x.dim,
            model.input_dim()
        )));
    }

    let mut w = w0.to_vec();
    let mut grad = vec![0.0; p];
    for j in 0..cfg.iters {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let data_loss = model.data_loss_grad(&w, inputs, targets, &mut grad);
        let mut reg = 0.0;
        for k in 0..p {
            let shift = w[k] + zeta[k] - w0[k];
            reg += shift * shift;
            grad[k] += cfg.lambda * shift;
        }
        let loss = data_loss + 0.5 * cfg.lambda * reg;
        if !loss.is_finite() {
            return Err(ViperError::numeric(format!("gradient descent diverged at iteration {j}")));
        }
        for (wk, gk) in w.iter_mut().zip(&grad) {
            *wk -= cfg.eta * gk;
        }
    }
    let final_loss = loss_at(model, cfg.lambda, inputs, targets, zeta, w0, &w);
    if !final_loss.is_finite() {
        return Err(ViperError::numeric(format!(
            "gradient descent diverged at iteration {}",
            cfg.iters
        )));
    }
    Ok(GdOutcome { params: w, final_loss })
}

pub(crate) fn loss_at<R: Regressor + ?Sized>(
    model: &R,
    lambda: f64,
    inputs: &[SparseVec],
    targets: &[f64],
    zeta: &[f64],
    w0: &[f64],
    w: &[f64],
) -> f64 {
    let data: f64 = inputs
        .iter()
        .zip(targets)
        .map(|(x, y)| 0.5 * (model.predict(w, x) - y).powi(2))
        .sum();
    let reg: f64 = w.iter().zip(zeta).zip(w0).map(|((a, z), b)| (a + z - b).powi(2)).sum();
    data + 0.5 * lambda * reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm, sub};
    use crate::models::{symmetric_init, LinearModel};

    fn sv(x: &[f64]) -> SparseVec {
        SparseVec::from_dense(x)
    }

    #[test]
    fn one_point_ridge() {
        let cfg = GdConfig { lambda: 1.0, eta: 0.4, iters: 200 };
        let out = gradient_descent(&LinearModel { dim: 1 }, &cfg, &[sv(&[1.0])], &[1.0], &[0.0], &[0.0]).unwrap();
        assert!((out.params[0] - 0.5).abs() < 1e-6);
        assert!((out.final_loss - 0.25).abs() < 1e-9);
    }

    #[test]
    fn zero_iterations_return_start() {
        let net = symmetric_init(8, 3, 1).unwrap();
        let cfg = GdConfig { lambda: 1.0, eta: 0.1, iters: 0 };
        let zeta = vec![0.0; 24];
        let out = gradient_descent(&net.net, &cfg, &[sv(&[1.0, 0.0, 0.0])], &[1.0], &zeta, &net.init).unwrap();
        assert_eq!(out.params, net.init);
    }

    #[test]
    fn larger_lambda_stays_closer_to_start() {
        let net = symmetric_init(16, 3, 2).unwrap();
        let xs = [sv(&[1.0, 0.0, 0.0]), sv(&[0.0, 0.6, 0.8]), sv(&[0.0, 1.0, 0.0])];
        let ys = [1.0, -0.5, 0.7];
        let zeta = vec![0.0; 48];
        let dist: Vec<f64> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&lambda| {
                let cfg = GdConfig { lambda, eta: 0.005, iters: 400 };
                let w = gradient_descent(&net.net, &cfg, &xs, &ys, &zeta, &net.init).unwrap().params;
                norm(&sub(&w, &net.init))
            })
            .collect();
        assert!(dist[0] > dist[1] && dist[1] > dist[2], "{dist:?}");
    }

    #[test]
    fn linear_loss_is_monotone_under_step_cap() {
        let xs = [sv(&[1.0, 0.5]), sv(&[-0.3, 2.0]), sv(&[0.7, 0.7])];
        let ys = [1.0, 0.0, -2.0];
        let model = LinearModel { dim: 2 };
        // lambda_max of sum x x^T is below 6 here
        let lambda = 0.5;
        let eta = 1.0 / (lambda + 6.0);
        let zeta = [0.3, -0.1];
        let mut prev = f64::INFINITY;
        for iters in 0..50 {
            let cfg = GdConfig { lambda, eta, iters };
            let out = gradient_descent(&model, &cfg, &xs, &ys, &zeta, &[0.0, 0.0]).unwrap();
            assert!(out.final_loss <= prev + 1e-12);
            prev = out.final_loss;
        }
    }

    #[test]
    fn divergence_reports_iteration() {
        let cfg = GdConfig { lambda: 1.0, eta: 10.0, iters: 5000 };
        let err = gradient_descent(&LinearModel { dim: 1 }, &cfg, &[sv(&[3.0])], &[1.0], &[0.0], &[0.0]).unwrap_err();
        assert!(matches!(err, ViperError::Numeric(ref m) if m.contains("iteration")), "{err}");
    }

    #[test]
    fn shape_errors() {
        let cfg = GdConfig { lambda: 1.0, eta: 0.1, iters: 1 };
        let m = LinearModel { dim: 2 };
        assert!(gradient_descent(&m, &cfg, &[], &[], &[0.0; 2], &[0.0; 2]).is_err());
        assert!(gradient_descent(&m, &cfg, &[sv(&[1.0, 1.0])], &[1.0], &[0.0], &[0.0; 2]).is_err());
        assert!(gradient_descent(&m, &cfg, &[sv(&[1.0])], &[1.0], &[0.0; 2], &[0.0; 2]).is_err());
        let bad = GdConfig { lambda: 0.0, ..cfg };
        assert!(gradient_descent(&m, &bad, &[sv(&[1.0, 1.0])], &[1.0], &[0.0; 2], &[0.0; 2]).is_err());
    }
}
