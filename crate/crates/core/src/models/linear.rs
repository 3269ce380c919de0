use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::error::{Result, ViperError};
use crate::linalg::{dot, SparseVec};

/// `f(x; theta) = <x, theta>` over a known feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearModel {
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub theta: Vec<f64>,
}

impl LinearParams {
    pub fn zeros(dim: usize) -> Self {
        LinearParams { theta: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

pub fn linear_forward(params: &LinearParams, feature: &[f64]) -> Result<f64> {
    if feature.len() != params.dim() {
        return Err(ViperError::domain(format!(
            "feature has dimension {}, model expects {}",
            feature.len(),
            params.dim()
        )));
    }
    Ok(dot(feature, &params.theta))
}

/// Feature of the linearized model: the input itself. For the neural
/// linearization pass `g(x; W0)` as the input.
pub fn linear_feature(x: &[f64]) -> Vec<f64> {
    x.to_vec()
}

impl Regressor for LinearModel {
    fn param_dim(&self) -> usize {
        self.dim
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, params: &[f64], x: &SparseVec) -> f64 {
        x.dot_dense(params)
    }

    fn add_grad(&self, _params: &[f64], x: &SparseVec, scale: f64, out: &mut [f64]) {
        x.axpy_into(scale, out);
    }

    fn grad_sparse(&self, _params: &[f64], x: &SparseVec) -> SparseVec {
        x.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_examples() {
        let zero = LinearParams::zeros(3);
        assert_eq!(linear_forward(&zero, &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        let p = LinearParams { theta: vec![0.5, -2.0, 7.0] };
        for j in 0..3 {
            let mut e = vec![0.0; 3];
            e[j] = 1.0;
            assert_eq!(linear_forward(&p, &linear_feature(&e)).unwrap(), p.theta[j]);
        }
        assert!(linear_forward(&p, &[1.0]).is_err());
    }
}
