//! Function approximators and their trainers.
//!
//! Every model exposes the same [`Regressor`] surface over a flat parameter
//! vector: a forward value, the parameter gradient, and a fused
//! squared-loss gradient used by the trainers.

mod checkpoint;
mod deep;
mod gd;
mod linear;
mod net;

use serde::{Deserialize, Serialize};

use crate::linalg::SparseVec;

pub use checkpoint::{read_checkpoint, read_checkpoints, write_checkpoint, Checkpoint};
pub use deep::{train_adam, AdamConfig, DeepNet};
pub use gd::{gradient_descent, GdConfig, GdOutcome};
pub use linear::{linear_feature, linear_forward, LinearModel, LinearParams};
pub use net::{symmetric_init, NetParams, TwoLayerNet};

pub trait Regressor {
    fn param_dim(&self) -> usize;

    fn input_dim(&self) -> usize;

    fn predict(&self, params: &[f64], x: &SparseVec) -> f64;

    /// `out += scale * grad_W f(x; W)`.
    fn add_grad(&self, params: &[f64], x: &SparseVec, scale: f64, out: &mut [f64]);

    fn grad_sparse(&self, params: &[f64], x: &SparseVec) -> SparseVec {
        let mut g = vec![0.0; self.param_dim()];
        self.add_grad(params, x, 1.0, &mut g);
        SparseVec::from_dense(&g)
    }

    /// Accumulate `sum_k (f(x_k) - y_k) g(x_k)` into `out` and return
    /// `0.5 * sum_k (f(x_k) - y_k)^2`.
    fn data_loss_grad(&self, params: &[f64], inputs: &[SparseVec], targets: &[f64], out: &mut [f64]) -> f64 {
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(targets) {
            let r = self.predict(params, x) - y;
            loss += 0.5 * r * r;
            self.add_grad(params, x, r, out);
        }
        loss
    }
}

/// A model architecture, without its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Linear(LinearModel),
    TwoLayer(TwoLayerNet),
    Deep(DeepNet),
}

impl Model {
    /// Shape `(rows, cols)` used when checkpointing a parameter vector.
    pub fn param_shape(&self) -> (usize, usize) {
        match self {
            Model::Linear(m) => (1, m.dim),
            Model::TwoLayer(n) => (n.width, n.input_dim),
            Model::Deep(d) => (1, d.param_dim()),
        }
    }
}

impl Regressor for Model {
    fn param_dim(&self) -> usize {
        match self {
            Model::Linear(m) => m.param_dim(),
            Model::TwoLayer(m) => m.param_dim(),
            Model::Deep(m) => m.param_dim(),
        }
    }

    fn input_dim(&self) -> usize {
        match self {
            Model::Linear(m) => m.input_dim(),
            Model::TwoLayer(m) => m.input_dim(),
            Model::Deep(m) => m.input_dim(),
        }
    }

    fn predict(&self, params: &[f64], x: &SparseVec) -> f64 {
        match self {
            Model::Linear(m) => m.predict(params, x),
            Model::TwoLayer(m) => m.predict(params, x),
            Model::Deep(m) => m.predict(params, x),
        }
    }

    fn add_grad(&self, params: &[f64], x: &SparseVec, scale: f64, out: &mut [f64]) {
        match self {
            Model::Linear(m) => m.add_grad(params, x, scale, out),
            Model::TwoLayer(m) => m.add_grad(params, x, scale, out),
            Model::Deep(m) => m.add_grad(params, x, scale, out),
        }
    }

    fn grad_sparse(&self, params: &[f64], x: &SparseVec) -> SparseVec {
        match self {
            Model::Linear(m) => m.grad_sparse(params, x),
            Model::TwoLayer(m) => m.grad_sparse(params, x),
            Model::Deep(m) => m.grad_sparse(params, x),
        }
    }

    fn data_loss_grad(&self, params: &[f64], inputs: &[SparseVec], targets: &[f64], out: &mut [f64]) -> f64 {
        match self {
            Model::Linear(m) => m.data_loss_grad(params, inputs, targets, out),
            Model::TwoLayer(m) => m.data_loss_grad(params, inputs, targets, out),
            Model::Deep(m) => m.data_loss_grad(params, inputs, targets, out),
        }
    }
}
