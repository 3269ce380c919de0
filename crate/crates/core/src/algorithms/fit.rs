use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::Features;
use super::policy::{Policy, StepValue};
use crate::envs::State;
use crate::error::{Result, ViperError};
use crate::linalg::SparseVec;
use crate::models::{
    gradient_descent, symmetric_init, train_adam, AdamConfig, DeepNet, GdConfig, LinearModel, LinearParams, Model,
    Regressor,
};
use crate::offline_data::OfflineDataset;
use crate::rng::{self, Purpose};
use crate::uq::{CovMode, CovarianceAccumulator};

/// Function class of a learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Family {
    /// Linear in the feature map; fitted in closed form.
    Linear,
    /// Symmetric-initialized two-layer ReLU network trained by full-batch GD.
    Neural { width: usize },
    /// Experiment mode: two hidden layers trained by Adam.
    Deep { width: usize, adam: AdamConfig },
}

/// Settings shared by the network trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub width: usize,
    pub gd: GdConfig,
    pub seed: u64,
    /// Draw a fresh `W0` for every step instead of one for the whole run.
    pub reinit_per_step: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViperConfig {
    pub family: Family,
    pub members: usize,
    /// One value for all steps, or one per step (`sigma[h - 1]`).
    pub sigma: Vec<f64>,
    pub lambda: f64,
    pub eta: f64,
    pub iters: usize,
    pub psi: f64,
    pub split: bool,
    pub seed: u64,
    pub reinit_per_step: bool,
    /// Skip the regularizer perturbation `ζ` (diagnostics only).
    pub zero_zeta: bool,
}

impl ViperConfig {
    pub fn linear(members: usize, sigma: f64, lambda: f64, seed: u64) -> Self {
        ViperConfig {
            family: Family::Linear,
            members,
            sigma: vec![sigma],
            lambda,
            eta: 0.0,
            iters: 0,
            psi: 0.0,
            split: false,
            seed,
            reinit_per_step: false,
            zero_zeta: false,
        }
    }

    pub fn neural(width: usize, members: usize, sigma: f64, gd: GdConfig, seed: u64) -> Self {
        ViperConfig {
            family: Family::Neural { width },
            members,
            sigma: vec![sigma],
            lambda: gd.lambda,
            eta: gd.eta,
            iters: gd.iters,
            psi: 0.0,
            split: false,
            seed,
            reinit_per_step: false,
            zero_zeta: false,
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.members == 0 {
            return Err(ViperError::config("ensemble size M must be >= 1"));
        }
        if !(self.sigma.len() == 1 || self.sigma.len() == horizon) {
            return Err(ViperError::config(format!("sigma needs 1 or H = {horizon} entries, got {}", self.sigma.len())));
        }
        if self.sigma.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(ViperError::config("sigma must be >= 0"));
        }
        if !(self.psi >= 0.0) {
            return Err(ViperError::config("psi must be >= 0"));
        }
        if !(self.lambda > 0.0) {
            return Err(ViperError::config("lambda must be > 0"));
        }
        if matches!(self.family, Family::Neural { .. }) {
            self.gd().validate()?;
        }
        Ok(())
    }

    fn gd(&self) -> GdConfig {
        GdConfig { lambda: self.lambda, eta: self.eta, iters: self.iters }
    }

    pub fn sigma_at(&self, h: usize) -> f64 {
        if self.sigma.len() == 1 {
            self.sigma[0]
        } else {
            self.sigma[h - 1]
        }
    }
}

/// Regression inputs and unperturbed targets `r + V_{h+1}(s')` of one step.
pub struct StepData {
    pub inputs: Vec<SparseVec>,
    pub targets: Vec<f64>,
}

/// Build step-`h` regression data; `next` is the fitted value function of
/// step `h + 1` (`None` at the last step, where `V_{H+1} = 0`).
pub fn step_data(
    dataset: &OfflineDataset,
    h: usize,
    features: &Features,
    model: &Model,
    next: Option<&StepValue>,
) -> Result<StepData> {
    let mut cache: HashMap<usize, f64> = HashMap::new();
    let mut next_value = |s: &State| -> Result<f64> {
        let Some(step) = next else { return Ok(0.0) };
        let v = |s: &State| -> Result<f64> {
            let q = step.q_values(model, features, s)?;
            Ok(q.into_iter().fold(f64::NEG_INFINITY, f64::max))
        };
        match s {
            State::Discrete(id) => {
                if let Some(&c) = cache.get(id) {
                    return Ok(c);
                }
                let val = v(s)?;
                cache.insert(*id, val);
                Ok(val)
            }
            _ => v(s),
        }
    };
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for rec in dataset.step_records(h) {
        inputs.push(features.feature(&rec.state, rec.action)?);
        let v = match &rec.next_state {
            Some(s) if h < dataset.horizon => next_value(s)?,
            _ => 0.0,
        };
        targets.push(rec.reward + v);
    }
    if inputs.is_empty() {
        return Err(ViperError::config(format!("no records at step {h}")));
    }
    Ok(StepData { inputs, targets })
}

/// `ỹ_k = y_k + ξ_k` with `ξ_k ~ N(0, σ²)` i.i.d.
pub fn perturb_targets<R: Rng + ?Sized>(targets: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    targets.iter().map(|y| y + sigma * rng::standard_normal(rng)).collect()
}

fn covariance(inputs: &[SparseVec], dim: usize, lambda: f64, mode: CovMode) -> Result<CovarianceAccumulator> {
    let mut cov = CovarianceAccumulator::new(dim, lambda, mode)?;
    for x in inputs {
        cov.update_sparse(x)?;
    }
    Ok(cov)
}

fn weighted_sum(inputs: &[SparseVec], weights: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (x, w) in inputs.iter().zip(weights) {
        x.axpy_into(*w, &mut out);
    }
    out
}

/// Ridge system `Λ = λI + Σ φφᵀ`, `b = Σ φ y` of one step, from which
/// perturbed solutions are drawn.
pub struct PerturbedRidge {
    cov: CovarianceAccumulator,
    inputs: Vec<SparseVec>,
    base: Vec<f64>,
    lambda: f64,
}

impl PerturbedRidge {
    pub fn new(inputs: &[SparseVec], targets: &[f64], lambda: f64) -> Result<Self> {
        let dim = inputs.first().map(|x| x.dim).ok_or_else(|| ViperError::config("no records"))?;
        if targets.len() != inputs.len() {
            return Err(ViperError::domain("one target per record is required"));
        }
        Ok(PerturbedRidge {
            cov: covariance(inputs, dim, lambda, CovMode::Full)?,
            inputs: inputs.to_vec(),
            base: weighted_sum(inputs, targets, dim),
            lambda,
        })
    }

    pub fn covariance(&self) -> &CovarianceAccumulator {
        &self.cov
    }

    /// Unperturbed solution `θ̂ = Λ⁻¹ Σ φ y`.
    pub fn mean(&self) -> Result<Vec<f64>> {
        self.cov.solve(&self.base)
    }

    /// `θ̃ = Λ⁻¹[Σ φ_k (y_k + ξ_k) − λζ]` for given noise.
    pub fn solve_with(&self, xi: &[f64], zeta: &[f64]) -> Result<Vec<f64>> {
        if xi.len() != self.inputs.len() || zeta.len() != self.base.len() {
            return Err(ViperError::domain("perturbed ridge: noise shapes do not match the records"));
        }
        let mut rhs = self.base.clone();
        for (x, e) in self.inputs.iter().zip(xi) {
            x.axpy_into(*e, &mut rhs);
        }
        rhs.iter_mut().zip(zeta).for_each(|(r, z)| *r -= self.lambda * z);
        self.cov.solve(&rhs)
    }

    /// Draw `ξ ~ N(0, σ²)` per record then `ζ ~ N(0, σ² I)` and solve.
    pub fn draw<R: Rng + ?Sized>(&self, sigma: f64, zero_zeta: bool, rng: &mut R) -> Result<Vec<f64>> {
        let mut rhs = self.base.clone();
        if sigma > 0.0 {
            for x in &self.inputs {
                x.axpy_into(sigma * rng::standard_normal(rng), &mut rhs);
            }
            if !zero_zeta {
                for r in rhs.iter_mut() {
                    *r -= self.lambda * sigma * rng::standard_normal(rng);
                }
            }
        }
        self.cov.solve(&rhs)
    }
}

/// Perturbed ridge solution `θ̃ = Λ⁻¹[Σ φ_k (y_k + ξ_k) − λζ]` with
/// `ξ ~ N(0, σ²)`, `ζ ~ N(0, σ² I)`.
pub fn lin_viper_solve<R: Rng + ?Sized>(
    inputs: &[SparseVec],
    targets: &[f64],
    lambda: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<LinearParams> {
    let theta = PerturbedRidge::new(inputs, targets, lambda)?.draw(sigma, false, rng)?;
    Ok(LinearParams { theta })
}

/// `θ̃` for explicitly given noise vectors.
pub fn perturbed_ridge(inputs: &[SparseVec], targets: &[f64], lambda: f64, xi: &[f64], zeta: &[f64]) -> Result<LinearParams> {
    let theta = PerturbedRidge::new(inputs, targets, lambda)?.solve_with(xi, zeta)?;
    Ok(LinearParams { theta })
}

fn member_shuffle_seed(seed: u64, h: usize, i: usize) -> u64 {
    use rand::RngCore;
    rng::substream(seed, Purpose::Misc, h as u64, i as u64).next_u64()
}

fn step_seed(seed: u64, h: usize) -> u64 {
    use rand::RngCore;
    rng::substream(seed, Purpose::Init, h as u64, 1).next_u64()
}

/// Model and initial parameters for a family; `h` selects the per-step
/// initialization when `reinit` is set.
fn init_model(family: &Family, dim: usize, seed: u64, reinit: bool, h: usize) -> Result<(Model, Vec<f64>)> {
    let s = if reinit { step_seed(seed, h) } else { seed };
    Ok(match family {
        Family::Linear => (Model::Linear(LinearModel { dim }), vec![0.0; dim]),
        Family::Neural { width } => {
            let p = symmetric_init(*width, dim, s)?;
            (Model::TwoLayer(p.net), p.init)
        }
        Family::Deep { width, .. } => {
            let net = DeepNet { input_dim: dim, width: *width };
            let w0 = net.init(s);
            (Model::Deep(net), w0)
        }
    })
}

/// Value iteration with perturbed rewards.
///
/// Backward over `h = H..1`: each of the `M` members regresses on targets
/// perturbed by fresh `ξ` with a regularizer anchor shifted by `ζ`, starting
/// from `W0`; the step value is the truncated ensemble minimum and the
/// policy is greedy in it. Members draw from substream `(h, i)` of the seed
/// and run in parallel.
pub fn viper_fit(dataset: &OfflineDataset, features: &Features, cfg: &ViperConfig) -> Result<Policy> {
    let horizon = dataset.horizon;
    cfg.validate(horizon)?;
    let split_copy;
    let data = if cfg.split != dataset.split_enabled() {
        split_copy = dataset.clone().with_split(cfg.split)?;
        &split_copy
    } else {
        dataset
    };
    let dim = features.dim();
    let (model, shared_w0) = init_model(&cfg.family, dim, cfg.seed, false, 0)?;
    let mut steps: Vec<StepValue> = Vec::with_capacity(horizon);
    for h in (1..=horizon).rev() {
        let sd = step_data(data, h, features, &model, steps.last())?;
        let sigma = cfg.sigma_at(h);
        let p = model.param_dim();
        let members: Vec<Vec<f64>> = match &cfg.family {
            Family::Linear => {
                let ridge = PerturbedRidge::new(&sd.inputs, &sd.targets, cfg.lambda)?;
                (0..cfg.members)
                    .into_par_iter()
                    .map(|i| {
                        let mut r = rng::substream(cfg.seed, Purpose::Member, h as u64, i as u64);
                        ridge.draw(sigma, cfg.zero_zeta, &mut r)
                    })
                    .collect::<Result<_>>()?
            }
            family => {
                let w0 = if cfg.reinit_per_step {
                    init_model(family, dim, cfg.seed, true, h)?.1
                } else {
                    shared_w0.clone()
                };
                (0..cfg.members)
                    .into_par_iter()
                    .map(|i| {
                        let mut r = rng::substream(cfg.seed, Purpose::Member, h as u64, i as u64);
                        let y = perturb_targets(&sd.targets, sigma, &mut r);
                        let zeta = if cfg.zero_zeta { vec![0.0; p] } else { rng::normal_vec(&mut r, p, sigma) };
                        let ctx = format!("step {h}, member {i}");
                        match family {
                            Family::Deep { adam, .. } => {
                                let cfg_adam = AdamConfig { lambda: cfg.lambda, ..*adam };
                                train_adam(&model, &cfg_adam, &sd.inputs, &y, &zeta, &w0, member_shuffle_seed(cfg.seed, h, i))
                            }
                            _ => gradient_descent(&model, &cfg.gd(), &sd.inputs, &y, &zeta, &w0).map(|o| o.params),
                        }
                        .map_err(|e| e.with_context(&ctx))
                    })
                    .collect::<Result<_>>()?
            }
        };
        let cap = (horizon - h + 1) as f64 * (1.0 + cfg.psi);
        steps.push(StepValue::Ensemble { members, cap });
    }
    steps.reverse();
    Ok(Policy { algo: algo_name("viper", &cfg.family), model, features: features.clone(), steps })
}

fn algo_name(base: &str, family: &Family) -> String {
    match family {
        Family::Linear => format!("lin-{base}"),
        Family::Neural { .. } => format!("neural-{base}"),
        Family::Deep { .. } => format!("deep-{base}"),
    }
}

fn ridge_steps(dataset: &OfflineDataset, features: &Features, lambda: f64, beta: Option<f64>) -> Result<Policy> {
    if !(lambda > 0.0) {
        return Err(ViperError::config("lambda must be > 0"));
    }
    if let Some(b) = beta {
        if !(b >= 0.0) {
            return Err(ViperError::config("beta must be >= 0"));
        }
    }
    let horizon = dataset.horizon;
    let dim = features.dim();
    let model = Model::Linear(LinearModel { dim });
    let mut steps: Vec<StepValue> = Vec::with_capacity(horizon);
    for h in (1..=horizon).rev() {
        let sd = step_data(dataset, h, features, &model, steps.last())?;
        let ridge = PerturbedRidge::new(&sd.inputs, &sd.targets, lambda)?;
        let theta = ridge.mean()?;
        let cov = ridge.cov;
        let cap = (horizon - h + 1) as f64;
        steps.push(match beta {
            Some(beta) => StepValue::Lcb { bonus_params: theta.clone(), params: theta, cov, beta, cap },
            None => StepValue::Point { params: theta, cap },
        });
    }
    steps.reverse();
    let algo = if beta.is_some() { "linlcb" } else { "lingreedy" };
    Ok(Policy { algo: algo.into(), model, features: features.clone(), steps })
}

/// Ridge fit per step with bonus `β |φ|_{Λ⁻¹}`, capped at `H − h + 1`.
pub fn linlcb_fit(dataset: &OfflineDataset, features: &Features, beta: f64, lambda: f64) -> Result<Policy> {
    ridge_steps(dataset, features, lambda, Some(beta))
}

pub fn lingreedy_fit(dataset: &OfflineDataset, features: &Features, lambda: f64) -> Result<Policy> {
    ridge_steps(dataset, features, lambda, None)
}

/// Where NeuraLCB takes the gradients that define `Λ` and the bonus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BonusAt {
    Trained,
    Init,
}

fn neural_steps(
    dataset: &OfflineDataset,
    features: &Features,
    net: &NetConfig,
    lcb: Option<(f64, CovMode, BonusAt)>,
) -> Result<Policy> {
    net.gd.validate()?;
    let horizon = dataset.horizon;
    let dim = features.dim();
    let family = Family::Neural { width: net.width };
    let (model, shared_w0) = init_model(&family, dim, net.seed, false, 0)?;
    let p = model.param_dim();
    let zeta = vec![0.0; p];
    let mut steps: Vec<StepValue> = Vec::with_capacity(horizon);
    for h in (1..=horizon).rev() {
        let sd = step_data(dataset, h, features, &model, steps.last())?;
        let w0 = if net.reinit_per_step { init_model(&family, dim, net.seed, true, h)?.1 } else { shared_w0.clone() };
        let w = gradient_descent(&model, &net.gd, &sd.inputs, &sd.targets, &zeta, &w0)
            .map_err(|e| e.with_context(&format!("step {h}")))?
            .params;
        let cap = (horizon - h + 1) as f64;
        steps.push(match lcb {
            None => StepValue::Point { params: w, cap },
            Some((beta, mode, at)) => {
                if !(beta >= 0.0) {
                    return Err(ViperError::config("beta must be >= 0"));
                }
                let bonus_params = if at == BonusAt::Trained { w.clone() } else { w0 };
                let mut cov = CovarianceAccumulator::new(p, net.gd.lambda, mode)?;
                for x in &sd.inputs {
                    cov.update_sparse(&model.grad_sparse(&bonus_params, x))?;
                }
                StepValue::Lcb { params: w, bonus_params, cov, beta, cap }
            }
        });
    }
    steps.reverse();
    let algo = match lcb {
        None => "neuralgreedy".to_string(),
        Some((_, CovMode::Full, _)) => "neuralcb".to_string(),
        Some((_, CovMode::Diagonal, _)) => "neuralcb-diag".to_string(),
    };
    Ok(Policy { algo, model, features: features.clone(), steps })
}

/// Non-perturbed GD fit plus the bonus `β |g(x; W)|_{Λ⁻¹}` with
/// `Λ = λI + Σ g gᵀ` (full) or its diagonal.
pub fn neuralcb_fit(
    dataset: &OfflineDataset,
    features: &Features,
    net: &NetConfig,
    beta: f64,
    mode: CovMode,
    bonus_at: BonusAt,
) -> Result<Policy> {
    neural_steps(dataset, features, net, Some((beta, mode, bonus_at)))
}

pub fn neuralgreedy_fit(dataset: &OfflineDataset, features: &Features, net: &NetConfig) -> Result<Policy> {
    neural_steps(dataset, features, net, None)
}
