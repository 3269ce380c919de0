use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::features::{FeatureSpec, Features};
use crate::envs::{argmax, State};
use crate::error::{Result, ViperError};
use crate::ingest::ImageStore;
use crate::models::{read_checkpoints, write_checkpoint, Model, Regressor};
use crate::uq::{CovSnapshot, CovarianceAccumulator};

/// Value function of one step.
#[derive(Debug, Clone)]
pub enum StepValue {
    /// `clamp(min_i f(x; W_i), 0, cap)`.
    Ensemble { members: Vec<Vec<f64>>, cap: f64 },
    /// `clamp(f(x; W), 0, cap)`.
    Point { params: Vec<f64>, cap: f64 },
    /// `clamp(f(x; W) - beta |g(x; W_b)|_{Λ⁻¹}, 0, cap)`; `bonus_params` is
    /// where the gradient is taken.
    Lcb {
        params: Vec<f64>,
        bonus_params: Vec<f64>,
        cov: CovarianceAccumulator,
        beta: f64,
        cap: f64,
    },
}

impl StepValue {
    pub fn cap(&self) -> f64 {
        match self {
            StepValue::Ensemble { cap, .. } | StepValue::Point { cap, .. } | StepValue::Lcb { cap, .. } => *cap,
        }
    }

    /// Unclamped estimate at one input.
    pub fn raw_value(&self, model: &Model, x: &crate::linalg::SparseVec) -> Result<f64> {
        Ok(match self {
            StepValue::Ensemble { members, .. } => {
                members.iter().map(|w| model.predict(w, x)).fold(f64::INFINITY, f64::min)
            }
            StepValue::Point { params, .. } => model.predict(params, x),
            StepValue::Lcb { params, bonus_params, cov, beta, .. } => {
                let f = model.predict(params, x);
                if *beta == 0.0 {
                    f
                } else {
                    f - beta * cov.quad_form_sparse(&model.grad_sparse(bonus_params, x))?
                }
            }
        })
    }

    pub fn value(&self, model: &Model, x: &crate::linalg::SparseVec) -> Result<f64> {
        Ok(self.raw_value(model, x)?.clamp(0.0, self.cap()))
    }

    pub fn q_values(&self, model: &Model, features: &Features, state: &State) -> Result<Vec<f64>> {
        (0..features.n_actions())
            .map(|a| self.value(model, &features.feature(state, a)?))
            .collect()
    }
}

/// Step-indexed greedy policy over a finite action set. `steps[h - 1]`
/// holds the value function of step `h`.
#[derive(Debug, Clone)]
pub struct Policy {
    pub algo: String,
    pub model: Model,
    pub features: Features,
    pub steps: Vec<StepValue>,
}

impl Policy {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    fn step(&self, h: usize) -> Result<&StepValue> {
        if h == 0 || h > self.steps.len() {
            return Err(ViperError::domain(format!("step {h} outside 1..={}", self.steps.len())));
        }
        Ok(&self.steps[h - 1])
    }

    pub fn q_values(&self, h: usize, state: &State) -> Result<Vec<f64>> {
        self.step(h)?.q_values(&self.model, &self.features, state)
    }

    /// Greedy action at step `h`; ties go to the lowest action id.
    pub fn act(&self, h: usize, state: &State) -> Result<usize> {
        Ok(argmax(&self.q_values(h, state)?))
    }

    /// `V_h(s) = Q_h(s, π_h(s))`; zero past the horizon.
    pub fn state_value(&self, h: usize, state: &State) -> Result<f64> {
        if h == self.steps.len() + 1 {
            return Ok(0.0);
        }
        let q = self.q_values(h, state)?;
        Ok(q[argmax(&q)])
    }

    pub fn to_json(&self) -> Result<String> {
        let (rows, cols) = self.model.param_shape();
        let pack = |ws: &[&[f64]]| -> Result<String> {
            let mut bytes = Vec::new();
            for w in ws {
                write_checkpoint(rows, cols, w, &mut bytes)?;
            }
            Ok(B64.encode(bytes))
        };
        let steps = self
            .steps
            .iter()
            .map(|s| {
                Ok(match s {
                    StepValue::Ensemble { members, cap } => StepFile::Ensemble {
                        cap: *cap,
                        params: pack(&members.iter().map(Vec::as_slice).collect::<Vec<_>>())?,
                    },
                    StepValue::Point { params, cap } => StepFile::Point { cap: *cap, params: pack(&[params])? },
                    StepValue::Lcb { params, bonus_params, cov, beta, cap } => StepFile::Lcb {
                        cap: *cap,
                        beta: *beta,
                        params: pack(&[params, bonus_params])?,
                        cov: cov.snapshot(),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let file = PolicyFile {
            format: FORMAT.to_string(),
            algo: self.algo.clone(),
            model: self.model.clone(),
            features: self.features.spec().clone(),
            steps,
        };
        serde_json::to_string(&file).map_err(|e| ViperError::parse(e.to_string()))
    }

    /// Inverse of [`Policy::to_json`]. Image-based features need the store.
    pub fn from_json(text: &str, images: Option<Arc<ImageStore>>) -> Result<Self> {
        let file: PolicyFile = serde_json::from_str(text).map_err(|e| ViperError::parse(e.to_string()))?;
        if file.format != FORMAT {
            return Err(ViperError::parse(format!("unsupported policy format '{}'", file.format)));
        }
        let p = file.model.param_dim();
        let unpack = |s: &str| -> Result<Vec<Vec<f64>>> {
            let bytes = B64.decode(s).map_err(|e| ViperError::parse(format!("bad base64 checkpoint: {e}")))?;
            let blocks = read_checkpoints(&bytes)?;
            blocks
                .into_iter()
                .map(|c| {
                    if c.data.len() != p {
                        return Err(ViperError::parse(format!("checkpoint holds {} values, model has {p}", c.data.len())));
                    }
                    Ok(c.data)
                })
                .collect()
        };
        let steps = file
            .steps
            .iter()
            .map(|s| {
                Ok(match s {
                    StepFile::Ensemble { cap, params } => StepValue::Ensemble { members: unpack(params)?, cap: *cap },
                    StepFile::Point { cap, params } => {
                        let mut w = unpack(params)?;
                        if w.len() != 1 {
                            return Err(ViperError::parse("point step must hold one checkpoint"));
                        }
                        StepValue::Point { params: w.remove(0), cap: *cap }
                    }
                    StepFile::Lcb { cap, beta, params, cov } => {
                        let mut w = unpack(params)?;
                        if w.len() != 2 {
                            return Err(ViperError::parse("lcb step must hold two checkpoints"));
                        }
                        let bonus_params = w.remove(1);
                        StepValue::Lcb {
                            params: w.remove(0),
                            bonus_params,
                            cov: CovarianceAccumulator::from_snapshot(cov)?,
                            beta: *beta,
                            cap: *cap,
                        }
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Policy { algo: file.algo, model: file.model, features: Features::from_spec(&file.features, images), steps })
    }
}

/// Policy-evaluation entry point: greedy action of a serialized policy.
pub fn greedy_action(policy_json: &str, images: Option<Arc<ImageStore>>, h: usize, state: &State) -> Result<usize> {
    Policy::from_json(policy_json, images)?.act(h, state)
}

const FORMAT: &str = "viper-policy/1";

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    format: String,
    algo: String,
    model: Model,
    features: FeatureSpec,
    steps: Vec<StepFile>,
}

/// Parameters are base64 of back-to-back binary checkpoint blocks.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum StepFile {
    Ensemble { cap: f64, params: String },
    Point { cap: f64, params: String },
    Lcb { cap: f64, beta: f64, params: String, cov: CovSnapshot },
}
