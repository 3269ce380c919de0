use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::envs::{make_hard_linear_mdp, LinearMdpSpec, State, MDP_ACTIONS, MDP_FEAT_DIM};
use crate::error::{Result, ViperError};
use crate::ingest::ImageStore;
use crate::linalg::{norm, SparseVec};

/// Serializable description of a feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureSpec {
    /// `φ(s, a)` of the hard linear MDP; `normalized` divides by its
    /// constant norm 3 so the input sits on the unit sphere.
    Mdp { normalized: bool },
    /// Unit-norm block embedding of a context vector (or image) per action.
    Embedding { dim: usize, n_actions: usize },
}

/// Maps `(state, action)` to a model input.
#[derive(Debug, Clone)]
pub struct Features {
    spec: FeatureSpec,
    mdp: Option<Arc<LinearMdpSpec>>,
    images: Option<Arc<ImageStore>>,
}

const MDP_FEATURE_NORM: f64 = 3.0;

impl Features {
    pub fn mdp(normalized: bool) -> Self {
        // φ does not depend on the transition bits, so any instance works.
        let spec = make_hard_linear_mdp(1, 0).expect("horizon 1 is valid");
        Features { spec: FeatureSpec::Mdp { normalized }, mdp: Some(Arc::new(spec)), images: None }
    }

    pub fn embedding(dim: usize, n_actions: usize, images: Option<Arc<ImageStore>>) -> Self {
        Features { spec: FeatureSpec::Embedding { dim, n_actions }, mdp: None, images }
    }

    pub fn from_spec(spec: &FeatureSpec, images: Option<Arc<ImageStore>>) -> Self {
        match *spec {
            FeatureSpec::Mdp { normalized } => Self::mdp(normalized),
            FeatureSpec::Embedding { dim, n_actions } => Self::embedding(dim, n_actions, images),
        }
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        match self.spec {
            FeatureSpec::Mdp { .. } => MDP_FEAT_DIM,
            FeatureSpec::Embedding { dim, n_actions } => dim * n_actions,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self.spec {
            FeatureSpec::Mdp { .. } => MDP_ACTIONS,
            FeatureSpec::Embedding { n_actions, .. } => n_actions,
        }
    }

    pub fn feature(&self, state: &State, a: usize) -> Result<SparseVec> {
        match (&self.spec, state) {
            (FeatureSpec::Mdp { normalized }, State::Discrete(s)) => {
                let mdp = self.mdp.as_ref().expect("mdp features carry a spec");
                let mut phi = mdp.feature_map(*s, a)?;
                if *normalized {
                    phi.iter_mut().for_each(|v| *v /= MDP_FEATURE_NORM);
                }
                Ok(SparseVec::from_dense(&phi))
            }
            (FeatureSpec::Embedding { dim, n_actions }, _) => {
                if a >= *n_actions {
                    return Err(ViperError::domain(format!("action {a} out of range for {n_actions} actions")));
                }
                let ctx = match state {
                    State::Vector(v) => v.as_slice(),
                    State::Image(i) => self
                        .images
                        .as_ref()
                        .ok_or_else(|| ViperError::domain("image state but no image store attached"))?
                        .image(*i)?,
                    State::Discrete(_) => return Err(ViperError::domain("embedding features need a context state")),
                };
                if ctx.len() != *dim {
                    return Err(ViperError::domain(format!("context has dimension {}, expected {dim}", ctx.len())));
                }
                let n = norm(ctx);
                let scale = if n > 0.0 { 1.0 / n } else { 0.0 };
                let mut idx = Vec::with_capacity(*dim);
                let mut val = Vec::with_capacity(*dim);
                for (j, &x) in ctx.iter().enumerate() {
                    if x != 0.0 {
                        idx.push((a * dim + j) as u32);
                        val.push(x * scale);
                    }
                }
                Ok(SparseVec { dim: dim * n_actions, idx, val })
            }
            (FeatureSpec::Mdp { .. }, _) => Err(ViperError::domain("mdp features need a discrete state")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::action_embedding;

    #[test]
    fn embedding_matches_env_helper() {
        let f = Features::embedding(3, 4, None);
        let s = vec![1.0, -2.0, 2.0];
        for a in 0..4 {
            let x = f.feature(&State::Vector(s.clone()), a).unwrap();
            assert_eq!(x.to_dense(), action_embedding(&s, a, 4).unwrap());
        }
        assert!(f.feature(&State::Vector(s), 4).is_err());
        assert!(f.feature(&State::Discrete(0), 0).is_err());
    }

    #[test]
    fn normalized_mdp_features_are_unit() {
        let f = Features::mdp(true);
        for (s, a) in [(0, 0), (1, 0), (0, 57), (1, 99)] {
            let x = f.feature(&State::Discrete(s), a).unwrap();
            assert!((x.norm_sq() - 1.0).abs() < 1e-12);
        }
        let raw = Features::mdp(false).feature(&State::Discrete(0), 0).unwrap().to_dense();
        assert_eq!(&raw[8..], &[1.0, 0.0]);
    }
}
