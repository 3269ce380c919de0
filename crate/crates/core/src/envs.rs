//! Environments: the hard linear MDP instance and the synthetic / MNIST
//! contextual bandit tasks.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ViperError};
use crate::ingest::ImageStore;
use crate::kvtext::{fmt_reals, KvDoc};
use crate::linalg::{dot, norm};
use crate::rng::{self, Purpose};

pub const MDP_STATES: usize = 2;
pub const MDP_ACTIONS: usize = 100;
pub const MDP_FEAT_DIM: usize = 10;
const CODE_BITS: usize = 8;

/// A state as seen by learners: a tabular id, a context vector, or an
/// index into an image store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum State {
    Discrete(usize),
    Vector(Vec<f64>),
    Image(usize),
}

/// The two-state, 100-action linear MDP with XOR transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMdpSpec {
    pub horizon: usize,
    pub seed: u64,
    /// `alpha_h` for `h = 1..=H`, stored at index `h - 1`.
    pub alpha_bits: Vec<u8>,
    /// Reward level `r` in `theta_h = [0, .., 0, r, 1 - r]`.
    pub reward_level: f64,
    pub behavior_p: f64,
    /// Std of Gaussian noise added to observed rewards (0 = mean rewards).
    pub reward_noise: f64,
    action_codes: Vec<[f64; CODE_BITS]>,
}

/// `u_a`: bit `b` of `a` mapped to `+1` if set, `-1` otherwise.
fn action_code(a: usize) -> [f64; CODE_BITS] {
    let mut u = [0.0; CODE_BITS];
    for (b, slot) in u.iter_mut().enumerate() {
        *slot = if (a >> b) & 1 == 1 { 1.0 } else { -1.0 };
    }
    u
}

pub fn make_hard_linear_mdp(horizon: usize, seed: u64) -> Result<LinearMdpSpec> {
    if horizon == 0 {
        return Err(ViperError::config("horizon must be at least 1"));
    }
    let mut rng = rng::substream(seed, Purpose::Env, 0, 0);
    let alpha_bits = (0..horizon).map(|_| rng.random_range(0..2u8)).collect();
    Ok(LinearMdpSpec {
        horizon,
        seed,
        alpha_bits,
        reward_level: 0.99,
        behavior_p: 0.6,
        reward_noise: 0.0,
        action_codes: (0..MDP_ACTIONS).map(action_code).collect(),
    })
}

impl LinearMdpSpec {
    pub fn with_reward_noise(mut self, std: f64) -> Self {
        self.reward_noise = std;
        self
    }

    pub fn n_states(&self) -> usize {
        MDP_STATES
    }

    pub fn n_actions(&self) -> usize {
        MDP_ACTIONS
    }

    pub fn feat_dim(&self) -> usize {
        MDP_FEAT_DIM
    }

    pub fn action_code(&self, a: usize) -> Result<&[f64; CODE_BITS]> {
        self.action_codes
            .get(a)
            .ok_or_else(|| ViperError::domain(format!("action {a} out of range")))
    }

    /// `theta_h`; identical for every step.
    pub fn theta(&self) -> [f64; MDP_FEAT_DIM] {
        let mut t = [0.0; MDP_FEAT_DIM];
        t[8] = self.reward_level;
        t[9] = 1.0 - self.reward_level;
        t
    }

    fn check(&self, h: Option<usize>, s: usize, a: usize) -> Result<()> {
        if s >= MDP_STATES {
            return Err(ViperError::domain(format!("state {s} out of range")));
        }
        if a >= MDP_ACTIONS {
            return Err(ViperError::domain(format!("action {a} out of range")));
        }
        if let Some(h) = h {
            if h == 0 || h > self.horizon {
                return Err(ViperError::domain(format!("step {h} outside 1..={}", self.horizon)));
            }
        }
        Ok(())
    }

    fn delta(s: usize, a: usize) -> f64 {
        if s == 0 && a == 0 {
            1.0
        } else {
            0.0
        }
    }

    pub fn feature_map(&self, s: usize, a: usize) -> Result<[f64; MDP_FEAT_DIM]> {
        self.check(None, s, a)?;
        let mut phi = [0.0; MDP_FEAT_DIM];
        phi[..CODE_BITS].copy_from_slice(&self.action_codes[a]);
        let d = Self::delta(s, a);
        phi[8] = d;
        phi[9] = 1.0 - d;
        Ok(phi)
    }

    /// `nu_h(s') = [0, .., 0, (1 - s') xor alpha_h, s' xor alpha_h]`.
    fn nu(&self, h: usize, s_next: usize) -> [f64; MDP_FEAT_DIM] {
        let alpha = self.alpha_bits[h - 1] as usize;
        let mut nu = [0.0; MDP_FEAT_DIM];
        nu[8] = ((1 - s_next) ^ alpha) as f64;
        nu[9] = (s_next ^ alpha) as f64;
        nu
    }

    /// `P_h(s' | s, a) = <phi(s, a), nu_h(s')>`, `h` is 1-based.
    pub fn transition_prob(&self, h: usize, s: usize, a: usize, s_next: usize) -> Result<f64> {
        self.check(Some(h), s, a)?;
        if s_next >= MDP_STATES {
            return Err(ViperError::domain(format!("next state {s_next} out of range")));
        }
        Ok(dot(&self.feature_map(s, a)?, &self.nu(h, s_next)))
    }

    /// `r_h(s, a) = <phi(s, a), theta_h>`.
    pub fn mean_reward(&self, h: usize, s: usize, a: usize) -> Result<f64> {
        self.check(Some(h), s, a)?;
        Ok(dot(&self.feature_map(s, a)?, &self.theta()))
    }

    pub fn sample_reward<R: Rng + ?Sized>(&self, h: usize, s: usize, a: usize, rng: &mut R) -> Result<f64> {
        let mean = self.mean_reward(h, s, a)?;
        if self.reward_noise > 0.0 {
            Ok(mean + self.reward_noise * rng::standard_normal(rng))
        } else {
            Ok(mean)
        }
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, h: usize, s: usize, a: usize, rng: &mut R) -> Result<usize> {
        let p0 = self.transition_prob(h, s, a, 0)?;
        Ok(if rng.random::<f64>() < p0 { 0 } else { 1 })
    }

    /// Behavior policy `mu_h(. | s)`; identical for every step.
    pub fn behavior_probs(&self, s: usize) -> Result<Vec<f64>> {
        self.check(None, s, 0)?;
        let p = self.behavior_p;
        let mut probs = vec![0.0; MDP_ACTIONS];
        probs[0] = p;
        if s == 0 {
            probs[1] = 1.0 - p;
        } else {
            let rest = (1.0 - p) / (MDP_ACTIONS - 1) as f64;
            probs[1..].iter_mut().for_each(|q| *q = rest);
        }
        Ok(probs)
    }

    pub fn sample_behavior<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> Result<usize> {
        self.check(None, s, 0)?;
        if rng.random::<f64>() < self.behavior_p {
            return Ok(0);
        }
        Ok(if s == 0 { 1 } else { rng.random_range(1..MDP_ACTIONS) })
    }

    pub fn to_kv(&self) -> String {
        let mut doc = KvDoc::new();
        doc.set("kind", "hard-linear-mdp");
        doc.set("horizon", self.horizon);
        doc.set("seed", self.seed);
        doc.set("n_states", MDP_STATES);
        doc.set("n_actions", MDP_ACTIONS);
        doc.set("feat_dim", MDP_FEAT_DIM);
        doc.set_real("reward_level", self.reward_level);
        doc.set_real("behavior_p", self.behavior_p);
        doc.set_real("reward_noise", self.reward_noise);
        let bits: String = self.alpha_bits.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect();
        doc.set("alpha_bits", bits);
        doc.to_text("viper environment v1")
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        if doc.require("kind")? != "hard-linear-mdp" {
            return Err(ViperError::parse("not a hard-linear-mdp spec"));
        }
        let horizon: usize = doc.parse_value("horizon")?;
        let bits = doc.require("alpha_bits")?;
        let alpha_bits = bits
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(ViperError::parse(format!("bad alpha bit `{c}`"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        if alpha_bits.len() != horizon {
            return Err(ViperError::parse("alpha_bits length differs from horizon"));
        }
        for (key, expect) in [("n_states", MDP_STATES), ("n_actions", MDP_ACTIONS), ("feat_dim", MDP_FEAT_DIM)] {
            if doc.parse_value::<usize>(key)? != expect {
                return Err(ViperError::parse(format!("{key} must be {expect}")));
            }
        }
        Ok(LinearMdpSpec {
            horizon,
            seed: doc.parse_value("seed")?,
            alpha_bits,
            reward_level: doc.parse_value("reward_level")?,
            behavior_p: doc.parse_value("behavior_p")?,
            reward_noise: doc.parse_value("reward_noise")?,
            action_codes: (0..MDP_ACTIONS).map(action_code).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BanditKind {
    Cos,
    Exp,
    Mnist,
}

impl BanditKind {
    pub fn name(self) -> &'static str {
        match self {
            BanditKind::Cos => "cos",
            BanditKind::Exp => "exp",
            BanditKind::Mnist => "mnist",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "cos" => Ok(BanditKind::Cos),
            "exp" => Ok(BanditKind::Exp),
            "mnist" => Ok(BanditKind::Mnist),
            other => Err(ViperError::config(format!("unknown bandit kind `{other}`"))),
        }
    }
}

/// Contextual bandit task (an MDP with `H = 1`).
#[derive(Debug, Clone)]
pub struct BanditTask {
    pub kind: BanditKind,
    pub dim: usize,
    pub n_actions: usize,
    /// Unit-norm `theta_a` per action (synthetic kinds only).
    pub action_params: Vec<Vec<f64>>,
    pub images: Option<Arc<ImageStore>>,
    /// Probability that the behavior policy logs a non-optimal action.
    pub epsilon: f64,
    /// Std of Gaussian observation noise on rewards.
    pub obs_noise: f64,
    pub seed: u64,
}

impl BanditTask {
    /// Synthetic task with `theta_a` uniform on the unit sphere.
    pub fn synthetic(kind: BanditKind, dim: usize, n_actions: usize, seed: u64) -> Result<Self> {
        if kind == BanditKind::Mnist {
            return Err(ViperError::config("use BanditTask::mnist for the mnist kind"));
        }
        if dim == 0 || n_actions < 2 {
            return Err(ViperError::config("bandit needs dim >= 1 and at least 2 actions"));
        }
        let mut rng = rng::substream(seed, Purpose::Env, 1, 0);
        let action_params = (0..n_actions).map(|_| rng::unit_sphere(&mut rng, dim)).collect();
        Ok(BanditTask {
            kind,
            dim,
            n_actions,
            action_params,
            images: None,
            epsilon: 0.5,
            obs_noise: 0.0,
            seed,
        })
    }

    pub fn mnist(store: Arc<ImageStore>) -> Result<Self> {
        if store.is_empty() {
            return Err(ViperError::config("mnist task needs a nonempty image store"));
        }
        Ok(BanditTask {
            kind: BanditKind::Mnist,
            dim: store.pixel_count(),
            n_actions: 10,
            action_params: Vec::new(),
            images: Some(store),
            epsilon: 0.5,
            obs_noise: 0.0,
            seed: 0,
        })
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_obs_noise(mut self, std: f64) -> Self {
        self.obs_noise = std;
        self
    }

    /// Context vector of a state.
    pub fn context<'a>(&'a self, state: &'a State) -> Result<&'a [f64]> {
        match state {
            State::Vector(v) if v.len() == self.dim => Ok(v),
            State::Vector(v) => Err(ViperError::domain(format!(
                "state has dimension {}, task expects {}",
                v.len(),
                self.dim
            ))),
            State::Image(i) => {
                let store = self
                    .images
                    .as_ref()
                    .ok_or_else(|| ViperError::domain("image state on a task without images"))?;
                store.image(*i)
            }
            State::Discrete(_) => Err(ViperError::domain("bandit tasks have vector states")),
        }
    }

    pub fn mean_reward(&self, state: &State, a: usize) -> Result<f64> {
        if a >= self.n_actions {
            return Err(ViperError::domain(format!("action {a} out of range")));
        }
        match self.kind {
            BanditKind::Cos => Ok((3.0 * dot(self.context(state)?, &self.action_params[a])).cos()),
            BanditKind::Exp => {
                let u = dot(self.context(state)?, &self.action_params[a]);
                Ok((-10.0 * u * u).exp())
            }
            BanditKind::Mnist => {
                let State::Image(i) = state else {
                    return Err(ViperError::domain("mnist rewards need an image-index state"));
                };
                let store = self.images.as_ref().expect("mnist task has a store");
                Ok(if store.label(*i)? as usize == a { 1.0 } else { 0.0 })
            }
        }
    }

    /// Observed reward: the mean plus optional Gaussian noise.
    pub fn bandit_reward<R: Rng + ?Sized>(&self, state: &State, a: usize, rng: &mut R) -> Result<f64> {
        let mean = self.mean_reward(state, a)?;
        if self.obs_noise > 0.0 {
            Ok(mean + self.obs_noise * rng::standard_normal(rng))
        } else {
            Ok(mean)
        }
    }

    pub fn mean_rewards(&self, state: &State) -> Result<Vec<f64>> {
        (0..self.n_actions).map(|a| self.mean_reward(state, a)).collect()
    }

    /// Argmax of the mean reward, ties to the lowest action id.
    pub fn optimal_action(&self, state: &State) -> Result<usize> {
        Ok(argmax(&self.mean_rewards(state)?))
    }

    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        match self.kind {
            BanditKind::Mnist => {
                let n = self.images.as_ref().map_or(1, |s| s.len());
                State::Image(rng.random_range(0..n))
            }
            _ => State::Vector(rng::unit_sphere(rng, self.dim)),
        }
    }

    /// Key-value serialization. MNIST tasks record only the image digest;
    /// the store must be supplied again on load.
    pub fn to_kv(&self) -> String {
        let mut doc = KvDoc::new();
        doc.set("kind", format!("bandit-{}", self.kind.name()));
        doc.set("dim", self.dim);
        doc.set("n_actions", self.n_actions);
        doc.set("seed", self.seed);
        doc.set_real("epsilon", self.epsilon);
        doc.set_real("obs_noise", self.obs_noise);
        match &self.images {
            Some(store) => doc.set("image_digest", &store.source_digest),
            None => {
                for (a, theta) in self.action_params.iter().enumerate() {
                    doc.set(&format!("theta_{a}"), fmt_reals(theta, ","));
                }
            }
        }
        doc.to_text("viper environment v1")
    }

    pub fn from_kv(text: &str, images: Option<Arc<ImageStore>>) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        let kind = doc
            .require("kind")?
            .strip_prefix("bandit-")
            .ok_or_else(|| ViperError::parse("not a bandit spec"))
            .and_then(|k| BanditKind::from_name(k).map_err(|e| ViperError::parse(e.to_string())))?;
        let n_actions: usize = doc.parse_value("n_actions")?;
        let mut task = if kind == BanditKind::Mnist {
            let store = images.ok_or_else(|| ViperError::parse("mnist spec needs an image store"))?;
            if store.source_digest != doc.require("image_digest")? {
                return Err(ViperError::parse("image store digest does not match spec"));
            }
            BanditTask::mnist(store)?
        } else {
            let dim: usize = doc.parse_value("dim")?;
            let action_params = (0..n_actions)
                .map(|a| {
                    let v: Vec<f64> = doc.parse_list(&format!("theta_{a}"))?;
                    if v.len() != dim {
                        return Err(ViperError::parse(format!("theta_{a} has wrong length")));
                    }
                    Ok(v)
                })
                .collect::<Result<Vec<_>>>()?;
            BanditTask {
                kind,
                dim,
                n_actions,
                action_params,
                images: None,
                epsilon: 0.5,
                obs_noise: 0.0,
                seed: 0,
            }
        };
        task.seed = doc.parse_value("seed")?;
        task.epsilon = doc.parse_value("epsilon")?;
        task.obs_noise = doc.parse_value("obs_noise")?;
        Ok(task)
    }
}

/// Index of the maximum; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Block embedding of a context for action `a` among `n_actions`, scaled to
/// unit norm (a zero context stays zero).
pub fn action_embedding(s: &[f64], a: usize, n_actions: usize) -> Result<Vec<f64>> {
    if a >= n_actions {
        return Err(ViperError::domain(format!("action {a} out of range for {n_actions} actions")));
    }
    let d = s.len();
    let n = norm(s);
    let scale = if n > 0.0 { 1.0 / n } else { 0.0 };
    let mut out = vec![0.0; d * n_actions];
    for (dst, &x) in out[a * d..(a + 1) * d].iter_mut().zip(s) {
        *dst = x * scale;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> LinearMdpSpec {
        make_hard_linear_mdp(20, 7).unwrap()
    }

    #[test]
    fn hard_mdp_constants() {
        let s = spec();
        assert_eq!((s.feat_dim(), s.n_states(), s.n_actions()), (10, 2, 100));
        assert_eq!(s.reward_level, 0.99);
        assert_eq!(s.behavior_p, 0.6);
        assert_eq!(s.alpha_bits.len(), 20);
        assert_eq!(make_hard_linear_mdp(1, 3).unwrap().alpha_bits.len(), 1);
        assert!(make_hard_linear_mdp(0, 3).is_err());
    }

    #[test]
    fn construction_is_deterministic() {
        assert_eq!(spec(), spec());
        assert_eq!(spec().to_kv(), spec().to_kv());
    }

    #[test]
    fn action_codes_are_distinct_sign_vectors() {
        let s = spec();
        let codes: Vec<_> = (0..100).map(|a| *s.action_code(a).unwrap()).collect();
        for (i, u) in codes.iter().enumerate() {
            assert!(u.iter().all(|&x| x == 1.0 || x == -1.0));
            for v in &codes[i + 1..] {
                assert_ne!(u, v);
            }
        }
        assert_eq!(codes[0], [-1.0; 8]);
    }

    #[test]
    fn feature_map_examples() {
        let s = spec();
        let f00 = s.feature_map(0, 0).unwrap();
        assert_eq!(&f00[8..], &[1.0, 0.0]);
        let f10 = s.feature_map(1, 0).unwrap();
        assert_eq!(&f10[8..], &[0.0, 1.0]);
        let f05 = s.feature_map(0, 5).unwrap();
        assert_eq!(&f05[..8], s.action_code(5).unwrap());
        assert!(s.feature_map(2, 0).is_err());
        assert!(s.feature_map(0, 100).is_err());
    }

    #[test]
    fn transition_examples() {
        let mut s = spec();
        s.alpha_bits[0] = 1;
        assert_eq!(s.transition_prob(1, 0, 0, 0).unwrap(), 0.0);
        s.alpha_bits[0] = 0;
        assert_eq!(s.transition_prob(1, 1, 3, 1).unwrap(), 1.0);
        assert!(s.transition_prob(0, 0, 0, 0).is_err());
        assert!(s.transition_prob(21, 0, 0, 0).is_err());
        assert!(s.transition_prob(1, 0, 0, 2).is_err());
    }

    #[test]
    fn flipping_alpha_swaps_transitions() {
        let s = spec();
        let mut t = s.clone();
        for h in 1..=20 {
            t.alpha_bits[h - 1] ^= 1;
            for st in 0..2 {
                for a in [0, 1, 57] {
                    let p = s.transition_prob(h, st, a, 0).unwrap();
                    let q = t.transition_prob(h, st, a, 1).unwrap();
                    assert_eq!(p, q);
                }
            }
        }
    }

    #[test]
    fn reward_examples() {
        let s = spec();
        assert!((s.mean_reward(1, 0, 0).unwrap() - 0.99).abs() < 1e-15);
        assert!((s.mean_reward(1, 1, 0).unwrap() - 0.01).abs() < 1e-15);
        for h in 1..=20 {
            assert_eq!(s.mean_reward(h, 0, 0).unwrap(), s.mean_reward(1, 0, 0).unwrap());
        }
    }

    #[test]
    fn mdp_spec_round_trips() {
        let s = spec().with_reward_noise(0.3);
        assert_eq!(LinearMdpSpec::from_kv(&s.to_kv()).unwrap(), s);
    }

    #[test]
    fn bandit_reward_examples() {
        let task = BanditTask::synthetic(BanditKind::Cos, 4, 3, 1).unwrap();
        let theta = task.action_params[0].clone();
        let mut rng = rng::substream(0, Purpose::Misc, 0, 0);
        let r = task.bandit_reward(&State::Vector(theta.clone()), 0, &mut rng).unwrap();
        assert!((r - (-0.989_992_496_600_445_4)).abs() < 1e-12);

        // a unit vector orthogonal to theta_0
        let mut perp = vec![theta[1], -theta[0], 0.0, 0.0];
        let n = norm(&perp);
        perp.iter_mut().for_each(|x| *x /= n);
        let st = State::Vector(perp);
        assert!((task.mean_reward(&st, 0).unwrap() - 1.0).abs() < 1e-12);
        let exp_task = BanditTask { kind: BanditKind::Exp, ..task.clone() };
        assert!((exp_task.mean_reward(&st, 0).unwrap() - 1.0).abs() < 1e-12);
        assert!(task.mean_reward(&State::Vector(vec![1.0; 3]), 0).is_err());
    }

    #[test]
    fn bandit_params_are_unit_and_round_trip() {
        let task = BanditTask::synthetic(BanditKind::Exp, 16, 10, 5).unwrap().with_obs_noise(0.1);
        for t in &task.action_params {
            assert!((norm(t) - 1.0).abs() < 1e-9);
        }
        let back = BanditTask::from_kv(&task.to_kv(), None).unwrap();
        assert_eq!(back.action_params, task.action_params);
        assert_eq!(back.obs_noise, 0.1);
        assert_eq!(back.kind, BanditKind::Exp);
    }

    #[test]
    fn embedding_examples() {
        let s = [3.0, 4.0];
        let e = action_embedding(&s, 0, 2).unwrap();
        let want = [0.6, 0.8, 0.0, 0.0];
        assert!(e.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15), "{e:?}");
        assert!(action_embedding(&s, 2, 2).is_err());
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }

    proptest! {
        #[test]
        fn transitions_are_stochastic(h in 1usize..=80, s in 0usize..2, a in 0usize..100, seed in 0u64..1000) {
            let spec = make_hard_linear_mdp(80, seed).unwrap();
            let total = spec.transition_prob(h, s, a, 0).unwrap() + spec.transition_prob(h, s, a, 1).unwrap();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            let r = spec.mean_reward(h, s, a).unwrap();
            prop_assert!((r - 0.99).abs() < 1e-12 || (r - 0.01).abs() < 1e-12);
        }

        #[test]
        fn embeddings_are_unit_and_orthogonal(
            v in proptest::collection::vec(-1.0f64..1.0, 1..8),
            a in 0usize..5, b in 0usize..5,
        ) {
            prop_assume!(norm(&v) > 1e-6);
            let ea = action_embedding(&v, a, 5).unwrap();
            let eb = action_embedding(&v, b, 5).unwrap();
            prop_assert!((norm(&ea) - 1.0).abs() < 1e-12);
            if a != b {
                prop_assert_eq!(dot(&ea, &eb), 0.0);
            }
        }
    }
}
