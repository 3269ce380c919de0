//! Offline learners. Every learner runs backward over the steps and returns
//! a step-indexed greedy [`Policy`].

mod features;
mod fit;
mod policy;

pub use features::{FeatureSpec, Features};
pub use fit::{
    lin_viper_solve, linlcb_fit, lingreedy_fit, neuralcb_fit, neuralgreedy_fit, perturb_targets, perturbed_ridge, step_data, viper_fit,
    BonusAt, Family, NetConfig, PerturbedRidge, StepData, ViperConfig,
};
pub use policy::{greedy_action, Policy, StepValue};
