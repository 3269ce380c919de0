//! Offline reinforcement learning with perturbed-reward value iteration.
//!
//! The crate is organized bottom-up: environments and data
//! ([`envs`], [`ingest`], [`offline_data`]), function approximators
//! ([`models`]), uncertainty machinery ([`uq`]), the learners
//! ([`algorithms`]) and evaluation ([`eval`]).

pub mod error;
pub mod algorithms;
pub mod envs;
pub mod eval;
pub mod experiments;
pub mod ingest;
pub mod kvtext;
pub mod linalg;
pub mod models;
pub mod offline_data;
pub mod rng;
pub mod uq;

pub use error::{Result, ViperError};
