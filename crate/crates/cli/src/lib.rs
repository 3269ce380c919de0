//! Experiment runner: config parsing, grid execution, CSV/manifest/SVG
//! artifacts and standalone pipeline stages.

pub mod config;
pub mod plot;
pub mod runner;
pub mod stages;
