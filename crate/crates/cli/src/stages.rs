//! Standalone pipeline stages over persisted artifacts in one directory:
//!
//! - `gen-data` writes `env.kv` and `data.txt`
//! - `fit` reads `data.txt`, writes `policy.json`
//! - `eval` reads `env.kv` and `policy.json`, writes `report.csv`
//! - `bench-timing` reads the same and writes `latency.csv` (same schema,
//!   wall-clock columns filled)
//!
//! Each stage selects its grid cell from the experiment config by index.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use viper_core::algorithms::Policy;
use viper_core::envs::{BanditTask, LinearMdpSpec};
use viper_core::eval::CSV_HEADER;
use viper_core::experiments::{bandit_features, fit as fit_policy, mdp_features};
use viper_core::ingest::ImageStore;
use viper_core::offline_data::OfflineDataset;

use crate::config::{ExperimentConfig, Kind};
use crate::runner::{self, write_atomic, Cell, Env};

pub const ENV_FILE: &str = "env.kv";
pub const DATA_FILE: &str = "data.txt";
pub const POLICY_FILE: &str = "policy.json";

fn pick(c: &ExperimentConfig, cell: usize, seed_offset: u64) -> Result<Cell> {
    if c.kind == Kind::LawTests {
        bail!("law-tests has no pipeline stages; use `run`");
    }
    let grid = runner::cells(c, seed_offset);
    let n = grid.len();
    grid.into_iter().nth(cell).with_context(|| format!("cell {cell} outside the grid of {n} cells"))
}

fn read(dir: &Path, name: &str, stage: &str, producer: &str) -> Result<String> {
    let p = dir.join(name);
    if !p.exists() {
        bail!("stage `{stage}` needs {} (run `{producer}` first)", p.display());
    }
    fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))
}

fn load_env(c: &ExperimentConfig, dir: &Path, stage: &str, images: &Option<Arc<ImageStore>>) -> Result<Env> {
    let text = read(dir, ENV_FILE, stage, "gen-data")?;
    Ok(if c.kind == Kind::LinearMdp {
        Env::Mdp(LinearMdpSpec::from_kv(&text)?)
    } else {
        Env::Bandit(BanditTask::from_kv(&text, images.clone())?)
    })
}

pub fn gen_data(c: &ExperimentConfig, cell: usize, seed_offset: u64, dir: &Path) -> Result<()> {
    let cell = pick(c, cell, seed_offset)?;
    let images = runner::load_images(c)?;
    let (env, data) = runner::setup(c, &cell, &images)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let env_text = match &env {
        Env::Mdp(spec) => spec.to_kv(),
        Env::Bandit(task) => task.to_kv(),
    };
    write_atomic(&dir.join(ENV_FILE), env_text.as_bytes())?;
    write_atomic(&dir.join(DATA_FILE), data.to_text().as_bytes())?;
    Ok(())
}

pub fn fit(c: &ExperimentConfig, cell: usize, seed_offset: u64, dir: &Path) -> Result<()> {
    let cell = pick(c, cell, seed_offset)?;
    let images = runner::load_images(c)?;
    let data = OfflineDataset::from_text(&read(dir, DATA_FILE, "fit", "gen-data")?)?;
    let features = match load_env(c, dir, "fit", &images)? {
        Env::Mdp(_) => mdp_features(&cell.algo),
        Env::Bandit(task) => bandit_features(&task),
    };
    let policy = fit_policy(&cell.algo, &cell.shared, &data, &features, cell.seed)?;
    write_atomic(&dir.join(POLICY_FILE), policy.to_json()?.as_bytes())?;
    Ok(())
}

fn report(c: &ExperimentConfig, cell: usize, seed_offset: u64, dir: &Path, stage: &str, timing: bool) -> Result<String> {
    let cell = pick(c, cell, seed_offset)?;
    let images = runner::load_images(c)?;
    let env = load_env(c, dir, stage, &images)?;
    let policy = Policy::from_json(&read(dir, POLICY_FILE, stage, "fit")?, images.clone())?;
    let mut cfg = c.clone();
    cfg.timing_columns = timing;
    let rep = runner::evaluate(&cfg, &cell, &env, &policy)?;
    Ok(format!("{CSV_HEADER}\n{}\n", rep.to_csv(timing)))
}

pub fn eval(c: &ExperimentConfig, cell: usize, seed_offset: u64, dir: &Path) -> Result<()> {
    let csv = report(c, cell, seed_offset, dir, "eval", c.timing_columns)?;
    write_atomic(&dir.join("report.csv"), csv.as_bytes())
}

pub fn bench_timing(c: &ExperimentConfig, cell: usize, seed_offset: u64, dir: &Path) -> Result<()> {
    let csv = report(c, cell, seed_offset, dir, "bench-timing", true)?;
    write_atomic(&dir.join("latency.csv"), csv.as_bytes())
}
