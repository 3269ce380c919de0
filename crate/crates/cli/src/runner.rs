//! Grid expansion and cell execution.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use viper_core::algorithms::{BonusAt, Policy};
use viper_core::envs::{BanditKind, BanditTask, LinearMdpSpec, State};
use viper_core::eval::{anti_concentration_test, eval_states, gaussian_law_test, SuboptReport, CSV_HEADER};
use viper_core::experiments::{bandit_setup, mdp_setup, run_bandit_cell, run_mdp_cell, Algo, CellResult, Shared};
use viper_core::ingest::{load_idx, ImageStore};
use viper_core::linalg::SparseVec;
use viper_core::offline_data::{collect_bandit_data, OfflineDataset};
use viper_core::rng::{normal_vec, substream, Purpose};
use viper_core::uq::{ensemble_size, CovMode, CovarianceAccumulator};

use crate::config::{ExperimentConfig, Kind};
use crate::plot::{self, Metric};

/// One point of the Cartesian grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub algo: Algo,
    pub k: usize,
    pub h: usize,
    pub shared: Shared,
    pub epsilon: f64,
    pub seed: u64,
}

impl Cell {
    /// Tab-separated description including the settings that have no CSV
    /// column.
    pub fn describe(&self) -> String {
        format!(
            "{}\tK={}\tH={}\tm={}\tM={}\tsigma={}\tbeta={}\tlambda={}\teta={}\tJ={}\tpsi={}\tepsilon={}\tseed={}",
            self.algo.name(),
            self.k,
            self.h,
            self.algo.is_neural().then_some(self.shared.width).map_or("-".into(), |v| v.to_string()),
            self.algo.members().map_or("-".into(), |v| v.to_string()),
            self.algo.sigma().map_or("-".into(), |v| v.to_string()),
            self.algo.beta().map_or("-".into(), |v| v.to_string()),
            self.shared.lambda,
            self.shared.eta,
            self.shared.iters,
            self.shared.psi,
            self.epsilon,
            self.seed
        )
    }
}

fn algo_variants(name: &str, c: &ExperimentConfig) -> Vec<Algo> {
    let mut out = Vec::new();
    match name {
        "lingreedy" => out.push(Algo::LinGreedy),
        "neuralgreedy" => out.push(Algo::NeuralGreedy),
        "linlcb" => out.extend(c.beta.iter().map(|&beta| Algo::LinLcb { beta })),
        "neuralcb" => out.extend(c.beta.iter().map(|&beta| Algo::NeuraLcb { beta, mode: CovMode::Full })),
        "neuralcb-diag" => out.extend(c.beta.iter().map(|&beta| Algo::NeuraLcb { beta, mode: CovMode::Diagonal })),
        "lin-viper" | "neural-viper" => {
            for &members in &c.members {
                for &sigma in &c.sigma {
                    out.push(if name == "lin-viper" {
                        Algo::LinViper { members, sigma }
                    } else {
                        Algo::NeuralViper { members, sigma }
                    });
                }
            }
        }
        _ => {}
    }
    out
}

/// Expand the grid in a fixed order: K, H, algorithm (and its own
/// hyperparameters), m, λ, η, J, ψ, ε, seed. Settings a learner ignores
/// are not expanded for it.
pub fn cells(c: &ExperimentConfig, seed_offset: u64) -> Vec<Cell> {
    let bonus_at = if c.bonus_at == "init" { BonusAt::Init } else { BonusAt::Trained };
    let mut out = Vec::new();
    for &k in &c.k {
        for &h in &c.h {
            for name in &c.algos {
                for algo in algo_variants(name, c) {
                    let neural = algo.is_neural();
                    let viper = algo.members().is_some();
                    let widths = if neural { c.m.clone() } else { vec![c.m[0]] };
                    let etas = if neural { c.eta.clone() } else { vec![c.eta[0]] };
                    let iters = if neural { c.iters.clone() } else { vec![c.iters[0]] };
                    let psis = if viper { c.psi.clone() } else { vec![c.psi[0]] };
                    let eps = if c.kind.is_bandit() { c.epsilon.clone() } else { vec![c.epsilon[0]] };
                    for &width in &widths {
                        for &lambda in &c.lambda {
                            for &eta in &etas {
                                for &j in &iters {
                                    for &psi in &psis {
                                        for &epsilon in &eps {
                                            for &seed in &c.seeds {
                                                out.push(Cell {
                                                    algo: algo.clone(),
                                                    k,
                                                    h,
                                                    shared: Shared {
                                                        lambda,
                                                        width,
                                                        eta,
                                                        iters: j,
                                                        psi,
                                                        split: c.split,
                                                        reinit_per_step: false,
                                                        bonus_at,
                                                    },
                                                    epsilon,
                                                    seed: seed + seed_offset,
                                                });
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Environment of a cell, rebuilt from the seed.
pub enum Env {
    Mdp(LinearMdpSpec),
    Bandit(BanditTask),
}

pub fn load_images(c: &ExperimentConfig) -> Result<Option<Arc<ImageStore>>> {
    match (c.kind, &c.mnist_images, &c.mnist_labels) {
        (Kind::BanditMnist, Some(i), Some(l)) => Ok(Some(Arc::new(load_idx(i, l)?))),
        (Kind::BanditMnist, _, _) => Err(anyhow!("bandit-mnist needs mnist_images and mnist_labels")),
        _ => Ok(None),
    }
}

pub fn setup(c: &ExperimentConfig, cell: &Cell, images: &Option<Arc<ImageStore>>) -> Result<(Env, OfflineDataset)> {
    let kind = match c.kind {
        Kind::LinearMdp => {
            let (spec, data) = mdp_setup(cell.h, cell.k, cell.seed, c.reward_noise)?;
            return Ok((Env::Mdp(spec), data));
        }
        Kind::BanditMnist => {
            let store = images.clone().ok_or_else(|| anyhow!("MNIST images are not loaded"))?;
            let task = BanditTask::mnist(store)?.with_epsilon(cell.epsilon);
            let data = collect_bandit_data(&task, cell.k, cell.seed)?;
            return Ok((Env::Bandit(task), data));
        }
        Kind::BanditExp => BanditKind::Exp,
        Kind::BanditCos | Kind::Timing => BanditKind::Cos,
        Kind::LawTests => bail!("law-tests has no learning cells"),
    };
    let (task, data) = bandit_setup(kind, c.dim, c.actions, cell.k, cell.seed, cell.epsilon)?;
    Ok((Env::Bandit(task), data))
}

fn latency_repeats(c: &ExperimentConfig) -> usize {
    if c.timing_columns {
        c.timing_repeats
    } else {
        0
    }
}

/// Evaluate an already fitted policy the way a run does.
pub fn evaluate(c: &ExperimentConfig, cell: &Cell, env: &Env, policy: &Policy) -> Result<SuboptReport> {
    let repeats = latency_repeats(c);
    let mut rep = SuboptReport {
        algo: cell.algo.name().to_string(),
        k: cell.k,
        horizon: cell.h,
        width: cell.algo.is_neural().then_some(cell.shared.width),
        members: cell.algo.members(),
        sigma: cell.algo.sigma(),
        beta: cell.algo.beta(),
        seed: cell.seed,
        subopt: 0.0,
        stderr: 0.0,
        fit_ms: f64::NAN,
        select_us_median: f64::NAN,
        select_us_p95: f64::NAN,
    };
    let states = match env {
        Env::Mdp(spec) => {
            rep.subopt = viper_core::eval::subopt_mdp(spec, policy)?;
            vec![State::Discrete(0), State::Discrete(1)]
        }
        Env::Bandit(task) => {
            let states = eval_states(task, c.eval_states, cell.seed);
            let est = viper_core::eval::subopt_bandit_states(task, &|s| policy.act(1, s), &states)?;
            rep.subopt = est.mean;
            rep.stderr = est.stderr;
            states
        }
    };
    if repeats > 0 {
        let lat = viper_core::eval::timing_benchmark(&[(rep.algo.as_str(), policy)], &states, repeats)?;
        rep.select_us_median = lat[0].median_us;
        rep.select_us_p95 = lat[0].p95_us;
    }
    Ok(rep)
}

pub fn run_cell(c: &ExperimentConfig, cell: &Cell, images: &Option<Arc<ImageStore>>) -> Result<CellResult> {
    let (env, data) = setup(c, cell, images)?;
    let repeats = latency_repeats(c);
    match &env {
        Env::Mdp(spec) => Ok(run_mdp_cell(&cell.algo, &cell.shared, spec, &data, cell.seed, repeats)?),
        Env::Bandit(task) => {
            let states = eval_states(task, c.eval_states, cell.seed);
            Ok(run_bandit_cell(&cell.algo, &cell.shared, task, &data, &states, cell.seed, repeats)?)
        }
    }
}

/// Write via a temporary sibling and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

/// `sha256` over `blob <len>\0<content>`, the way git names objects.
pub fn content_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("sha256:{}", hex::encode(h.finalize()))
}

pub struct RunSummary {
    pub cells: usize,
    pub failures: Vec<(usize, String)>,
    pub csv: PathBuf,
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

/// Execute every cell on `workers` threads and assemble the outputs.
pub fn run(c: &ExperimentConfig, out: &Path, workers: usize, seed_offset: u64) -> Result<RunSummary> {
    mkdir(out)?;
    if c.kind == Kind::LawTests {
        return run_law_tests(c, out, seed_offset);
    }
    let cells_dir = out.join("cells");
    mkdir(&cells_dir)?;
    let grid = cells(c, seed_offset);
    let images = load_images(c)?;
    // Latency is measured on one thread so cells do not contend.
    let workers = if c.timing_columns { 1 } else { workers.max(1) };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| anyhow!("cannot start worker pool: {e}"))?;
    let timing = c.timing_columns;
    let outcomes: Vec<std::result::Result<String, String>> = pool.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(i, cell)| {
                let path = cells_dir.join(format!("{i:06}.csv"));
                let res = run_cell(c, cell, &images).map(|r| r.report.to_csv(timing));
                match &res {
                    Ok(row) => {
                        let _ = fs::remove_file(path.with_extension("err"));
                        write_atomic(&path, format!("{row}\n").as_bytes()).map_err(|e| e.to_string())?;
                    }
                    Err(e) => {
                        log::warn!("cell {i} failed: {e}");
                        let _ = fs::remove_file(&path);
                        let _ = write_atomic(&path.with_extension("err"), format!("{e}\n").as_bytes());
                    }
                }
                res.map_err(|e| e.to_string())
            })
            .collect()
    });

    let mut csv = format!("{CSV_HEADER}\n");
    let mut table = String::from("row\tcell\tsettings\n");
    let mut failures = Vec::new();
    let mut row = 0;
    for (i, (cell, o)) in grid.iter().zip(outcomes).enumerate() {
        match o {
            Ok(line) => {
                csv.push_str(&line);
                csv.push('\n');
                let _ = writeln!(table, "{row}\t{i}\t{}", cell.describe());
                row += 1;
            }
            Err(e) => failures.push((i, e)),
        }
    }
    let csv_path = out.join("results.csv");
    write_atomic(&csv_path, csv.as_bytes())?;
    write_atomic(&out.join("cells.tsv"), table.as_bytes())?;
    write_manifest(c, out, grid.len(), &failures, &[("results.csv", csv.as_bytes())])?;
    let rows = parse_csv(&csv)?;
    write_plots(c.kind, &rows, out)?;
    Ok(RunSummary { cells: grid.len(), failures, csv: csv_path })
}

fn write_manifest(
    c: &ExperimentConfig,
    out: &Path,
    cells: usize,
    failures: &[(usize, String)],
    files: &[(&str, &[u8])],
) -> Result<()> {
    let mut text = c.to_kv().to_text("experiment manifest: configuration echo");
    let _ = writeln!(text, "cells = {cells}");
    let failed: Vec<String> = failures.iter().map(|(i, _)| i.to_string()).collect();
    let _ = writeln!(text, "failed_cells = {}", failed.join(","));
    for (name, bytes) in files {
        let _ = writeln!(text, "digest.{name} = {}", content_digest(bytes));
    }
    write_atomic(&out.join("manifest.txt"), text.as_bytes())
}

pub fn parse_csv(text: &str) -> Result<Vec<SuboptReport>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        Some(h) => bail!("unexpected CSV header `{h}`"),
        None => bail!("CSV is empty"),
    }
    lines.filter(|l| !l.trim().is_empty()).map(|l| Ok(SuboptReport::from_csv(l)?)).collect()
}

/// One SVG per horizon (linear MDP) or a single SVG otherwise. Returns the
/// files written.
pub fn write_plots(kind: Kind, rows: &[SuboptReport], out: &Path) -> Result<Vec<PathBuf>> {
    let metric = if kind == Kind::Timing { Metric::Latency } else { Metric::Subopt };
    plot_rows(rows, metric, kind.name(), out)
}

pub fn plot_rows(rows: &[SuboptReport], metric: Metric, title: &str, out: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        bail!("nothing to plot: the CSV has no rows");
    }
    let mut hs: Vec<usize> = rows.iter().map(|r| r.horizon).collect();
    hs.sort_unstable();
    hs.dedup();
    let mut written = Vec::new();
    for h in &hs {
        let panel: Vec<SuboptReport> = rows.iter().filter(|r| r.horizon == *h).cloned().collect();
        let (name, t) = if hs.len() > 1 || *h > 1 {
            (format!("plot_H{h}.svg"), format!("{title}, H = {h}"))
        } else {
            ("plot.svg".to_string(), title.to_string())
        };
        if let Some(svg) = plot::render(&panel, metric, &t) {
            let path = out.join(name);
            write_atomic(&path, svg.as_bytes())?;
            written.push(path);
        }
    }
    if written.is_empty() {
        bail!("nothing to plot: no finite values for the metric");
    }
    Ok(written)
}

fn run_law_tests(c: &ExperimentConfig, out: &Path, seed_offset: u64) -> Result<RunSummary> {
    let mut csv = String::from(
        "test,seed,sigma,lambda,draws,mean_err,mean_tol,cov_rel_err,cov_rel_err_exact,members,single_freq,ensemble_freq,passed\n",
    );
    let mut failures = Vec::new();
    let mut n = 0;
    for &seed in &c.seeds {
        let seed = seed + seed_offset;
        for &k in &c.k {
            let mut r = substream(seed, Purpose::Misc, k as u64, 0);
            let xs: Vec<SparseVec> = (0..k).map(|_| SparseVec::from_dense(&normal_vec(&mut r, c.dim, 1.0))).collect();
            let ys = normal_vec(&mut r, k, 1.0);
            let g = normal_vec(&mut r, c.dim, 1.0);
            for &lambda in &c.lambda {
                for &sigma in &c.sigma {
                    n += 2;
                    match gaussian_law_test(&xs, &ys, lambda, sigma, c.law_draws, seed) {
                        Ok(l) => {
                            let _ = writeln!(
                                csv,
                                "gaussian-law,{seed},{sigma},{lambda},{},{:.6e},{:.6e},{:.6e},{:.6e},,,,{}",
                                c.law_draws, l.mean_err, l.mean_tol, l.cov_rel_err, l.cov_rel_err_exact, l.passed
                            );
                        }
                        Err(e) => failures.push((n - 2, e.to_string())),
                    }
                    let anti = (|| {
                        let mut cov = CovarianceAccumulator::new(c.dim, lambda, CovMode::Full)?;
                        for x in &xs {
                            cov.update_sparse(x)?;
                        }
                        let m = ensemble_size(c.delta, 1, 1, c.actions)?;
                        anti_concentration_test(&cov, &g, sigma, c.law_draws, m, c.law_trials, c.delta, seed)
                    })();
                    match anti {
                        Ok(a) => {
                            let _ = writeln!(
                                csv,
                                "anti-concentration,{seed},{sigma},{lambda},{},,,,,{},{:.6},{:.6},{}",
                                c.law_draws, a.members, a.single_freq, a.ensemble_freq, a.passed
                            );
                        }
                        Err(e) => failures.push((n - 1, e.to_string())),
                    }
                }
            }
        }
    }
    let path = out.join("law_tests.csv");
    write_atomic(&path, csv.as_bytes())?;
    write_manifest(c, out, n, &failures, &[("law_tests.csv", csv.as_bytes())])?;
    Ok(RunSummary { cells: n, failures, csv: path })
}
