//! Single experiment cells: build the environment and data for a seed, fit
//! one learner, and measure it.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::algorithms::{
    lingreedy_fit, linlcb_fit, neuralcb_fit, neuralgreedy_fit, viper_fit, BonusAt, Family, Features, NetConfig,
    Policy, ViperConfig,
};
use crate::envs::{make_hard_linear_mdp, BanditTask, LinearMdpSpec, State};
use crate::error::{Result, ViperError};
use crate::eval::{subopt_bandit_states, subopt_mdp, timing_benchmark, Estimate, SuboptReport};
use crate::models::GdConfig;
use crate::offline_data::{collect_bandit_data, collect_mdp_data, OfflineDataset};
use crate::uq::CovMode;

/// A learner together with its own hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Algo {
    LinGreedy,
    LinLcb { beta: f64 },
    LinViper { members: usize, sigma: f64 },
    NeuralGreedy,
    NeuraLcb { beta: f64, mode: CovMode },
    NeuralViper { members: usize, sigma: f64 },
}

impl Algo {
    pub fn name(&self) -> &'static str {
        match self {
            Algo::LinGreedy => "lingreedy",
            Algo::LinLcb { .. } => "linlcb",
            Algo::LinViper { .. } => "lin-viper",
            Algo::NeuralGreedy => "neuralgreedy",
            Algo::NeuraLcb { mode: CovMode::Full, .. } => "neuralcb",
            Algo::NeuraLcb { mode: CovMode::Diagonal, .. } => "neuralcb-diag",
            Algo::NeuralViper { .. } => "neural-viper",
        }
    }

    pub fn is_neural(&self) -> bool {
        matches!(self, Algo::NeuralGreedy | Algo::NeuraLcb { .. } | Algo::NeuralViper { .. })
    }

    pub fn members(&self) -> Option<usize> {
        match self {
            Algo::LinViper { members, .. } | Algo::NeuralViper { members, .. } => Some(*members),
            _ => None,
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match self {
            Algo::LinViper { sigma, .. } | Algo::NeuralViper { sigma, .. } => Some(*sigma),
            _ => None,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            Algo::LinLcb { beta } | Algo::NeuraLcb { beta, .. } => Some(*beta),
            _ => None,
        }
    }
}

/// Settings shared by every learner in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shared {
    pub lambda: f64,
    pub width: usize,
    pub eta: f64,
    pub iters: usize,
    pub psi: f64,
    pub split: bool,
    pub reinit_per_step: bool,
    pub bonus_at: BonusAt,
}

impl Default for Shared {
    fn default() -> Self {
        Shared {
            lambda: 0.01,
            width: 64,
            eta: 0.01,
            iters: 500,
            psi: 0.0,
            split: false,
            reinit_per_step: false,
            bonus_at: BonusAt::Trained,
        }
    }
}

/// Fit `algo` on `data`.
pub fn fit(algo: &Algo, shared: &Shared, data: &OfflineDataset, features: &Features, seed: u64) -> Result<Policy> {
    let gd = GdConfig { lambda: shared.lambda, eta: shared.eta, iters: shared.iters };
    let net = NetConfig { width: shared.width, gd, seed, reinit_per_step: shared.reinit_per_step };
    let viper = |family: Family, members: usize, sigma: f64| ViperConfig {
        family,
        members,
        sigma: vec![sigma],
        lambda: shared.lambda,
        eta: shared.eta,
        iters: shared.iters,
        psi: shared.psi,
        split: shared.split,
        seed,
        reinit_per_step: shared.reinit_per_step,
        zero_zeta: false,
    };
    let split_copy;
    let data = if shared.split != data.split_enabled() {
        split_copy = data.clone().with_split(shared.split)?;
        &split_copy
    } else {
        data
    };
    match algo {
        Algo::LinGreedy => lingreedy_fit(data, features, shared.lambda),
        Algo::LinLcb { beta } => linlcb_fit(data, features, *beta, shared.lambda),
        Algo::LinViper { members, sigma } => viper_fit(data, features, &viper(Family::Linear, *members, *sigma)),
        Algo::NeuralGreedy => neuralgreedy_fit(data, features, &net),
        Algo::NeuraLcb { beta, mode } => neuralcb_fit(data, features, &net, *beta, *mode, shared.bonus_at),
        Algo::NeuralViper { members, sigma } => {
            viper_fit(data, features, &viper(Family::Neural { width: shared.width }, *members, *sigma))
        }
    }
}

/// Features used by `algo` on the hard MDP: raw `φ` for linear learners,
/// unit-normalized `φ` for networks.
pub fn mdp_features(algo: &Algo) -> Features {
    Features::mdp(algo.is_neural())
}

pub fn bandit_features(task: &BanditTask) -> Features {
    Features::embedding(task.dim, task.n_actions, task.images.clone())
}

/// Hard-MDP environment and data of one seed.
pub fn mdp_setup(horizon: usize, k: usize, seed: u64, reward_noise: f64) -> Result<(LinearMdpSpec, OfflineDataset)> {
    let spec = make_hard_linear_mdp(horizon, seed)?.with_reward_noise(reward_noise);
    let data = collect_mdp_data(&spec, k, seed)?;
    Ok((spec, data))
}

/// Outcome of one cell.
pub struct CellResult {
    pub policy: Policy,
    pub report: SuboptReport,
}

fn report(algo: &Algo, shared: &Shared, k: usize, horizon: usize, seed: u64, est: Estimate, fit_ms: f64) -> SuboptReport {
    SuboptReport {
        algo: algo.name().to_string(),
        k,
        horizon,
        width: algo.is_neural().then_some(shared.width),
        members: algo.members(),
        sigma: algo.sigma(),
        beta: algo.beta(),
        seed,
        subopt: est.mean,
        stderr: est.stderr,
        fit_ms,
        select_us_median: f64::NAN,
        select_us_p95: f64::NAN,
    }
}

fn add_latency(rep: &mut SuboptReport, policy: &Policy, states: &[State], repeats: usize) -> Result<()> {
    if repeats > 0 {
        let lat = timing_benchmark(&[(rep.algo.as_str(), policy)], states, repeats)?;
        rep.select_us_median = lat[0].median_us;
        rep.select_us_p95 = lat[0].p95_us;
    }
    Ok(())
}

/// Fit and evaluate one learner on the hard MDP. `latency_repeats = 0`
/// skips the selection timing.
pub fn run_mdp_cell(
    algo: &Algo,
    shared: &Shared,
    spec: &LinearMdpSpec,
    data: &OfflineDataset,
    seed: u64,
    latency_repeats: usize,
) -> Result<CellResult> {
    let features = mdp_features(algo);
    let t = Instant::now();
    let policy = fit(algo, shared, data, &features, seed)?;
    let fit_ms = t.elapsed().as_secs_f64() * 1e3;
    let gap = subopt_mdp(spec, &policy)?;
    let mut rep = report(algo, shared, data.k, spec.horizon, seed, Estimate { mean: gap, stderr: 0.0 }, fit_ms);
    add_latency(&mut rep, &policy, &[State::Discrete(0), State::Discrete(1)], latency_repeats)?;
    Ok(CellResult { policy, report: rep })
}

/// Fit and evaluate one learner on a bandit task over shared evaluation
/// states.
pub fn run_bandit_cell(
    algo: &Algo,
    shared: &Shared,
    task: &BanditTask,
    data: &OfflineDataset,
    eval_states: &[State],
    seed: u64,
    latency_repeats: usize,
) -> Result<CellResult> {
    if data.horizon != 1 {
        return Err(ViperError::config("bandit data must have horizon 1"));
    }
    let features = bandit_features(task);
    let t = Instant::now();
    let policy = fit(algo, shared, data, &features, seed)?;
    let fit_ms = t.elapsed().as_secs_f64() * 1e3;
    let est = subopt_bandit_states(task, &|s| policy.act(1, s), eval_states)?;
    let mut rep = report(algo, shared, data.k, 1, seed, est, fit_ms);
    add_latency(&mut rep, &policy, eval_states, latency_repeats)?;
    Ok(CellResult { policy, report: rep })
}

/// Synthetic bandit task and its data for one seed.
pub fn bandit_setup(
    kind: crate::envs::BanditKind,
    dim: usize,
    n_actions: usize,
    k: usize,
    seed: u64,
    epsilon: f64,
) -> Result<(BanditTask, OfflineDataset)> {
    let task = BanditTask::synthetic(kind, dim, n_actions, seed)?.with_epsilon(epsilon);
    let data = collect_bandit_data(&task, k, seed)?;
    Ok((task, data))
}
