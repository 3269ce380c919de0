//! Ground-truth values, suboptimality, the action-selection timing harness
//! and the statistical validators.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algorithms::{Policy, PerturbedRidge};
use crate::envs::{BanditTask, LinearMdpSpec, State, MDP_ACTIONS, MDP_STATES};
use crate::error::{Result, ViperError};
use crate::linalg::{dot, SparseVec};
use crate::rng::{self, Purpose};
use crate::uq::{normal_cdf, CovarianceAccumulator};

/// How actions are chosen when evaluating the hard MDP.
pub enum ActionRule<'a> {
    /// Per-state maximization (the optimal values).
    Optimal,
    /// `(h, s) -> a`.
    Deterministic(&'a dyn Fn(usize, usize) -> Result<usize>),
    /// `(h, s) -> π_h(· | s)` over all actions.
    Stochastic(&'a dyn Fn(usize, usize) -> Result<Vec<f64>>),
}

/// `values[h - 1][s] = V_h(s)` for `h = 1..=H+1` (the last row is zero).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub values: Vec<[f64; MDP_STATES]>,
}

impl ValueTable {
    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.values[h - 1][s]
    }
}

fn q_value(spec: &LinearMdpSpec, next: &[f64; MDP_STATES], h: usize, s: usize, a: usize) -> Result<f64> {
    let mut q = spec.mean_reward(h, s, a)?;
    for (sn, vn) in next.iter().enumerate() {
        q += spec.transition_prob(h, s, a, sn)? * vn;
    }
    Ok(q)
}

/// Backward dynamic programming with exact rewards and transitions.
pub fn exact_values(spec: &LinearMdpSpec, rule: &ActionRule) -> Result<ValueTable> {
    let horizon = spec.horizon;
    let mut values = vec![[0.0; MDP_STATES]; horizon + 1];
    for h in (1..=horizon).rev() {
        let next = values[h];
        for s in 0..MDP_STATES {
            values[h - 1][s] = match rule {
                ActionRule::Optimal => {
                    let mut best = f64::NEG_INFINITY;
                    for a in 0..MDP_ACTIONS {
                        best = best.max(q_value(spec, &next, h, s, a)?);
                    }
                    best
                }
                ActionRule::Deterministic(f) => q_value(spec, &next, h, s, f(h, s)?)?,
                ActionRule::Stochastic(f) => {
                    let probs = f(h, s)?;
                    if probs.len() != MDP_ACTIONS {
                        return Err(ViperError::domain("action distribution must cover all actions"));
                    }
                    let mut v = 0.0;
                    for (a, p) in probs.iter().enumerate() {
                        if *p != 0.0 {
                            v += p * q_value(spec, &next, h, s, a)?;
                        }
                    }
                    v
                }
            };
        }
    }
    Ok(ValueTable { values })
}

/// Largest Bellman residual of `table` under `rule`.
pub fn bellman_residual(spec: &LinearMdpSpec, rule: &ActionRule, table: &ValueTable) -> Result<f64> {
    let fresh = exact_values(spec, rule)?;
    let mut worst: f64 = 0.0;
    for (a, b) in fresh.values.iter().zip(&table.values) {
        for s in 0..MDP_STATES {
            worst = worst.max((a[s] - b[s]).abs());
        }
    }
    Ok(worst)
}

/// `E_{s1 ~ d1}[V*_1(s1) − V^π_1(s1)]` with `d1` uniform over the two states.
pub fn subopt_mdp(spec: &LinearMdpSpec, policy: &Policy) -> Result<f64> {
    if policy.horizon() != spec.horizon {
        return Err(ViperError::domain(format!(
            "policy horizon {} does not match the MDP horizon {}",
            policy.horizon(),
            spec.horizon
        )));
    }
    let act = |h: usize, s: usize| policy.act(h, &State::Discrete(s));
    subopt_mdp_rule(spec, &ActionRule::Deterministic(&act))
}

pub fn subopt_mdp_rule(spec: &LinearMdpSpec, rule: &ActionRule) -> Result<f64> {
    let opt = exact_values(spec, &ActionRule::Optimal)?;
    let pol = exact_values(spec, rule)?;
    Ok((0..MDP_STATES).map(|s| opt.v(1, s) - pol.v(1, s)).sum::<f64>() / MDP_STATES as f64)
}

/// Fresh evaluation states for a bandit task, fixed by `seed`.
pub fn eval_states(task: &BanditTask, n: usize, seed: u64) -> Vec<State> {
    let mut r = rng::substream(seed, Purpose::Eval, 0, 0);
    (0..n).map(|_| task.sample_state(&mut r)).collect()
}

/// Mean and standard error of a Monte-Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Average of `max_a r(s, a) − r(s, π(s))` over the evaluation states.
pub fn subopt_bandit_states(task: &BanditTask, act: &dyn Fn(&State) -> Result<usize>, states: &[State]) -> Result<Estimate> {
    if states.is_empty() {
        return Err(ViperError::config("need at least one evaluation state"));
    }
    let gaps = states
        .iter()
        .map(|s| {
            let r = task.mean_rewards(s)?;
            let best = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(best - r[act(s)?])
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_stderr(&gaps))
}

/// Suboptimality over `n_eval` states drawn from `seed`.
pub fn subopt_bandit_mc(task: &BanditTask, policy: &Policy, n_eval: usize, seed: u64) -> Result<Estimate> {
    let states = eval_states(task, n_eval, seed);
    subopt_bandit_states(task, &|s| policy.act(1, s), &states)
}

pub fn mean_stderr(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return Estimate { mean, stderr: 0.0 };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate { mean, stderr: (var / n).sqrt() }
}

/// Action-selection latency of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub name: String,
    pub median_us: f64,
    pub p95_us: f64,
    pub samples_us: Vec<f64>,
}

pub const TIMING_WARMUP: usize = 100;

/// Time `repeats` greedy selections per policy on the current thread after
/// [`TIMING_WARMUP`] untimed calls. States are cycled, and policies are
/// interleaved call by call so machine drift hits all of them alike.
pub fn timing_benchmark(policies: &[(&str, &Policy)], states: &[State], repeats: usize) -> Result<Vec<Latency>> {
    if states.is_empty() || repeats == 0 {
        return Err(ViperError::config("timing needs states and at least one repeat"));
    }
    for (_, p) in policies {
        for i in 0..TIMING_WARMUP {
            std::hint::black_box(p.act(1, &states[i % states.len()])?);
        }
    }
    let mut samples = vec![Vec::with_capacity(repeats); policies.len()];
    for i in 0..repeats {
        let s = &states[i % states.len()];
        for ((_, p), out) in policies.iter().zip(samples.iter_mut()) {
            let t = Instant::now();
            std::hint::black_box(p.act(1, s)?);
            out.push(t.elapsed().as_secs_f64() * 1e6);
        }
    }
    Ok(policies
        .iter()
        .zip(samples)
        .map(|((name, _), samples_us)| {
            let (median_us, p95_us) = median_p95(&samples_us);
            Latency { name: name.to_string(), median_us, p95_us, samples_us }
        })
        .collect())
}

pub fn median_p95(samples: &[f64]) -> (f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| s[((s.len() - 1) as f64 * p).round() as usize];
    (q(0.5), q(0.95))
}

/// Outcome of the perturbed-solution law check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LawReport {
    pub sigma: f64,
    pub lambda: f64,
    pub draws: usize,
    /// Largest `|mean_j − θ̂_j|` and the allowed `4σ|Λ^{-1/2}|/√n`.
    pub mean_err: f64,
    pub mean_tol: f64,
    /// Relative Frobenius error of the sample covariance against `σ²Λ⁻¹`.
    pub cov_rel_err: f64,
    /// Same against the exact law `σ²Λ⁻¹(Λ − λI + λ²I)Λ⁻¹`, which equals
    /// `σ²Λ⁻¹` only when `λ = 1`.
    pub cov_rel_err_exact: f64,
    pub cov_tol: f64,
    pub passed: bool,
    pub sample_cov: Vec<f64>,
}

/// Draw `n_draws` perturbed ridge solutions and compare their first two
/// moments with `θ̂` and `σ²Λ⁻¹`.
pub fn gaussian_law_test(
    inputs: &[SparseVec],
    targets: &[f64],
    lambda: f64,
    sigma: f64,
    n_draws: usize,
    seed: u64,
) -> Result<LawReport> {
    if n_draws < 2 {
        return Err(ViperError::config("law test needs at least two draws"));
    }
    let ridge = PerturbedRidge::new(inputs, targets, lambda)?;
    let d = ridge.covariance().dim();
    let theta_hat = DVector::from_vec(ridge.mean()?);
    let lam = ridge.covariance().matrix()?;
    let inv = lam.clone().try_inverse().ok_or_else(|| ViperError::numeric("covariance is singular"))?;
    let claim = &inv * (sigma * sigma);
    let middle = &lam - DMatrix::identity(d, d) * (lambda - lambda * lambda);
    let exact = &inv * middle * &inv * (sigma * sigma);

    let mut r = rng::substream(seed, Purpose::Law, 0, 0);
    let mut mean = DVector::zeros(d);
    let mut second = DMatrix::zeros(d, d);
    for _ in 0..n_draws {
        let x = DVector::from_vec(ridge.draw(sigma, false, &mut r)?) - &theta_hat;
        mean += &x;
        second += &x * x.transpose();
    }
    let n = n_draws as f64;
    mean /= n;
    let cov = second / n - &mean * mean.transpose();
    let mean_err = mean.amax();
    // |Λ^{-1/2}| (spectral) = sqrt(λ_max(Λ⁻¹)).
    let spectral = inv.clone().symmetric_eigenvalues().max().max(0.0).sqrt();
    let mean_tol = 4.0 * sigma * spectral / n.sqrt();
    let rel = |target: &DMatrix<f64>| {
        if target.norm() == 0.0 {
            cov.norm()
        } else {
            (&cov - target).norm() / target.norm()
        }
    };
    let cov_rel_err = rel(&claim);
    let cov_rel_err_exact = rel(&exact);
    let cov_tol = 0.05;
    let passed = mean_err <= mean_tol && cov_rel_err <= cov_tol;
    Ok(LawReport {
        sigma,
        lambda,
        draws: n_draws,
        mean_err,
        mean_tol,
        cov_rel_err,
        cov_rel_err_exact,
        cov_tol,
        passed,
        sample_cov: cov.as_slice().to_vec(),
    })
}

/// Outcome of the anti-concentration check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AntiConcentrationReport {
    /// Frequency of `⟨g, x⟩ ≤ −σ|g|_{Λ⁻¹}` for single draws, and its target `Φ(−1)`.
    pub single_freq: f64,
    pub target: f64,
    pub members: usize,
    /// Frequency with which the minimum over `members` draws undershoots.
    pub ensemble_freq: f64,
    pub required: f64,
    pub passed: bool,
}

/// Empirical check of Gaussian anti-concentration: one draw from
/// `N(0, σ²Λ⁻¹)` undershoots `−σ|g|_{Λ⁻¹}` with probability `Φ(−1)`, and
/// the minimum of `M` draws does so with probability at least `1 − δ`.
pub fn anti_concentration_test(
    cov: &CovarianceAccumulator,
    g: &[f64],
    sigma: f64,
    draws: usize,
    members: usize,
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<AntiConcentrationReport> {
    if !(sigma > 0.0) || draws == 0 || trials == 0 || members == 0 {
        return Err(ViperError::config("anti-concentration needs sigma > 0 and positive counts"));
    }
    let width = sigma * cov.quad_form(g)?;
    let mut r = rng::substream(seed, Purpose::Law, 1, 0);
    let mut hits = 0usize;
    for _ in 0..draws {
        if dot(g, &cov.sample_perturbation(sigma, &mut r)?) <= -width {
            hits += 1;
        }
    }
    let mut ens_hits = 0usize;
    for _ in 0..trials {
        let mut lowest = f64::INFINITY;
        for _ in 0..members {
            lowest = lowest.min(dot(g, &cov.sample_perturbation(sigma, &mut r)?));
        }
        if lowest <= -width {
            ens_hits += 1;
        }
    }
    let single_freq = hits as f64 / draws as f64;
    let ensemble_freq = ens_hits as f64 / trials as f64;
    let target = normal_cdf(-1.0);
    Ok(AntiConcentrationReport {
        single_freq,
        target,
        members,
        ensemble_freq,
        required: 1.0 - delta,
        passed: (single_freq - target).abs() <= 0.01 && ensemble_freq >= 1.0 - delta,
    })
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuboptReport {
    pub algo: String,
    pub k: usize,
    pub horizon: usize,
    pub width: Option<usize>,
    pub members: Option<usize>,
    pub sigma: Option<f64>,
    pub beta: Option<f64>,
    pub seed: u64,
    pub subopt: f64,
    pub stderr: f64,
    pub fit_ms: f64,
    pub select_us_median: f64,
    pub select_us_p95: f64,
}

pub const CSV_HEADER: &str = "algo,K,H,m,M,sigma,beta,seed,subopt,stderr,fit_ms,select_us_median,select_us_p95";

impl SuboptReport {
    /// CSV row; with `timing = false` the three wall-clock columns are left
    /// empty so that the row is a pure function of the configuration.
    pub fn to_csv(&self, timing: bool) -> String {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(T::to_string).unwrap_or_default()
        }
        let t = |x: f64| if timing { format!("{x:.3}") } else { String::new() };
        format!(
            "{},{},{},{},{},{},{},{},{:.10e},{:.10e},{},{},{}",
            self.algo,
            self.k,
            self.horizon,
            opt(&self.width),
            opt(&self.members),
            opt(&self.sigma),
            opt(&self.beta),
            self.seed,
            self.subopt,
            self.stderr,
            t(self.fit_ms),
            t(self.select_us_median),
            t(self.select_us_p95)
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 13 {
            return Err(ViperError::parse(format!("expected 13 CSV fields, got {}", f.len())));
        }
        fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
            s.parse().map_err(|_| ViperError::parse(format!("bad {what} field '{s}'")))
        }
        fn opt<T: std::str::FromStr>(s: &str, what: &str) -> Result<Option<T>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s, what).map(Some)
            }
        }
        let t = |s: &str, what: &str| -> Result<f64> { Ok(opt(s, what)?.unwrap_or(f64::NAN)) };
        Ok(SuboptReport {
            algo: f[0].to_string(),
            k: num(f[1], "K")?,
            horizon: num(f[2], "H")?,
            width: opt(f[3], "m")?,
            members: opt(f[4], "M")?,
            sigma: opt(f[5], "sigma")?,
            beta: opt(f[6], "beta")?,
            seed: num(f[7], "seed")?,
            subopt: num(f[8], "subopt")?,
            stderr: num(f[9], "stderr")?,
            fit_ms: t(f[10], "fit_ms")?,
            select_us_median: t(f[11], "select_us_median")?,
            select_us_p95: t(f[12], "select_us_p95")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_hard_linear_mdp;

    #[test]
    fn one_step_optimal_values() {
        let spec = make_hard_linear_mdp(1, 3).unwrap();
        let v = exact_values(&spec, &ActionRule::Optimal).unwrap();
        assert!((v.v(1, 0) - 0.99).abs() < 1e-15);
        assert!((v.v(1, 1) - 0.01).abs() < 1e-15);
        assert_eq!(v.v(2, 0), 0.0);
    }

    #[test]
    fn optimal_rule_has_zero_subopt_and_bounds_hold() {
        let spec = make_hard_linear_mdp(7, 4).unwrap();
        let opt = exact_values(&spec, &ActionRule::Optimal).unwrap();
        // The greedy rule that reproduces the optimal table.
        let best = |h: usize, s: usize| -> Result<usize> {
            let next = opt.values[h];
            let qs: Vec<f64> = (0..MDP_ACTIONS).map(|a| q_value(&spec, &next, h, s, a).unwrap()).collect();
            Ok(crate::envs::argmax(&qs))
        };
        assert!(subopt_mdp_rule(&spec, &ActionRule::Deterministic(&best)).unwrap().abs() < 1e-12);
        let worst = |_: usize, _: usize| -> Result<usize> { Ok(5) };
        let gap = subopt_mdp_rule(&spec, &ActionRule::Deterministic(&worst)).unwrap();
        assert!(gap >= 0.0 && gap <= 0.98 * 7.0 + 1e-12);
    }

    #[test]
    fn bellman_residual_is_tiny() {
        let spec = make_hard_linear_mdp(12, 5).unwrap();
        let uniform = |_: usize, _: usize| -> Result<Vec<f64>> { Ok(vec![0.01; MDP_ACTIONS]) };
        let rule = ActionRule::Stochastic(&uniform);
        let table = exact_values(&spec, &rule).unwrap();
        // Check V_h(s) = sum_a pi(a|s) [r + P V_{h+1}] directly.
        for h in 1..=12 {
            for s in 0..2 {
                let next = table.values[h];
                let rhs: f64 = (0..MDP_ACTIONS).map(|a| 0.01 * q_value(&spec, &next, h, s, a).unwrap()).sum();
                assert!((table.v(h, s) - rhs).abs() <= 1e-12);
            }
        }
        assert_eq!(bellman_residual(&spec, &rule, &table).unwrap(), 0.0);
        let gap = subopt_mdp_rule(&spec, &rule).unwrap();
        assert!(gap > 0.0 && gap <= 0.98 * 12.0);
    }

    #[test]
    fn quantiles() {
        let xs: Vec<f64> = (1..=101).map(f64::from).collect();
        assert_eq!(median_p95(&xs), (51.0, 96.0));
        let e = mean_stderr(&[1.0, 3.0]);
        assert_eq!(e.mean, 2.0);
        assert!((e.stderr - 1.0).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let r = SuboptReport {
            algo: "lin-viper".into(),
            k: 100,
            horizon: 20,
            width: None,
            members: Some(10),
            sigma: Some(0.5),
            beta: None,
            seed: 3,
            subopt: 0.125,
            stderr: 0.0,
            fit_ms: 12.5,
            select_us_median: 3.25,
            select_us_p95: 4.0,
        };
        let back = SuboptReport::from_csv(&r.to_csv(true)).unwrap();
        assert_eq!(back, r);
        let row = r.to_csv(false);
        assert!(row.ends_with(",,,"));
        assert_eq!(CSV_HEADER.split(',').count(), row.split(',').count());
        assert!(SuboptReport::from_csv("a,b").is_err());
    }
}
