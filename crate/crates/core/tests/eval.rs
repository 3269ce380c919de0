use std::path::Path;
use std::sync::Arc;

use viper_core::algorithms::{lingreedy_fit, Features};
use viper_core::envs::{make_hard_linear_mdp, BanditKind, BanditTask, State};
use viper_core::eval::*;
use viper_core::ingest::{encode_idx, parse_idx};
use viper_core::linalg::SparseVec;
use viper_core::offline_data::collect_mdp_data;
use viper_core::rng::{normal_vec, substream, unit_sphere, Purpose};
use viper_core::uq::{ensemble_size, CovMode, CovarianceAccumulator};

fn law_fixture(seed: u64) -> (Vec<SparseVec>, Vec<f64>) {
    let mut r = substream(seed, Purpose::Misc, 0, 0);
    let xs = (0..20).map(|_| SparseVec::from_dense(&normal_vec(&mut r, 3, 1.0))).collect();
    let ys = normal_vec(&mut r, 20, 1.0);
    (xs, ys)
}

#[test]
fn law_holds_at_unit_lambda() {
    let (xs, ys) = law_fixture(1);
    let rep = gaussian_law_test(&xs, &ys, 1.0, 1.0, 100_000, 1).unwrap();
    assert!(rep.passed, "{rep:?}");
    assert!(rep.cov_rel_err <= 0.05);
}

#[test]
fn law_without_noise_is_degenerate() {
    let (xs, ys) = law_fixture(2);
    let rep = gaussian_law_test(&xs, &ys, 1.0, 0.0, 1000, 2).unwrap();
    assert_eq!(rep.mean_err, 0.0);
    assert!(rep.sample_cov.iter().all(|v| *v == 0.0));
}

#[test]
fn doubling_sigma_quadruples_covariance() {
    let (xs, ys) = law_fixture(3);
    let a = gaussian_law_test(&xs, &ys, 1.0, 0.5, 100_000, 3).unwrap();
    let b = gaussian_law_test(&xs, &ys, 1.0, 1.0, 100_000, 4).unwrap();
    let tr = |c: &[f64]| c[0] + c[4] + c[8];
    let ratio = tr(&b.sample_cov) / tr(&a.sample_cov);
    assert!((ratio / 4.0 - 1.0).abs() < 0.1, "{ratio}");
}

#[test]
fn law_away_from_unit_lambda_follows_exact_form() {
    // With zeta ~ N(0, σ²I) the covariance is σ²Λ⁻¹(Λ − λI + λ²I)Λ⁻¹.
    let (xs, ys) = law_fixture(5);
    let rep = gaussian_law_test(&xs, &ys, 4.0, 1.0, 100_000, 5).unwrap();
    assert!(rep.cov_rel_err_exact <= 0.05, "{rep:?}");
    assert!(rep.cov_rel_err > 0.05);
}

#[test]
fn anti_concentration_frequencies() {
    let (xs, _) = law_fixture(6);
    let mut cov = CovarianceAccumulator::new(3, 1.0, CovMode::Full).unwrap();
    for x in &xs {
        cov.update_sparse(x).unwrap();
    }
    let m = ensemble_size(0.1, 1, 1, 50).unwrap();
    let rep = anti_concentration_test(&cov, &[0.3, -1.0, 0.5], 0.7, 100_000, m, 10_000, 0.1, 6).unwrap();
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn trained_mdp_policy_subopt_is_in_range() {
    let spec = make_hard_linear_mdp(10, 7).unwrap();
    let data = collect_mdp_data(&spec, 100, 7).unwrap();
    let p = lingreedy_fit(&data, &Features::mdp(false), 0.01).unwrap();
    let s = subopt_mdp(&spec, &p).unwrap();
    assert!(s >= -1e-9 && s <= 0.98 * 10.0);
    let short = make_hard_linear_mdp(3, 7).unwrap();
    assert!(subopt_mdp(&short, &p).is_err());
}

#[test]
fn bandit_mc_examples() {
    let task = BanditTask::synthetic(BanditKind::Cos, 5, 4, 8).unwrap();
    let states = eval_states(&task, 1000, 8);
    let oracle = subopt_bandit_states(&task, &|s| task.optimal_action(s), &states).unwrap();
    assert_eq!((oracle.mean, oracle.stderr), (0.0, 0.0));

    let worst = |s: &State| -> viper_core::Result<usize> {
        let r = task.mean_rewards(s)?;
        Ok((0..r.len()).min_by(|a, b| r[*a].total_cmp(&r[*b])).unwrap())
    };
    let est = subopt_bandit_states(&task, &worst, &states).unwrap();
    let brute: f64 = states
        .iter()
        .map(|s| {
            let r = task.mean_rewards(s).unwrap();
            r.iter().cloned().fold(f64::MIN, f64::max) - r.iter().cloned().fold(f64::MAX, f64::min)
        })
        .sum::<f64>()
        / 1000.0;
    assert!(est.mean > 0.0 && (est.mean - brute).abs() < 1e-12);
    assert_eq!(eval_states(&task, 1000, 8), states);
}

#[test]
fn mc_estimate_is_unbiased_on_known_gap() {
    // 10 images, 3 labelled 0: always answering 0 loses with probability 0.7.
    let labels = [0u8, 1, 2, 0, 4, 5, 0, 7, 8, 9];
    let images: Vec<Vec<u8>> = (0..10).map(|i| vec![i as u8 + 1; 4]).collect();
    let (img, lab) = encode_idx(2, 2, &images, &labels);
    let store = parse_idx(&img, &lab, Path::new("img"), Path::new("lab")).unwrap();
    let task = BanditTask::mnist(Arc::new(store)).unwrap();
    let states = eval_states(&task, 4000, 9);
    let est = subopt_bandit_states(&task, &|_| Ok(0), &states).unwrap();
    assert!((est.mean - 0.7).abs() <= 3.0 * est.stderr, "{est:?}");
}

#[test]
fn timing_reports_median_and_p95() {
    let spec = make_hard_linear_mdp(1, 10).unwrap();
    let data = collect_mdp_data(&spec, 50, 10).unwrap();
    let p = lingreedy_fit(&data, &Features::mdp(false), 0.01).unwrap();
    let states = vec![State::Discrete(0), State::Discrete(1)];
    let rows = timing_benchmark(&[("greedy", &p)], &states, 500).unwrap();
    assert_eq!(rows[0].samples_us.len(), 500);
    assert!(rows[0].median_us <= rows[0].p95_us);
    assert!(timing_benchmark(&[("greedy", &p)], &[], 10).is_err());
    let mut r = substream(10, Purpose::Misc, 0, 0);
    assert_eq!(unit_sphere(&mut r, 2).len(), 2);
}
