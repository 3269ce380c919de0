use viper_core::algorithms::*;
use viper_core::envs::{make_hard_linear_mdp, BanditKind, BanditTask, State};
use viper_core::linalg::SparseVec;
use viper_core::models::GdConfig;
use viper_core::offline_data::{collect_bandit_data, collect_mdp_data, OfflineDataset, Transition};
use viper_core::rng::{substream, unit_sphere, Purpose};
use viper_core::uq::{CovMode, CovarianceAccumulator};

fn bandit_record(ctx: Vec<f64>, action: usize, reward: f64) -> Vec<Transition> {
    vec![Transition { state: State::Vector(ctx), action, reward, next_state: None }]
}

fn scalar_dataset() -> OfflineDataset {
    OfflineDataset::new(vec![bandit_record(vec![1.0], 0, 1.0)], 0).unwrap()
}

#[test]
fn perturb_targets_examples() {
    let mut rng = substream(1, Purpose::Misc, 0, 0);
    let y = [0.5, -1.0, 2.0];
    assert_eq!(perturb_targets(&y, 0.0, &mut rng), y.to_vec());
    let n = 100_000;
    let zeros = vec![0.0; n];
    let sigma = 1.7;
    let d = perturb_targets(&zeros, sigma, &mut rng);
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((var / (sigma * sigma) - 1.0).abs() < 0.02, "{var}");
}

#[test]
fn last_step_targets_are_rewards() {
    let spec = make_hard_linear_mdp(3, 2).unwrap();
    let data = collect_mdp_data(&spec, 20, 2).unwrap();
    let f = Features::mdp(false);
    let p = lingreedy_fit(&data, &f, 0.01).unwrap();
    let sd = step_data(&data, 3, &f, &p.model, None).unwrap();
    let rewards: Vec<f64> = data.step_records(3).map(|t| t.reward).collect();
    assert_eq!(sd.targets, rewards);
}

#[test]
fn scalar_ridge_fixture() {
    let data = scalar_dataset();
    let f = Features::embedding(1, 1, None);
    let cfg = ViperConfig::linear(1, 0.0, 1.0, 0);
    let p = viper_fit(&data, &f, &cfg).unwrap();
    assert!((p.q_values(1, &State::Vector(vec![1.0])).unwrap()[0] - 0.5).abs() < 1e-12);

    let x = [SparseVec::from_dense(&[1.0])];
    let mut rng = substream(0, Purpose::Misc, 0, 0);
    assert!((lin_viper_solve(&x, &[1.0], 1.0, 0.0, &mut rng).unwrap().theta[0] - 0.5).abs() < 1e-12);
    let forced = perturbed_ridge(&x, &[1.0], 1.0, &[0.0], &[1.0]).unwrap();
    assert!(forced.theta[0].abs() < 1e-12);

    let gd = GdConfig { lambda: 1.0, eta: 0.4, iters: 200 };
    let neural = viper_fit(&data, &Features::embedding(1, 1, None), &ViperConfig::neural(64, 1, 0.0, gd, 3)).unwrap();
    let q = neural.q_values(1, &State::Vector(vec![1.0])).unwrap()[0];
    assert!((0.0..=1.0).contains(&q));
}

#[test]
fn truncation_and_backward_consistency() {
    let spec = make_hard_linear_mdp(5, 4).unwrap();
    let data = collect_mdp_data(&spec, 50, 4).unwrap();
    let f = Features::mdp(false);
    let mut cfg = ViperConfig::linear(5, 2.0, 0.01, 4);
    cfg.psi = 0.5;
    let p = viper_fit(&data, &f, &cfg).unwrap();
    for h in 1..=5 {
        let cap = (5 - h + 1) as f64 * 1.5;
        for s in 0..2 {
            let st = State::Discrete(s);
            let q = p.q_values(h, &st).unwrap();
            assert!(q.iter().all(|v| (0.0..=cap).contains(v)));
            let a = p.act(h, &st).unwrap();
            assert_eq!(p.state_value(h, &st).unwrap(), q[a]);
        }
    }
}

#[test]
fn truncation_holds_on_random_probes() {
    let task = BanditTask::synthetic(BanditKind::Cos, 4, 3, 8).unwrap();
    let data = collect_bandit_data(&task, 60, 8).unwrap();
    let f = Features::embedding(4, 3, None);
    let gd = GdConfig { lambda: 0.1, eta: 0.05, iters: 50 };
    let mut cfg = ViperConfig::neural(32, 4, 0.5, gd, 8);
    cfg.psi = 0.2;
    let p = viper_fit(&data, &f, &cfg).unwrap();
    let mut rng = substream(8, Purpose::Misc, 0, 0);
    for _ in 0..1000 {
        let st = State::Vector(unit_sphere(&mut rng, 4));
        assert!(p.q_values(1, &st).unwrap().iter().all(|v| (0.0..=1.2).contains(v)));
    }
}

#[test]
fn adding_members_never_raises_values() {
    let task = BanditTask::synthetic(BanditKind::Cos, 4, 3, 9).unwrap();
    let data = collect_bandit_data(&task, 80, 9).unwrap();
    let f = Features::embedding(4, 3, None);
    let gd = GdConfig { lambda: 0.1, eta: 0.05, iters: 40 };
    let small = viper_fit(&data, &f, &ViperConfig::neural(16, 3, 0.3, gd, 9)).unwrap();
    let large = viper_fit(&data, &f, &ViperConfig::neural(16, 4, 0.3, gd, 9)).unwrap();
    let lin_small = viper_fit(&data, &f, &ViperConfig::linear(3, 0.3, 0.1, 9)).unwrap();
    let lin_large = viper_fit(&data, &f, &ViperConfig::linear(4, 0.3, 0.1, 9)).unwrap();
    let mut rng = substream(9, Purpose::Misc, 0, 0);
    for _ in 0..200 {
        let st = State::Vector(unit_sphere(&mut rng, 4));
        for (a, b) in [(&small, &large), (&lin_small, &lin_large)] {
            let qa = a.q_values(1, &st).unwrap();
            let qb = b.q_values(1, &st).unwrap();
            assert!(qa.iter().zip(&qb).all(|(x, y)| y <= x));
        }
    }
}

#[test]
fn reduction_to_lingreedy() {
    let spec = make_hard_linear_mdp(6, 5).unwrap();
    let data = collect_mdp_data(&spec, 40, 5).unwrap();
    let f = Features::mdp(false);
    let mut cfg = ViperConfig::linear(1, 0.0, 0.01, 5);
    cfg.zero_zeta = true;
    let v = viper_fit(&data, &f, &cfg).unwrap();
    let g = lingreedy_fit(&data, &f, 0.01).unwrap();
    let l = linlcb_fit(&data, &f, 0.0, 0.01).unwrap();
    for h in 1..=6 {
        for s in 0..2 {
            let st = State::Discrete(s);
            let qv = v.q_values(h, &st).unwrap();
            assert_eq!(qv, g.q_values(h, &st).unwrap());
            assert_eq!(qv, l.q_values(h, &st).unwrap());
        }
    }
}

#[test]
fn lcb_bonus_examples() {
    // Logged action 0 only: its bonus is smaller than the unseen action's.
    let recs: Vec<_> = (0..5).map(|_| bandit_record(vec![1.0], 0, 0.5)).collect();
    let data = OfflineDataset::new(recs, 0).unwrap();
    let f = Features::embedding(1, 2, None);
    let p = linlcb_fit(&data, &f, 1.0, 1.0).unwrap();
    let StepValue::Lcb { cov, .. } = &p.steps[0] else { panic!("lcb step expected") };
    assert!(cov.quad_form(&[1.0, 0.0]).unwrap() < cov.quad_form(&[0.0, 1.0]).unwrap());

    // Without data the bonus of a unit feature is beta.
    let empty = StepValue::Lcb {
        params: vec![0.0, 0.0],
        bonus_params: vec![0.0, 0.0],
        cov: CovarianceAccumulator::new(2, 1.0, CovMode::Full).unwrap(),
        beta: 0.7,
        cap: 10.0,
    };
    let x = SparseVec::from_dense(&[0.0, 1.0]);
    assert!((empty.raw_value(&p.model, &x).unwrap() + 0.7).abs() < 1e-15);
}

#[test]
fn lingreedy_interpolates_and_breaks_ties_low() {
    let recs = vec![bandit_record(vec![1.0], 0, 0.2), bandit_record(vec![1.0], 1, 0.9), bandit_record(vec![1.0], 2, 0.4)];
    let data = OfflineDataset::new(recs, 0).unwrap();
    let f = Features::embedding(1, 3, None);
    let p = lingreedy_fit(&data, &f, 1e-8).unwrap();
    assert_eq!(p.act(1, &State::Vector(vec![1.0])).unwrap(), 1);

    let zero = vec![bandit_record(vec![1.0], 2, 0.0), bandit_record(vec![1.0], 1, 0.0)];
    let p = lingreedy_fit(&OfflineDataset::new(zero, 0).unwrap(), &f, 1.0).unwrap();
    assert_eq!(p.act(1, &State::Vector(vec![1.0])).unwrap(), 0);
}

#[test]
fn neural_baselines() {
    let task = BanditTask::synthetic(BanditKind::Exp, 4, 2, 10).unwrap();
    let data = collect_bandit_data(&task, 30, 10).unwrap();
    let f = Features::embedding(4, 2, None);
    let net = NetConfig { width: 32, gd: GdConfig { lambda: 1.0, eta: 0.05, iters: 100 }, seed: 10, reinit_per_step: false };
    let greedy = neuralgreedy_fit(&data, &f, &net).unwrap();
    let lcb0 = neuralcb_fit(&data, &f, &net, 0.0, CovMode::Full, BonusAt::Trained).unwrap();
    let diag = neuralcb_fit(&data, &f, &net, 1.0, CovMode::Diagonal, BonusAt::Init).unwrap();
    let mut rng = substream(10, Purpose::Misc, 0, 0);
    for _ in 0..50 {
        let st = State::Vector(unit_sphere(&mut rng, 4));
        assert_eq!(greedy.q_values(1, &st).unwrap(), lcb0.q_values(1, &st).unwrap());
        let qd = diag.q_values(1, &st).unwrap();
        let qg = greedy.q_values(1, &st).unwrap();
        assert!(qd.iter().zip(&qg).all(|(d, g)| d <= g));
    }

    let untrained = NetConfig { gd: GdConfig { iters: 0, ..net.gd }, ..net.clone() };
    let p = neuralgreedy_fit(&data, &f, &untrained).unwrap();
    let st = State::Vector(unit_sphere(&mut rng, 4));
    assert_eq!(p.q_values(1, &st).unwrap(), vec![0.0, 0.0]);
    assert_eq!(p.act(1, &st).unwrap(), 0);

    let again = neuralgreedy_fit(&data, &f, &net).unwrap();
    assert_eq!(again.to_json().unwrap(), greedy.to_json().unwrap());
}

#[test]
fn wide_greedy_net_tracks_linearized_ridge() {
    let task = BanditTask::synthetic(BanditKind::Cos, 4, 2, 11).unwrap();
    let data = collect_bandit_data(&task, 20, 11).unwrap();
    let f = Features::embedding(4, 2, None);
    let gd = GdConfig { lambda: 1.0, eta: 0.1, iters: 1000 };
    let net = NetConfig { width: 4096, gd, seed: 11, reinit_per_step: false };
    let p = neuralgreedy_fit(&data, &f, &net).unwrap();
    // Ridge on the initialization gradients: θ = Λ⁻¹ Σ g y, value <g, θ>.
    let w0 = viper_core::models::symmetric_init(4096, 8, 11).unwrap();
    let g = |x: &SparseVec| SparseVec::from_dense(&w0.init_grad(&x.to_dense()).unwrap());
    let sd = step_data(&data, 1, &f, &p.model, None).unwrap();
    let mut cov = CovarianceAccumulator::new(4096 * 8, 1.0, CovMode::Full).unwrap();
    let mut rhs = vec![0.0; 4096 * 8];
    for (x, y) in sd.inputs.iter().zip(&sd.targets) {
        let gx = g(x);
        cov.update_sparse(&gx).unwrap();
        gx.axpy_into(*y, &mut rhs);
    }
    let theta = cov.solve(&rhs).unwrap();
    let mut rng = substream(11, Purpose::Misc, 0, 0);
    for _ in 0..20 {
        let st = State::Vector(unit_sphere(&mut rng, 4));
        let q = p.q_values(1, &st).unwrap();
        for a in 0..2 {
            let x = f.feature(&st, a).unwrap();
            let lin = g(&x).dot_dense(&theta).clamp(0.0, 1.0);
            assert!((q[a] - lin).abs() < 0.05, "{} vs {lin}", q[a]);
        }
    }
}

#[test]
fn parallel_members_match_sequential() {
    let task = BanditTask::synthetic(BanditKind::Cos, 4, 3, 12).unwrap();
    let data = collect_bandit_data(&task, 40, 12).unwrap();
    let f = Features::embedding(4, 3, None);
    let cfg = ViperConfig::neural(16, 6, 0.5, GdConfig { lambda: 0.1, eta: 0.05, iters: 30 }, 12);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| viper_fit(&data, &f, &cfg).unwrap().to_json().unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn policies_round_trip_through_json() {
    let spec = make_hard_linear_mdp(3, 13).unwrap();
    let data = collect_mdp_data(&spec, 30, 13).unwrap();
    let f = Features::mdp(false);
    let fits = [
        viper_fit(&data, &f, &ViperConfig::linear(3, 0.5, 0.01, 13)).unwrap(),
        linlcb_fit(&data, &f, 0.5, 0.01).unwrap(),
        lingreedy_fit(&data, &f, 0.01).unwrap(),
    ];
    for p in &fits {
        let json = p.to_json().unwrap();
        let back = Policy::from_json(&json, None).unwrap();
        assert_eq!(back.algo, p.algo);
        for h in 1..=3 {
            for s in 0..2 {
                let st = State::Discrete(s);
                assert_eq!(back.q_values(h, &st).unwrap(), p.q_values(h, &st).unwrap());
                assert_eq!(greedy_action(&json, None, h, &st).unwrap(), p.act(h, &st).unwrap());
            }
        }
    }
    assert!(Policy::from_json("{}", None).is_err());
}

#[test]
fn greedy_choice_ignores_constant_shifts() {
    let q = [0.3, 0.9, 0.1, 0.9];
    let shifted: Vec<f64> = q.iter().map(|v| v + 5.0).collect();
    assert_eq!(viper_core::envs::argmax(&q), viper_core::envs::argmax(&shifted));
}

#[test]
fn invalid_configs_are_rejected() {
    let data = scalar_dataset();
    let f = Features::embedding(1, 1, None);
    assert!(viper_fit(&data, &f, &ViperConfig::linear(0, 0.1, 1.0, 0)).is_err());
    assert!(viper_fit(&data, &f, &ViperConfig::linear(1, -0.1, 1.0, 0)).is_err());
    assert!(linlcb_fit(&data, &f, -1.0, 1.0).is_err());
    let mut cfg = ViperConfig::linear(1, 0.1, 1.0, 0);
    cfg.sigma = vec![0.1, 0.2];
    assert!(viper_fit(&data, &f, &cfg).is_err());
}
