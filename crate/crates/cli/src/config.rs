//! Experiment configuration: flat `key = value` text, lists comma-separated.
//!
//! Keys (all optional; defaults depend on `kind`):
//!
//! | key | meaning |
//! |---|---|
//! | `kind` | `linear-mdp`, `bandit-cos`, `bandit-exp`, `bandit-mnist`, `timing`, `law-tests` (required) |
//! | `algos` | learners: `lingreedy`, `linlcb`, `lin-viper`, `neuralgreedy`, `neuralcb`, `neuralcb-diag`, `neural-viper` |
//! | `K`, `H`, `m`, `M` | trajectories, horizon, network width, ensemble size |
//! | `sigma`, `beta`, `lambda`, `eta`, `J`, `psi`, `epsilon` | perturbation scale, LCB multiplier, ridge, step size, GD iterations, cutoff margin, behavior suboptimality |
//! | `seeds` | list, or a half-open range `a..b` |
//! | `out` | output directory |
//! | `dim`, `actions` | synthetic bandit context dimension and action count |
//! | `reward_noise` | reward noise std on the hard MDP |
//! | `eval_states` | held-out states per bandit evaluation |
//! | `timing_columns` | fill the wall-clock CSV columns (breaks byte-for-byte reproducibility) |
//! | `timing_repeats` | timed selections per cell |
//! | `split` | enable data splitting |
//! | `bonus_at` | `trained` or `init`: where NeuraLCB takes bonus gradients |
//! | `mnist_images`, `mnist_labels` | IDX files for `bandit-mnist` |
//! | `law_draws`, `law_trials`, `delta` | law-test sample counts and confidence |

use std::path::PathBuf;

use viper_core::kvtext::{fmt_real, KvDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    LinearMdp,
    BanditCos,
    BanditExp,
    BanditMnist,
    Timing,
    LawTests,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::LinearMdp => "linear-mdp",
            Kind::BanditCos => "bandit-cos",
            Kind::BanditExp => "bandit-exp",
            Kind::BanditMnist => "bandit-mnist",
            Kind::Timing => "timing",
            Kind::LawTests => "law-tests",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Kind::LinearMdp, Kind::BanditCos, Kind::BanditExp, Kind::BanditMnist, Kind::Timing, Kind::LawTests]
            .into_iter()
            .find(|k| k.name() == s)
    }

    pub fn is_bandit(self) -> bool {
        matches!(self, Kind::BanditCos | Kind::BanditExp | Kind::BanditMnist | Kind::Timing)
    }
}

pub const ALGOS: [&str; 7] =
    ["lingreedy", "linlcb", "lin-viper", "neuralgreedy", "neuralcb", "neuralcb-diag", "neural-viper"];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub algos: Vec<String>,
    pub k: Vec<usize>,
    pub h: Vec<usize>,
    pub m: Vec<usize>,
    pub members: Vec<usize>,
    pub sigma: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    pub iters: Vec<usize>,
    pub psi: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub dim: usize,
    pub actions: usize,
    pub reward_noise: f64,
    pub eval_states: usize,
    pub timing_columns: bool,
    pub timing_repeats: usize,
    pub split: bool,
    pub bonus_at: String,
    pub mnist_images: Option<PathBuf>,
    pub mnist_labels: Option<PathBuf>,
    pub law_draws: usize,
    pub law_trials: usize,
    pub delta: f64,
}

const NEURAL_GRID: [f64; 6] = [0.001, 0.01, 0.1, 1.0, 5.0, 10.0];

impl ExperimentConfig {
    pub fn defaults(kind: Kind) -> Self {
        let mut c = ExperimentConfig {
            kind,
            algos: vec!["lingreedy".into(), "linlcb".into(), "lin-viper".into()],
            k: (1..=10).map(|i| 100 * i).collect(),
            h: vec![20, 30, 50, 80],
            m: vec![64],
            members: vec![1, 2, 10, 20],
            sigma: vec![0.0, 0.1, 0.5, 1.0, 2.0],
            beta: vec![0.1, 0.5, 1.0, 2.0],
            lambda: vec![0.01],
            eta: vec![0.05],
            iters: vec![300],
            psi: vec![0.0],
            epsilon: vec![0.5],
            seeds: (0..30).collect(),
            out: PathBuf::from("out"),
            dim: 16,
            actions: 10,
            reward_noise: 2.0,
            eval_states: 1000,
            timing_columns: false,
            timing_repeats: 200,
            split: false,
            bonus_at: "trained".into(),
            mnist_images: None,
            mnist_labels: None,
            law_draws: 100_000,
            law_trials: 10_000,
            delta: 0.1,
        };
        match kind {
            Kind::LinearMdp => {}
            Kind::BanditCos | Kind::BanditExp | Kind::BanditMnist => {
                c.algos = ALGOS.iter().map(|s| s.to_string()).collect();
                if kind == Kind::BanditMnist {
                    c.algos.retain(|a| a != "neuralcb");
                }
                c.k = vec![500, 1000, 2000];
                c.h = vec![1];
                c.members = vec![1, 10, 20];
                c.sigma = NEURAL_GRID.to_vec();
                c.beta = NEURAL_GRID.to_vec();
                c.seeds = (0..5).collect();
            }
            Kind::Timing => {
                c.algos = vec!["neural-viper".into(), "neuralcb".into()];
                c.k = vec![100, 1000];
                c.h = vec![1];
                c.m = vec![64, 512];
                c.members = vec![10];
                c.sigma = vec![0.1];
                c.beta = vec![0.1];
                c.seeds = vec![0];
                c.timing_columns = true;
            }
            Kind::LawTests => {
                c.algos = vec![];
                c.k = vec![20];
                c.h = vec![1];
                c.sigma = vec![0.5, 1.0];
                c.lambda = vec![1.0];
                c.seeds = vec![0];
                c.dim = 3;
                c.actions = 50;
            }
        }
        c
    }

    /// Parse and validate, reporting every offending field.
    pub fn parse(text: &str) -> Result<Self, Vec<String>> {
        let doc = KvDoc::parse(text).map_err(|e| vec![e.to_string()])?;
        Self::from_doc(&doc)
    }

    pub fn from_doc(doc: &KvDoc) -> Result<Self, Vec<String>> {
        let mut errs = Vec::new();
        let kind = match doc.get("kind") {
            None => return Err(vec!["field `kind`: missing".into()]),
            Some(k) => match Kind::from_name(k) {
                Some(k) => k,
                None => return Err(vec![format!("field `kind`: unknown experiment kind `{k}`")]),
            },
        };
        let mut c = Self::defaults(kind);
        for key in doc.keys() {
            if !KEYS.contains(&key) {
                errs.push(format!("field `{key}`: unknown key"));
            }
        }
        let get = |k: &str| doc.get(k);
        list(&mut errs, get("K"), "K", &mut c.k);
        list(&mut errs, get("H"), "H", &mut c.h);
        list(&mut errs, get("m"), "m", &mut c.m);
        list(&mut errs, get("M"), "M", &mut c.members);
        list(&mut errs, get("sigma"), "sigma", &mut c.sigma);
        list(&mut errs, get("beta"), "beta", &mut c.beta);
        list(&mut errs, get("lambda"), "lambda", &mut c.lambda);
        list(&mut errs, get("eta"), "eta", &mut c.eta);
        list(&mut errs, get("J"), "J", &mut c.iters);
        list(&mut errs, get("psi"), "psi", &mut c.psi);
        list(&mut errs, get("epsilon"), "epsilon", &mut c.epsilon);
        if let Some(v) = get("algos") {
            c.algos = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        }
        if let Some(v) = get("seeds") {
            match parse_seeds(v) {
                Ok(s) => c.seeds = s,
                Err(e) => errs.push(format!("field `seeds`: {e}")),
            }
        }
        if let Some(v) = get("out") {
            c.out = PathBuf::from(v);
        }
        scalar(&mut errs, get("dim"), "dim", &mut c.dim);
        scalar(&mut errs, get("actions"), "actions", &mut c.actions);
        scalar(&mut errs, get("reward_noise"), "reward_noise", &mut c.reward_noise);
        scalar(&mut errs, get("eval_states"), "eval_states", &mut c.eval_states);
        scalar(&mut errs, get("timing_columns"), "timing_columns", &mut c.timing_columns);
        scalar(&mut errs, get("timing_repeats"), "timing_repeats", &mut c.timing_repeats);
        scalar(&mut errs, get("split"), "split", &mut c.split);
        scalar(&mut errs, get("law_draws"), "law_draws", &mut c.law_draws);
        scalar(&mut errs, get("law_trials"), "law_trials", &mut c.law_trials);
        scalar(&mut errs, get("delta"), "delta", &mut c.delta);
        if let Some(v) = get("bonus_at") {
            c.bonus_at = v.to_string();
        }
        c.mnist_images = get("mnist_images").map(PathBuf::from);
        c.mnist_labels = get("mnist_labels").map(PathBuf::from);
        errs.extend(c.validate());
        if errs.is_empty() {
            Ok(c)
        } else {
            Err(errs)
        }
    }

    /// Field-level diagnostics; empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        let mut nonempty = |name: &str, len: usize| {
            if len == 0 {
                e.push(format!("field `{name}`: grid must be nonempty"));
            }
        };
        nonempty("K", self.k.len());
        nonempty("H", self.h.len());
        nonempty("m", self.m.len());
        nonempty("M", self.members.len());
        nonempty("sigma", self.sigma.len());
        nonempty("beta", self.beta.len());
        nonempty("lambda", self.lambda.len());
        nonempty("eta", self.eta.len());
        nonempty("J", self.iters.len());
        nonempty("psi", self.psi.len());
        nonempty("epsilon", self.epsilon.len());
        nonempty("seeds", self.seeds.len());
        if self.kind != Kind::LawTests {
            nonempty("algos", self.algos.len());
        }
        let mut bad = |name: &str, ok: bool, what: &str| {
            if !ok {
                e.push(format!("field `{name}`: {what}"));
            }
        };
        for a in &self.algos {
            bad("algos", ALGOS.contains(&a.as_str()), &format!("unknown algorithm `{a}`"));
        }
        bad("K", self.k.iter().all(|&k| k >= 1), "every K must be >= 1");
        bad("H", self.h.iter().all(|&h| h >= 1), "every H must be >= 1");
        if self.kind.is_bandit() {
            bad("H", self.h == [1], "bandit experiments have H = 1");
        }
        bad("m", self.m.iter().all(|&m| m >= 2 && m % 2 == 0), "every width must be even and >= 2");
        bad("M", self.members.iter().all(|&m| m >= 1), "every M must be >= 1");
        bad("sigma", self.sigma.iter().all(|&s| s >= 0.0 && s.is_finite()), "every sigma must be finite and >= 0");
        bad("beta", self.beta.iter().all(|&b| b >= 0.0 && b.is_finite()), "every beta must be finite and >= 0");
        bad("lambda", self.lambda.iter().all(|&l| l > 0.0 && l.is_finite()), "every lambda must be > 0");
        bad("eta", self.eta.iter().all(|&x| x > 0.0 && x.is_finite()), "every eta must be > 0");
        bad("psi", self.psi.iter().all(|&x| x >= 0.0 && x.is_finite()), "every psi must be >= 0");
        bad("epsilon", self.epsilon.iter().all(|&x| (0.0..=1.0).contains(&x)), "every epsilon must lie in [0, 1]");
        bad("dim", self.dim >= 1, "must be >= 1");
        bad("actions", self.actions >= 2, "must be >= 2");
        bad("reward_noise", self.reward_noise >= 0.0 && self.reward_noise.is_finite(), "must be finite and >= 0");
        bad("eval_states", self.eval_states >= 1, "must be >= 1");
        bad("timing_repeats", self.timing_repeats >= 1, "must be >= 1");
        bad("bonus_at", self.bonus_at == "trained" || self.bonus_at == "init", "must be `trained` or `init`");
        bad("law_draws", self.law_draws >= 2, "must be >= 2");
        bad("law_trials", self.law_trials >= 1, "must be >= 1");
        bad("delta", self.delta > 0.0 && self.delta < 1.0, "must lie in (0, 1)");
        if self.kind == Kind::BanditMnist {
            bad("mnist_images", self.mnist_images.is_some(), "required for bandit-mnist");
            bad("mnist_labels", self.mnist_labels.is_some(), "required for bandit-mnist");
        }
        e
    }

    /// Normalized echo of the configuration, as parseable text.
    pub fn to_kv(&self) -> KvDoc {
        fn ints<T: ToString>(v: &[T]) -> String {
            v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
        }
        fn reals(v: &[f64]) -> String {
            v.iter().map(|x| fmt_real(*x)).collect::<Vec<_>>().join(",")
        }
        let mut d = KvDoc::new();
        d.set("kind", self.kind.name());
        d.set("algos", self.algos.join(","));
        d.set("K", ints(&self.k));
        d.set("H", ints(&self.h));
        d.set("m", ints(&self.m));
        d.set("M", ints(&self.members));
        d.set("sigma", reals(&self.sigma));
        d.set("beta", reals(&self.beta));
        d.set("lambda", reals(&self.lambda));
        d.set("eta", reals(&self.eta));
        d.set("J", ints(&self.iters));
        d.set("psi", reals(&self.psi));
        d.set("epsilon", reals(&self.epsilon));
        d.set("seeds", ints(&self.seeds));
        d.set("out", self.out.display());
        d.set("dim", self.dim);
        d.set("actions", self.actions);
        d.set_real("reward_noise", self.reward_noise);
        d.set("eval_states", self.eval_states);
        d.set("timing_columns", self.timing_columns);
        d.set("timing_repeats", self.timing_repeats);
        d.set("split", self.split);
        d.set("bonus_at", &self.bonus_at);
        if let Some(p) = &self.mnist_images {
            d.set("mnist_images", p.display());
        }
        if let Some(p) = &self.mnist_labels {
            d.set("mnist_labels", p.display());
        }
        d.set("law_draws", self.law_draws);
        d.set("law_trials", self.law_trials);
        d.set_real("delta", self.delta);
        d
    }
}

const KEYS: [&str; 28] = [
    "kind", "algos", "K", "H", "m", "M", "sigma", "beta", "lambda", "eta", "J", "psi", "epsilon", "seeds", "out",
    "dim", "actions", "reward_noise", "eval_states", "timing_columns", "timing_repeats", "split", "bonus_at",
    "mnist_images", "mnist_labels", "law_draws", "law_trials", "delta",
];

fn list<T: std::str::FromStr>(errs: &mut Vec<String>, raw: Option<&str>, name: &str, out: &mut Vec<T>) {
    let Some(raw) = raw else { return };
    match viper_core::kvtext::parse_list(raw) {
        Ok(v) => *out = v,
        Err(e) => errs.push(format!("field `{name}`: {e}")),
    }
}

fn scalar<T: std::str::FromStr>(errs: &mut Vec<String>, raw: Option<&str>, name: &str, out: &mut T) {
    let Some(raw) = raw else { return };
    match raw.parse() {
        Ok(v) => *out = v,
        Err(_) => errs.push(format!("field `{name}`: cannot parse `{raw}`")),
    }
}

/// `0..30` (half-open) or `1,2,5`.
pub fn parse_seeds(raw: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = raw.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad range start `{a}`"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad range end `{b}`"))?;
        if b <= a {
            return Err(format!("empty seed range {a}..{b}"));
        }
        return Ok((a..b).collect());
    }
    viper_core::kvtext::parse_list(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_kind() {
        let c = ExperimentConfig::defaults(Kind::LinearMdp);
        assert_eq!(c.sigma, [0.0, 0.1, 0.5, 1.0, 2.0]);
        assert_eq!(c.beta, [0.1, 0.5, 1.0, 2.0]);
        assert_eq!(c.lambda, [0.01]);
        assert_eq!(c.seeds.len(), 30);
        let b = ExperimentConfig::defaults(Kind::BanditCos);
        assert_eq!(b.members, [1, 10, 20]);
        assert_eq!(b.sigma.len(), 6);
        assert!(ExperimentConfig::defaults(Kind::LawTests).validate().is_empty());
    }

    #[test]
    fn field_level_diagnostics() {
        let errs = ExperimentConfig::parse("kind = linear-mdp\nlambda = 0\nM = 0\nbogus = 1\nalgos = foo").unwrap_err();
        let joined = errs.join("\n");
        for f in ["`lambda`", "`M`", "`bogus`", "`algos`"] {
            assert!(joined.contains(f), "{joined}");
        }
        assert!(ExperimentConfig::parse("K = 5").is_err());
        assert!(ExperimentConfig::parse("kind = nope").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c = ExperimentConfig::parse("kind = bandit-cos\nseeds = 3..6\nsigma = 0.1, 1\nK = 50").unwrap();
        assert_eq!(c.seeds, [3, 4, 5]);
        let back = ExperimentConfig::from_doc(&c.to_kv()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn seeds_syntax() {
        assert_eq!(parse_seeds("0..3").unwrap(), [0, 1, 2]);
        assert_eq!(parse_seeds("7, 9").unwrap(), [7, 9]);
        assert!(parse_seeds("3..3").is_err());
    }
}
