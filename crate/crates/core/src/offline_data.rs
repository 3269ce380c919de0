//! Offline datasets, behavior policies and per-step split buckets.

use std::ops::Range;
use std::path::Path;

use rand::Rng;

use crate::envs::{BanditTask, LinearMdpSpec, State};
use crate::error::{Result, ViperError};
use crate::kvtext::{fmt_real, fmt_reals, KvDoc};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: State,
    pub action: usize,
    pub reward: f64,
    /// `None` after the last step of a bandit round.
    pub next_state: Option<State>,
}

/// `K` trajectories of `H` transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub k: usize,
    pub horizon: usize,
    pub seed: u64,
    trajectories: Vec<Vec<Transition>>,
    split_enabled: bool,
    buckets: Vec<Range<usize>>,
}

/// Disjoint trajectory buckets `I_h` for `h = 1..=H`, returned 0-based and
/// stored at index `h - 1`: `I_h = [(H - h) K', (H - h + 1) K')` with
/// `K' = floor(K / H)`. The trailing `K mod H` trajectories are unused.
pub fn split_indices(k: usize, horizon: usize) -> Result<Vec<Range<usize>>> {
    if horizon == 0 || k < horizon {
        return Err(ViperError::config(format!("split needs K >= H >= 1, got K={k}, H={horizon}")));
    }
    let kp = k / horizon;
    Ok((1..=horizon).map(|h| (horizon - h) * kp..(horizon - h + 1) * kp).collect())
}

impl OfflineDataset {
    pub fn new(trajectories: Vec<Vec<Transition>>, seed: u64) -> Result<Self> {
        let k = trajectories.len();
        if k == 0 {
            return Err(ViperError::config("dataset needs at least one trajectory"));
        }
        let horizon = trajectories[0].len();
        if horizon == 0 || trajectories.iter().any(|t| t.len() != horizon) {
            return Err(ViperError::config("trajectories must share a nonzero horizon"));
        }
        Ok(OfflineDataset {
            k,
            horizon,
            seed,
            trajectories,
            split_enabled: false,
            buckets: vec![0..k; horizon],
        })
    }

    pub fn split_enabled(&self) -> bool {
        self.split_enabled
    }

    pub fn set_split(&mut self, enabled: bool) -> Result<()> {
        self.buckets = if enabled {
            split_indices(self.k, self.horizon)?
        } else {
            vec![0..self.k; self.horizon]
        };
        self.split_enabled = enabled;
        Ok(())
    }

    pub fn with_split(mut self, enabled: bool) -> Result<Self> {
        self.set_split(enabled)?;
        Ok(self)
    }

    /// Trajectory indices used at step `h` (1-based).
    pub fn bucket(&self, h: usize) -> Range<usize> {
        self.buckets[h - 1].clone()
    }

    pub fn trajectory(&self, k: usize) -> &[Transition] {
        &self.trajectories[k]
    }

    /// Transition of trajectory `k` at step `h` (1-based).
    pub fn at(&self, k: usize, h: usize) -> &Transition {
        &self.trajectories[k][h - 1]
    }

    /// The records regressed on at step `h`.
    pub fn step_records(&self, h: usize) -> impl Iterator<Item = &Transition> {
        self.bucket(h).map(move |k| self.at(k, h))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    /// Columnar text: a `key = value` header, an `@data` marker, then one
    /// whitespace-separated row `traj step state action reward next_state`
    /// per transition. States are `d:<id>`, `i:<index>` or
    /// `v:<x1>;<x2>;...`; a missing next state is `-`.
    pub fn to_text(&self) -> String {
        let mut doc = KvDoc::new();
        doc.set("K", self.k);
        doc.set("H", self.horizon);
        doc.set("seed", self.seed);
        doc.set("split", u8::from(self.split_enabled));
        let mut out = doc.to_text("viper dataset v1");
        out.push_str("# columns: traj step state action reward next_state\n@data\n");
        for (k, traj) in self.trajectories.iter().enumerate() {
            for (h0, t) in traj.iter().enumerate() {
                let next = t.next_state.as_ref().map_or_else(|| "-".to_string(), encode_state);
                out.push_str(&format!(
                    "{k} {} {} {} {} {next}\n",
                    h0 + 1,
                    encode_state(&t.state),
                    t.action,
                    fmt_real(t.reward)
                ));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (head, body) = text
            .split_once("@data\n")
            .ok_or_else(|| ViperError::parse("dataset lacks an @data section"))?;
        let doc = KvDoc::parse(head)?;
        let k: usize = doc.parse_value("K")?;
        let horizon: usize = doc.parse_value("H")?;
        let seed: u64 = doc.parse_value("seed")?;
        let split: u8 = doc.parse_value("split")?;
        let mut trajectories: Vec<Vec<Transition>> = (0..k).map(|_| Vec::with_capacity(horizon)).collect();
        for (n, line) in body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |what: &str| ViperError::parse(format!("data row {}: {what}", n + 1));
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 6 {
                return Err(bad("expected 6 columns"));
            }
            let traj: usize = cols[0].parse().map_err(|_| bad("traj"))?;
            let step: usize = cols[1].parse().map_err(|_| bad("step"))?;
            if traj >= k || step == 0 || step > horizon || trajectories[traj].len() + 1 != step {
                return Err(bad("rows out of order or out of range"));
            }
            trajectories[traj].push(Transition {
                state: decode_state(cols[2]).map_err(|_| bad("state"))?,
                action: cols[3].parse().map_err(|_| bad("action"))?,
                reward: cols[4].parse().map_err(|_| bad("reward"))?,
                next_state: match cols[5] {
                    "-" => None,
                    s => Some(decode_state(s).map_err(|_| bad("next state"))?),
                },
            });
        }
        let ds = OfflineDataset::new(trajectories, seed)?;
        if ds.horizon != horizon {
            return Err(ViperError::parse("row count does not match header"));
        }
        ds.with_split(split == 1)
    }
}

fn encode_state(s: &State) -> String {
    match s {
        State::Discrete(i) => format!("d:{i}"),
        State::Image(i) => format!("i:{i}"),
        State::Vector(v) => format!("v:{}", fmt_reals(v, ";")),
    }
}

fn decode_state(s: &str) -> std::result::Result<State, ()> {
    let (tag, rest) = s.split_once(':').ok_or(())?;
    match tag {
        "d" => rest.parse().map(State::Discrete).map_err(|_| ()),
        "i" => rest.parse().map(State::Image).map_err(|_| ()),
        "v" => rest
            .split(';')
            .map(|x| x.parse::<f64>().map_err(|_| ()))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(State::Vector),
        _ => Err(()),
    }
}

/// Roll out `K` trajectories of the behavior policy on the hard MDP. The
/// initial state is uniform over `{0, 1}`.
pub fn collect_mdp_data(spec: &LinearMdpSpec, k: usize, seed: u64) -> Result<OfflineDataset> {
    if k == 0 {
        return Err(ViperError::config("K must be at least 1"));
    }
    let mut rng = rng::substream(seed, Purpose::Data, 0, 0);
    let mut trajectories = Vec::with_capacity(k);
    for _ in 0..k {
        let mut s = rng.random_range(0..2usize);
        let mut traj = Vec::with_capacity(spec.horizon);
        for h in 1..=spec.horizon {
            let a = spec.sample_behavior(s, &mut rng)?;
            let r = spec.sample_reward(h, s, a, &mut rng)?;
            let next = spec.sample_next(h, s, a, &mut rng)?;
            traj.push(Transition {
                state: State::Discrete(s),
                action: a,
                reward: r,
                next_state: Some(State::Discrete(next)),
            });
            s = next;
        }
        trajectories.push(traj);
    }
    OfflineDataset::new(trajectories, seed)
}

/// Log `K` rounds of the `(1 - epsilon)`-optimal behavior policy: the
/// optimal action with probability `1 - epsilon`, otherwise a uniformly
/// drawn non-optimal one.
pub fn collect_bandit_data(task: &BanditTask, k: usize, seed: u64) -> Result<OfflineDataset> {
    if k == 0 {
        return Err(ViperError::config("K must be at least 1"));
    }
    if !(0.0..=1.0).contains(&task.epsilon) {
        return Err(ViperError::config("epsilon must lie in [0, 1]"));
    }
    let mut rng = rng::substream(seed, Purpose::Data, 1, 0);
    let mut trajectories = Vec::with_capacity(k);
    for _ in 0..k {
        let state = task.sample_state(&mut rng);
        let best = task.optimal_action(&state)?;
        let action = if rng.random::<f64>() < task.epsilon {
            let j = rng.random_range(0..task.n_actions - 1);
            if j >= best {
                j + 1
            } else {
                j
            }
        } else {
            best
        };
        let reward = task.bandit_reward(&state, action, &mut rng)?;
        trajectories.push(vec![Transition { state, action, reward, next_state: None }]);
    }
    OfflineDataset::new(trajectories, seed)
}
