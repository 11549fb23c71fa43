//! Small finite-horizon MDPs with exact solutions, used as ground truth for
//! the estimators.
//!
//! Observations are a one-hot encoding of the pair `(t, s)` (length
//! `horizon * n_states`); the observation after the last step is all zeros.
//! Actions are a single discrete index.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::replay::{Episode, Provenance, Transition};
use crate::select::{ActionSpace, QFunction, SelectError};
use crate::util::{mix_seed, rng_from_seed};

#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("invalid MDP: {0}")]
    Invalid(String),
    #[error("MDP file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transition[s][a][s']`
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`
    pub reward: Vec<Vec<f64>>,
    pub horizon: usize,
    pub start_state: usize,
}

impl TabularMdp {
    pub fn validate(&self) -> Result<(), MdpError> {
        let bad = |m: String| Err(MdpError::Invalid(m));
        if self.n_states == 0 || self.n_actions == 0 || self.horizon == 0 {
            return bad("sizes and horizon must be positive".into());
        }
        if self.start_state >= self.n_states {
            return bad(format!("start state {} out of range", self.start_state));
        }
        if self.transition.len() != self.n_states || self.reward.len() != self.n_states {
            return bad("tables must have one row per state".into());
        }
        for s in 0..self.n_states {
            if self.transition[s].len() != self.n_actions || self.reward[s].len() != self.n_actions {
                return bad(format!("state {s}: tables must have one entry per action"));
            }
            for a in 0..self.n_actions {
                let p = &self.transition[s][a];
                if p.len() != self.n_states || p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                    return bad(format!("P[{s}][{a}] is not a distribution over states"));
                }
                let total: f64 = p.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("P[{s}][{a}] sums to {total}"));
                }
                if !self.reward[s][a].is_finite() {
                    return bad(format!("R[{s}][{a}] is not finite"));
                }
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("MDP serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self, MdpError> {
        let mdp: TabularMdp = toml::from_str(text).map_err(|e| MdpError::Invalid(e.to_string()))?;
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MdpError> {
        let text = std::fs::read_to_string(path).map_err(|e| MdpError::Io(e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MdpError> {
        std::fs::write(path, self.to_toml()).map_err(|e| MdpError::Io(e.to_string()))
    }

    /// Dense random MDP with rewards uniform in `[0, 1)`.
    pub fn random(n_states: usize, n_actions: usize, horizon: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(mix_seed(seed, 0x7AB));
        let transition = (0..n_states)
            .map(|_| {
                (0..n_actions)
                    .map(|_| {
                        let w: Vec<f64> = (0..n_states).map(|_| rng.gen::<f64>() + 1e-3).collect();
                        normalise(w)
                    })
                    .collect()
            })
            .collect();
        let reward = (0..n_states)
            .map(|_| (0..n_actions).map(|_| rng.gen()).collect())
            .collect();
        TabularMdp {
            n_states,
            n_actions,
            transition,
            reward,
            horizon,
            start_state: 0,
        }
    }

    /// The 12-state, 3-action, horizon-6 verification MDP.
    ///
    /// States 0..8 are approach states; each action leads to a fixed
    /// successor. States 8..11 are graspable: one action pays 1 and moves to
    /// the absorbing sink 11, one fails into the sink with nothing, and one
    /// drops back to an approach state. Transitions are deterministic, so all
    /// randomness in the data comes from the behaviour policy; a uniform
    /// policy succeeds far less often than the optimal one.
    pub fn verification() -> Self {
        Self::verification_with_slip(0.0)
    }

    /// The verification MDP where every move out of a non-sink state lands
    /// on a uniformly random non-sink state with probability `slip`.
    pub fn verification_with_slip(slip: f64) -> Self {
        assert!((0.0..=1.0).contains(&slip));
        const N: usize = 12;
        const A: usize = 3;
        const SINK: usize = 11;
        let mut rng = rng_from_seed(0x0FF_6A45);
        let mut transition = vec![vec![vec![0.0; N]; A]; N];
        let mut reward = vec![vec![0.0; A]; N];
        for s in 0..8 {
            let succ = rand::seq::index::sample(&mut rng, SINK, A);
            for a in 0..A {
                transition[s][a][succ.index(a)] = 1.0;
            }
        }
        for s in 8..SINK {
            let roles = rand::seq::index::sample(&mut rng, A, A);
            let (good, fail, drop) = (roles.index(0), roles.index(1), roles.index(2));
            transition[s][good][SINK] = 1.0;
            reward[s][good] = 1.0;
            transition[s][fail][SINK] = 1.0;
            transition[s][drop][rng.gen_range(0..8)] = 1.0;
        }
        if slip > 0.0 {
            for row in transition.iter_mut().take(SINK) {
                for p in row.iter_mut() {
                    let mut q: Vec<f64> = p.iter().map(|x| (1.0 - slip) * x).collect();
                    for x in q.iter_mut().take(SINK) {
                        *x += slip / SINK as f64;
                    }
                    *p = normalise(q);
                }
            }
        }
        for a in 0..A {
            transition[SINK][a][SINK] = 1.0;
        }
        TabularMdp {
            n_states: N,
            n_actions: A,
            transition,
            reward,
            horizon: 6,
            start_state: 0,
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(self.n_actions)
    }

    pub fn obs_dim(&self) -> usize {
        self.horizon * self.n_states
    }

    /// One-hot encoding of `(t, s)`; `t == horizon` encodes as all zeros.
    pub fn encode(&self, t: usize, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.obs_dim()];
        if t < self.horizon {
            v[t * self.n_states + s] = 1.0;
        }
        v
    }

    /// Inverse of [`TabularMdp::encode`]; `None` for the terminal encoding.
    pub fn decode(&self, obs: &[f64]) -> Option<(usize, usize)> {
        obs.iter()
            .position(|&x| x == 1.0)
            .map(|i| (i / self.n_states, i % self.n_states))
    }

    /// Exact `V^π[t][s]` for `t in 0..=horizon` (the last row is zero).
    pub fn evaluate_policy<P>(&self, gamma: f64, policy: P) -> Vec<Vec<f64>>
    where
        P: Fn(usize, usize) -> Vec<f64>,
    {
        let mut v = vec![vec![0.0; self.n_states]; self.horizon + 1];
        for t in (0..self.horizon).rev() {
            for s in 0..self.n_states {
                let pi = policy(t, s);
                v[t][s] = (0..self.n_actions)
                    .map(|a| pi[a] * self.backup(s, a, gamma, &v[t + 1]))
                    .sum();
            }
        }
        v
    }

    /// Probability of being in state `s` at step `t` under `policy`.
    pub fn state_distribution<P>(&self, policy: P) -> Vec<Vec<f64>>
    where
        P: Fn(usize, usize) -> Vec<f64>,
    {
        let mut d = vec![vec![0.0; self.n_states]; self.horizon];
        d[0][self.start_state] = 1.0;
        for t in 1..self.horizon {
            for s in 0..self.n_states {
                let mass = d[t - 1][s];
                if mass == 0.0 {
                    continue;
                }
                let pi = policy(t - 1, s);
                for a in 0..self.n_actions {
                    for (s2, &p) in self.transition[s][a].iter().enumerate() {
                        d[t][s2] += mass * pi[a] * p;
                    }
                }
            }
        }
        d
    }

    fn backup(&self, s: usize, a: usize, gamma: f64, next_v: &[f64]) -> f64 {
        let expected: f64 = self.transition[s][a]
            .iter()
            .zip(next_v)
            .map(|(p, v)| p * v)
            .sum();
        self.reward[s][a] + gamma * expected
    }
}

fn normalise(w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    let mut p: Vec<f64> = w.iter().map(|x| x / total).collect();
    // push the rounding residue into the largest entry so rows sum to 1
    let residue = 1.0 - p.iter().sum::<f64>();
    let (imax, _) = p
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    p[imax] += residue;
    p
}

/// The uniform policy over `n_actions`.
pub fn uniform_policy(n_actions: usize) -> impl Fn(usize, usize) -> Vec<f64> {
    move |_, _| vec![1.0 / n_actions as f64; n_actions]
}

/// Optimal time-indexed action values.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleQ {
    /// `q_values[t][s][a]` for `t in 0..horizon`.
    pub q_values: Vec<Vec<Vec<f64>>>,
    pub gamma: f64,
    n_states: usize,
}

/// Finite-horizon backward induction with `V*(horizon) = 0`.
pub fn value_iteration(mdp: &TabularMdp, gamma: f64) -> OracleQ {
    let mut q = vec![vec![vec![0.0; mdp.n_actions]; mdp.n_states]; mdp.horizon];
    let mut next_v = vec![0.0; mdp.n_states];
    for t in (0..mdp.horizon).rev() {
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                q[t][s][a] = mdp.backup(s, a, gamma, &next_v);
            }
        }
        next_v = q[t].iter().map(|row| max(row)).collect();
    }
    OracleQ {
        q_values: q,
        gamma,
        n_states: mdp.n_states,
    }
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

impl OracleQ {
    pub fn horizon(&self) -> usize {
        self.q_values.len()
    }

    pub fn q(&self, t: usize, s: usize, a: usize) -> f64 {
        self.q_values[t][s][a]
    }

    /// `V*(t, s)`, zero past the horizon.
    pub fn v(&self, t: usize, s: usize) -> f64 {
        if t >= self.horizon() {
            0.0
        } else {
            max(&self.q_values[t][s])
        }
    }

    pub fn advantage(&self, t: usize, s: usize, a: usize) -> f64 {
        self.q(t, s, a) - self.v(t, s)
    }

    /// Optimal action, lowest index on ties.
    pub fn greedy_action(&self, t: usize, s: usize) -> usize {
        let row = &self.q_values[t][s];
        let mut best = 0;
        for a in 1..row.len() {
            if row[a] > row[best] {
                best = a;
            }
        }
        best
    }

    /// Deterministic optimal policy as a distribution.
    pub fn greedy_policy(&self) -> impl Fn(usize, usize) -> Vec<f64> + '_ {
        move |t, s| {
            let mut p = vec![0.0; self.q_values[t][s].len()];
            p[self.greedy_action(t, s)] = 1.0;
            p
        }
    }

    /// Largest absolute Bellman-optimality residual over all `(t, s, a)`.
    pub fn bellman_residual(&self, mdp: &TabularMdp) -> f64 {
        let mut worst: f64 = 0.0;
        for t in 0..self.horizon() {
            let next_v: Vec<f64> = (0..mdp.n_states).map(|s| self.v(t + 1, s)).collect();
            for s in 0..mdp.n_states {
                for a in 0..mdp.n_actions {
                    let r = self.q(t, s, a) - mdp.backup(s, a, self.gamma, &next_v);
                    worst = worst.max(r.abs());
                }
            }
        }
        worst
    }
}

/// Reads the one-hot observation encoding; terminal observations score 0.
impl QFunction for OracleQ {
    fn q_values(&self, obs: &[f64], actions: &[Vec<f64>]) -> Result<Vec<f64>, SelectError> {
        let ts = obs
            .iter()
            .position(|&x| x == 1.0)
            .map(|i| (i / self.n_states, i % self.n_states));
        Ok(actions
            .iter()
            .map(|a| match ts {
                Some((t, s)) => self.q(t, s, a[0] as usize),
                None => 0.0,
            })
            .collect())
    }
}

/// Samples an index from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last index with positive mass
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

/// One episode of exactly `horizon` steps under `policy`.
pub fn rollout<P>(mdp: &TabularMdp, policy: P, seed: u64) -> Episode
where
    P: Fn(usize, usize) -> Vec<f64>,
{
    rollout_with_id(mdp, policy, seed, 0, Provenance::InitialRandom)
}

pub fn rollout_with_id<P>(
    mdp: &TabularMdp,
    policy: P,
    seed: u64,
    episode_id: u64,
    provenance: Provenance,
) -> Episode
where
    P: Fn(usize, usize) -> Vec<f64>,
{
    let mut rng = rng_from_seed(seed);
    let mut s = mdp.start_state;
    let mut transitions = Vec::with_capacity(mdp.horizon);
    for t in 0..mdp.horizon {
        let a = sample_index(&policy(t, s), &mut rng);
        let s2 = sample_index(&mdp.transition[s][a], &mut rng);
        transitions.push(Transition {
            obs: mdp.encode(t, s).into(),
            timestep: t as u32 + 1,
            action: vec![a as f64],
            reward: mdp.reward[s][a],
            next_obs: mdp.encode(t + 1, s2).into(),
            done: t + 1 == mdp.horizon,
            gripper_pose: None,
            episode_id,
        });
        s = s2;
    }
    let outcome = transitions.last().map_or(0.0, |t| t.reward);
    Episode {
        id: episode_id,
        transitions,
        outcome,
        final_pose: None,
        object_seeds: Vec::new(),
        provenance,
    }
}

/// `Σ_{k} γ^k (V_k − γ V_{k+1})` along a trajectory of values with the value
/// after the last entry taken as zero. Telescopes to `values[0]`.
pub fn telescoped_value(values: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for (k, &v) in values.iter().enumerate() {
        let next = values.get(k + 1).copied().unwrap_or(0.0);
        total += discount * (v - gamma * next);
        discount *= gamma;
    }
    total
}
