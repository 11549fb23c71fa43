//! Stochastic maximisation of Q-functions over actions, plus exploration noise.
//!
//! Continuous action spaces are boxes; the argmax is approximated either by
//! scoring `k` uniform samples ([`uniform_argmax`]) or by the cross-entropy
//! method ([`cem_argmax`]). Discrete spaces are small enough to enumerate, so
//! [`maximize`] and [`cem_argmax`] score every action exactly there.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{MlpNetwork, NnError};

#[derive(Debug, Error, PartialEq)]
pub enum SelectError {
    #[error("Q-function returned a non-finite value for action {action:?}")]
    NonFiniteQ { action: Vec<f64> },
    #[error("invalid CEM config: {0}")]
    InvalidCem(String),
    #[error("argmax needs at least one sample")]
    NoSamples,
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpace {
    /// Axis-aligned box `[low_i, high_i]`.
    Box { low: Vec<f64>, high: Vec<f64> },
    /// `n` actions, stored as a single index component.
    Discrete(usize),
}

impl ActionSpace {
    /// The grasping action space `[-1, 1]^4`.
    pub fn grasp() -> Self {
        ActionSpace::Box {
            low: vec![-1.0; 4],
            high: vec![1.0; 4],
        }
    }

    pub fn unit_box(dim: usize) -> Self {
        ActionSpace::Box {
            low: vec![-1.0; dim],
            high: vec![1.0; dim],
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete(_))
    }

    /// Length of a raw action vector.
    pub fn action_dim(&self) -> usize {
        match self {
            ActionSpace::Box { low, .. } => low.len(),
            ActionSpace::Discrete(_) => 1,
        }
    }

    /// Length of the network encoding of an action.
    pub fn encoded_dim(&self) -> usize {
        match self {
            ActionSpace::Box { low, .. } => low.len(),
            ActionSpace::Discrete(n) => *n,
        }
    }

    /// Network input encoding: identity for boxes, one-hot for discrete.
    pub fn encode(&self, action: &[f64]) -> Vec<f64> {
        match self {
            ActionSpace::Box { .. } => action.to_vec(),
            ActionSpace::Discrete(n) => {
                let mut v = vec![0.0; *n];
                v[action[0] as usize] = 1.0;
                v
            }
        }
    }

    pub fn range(&self, axis: usize) -> f64 {
        match self {
            ActionSpace::Box { low, high } => high[axis] - low[axis],
            ActionSpace::Discrete(n) => *n as f64,
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ActionSpace::Box { low, high } => low
                .iter()
                .zip(high)
                .map(|(&l, &h)| rng.gen_range(l..=h))
                .collect(),
            ActionSpace::Discrete(n) => vec![rng.gen_range(0..*n) as f64],
        }
    }

    pub fn clip(&self, action: &mut [f64]) {
        match self {
            ActionSpace::Box { low, high } => {
                for ((a, &l), &h) in action.iter_mut().zip(low).zip(high) {
                    *a = a.clamp(l, h);
                }
            }
            ActionSpace::Discrete(n) => {
                action[0] = action[0].round().clamp(0.0, (*n - 1) as f64);
            }
        }
    }

    pub fn contains(&self, action: &[f64]) -> bool {
        match self {
            ActionSpace::Box { low, high } => {
                action.len() == low.len()
                    && action
                        .iter()
                        .zip(low.iter().zip(high))
                        .all(|(a, (l, h))| a >= l && a <= h)
            }
            ActionSpace::Discrete(n) => {
                action.len() == 1 && action[0].fract() == 0.0 && action[0] >= 0.0 && action[0] < *n as f64
            }
        }
    }

    pub fn enumerate(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            ActionSpace::Discrete(n) => Some((0..*n).map(|a| vec![a as f64]).collect()),
            ActionSpace::Box { .. } => None,
        }
    }
}

/// Batched action scoring for one observation.
pub trait QFunction {
    fn q_values(&self, obs: &[f64], actions: &[Vec<f64>]) -> Result<Vec<f64>, SelectError>;
}

impl<F> QFunction for F
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    fn q_values(&self, obs: &[f64], actions: &[Vec<f64>]) -> Result<Vec<f64>, SelectError> {
        Ok(actions.iter().map(|a| self(obs, a)).collect())
    }
}

/// A critic network over `[obs ; encode(action)]` viewed as a Q-function.
#[derive(Debug, Clone, Copy)]
pub struct NetworkCritic<'a> {
    pub net: &'a MlpNetwork,
    pub space: &'a ActionSpace,
}

impl<'a> NetworkCritic<'a> {
    pub fn new(net: &'a MlpNetwork, space: &'a ActionSpace) -> Self {
        NetworkCritic { net, space }
    }

    pub fn input(&self, obs: &[f64], action: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(obs.len() + self.space.encoded_dim());
        x.extend_from_slice(obs);
        x.extend(self.space.encode(action));
        x
    }
}

impl QFunction for NetworkCritic<'_> {
    fn q_values(&self, obs: &[f64], actions: &[Vec<f64>]) -> Result<Vec<f64>, SelectError> {
        let cache = self.net.prefix_cache(obs)?;
        actions
            .iter()
            .map(|a| Ok(self.net.forward_with_prefix(&cache, &self.space.encode(a))?[0]))
            .collect()
    }
}

fn argmax_checked(actions: &[Vec<f64>], values: &[f64]) -> Result<usize, SelectError> {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(SelectError::NonFiniteQ {
                action: actions[i].clone(),
            });
        }
        // strict comparison keeps the lowest index on ties
        if v > values[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Scores `k` uniformly sampled actions and returns the best one.
pub fn uniform_argmax<Q, R>(
    q: &Q,
    obs: &[f64],
    space: &ActionSpace,
    k: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, f64), SelectError>
where
    Q: QFunction + ?Sized,
    R: Rng + ?Sized,
{
    if k == 0 {
        return Err(SelectError::NoSamples);
    }
    let actions: Vec<Vec<f64>> = (0..k).map(|_| space.sample_uniform(rng)).collect();
    let values = q.q_values(obs, &actions)?;
    let best = argmax_checked(&actions, &values)?;
    Ok((actions[best].clone(), values[best]))
}

/// Exact maximum over a discrete space.
pub fn exact_argmax<Q: QFunction + ?Sized>(
    q: &Q,
    obs: &[f64],
    space: &ActionSpace,
) -> Result<(Vec<f64>, f64), SelectError> {
    let actions = space.enumerate().ok_or(SelectError::NoSamples)?;
    let values = q.q_values(obs, &actions)?;
    let best = argmax_checked(&actions, &values)?;
    Ok((actions[best].clone(), values[best]))
}

/// The maximiser used inside learning targets: exact for discrete spaces,
/// `k`-sample uniform search for boxes.
pub fn maximize<Q, R>(
    q: &Q,
    obs: &[f64],
    space: &ActionSpace,
    k: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, f64), SelectError>
where
    Q: QFunction + ?Sized,
    R: Rng + ?Sized,
{
    if space.is_discrete() {
        exact_argmax(q, obs, space)
    } else {
        uniform_argmax(q, obs, space, k, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CemConfig {
    pub iterations: usize,
    pub population: usize,
    pub elite_count: usize,
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig {
            iterations: 3,
            population: 64,
            elite_count: 6,
        }
    }
}

pub const CEM_VARIANCE_FLOOR: f64 = 1e-6;

impl CemConfig {
    pub fn validate(&self) -> Result<(), SelectError> {
        if self.iterations == 0 {
            return Err(SelectError::InvalidCem("iterations must be positive".into()));
        }
        if self.elite_count == 0 || self.elite_count >= self.population {
            return Err(SelectError::InvalidCem(format!(
                "need 0 < elite_count ({}) < population ({})",
                self.elite_count, self.population
            )));
        }
        Ok(())
    }
}

/// Result of a CEM search, with the best value after each iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CemOutcome {
    pub action: Vec<f64>,
    pub value: f64,
    pub best_per_iteration: Vec<f64>,
}

/// Cross-entropy method over a box: iteration 0 samples uniformly, later
/// iterations sample a diagonal Gaussian fitted to the previous elites
/// (clipped to bounds). Returns the best action seen in any iteration.
///
/// Over a discrete space the search is replaced by exact enumeration.
pub fn cem_argmax<Q, R>(
    q: &Q,
    obs: &[f64],
    space: &ActionSpace,
    cfg: &CemConfig,
    rng: &mut R,
) -> Result<CemOutcome, SelectError>
where
    Q: QFunction + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    if space.is_discrete() {
        let (action, value) = exact_argmax(q, obs, space)?;
        return Ok(CemOutcome {
            action,
            value,
            best_per_iteration: vec![value],
        });
    }
    let dim = space.action_dim();
    let mut mean = vec![0.0; dim];
    let mut std = vec![0.0; dim];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let samples: Vec<Vec<f64>> = (0..cfg.population)
            .map(|_| {
                if it == 0 {
                    space.sample_uniform(rng)
                } else {
                    let mut a: Vec<f64> = (0..dim)
                        .map(|d| {
                            Normal::new(mean[d], std[d])
                                .expect("std is floored and finite")
                                .sample(rng)
                        })
                        .collect();
                    space.clip(&mut a);
                    a
                }
            })
            .collect();
        let values = q.q_values(obs, &samples)?;
        let top = argmax_checked(&samples, &values)?;
        if best.as_ref().map_or(true, |(_, v)| values[top] > *v) {
            best = Some((samples[top].clone(), values[top]));
        }
        trace.push(best.as_ref().unwrap().1);

        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        let elites = &order[..cfg.elite_count];
        for d in 0..dim {
            let m = elites.iter().map(|&i| samples[i][d]).sum::<f64>() / elites.len() as f64;
            let var = elites
                .iter()
                .map(|&i| (samples[i][d] - m).powi(2))
                .sum::<f64>()
                / elites.len() as f64;
            mean[d] = m;
            std[d] = var.max(CEM_VARIANCE_FLOOR).sqrt();
        }
    }
    let (action, value) = best.expect("at least one iteration");
    Ok(CemOutcome {
        action,
        value,
        best_per_iteration: trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    GaussianOnAction,
}

/// Linearly decaying exploration noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub duration_steps: u64,
    pub initial_scale: f64,
    pub kind: NoiseKind,
}

impl ExplorationSchedule {
    pub fn new(duration_steps: u64, initial_scale: f64) -> Self {
        assert!(duration_steps > 0);
        ExplorationSchedule {
            duration_steps,
            initial_scale,
            kind: NoiseKind::GaussianOnAction,
        }
    }

    pub fn scale(&self, step: u64) -> f64 {
        self.initial_scale * (1.0 - step as f64 / self.duration_steps as f64).max(0.0)
    }
}

/// Adds exploration noise to `action`.
///
/// Boxes get per-axis Gaussian noise with standard deviation
/// `scale(step) * axis_range`, then clipping. Discrete actions are replaced
/// by a uniform draw with probability `min(1, scale(step))`.
pub fn explore<R: Rng + ?Sized>(
    action: &[f64],
    global_step: u64,
    schedule: &ExplorationSchedule,
    space: &ActionSpace,
    rng: &mut R,
) -> Vec<f64> {
    let scale = schedule.scale(global_step);
    if scale <= 0.0 {
        return action.to_vec();
    }
    match space {
        ActionSpace::Box { .. } => {
            let mut out: Vec<f64> = action
                .iter()
                .enumerate()
                .map(|(d, &a)| {
                    let sigma = scale * space.range(d);
                    a + Normal::new(0.0, sigma).expect("positive sigma").sample(rng)
                })
                .collect();
            space.clip(&mut out);
            out
        }
        ActionSpace::Discrete(_) => {
            if rng.gen::<f64>() < scale.min(1.0) {
                space.sample_uniform(rng)
            } else {
                action.to_vec()
            }
        }
    }
}
