//! Regression targets for the value-based estimators.

use rand::Rng;

use super::AlgoError;
use crate::env::Geometry;
use crate::nn::{Gradients, MlpNetwork};
use crate::replay::{Episode, Transition};
use crate::select::{maximize, ActionSpace, NetworkCritic, QFunction};
use crate::util::wrap_angle;

/// Pose-difference to action-unit conversion for synthetic actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseScales {
    pub dxy: f64,
    pub dz: f64,
    pub dphi: f64,
}

impl PoseScales {
    pub fn from_geometry(g: &Geometry) -> Self {
        PoseScales {
            dxy: g.dxy_scale(),
            dz: g.dz_scale,
            dphi: g.dphi_scale,
        }
    }
}

impl Default for PoseScales {
    fn default() -> Self {
        Self::from_geometry(&Geometry::default())
    }
}

/// A supervised example: observation, synthetic action, label.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedExample {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub label: f64,
}

/// For every transition, the action that would have moved the gripper
/// straight to the episode's final pose, labelled with the episode outcome.
pub fn supervised_targets(
    episodes: &[&Episode],
    scales: &PoseScales,
) -> Result<Vec<SupervisedExample>, AlgoError> {
    let mut out = Vec::new();
    for e in episodes {
        let end = e.final_pose.ok_or(AlgoError::MissingPose {
            episode: e.id,
            step: None,
        })?;
        for (i, t) in e.transitions.iter().enumerate() {
            let p = t.gripper_pose.ok_or(AlgoError::MissingPose {
                episode: e.id,
                step: Some(i),
            })?;
            let raw = [
                (end.x - p.x) / scales.dxy,
                (end.y - p.y) / scales.dxy,
                (end.z - p.z) / scales.dz,
                wrap_angle(end.phi - p.phi, 2.0 * std::f64::consts::PI) / scales.dphi,
            ];
            out.push(SupervisedExample {
                obs: t.obs.to_vec(),
                action: raw.iter().map(|x| x.clamp(-1.0, 1.0)).collect(),
                label: e.outcome,
            });
        }
    }
    Ok(out)
}

fn check_complete(e: &Episode) -> Result<(), AlgoError> {
    match e.transitions.last() {
        Some(t) if t.done => Ok(()),
        _ => Err(AlgoError::IncompleteEpisode(e.id)),
    }
}

/// Discounted returns `Σ_{t' ≥ t} γ^{t'-t} r_{t'}` for every step.
pub fn mc_targets(episode: &Episode, gamma: f64) -> Result<Vec<f64>, AlgoError> {
    check_complete(episode)?;
    let mut out = vec![0.0; episode.len()];
    let mut g = 0.0;
    for (i, t) in episode.transitions.iter().enumerate().rev() {
        g = t.reward + gamma * g;
        out[i] = g;
    }
    Ok(out)
}

/// `y_t = r_t + Σ_{t' > t} γ^{t'-t} (r_{t'} - ν Â_{t'})`.
///
/// Evaluated backwards with the same recurrence as [`mc_targets`], so that
/// `ν = 0` reproduces the plain returns bit for bit.
pub fn corrected_returns(rewards: &[f64], advantages: &[f64], gamma: f64, nu: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), advantages.len());
    let mut out = vec![0.0; rewards.len()];
    // tail = Σ_{t' > t} γ^{t'-t-1} (r_{t'} - ν Â_{t'})
    let mut tail = 0.0;
    for i in (0..rewards.len()).rev() {
        out[i] = rewards[i] + gamma * tail;
        tail = (rewards[i] - nu * advantages[i]) + gamma * tail;
    }
    out
}

/// `Â(s_t, a_t) = Q'(s_t, a_t) - max_a Q'(s_t, a)` along an episode.
pub fn advantages<Q, R>(
    episode: &Episode,
    q_target: &Q,
    space: &ActionSpace,
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>, AlgoError>
where
    Q: QFunction + ?Sized,
    R: Rng + ?Sized,
{
    episode
        .transitions
        .iter()
        .map(|t| {
            let taken = q_target.q_values(&t.obs, std::slice::from_ref(&t.action))?[0];
            let (_, best) = maximize(q_target, &t.obs, space, k, rng)?;
            Ok(taken - best)
        })
        .collect()
}

pub fn corr_mc_targets<Q, R>(
    episode: &Episode,
    q_target: &Q,
    space: &ActionSpace,
    gamma: f64,
    nu: f64,
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>, AlgoError>
where
    Q: QFunction + ?Sized,
    R: Rng + ?Sized,
{
    check_complete(episode)?;
    let adv = advantages(episode, q_target, space, k, rng)?;
    Ok(corrected_returns(&episode.rewards(), &adv, gamma, nu))
}

/// Double-Q targets: the online network picks `a'`, the lagged copy values it.
pub fn dql_targets<R: Rng + ?Sized>(
    batch: &[&Transition],
    q_net: &MlpNetwork,
    q_target: &MlpNetwork,
    space: &ActionSpace,
    gamma: f64,
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>, AlgoError> {
    let online = NetworkCritic::new(q_net, space);
    let lagged = NetworkCritic::new(q_target, space);
    batch
        .iter()
        .map(|t| {
            if t.done || gamma == 0.0 {
                return Ok(t.reward);
            }
            let (a_next, _) = maximize(&online, &t.next_obs, space, k, rng)?;
            let q_next = lagged.q_values(&t.next_obs, std::slice::from_ref(&a_next))?[0];
            Ok(t.reward + gamma * q_next)
        })
        .collect()
}

/// Linear anneal from 0 to 1 over `anneal_steps`.
pub fn nu_schedule(global_step: u64, anneal_steps: u64) -> f64 {
    assert!(anneal_steps > 0, "anneal_steps must be positive");
    (global_step as f64 / anneal_steps as f64).min(1.0)
}

/// Loss `½ mean (f(x_i) - y_i)²` over a scalar-output network and its gradient.
pub fn regression_gradients(
    net: &MlpNetwork,
    inputs: &[Vec<f64>],
    targets: &[f64],
) -> Result<(f64, Gradients), AlgoError> {
    let n = inputs.len() as f64;
    let mut grads = Gradients::zeros_like(net);
    let mut loss = 0.0;
    for (x, &y) in inputs.iter().zip(targets) {
        let trace = net.forward_trace(x)?;
        let err = trace.output()[0] - y;
        loss += 0.5 * err * err / n;
        net.backward_accumulate(&trace, &[err / n], &mut grads)?;
    }
    Ok((loss, grads))
}
