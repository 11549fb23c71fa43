//! Path consistency with a diagonal Gaussian policy.

use std::f64::consts::PI;

use super::ddpg::actor_action;
use super::AlgoError;
use crate::nn::{Gradients, MlpNetwork};
use crate::replay::Episode;
use crate::select::ActionSpace;

pub const LOG_STD_FLOOR: f64 = -6.907_755_278_982_137; // ln(1e-3)

/// `log N(a; μ, diag(exp(log_std))²)`.
pub fn gaussian_log_density(a: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    a.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&a, &m), &ls)| {
            let z = (a - m) * (-ls).exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// Consistency residuals for every window start `i`, window `[i, min(i+d, L))`:
///
/// `V(s_i) - γ^{e-i} V(s_e) - Σ_{j=i}^{e-1} γ^{j-i} (r_j - τ·logratio_j)`,
/// with `V(s_L) = 0`.
pub fn pcl_residuals(
    values: &[f64],
    rewards: &[f64],
    logratios: &[f64],
    gamma: f64,
    tau: f64,
    d: usize,
) -> Vec<f64> {
    let len = values.len();
    (0..len)
        .map(|i| {
            let end = (i + d).min(len);
            let mut disc = 1.0;
            let mut path = 0.0;
            for j in i..end {
                path += disc * (rewards[j] - tau * logratios[j]);
                disc *= gamma;
            }
            let tail = if end < len { disc * values[end] } else { 0.0 };
            values[i] - tail - path
        })
        .collect()
}

/// The Gaussian policy: a bounded mean network plus a learned log-std vector.
pub struct GaussianPolicyRef<'a> {
    pub mean: &'a MlpNetwork,
    pub log_std: &'a [f64],
}

pub struct PclGradients {
    pub loss: f64,
    pub value: Gradients,
    pub actor: Gradients,
    pub log_std: Vec<f64>,
}

/// Loss `½ mean_w R_w²` over all windows of all episodes and its gradients
/// with respect to the value net, the policy mean net and the log-stds.
/// The prior policy (Trust-PCL) is treated as a constant.
#[allow(clippy::too_many_arguments)]
pub fn pcl_gradients(
    episodes: &[&Episode],
    value_net: &MlpNetwork,
    policy: GaussianPolicyRef<'_>,
    prior: Option<GaussianPolicyRef<'_>>,
    space: &ActionSpace,
    gamma: f64,
    tau: f64,
    d: usize,
) -> Result<PclGradients, AlgoError> {
    let (low, high) = match space {
        ActionSpace::Box { low, high } => (low, high),
        ActionSpace::Discrete(_) => return Err(AlgoError::UnsupportedSpace),
    };
    let n_windows: usize = episodes.iter().map(|e| e.len()).sum();
    let w = n_windows as f64;
    let mut out = PclGradients {
        loss: 0.0,
        value: Gradients::zeros_like(value_net),
        actor: Gradients::zeros_like(policy.mean),
        log_std: vec![0.0; policy.log_std.len()],
    };
    for e in episodes {
        let len = e.len();
        let v_traces = e
            .transitions
            .iter()
            .map(|t| value_net.forward_trace(&t.obs))
            .collect::<Result<Vec<_>, _>>()?;
        let a_traces = e
            .transitions
            .iter()
            .map(|t| policy.mean.forward_trace(&t.obs))
            .collect::<Result<Vec<_>, _>>()?;
        let values: Vec<f64> = v_traces.iter().map(|t| t.output()[0]).collect();
        let means: Vec<Vec<f64>> = a_traces
            .iter()
            .map(|t| {
                t.output()
                    .iter()
                    .zip(low.iter().zip(high))
                    .map(|(y, (l, h))| l + (h - l) * y)
                    .collect()
            })
            .collect();
        let mut logratios = Vec::with_capacity(len);
        for (t, m) in e.transitions.iter().zip(&means) {
            let mut lr = gaussian_log_density(&t.action, m, policy.log_std);
            if let Some(p) = &prior {
                let pm = actor_action(p.mean, &t.obs, space)?;
                lr -= gaussian_log_density(&t.action, &pm, p.log_std);
            }
            logratios.push(lr);
        }
        let rewards = e.rewards();
        let residuals = pcl_residuals(&values, &rewards, &logratios, gamma, tau, d);

        let mut coef_v = vec![0.0; len];
        let mut coef_logpi = vec![0.0; len];
        for (i, &r) in residuals.iter().enumerate() {
            out.loss += 0.5 * r * r / w;
            let g = r / w;
            let end = (i + d).min(len);
            coef_v[i] += g;
            if end < len {
                coef_v[end] -= gamma.powi((end - i) as i32) * g;
            }
            let mut disc = 1.0;
            for c in &mut coef_logpi[i..end] {
                *c += g * tau * disc;
                disc *= gamma;
            }
        }
        for j in 0..len {
            if coef_v[j] != 0.0 {
                value_net.backward_accumulate(&v_traces[j], &[coef_v[j]], &mut out.value)?;
            }
            if coef_logpi[j] == 0.0 {
                continue;
            }
            let a = &e.transitions[j].action;
            let mut upstream = Vec::with_capacity(a.len());
            for k in 0..a.len() {
                let inv_var = (-2.0 * policy.log_std[k]).exp();
                let diff = a[k] - means[j][k];
                // d logπ / dμ = (a - μ)/σ², dμ/dy = high - low
                upstream.push(coef_logpi[j] * diff * inv_var * (high[k] - low[k]));
                // d logπ / d logσ = (a - μ)²/σ² - 1
                out.log_std[k] += coef_logpi[j] * (diff * diff * inv_var - 1.0);
            }
            policy
                .mean
                .backward_accumulate(&a_traces[j], &upstream, &mut out.actor)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{HiddenActivation, OutputActivation};
    use crate::replay::{Provenance, Transition};
    use crate::util::rng_from_seed;
    use rand::Rng;

    #[test]
    fn log_density_closed_form() {
        let mean = [0.1, -0.4, 0.3];
        let log_std = [-1.0, 0.2, -0.3];
        let at_mean = gaussian_log_density(&mean, &mean, &log_std);
        let expected: f64 = log_std
            .iter()
            .map(|ls: &f64| -(ls.exp() * (2.0 * PI).sqrt()).ln())
            .sum();
        assert!((at_mean - expected).abs() < 1e-12);
        // product of univariate densities
        let a = [0.5, 0.0, -0.2];
        let mut p = 1.0;
        for k in 0..3 {
            let s: f64 = log_std[k].exp();
            p *= (-(a[k] - mean[k]).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
        }
        assert!((gaussian_log_density(&a, &mean, &log_std) - p.ln()).abs() < 1e-10);
    }

    #[test]
    fn full_window_without_entropy_is_mc_error() {
        let rewards = [0.0, 0.2, 0.0, 1.0];
        let values = [0.3, -0.1, 0.5, 0.9];
        let g = 0.9;
        let res = pcl_residuals(&values, &rewards, &[7.0; 4], g, 0.0, 4);
        for i in 0..4 {
            let ret: f64 = (i..4).map(|j| g.powi((j - i) as i32) * rewards[j]).sum();
            assert!((res[i] - (values[i] - ret)).abs() < 1e-14);
        }
        // exact returns as V: fixed point
        let exact: Vec<f64> = (0..4)
            .map(|i| (i..4).map(|j| g.powi((j - i) as i32) * rewards[j]).sum())
            .collect();
        for d in 1..=4 {
            let res = pcl_residuals(&exact, &rewards, &[0.0; 4], g, 0.0, d);
            assert!(res.iter().all(|r| r.abs() < 1e-12), "{res:?}");
        }
    }

    fn random_episode(rng: &mut crate::util::Rng, len: usize, obs_dim: usize) -> Episode {
        let transitions = (0..len)
            .map(|i| Transition {
                obs: (0..obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>().into(),
                timestep: i as u32 + 1,
                action: (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                reward: if i + 1 == len { 1.0 } else { 0.0 },
                next_obs: vec![0.0; obs_dim].into(),
                done: i + 1 == len,
                gripper_pose: None,
                episode_id: 0,
            })
            .collect();
        Episode {
            id: 0,
            transitions,
            outcome: 1.0,
            final_pose: None,
            object_seeds: vec![],
            provenance: Provenance::InitialRandom,
        }
    }

    /// All three gradient blocks against central differences of the loss.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rng_from_seed(12);
        let space = ActionSpace::unit_box(2);
        let value = MlpNetwork::new(&[3, 5, 1], HiddenActivation::Tanh, OutputActivation::Identity, &mut rng)
            .unwrap();
        let actor = MlpNetwork::new(&[3, 5, 2], HiddenActivation::Tanh, OutputActivation::Sigmoid, &mut rng)
            .unwrap();
        let prior = MlpNetwork::new(&[3, 5, 2], HiddenActivation::Tanh, OutputActivation::Sigmoid, &mut rng)
            .unwrap();
        let log_std = vec![-0.5, 0.1];
        let prior_std = vec![-0.2, -0.3];
        let eps: Vec<Episode> = (0..2).map(|i| random_episode(&mut rng, 4 + i, 3)).collect();
        let refs: Vec<&Episode> = eps.iter().collect();
        let (gamma, tau, d) = (0.9, 0.3, 2);
        let loss = |v: &MlpNetwork, a: &MlpNetwork, ls: &[f64]| {
            pcl_gradients(
                &refs,
                v,
                GaussianPolicyRef { mean: a, log_std: ls },
                Some(GaussianPolicyRef {
                    mean: &prior,
                    log_std: &prior_std,
                }),
                &space,
                gamma,
                tau,
                d,
            )
            .unwrap()
            .loss
        };
        let g = pcl_gradients(
            &refs,
            &value,
            GaussianPolicyRef {
                mean: &actor,
                log_std: &log_std,
            },
            Some(GaussianPolicyRef {
                mean: &prior,
                log_std: &prior_std,
            }),
            &space,
            gamma,
            tau,
            d,
        )
        .unwrap();
        let h = 1e-6;
        let check = |fd: f64, an: f64| {
            assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "fd {fd} vs {an}");
        };
        for (gi, grads) in g.value.groups().iter().enumerate() {
            for k in 0..grads.len() {
                let mut p = value.clone();
                p.param_groups_mut()[gi][k] += h;
                let mut m = value.clone();
                m.param_groups_mut()[gi][k] -= h;
                check((loss(&p, &actor, &log_std) - loss(&m, &actor, &log_std)) / (2.0 * h), grads[k]);
            }
        }
        for (gi, grads) in g.actor.groups().iter().enumerate() {
            for k in 0..grads.len() {
                let mut p = actor.clone();
                p.param_groups_mut()[gi][k] += h;
                let mut m = actor.clone();
                m.param_groups_mut()[gi][k] -= h;
                check((loss(&value, &p, &log_std) - loss(&value, &m, &log_std)) / (2.0 * h), grads[k]);
            }
        }
        for k in 0..2 {
            let mut p = log_std.clone();
            p[k] += h;
            let mut m = log_std.clone();
            m[k] -= h;
            check((loss(&value, &actor, &p) - loss(&value, &actor, &m)) / (2.0 * h), g.log_std[k]);
        }
    }
}
