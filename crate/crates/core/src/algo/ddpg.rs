//! Deterministic actor updates through a critic's action gradient.

use super::AlgoError;
use crate::nn::{Gradients, MlpNetwork, OptimizerState};
use crate::select::{ActionSpace, NetworkCritic};

/// A critic that can report `Q(s, a)` and `∂Q/∂a`.
pub trait ActionCritic {
    fn value_and_action_grad(&self, obs: &[f64], action: &[f64]) -> Result<(f64, Vec<f64>), AlgoError>;
}

impl ActionCritic for NetworkCritic<'_> {
    fn value_and_action_grad(&self, obs: &[f64], action: &[f64]) -> Result<(f64, Vec<f64>), AlgoError> {
        let x = self.input(obs, action);
        let trace = self.net.forward_trace(&x)?;
        let mut scratch = Gradients::zeros_like(self.net);
        let input_grad = self.net.backward_accumulate(&trace, &[1.0], &mut scratch)?;
        Ok((trace.output()[0], input_grad[obs.len()..].to_vec()))
    }
}

fn bounds(space: &ActionSpace) -> Result<(&[f64], &[f64]), AlgoError> {
    match space {
        ActionSpace::Box { low, high } => Ok((low, high)),
        ActionSpace::Discrete(_) => Err(AlgoError::UnsupportedSpace),
    }
}

/// `low + (high - low) * y` where `y ∈ (0, 1)` is the sigmoid actor output.
pub fn actor_action(actor: &MlpNetwork, obs: &[f64], space: &ActionSpace) -> Result<Vec<f64>, AlgoError> {
    let (low, high) = bounds(space)?;
    let y = actor.forward(obs)?;
    Ok(y.iter()
        .zip(low.iter().zip(high))
        .map(|(y, (l, h))| l + (h - l) * y)
        .collect())
}

/// One gradient-ascent step on `mean_s Q(s, π(s))`. Returns the objective
/// before the step. The critic is only read.
pub fn actor_step<C: ActionCritic + ?Sized>(
    actor: &mut MlpNetwork,
    opt: &mut OptimizerState,
    critic: &C,
    observations: &[&[f64]],
    space: &ActionSpace,
) -> Result<f64, AlgoError> {
    let (low, high) = bounds(space)?;
    let n = observations.len() as f64;
    let mut grads = Gradients::zeros_like(actor);
    let mut objective = 0.0;
    for obs in observations {
        let trace = actor.forward_trace(obs)?;
        let action: Vec<f64> = trace
            .output()
            .iter()
            .zip(low.iter().zip(high))
            .map(|(y, (l, h))| l + (h - l) * y)
            .collect();
        let (q, dq_da) = critic.value_and_action_grad(obs, &action)?;
        objective += q / n;
        // minimise -Q: upstream on y is -dQ/da * (high - low)
        let upstream: Vec<f64> = dq_da
            .iter()
            .zip(low.iter().zip(high))
            .map(|(g, (l, h))| -g * (h - l) / n)
            .collect();
        actor.backward_accumulate(&trace, &upstream, &mut grads)?;
    }
    opt.step_network(actor, &grads)?;
    Ok(objective)
}
