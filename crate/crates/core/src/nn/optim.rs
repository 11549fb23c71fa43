use serde::{Deserialize, Serialize};

use super::{Gradients, MlpNetwork, NnError, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer for a fixed list of parameter groups.
///
/// Adam moments are allocated lazily on the first step and then mirror the
/// group shapes exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    first_moments: Vec<Vec<f64>>,
    second_moments: Vec<Vec<f64>>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        OptimizerState {
            kind,
            learning_rate,
            first_moments: Vec::new(),
            second_moments: Vec::new(),
            step_count: 0,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn moment_shapes(&self) -> Vec<usize> {
        self.first_moments.iter().map(Vec::len).collect()
    }

    /// Applies one update to `params` given `grads`, group by group.
    ///
    /// Gradients are validated before anything is written, so a rejected
    /// step leaves parameters and moments untouched. The error reports the
    /// offending group index.
    pub fn apply(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(NnError::ShapeMismatch {
                group: params.len().min(grads.len()),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(NnError::ShapeMismatch { group: i });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(NnError::NonFiniteGradient { layer: i });
            }
        }
        self.step_count += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    p.iter_mut()
                        .zip(g.iter())
                        .for_each(|(p, g)| *p -= self.learning_rate * g);
                }
            }
            OptimizerKind::Adam => {
                if self.first_moments.is_empty() {
                    self.first_moments = grads.iter().map(|g| vec![0.0; g.len()]).collect();
                    self.second_moments = self.first_moments.clone();
                } else if self.moment_shapes() != grads.iter().map(|g| g.len()).collect::<Vec<_>>()
                {
                    return Err(NnError::ShapeMismatch { group: 0 });
                }
                let t = self.step_count as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                for (gi, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = &mut self.first_moments[gi];
                    let v = &mut self.second_moments[gi];
                    for j in 0..g.len() {
                        m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
                        v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
                        let m_hat = m[j] / c1;
                        let v_hat = v[j] / c2;
                        p[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        Ok(())
    }

    /// Updates every parameter of `net`. A non-finite gradient is reported by
    /// layer index.
    pub fn step_network(&mut self, net: &mut MlpNetwork, grads: &Gradients) -> Result<()> {
        let g = grads.groups();
        let mut p = net.param_groups_mut();
        self.apply(&mut p, &g).map_err(|e| match e {
            NnError::NonFiniteGradient { layer } => NnError::NonFiniteGradient { layer: layer / 2 },
            NnError::ShapeMismatch { group } => NnError::ShapeMismatch { group: group / 2 },
            other => other,
        })
    }
}
