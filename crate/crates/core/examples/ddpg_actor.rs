//! A deterministic actor climbing a fixed concave critic.
//!
//!     cargo run --release --example ddpg_actor

use offgrasp::algo::{actor_action, actor_step, ActionCritic, AlgoError};
use offgrasp::nn::{HiddenActivation, MlpNetwork, OptimizerState, OutputActivation};
use offgrasp::select::ActionSpace;
use offgrasp::util::rng_from_seed;

/// `Q(s, a) = -‖a - (0.5 s₀, -0.5 s₁)‖²`.
struct Critic;

fn best(s: &[f64]) -> [f64; 2] {
    [0.5 * s[0], -0.5 * s[1]]
}

impl ActionCritic for Critic {
    fn value_and_action_grad(&self, s: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>), AlgoError> {
        let b = best(s);
        let q = -((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2));
        Ok((q, vec![-2.0 * (a[0] - b[0]), -2.0 * (a[1] - b[1])]))
    }
}

fn main() {
    let mut rng = rng_from_seed(0);
    let space = ActionSpace::unit_box(2);
    let mut actor = MlpNetwork::new(&[2, 32, 2], HiddenActivation::Relu, OutputActivation::Sigmoid, &mut rng).unwrap();
    let mut opt = OptimizerState::adam(1e-2);
    let states: Vec<Vec<f64>> = (0..16).map(|i| vec![(i % 4) as f64 / 1.5 - 1.0, (i / 4) as f64 / 1.5 - 1.0]).collect();
    let refs: Vec<&[f64]> = states.iter().map(Vec::as_slice).collect();
    for step in 0..=300 {
        let objective = actor_step(&mut actor, &mut opt, &Critic, &refs, &space).unwrap();
        if step % 50 == 0 {
            println!("step {step:3}  mean Q {objective:.5}");
        }
    }
    for s in states.iter().take(4) {
        println!("s {s:?}  pi(s) {:?}  argmax {:?}", actor_action(&actor, s, &space).unwrap(), best(s));
    }
}
