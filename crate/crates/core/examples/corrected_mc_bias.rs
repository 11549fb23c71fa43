//! Off-policy bias of Monte Carlo returns and its removal by the
//! advantage-corrected target, on the slippery verification MDP with the
//! exact optimal Q-function plugged in.
//!
//!     cargo run --release --example corrected_mc_bias -- [episodes]

use offgrasp::algo::{corr_mc_targets, mc_targets};
use offgrasp::tabular::{rollout, uniform_policy, value_iteration, TabularMdp};
use offgrasp::util::rng_from_seed;

fn main() {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let gamma = 0.9;
    let mdp = TabularMdp::verification_with_slip(0.2);
    let oracle = value_iteration(&mdp, gamma);
    let space = mdp.action_space();
    let mut rng = rng_from_seed(0);

    println!("{:>4} {:>8} {:>10} {:>10} {:>10} {:>10}", "nu", "action", "Q*", "mean", "std err", "bias");
    for nu in [0.0, 0.5, 1.0] {
        let mut per_action = vec![Vec::new(); mdp.n_actions];
        for seed in 0..n {
            let e = rollout(&mdp, uniform_policy(mdp.n_actions), seed);
            let a = e.transitions[0].action[0] as usize;
            let y = if nu == 0.0 {
                mc_targets(&e, gamma).unwrap()[0]
            } else {
                corr_mc_targets(&e, &oracle, &space, gamma, nu, 16, &mut rng).unwrap()[0]
            };
            per_action[a].push(y);
        }
        for (a, ys) in per_action.iter().enumerate() {
            let k = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / k;
            let se = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt();
            let q = oracle.q(0, mdp.start_state, a);
            println!("{nu:>4} {a:>8} {q:>10.4} {mean:>10.4} {se:>10.4} {:>10.4}", mean - q);
        }
    }
}
