//! DQL on the verification MDP from uniform-random data, compared against
//! the exact optimal Q-values.
//!
//!     cargo run --release --example tabular_dql -- [updates] [episodes]

use offgrasp::algo::{AlgoConfig, AlgoState, EstimatorKind};
use offgrasp::replay::{Provenance, ReplayPool};
use offgrasp::select::{NetworkCritic, QFunction};
use offgrasp::tabular::{rollout_with_id, uniform_policy, value_iteration, TabularMdp};
use offgrasp::util::{mix_seed, rng_from_seed};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let updates = args.first().copied().unwrap_or(20_000);
    let n_episodes = args.get(1).copied().unwrap_or(5_000);
    let gamma = 0.9;

    let mdp = TabularMdp::verification();
    let oracle = value_iteration(&mdp, gamma);
    let mut pool = ReplayPool::new();
    for i in 0..n_episodes as u64 {
        let e = rollout_with_id(&mdp, uniform_policy(3), mix_seed(7, i), i, Provenance::InitialRandom);
        pool.add_episode(e).unwrap();
    }
    let reach = mdp.state_distribution(uniform_policy(3));
    let min_reach = reach.iter().flatten().filter(|&&r| r > 0.0).fold(1.0f64, |a, &b| a.min(b));
    println!(
        "V*(start) {:.3}  uniform {:.3}  min reach {min_reach:.4}",
        oracle.v(0, 0),
        mdp.evaluate_policy(gamma, uniform_policy(3))[0][0]
    );

    let cfg = AlgoConfig {
        gamma,
        ..AlgoConfig::for_kind(EstimatorKind::Dql)
    };
    let mut rng = rng_from_seed(1);
    let mut state = AlgoState::new(cfg, mdp.obs_dim(), mdp.action_space(), mdp.horizon, &mut rng).unwrap();
    for step in 1..=updates {
        state.train_step(&pool, &mut rng).unwrap();
        if step % 2000 == 0 {
            let critic = NetworkCritic::new(&state.q.as_ref().unwrap().net, &state.space);
            let mut worst: f64 = 0.0;
            let mut arg = (0, 0, 0);
            for t in 0..mdp.horizon {
                for s in 0..mdp.n_states {
                    if reach[t][s] == 0.0 {
                        continue;
                    }
                    let q = critic
                        .q_values(&mdp.encode(t, s), &[vec![0.0], vec![1.0], vec![2.0]])
                        .unwrap();
                    for a in 0..3 {
                        let e = (q[a] - oracle.q(t, s, a)).abs();
                        if e > worst {
                            worst = e;
                            arg = (t, s, a);
                        }
                    }
                }
            }
            println!("step {step:6}  max |Q - Q*| = {worst:.4} at (t, s, a) = {arg:?}");
        }
    }
}
