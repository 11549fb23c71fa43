//! Resets the bin world, drives one scripted descent and one random-policy
//! episode, and prints what the gripper and the observation see.
//!
//!     cargo run --release --example env_tour -- [seed]

use offgrasp::env::{BinWorld, EnvConfig, RandomGraspPolicy};
use offgrasp::util::rng_from_seed;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let cfg = EnvConfig::default();
    let d = cfg.descriptor();
    println!(
        "observation: {0}x{0} grid x {1} channels + {2} extras = {3} features, horizon {4}",
        d.grid_size,
        d.channels,
        d.extras,
        d.len(),
        cfg.horizon
    );

    let (mut world, obs) = BinWorld::reset(&cfg, seed).expect("reset");
    println!("{} objects in the bin", world.objects().len());
    let occupied = obs.features.iter().filter(|&&x| x > 0.0).count();
    println!("non-zero features at reset: {occupied}");

    // straight down, then close by descending below the threshold
    println!("\nscripted descent:");
    while !world.is_done() {
        let (_, r) = world.step(&[0.0, 0.0, -1.0, 0.0]).expect("step");
        println!("  t={:2} gripper {:?} reward {}", world.step_count(), world.gripper(), r.reward);
    }

    println!("\nrandom policy, 200 episodes:");
    let policy = RandomGraspPolicy::new(cfg.random_dz_drift);
    let mut rng = rng_from_seed(seed);
    let mut wins = 0;
    for i in 0..200 {
        let (mut world, _) = BinWorld::reset(&cfg, seed * 1000 + i).expect("reset");
        let mut reward = 0.0;
        while !world.is_done() {
            reward = world.step(&policy.act(&mut rng)).expect("step").1.reward;
        }
        wins += usize::from(reward > 0.0);
    }
    println!("  {wins}/200 successful grasps");
}
