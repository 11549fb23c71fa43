//! Trains one estimator on a freshly collected random pool and prints the
//! held-out success curve.
//!
//!     cargo run --release --example train_grasp -- [algo] [pool_size] [steps]
//!
//! `algo` is one of supervised, dql, mc, corr_mc, ddpg, pcl.

use offgrasp::algo::{AlgoConfig, EstimatorKind};
use offgrasp::harness::{run_training, RunConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let kind: EstimatorKind = args.next().map_or(EstimatorKind::Mc, |a| a.parse().expect("algo"));
    let pool_size = args.next().map_or(2000, |a| a.parse().expect("pool size"));
    let train_steps = args.next().map_or(5000, |a| a.parse().expect("steps"));
    let cfg = RunConfig {
        algo: AlgoConfig::for_kind(kind),
        pool_size,
        train_steps,
        eval_episodes: 100,
        ..RunConfig::default()
    };
    println!("{}", cfg.run_id());
    let out = run_training(&cfg).unwrap_or_else(|e| panic!("{e}"));
    for r in &out.rows {
        println!(
            "step {:6}  loss {:8.5}  held-out success {:.3}  ({:.0}s)",
            r.step, r.train_loss, r.success_rate, r.wall_clock_s
        );
    }
}
