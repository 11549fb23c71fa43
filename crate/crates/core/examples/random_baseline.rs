//! Measures the success rate of the scripted random policy.
//!
//! ```bash
//! cargo run --release -p offgrasp --example random_baseline -- 5000 [env.toml]
//! ```

use offgrasp::env::{collect_random_grasps, EnvConfig};

fn main() {
    let n: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2000);
    let cfg = match std::env::args().nth(2) {
        Some(path) => EnvConfig::load(path).expect("config"),
        None => EnvConfig::default(),
    };
    let episodes = collect_random_grasps(&cfg, n, 0).expect("collection");
    let wins = episodes.iter().filter(|e| e.outcome > 0.0).count();
    let closed = episodes
        .iter()
        .filter(|e| e.final_pose.map_or(false, |p| p.z < cfg.geometry.close_threshold))
        .count();
    let mean_len =
        episodes.iter().map(|e| e.len()).sum::<usize>() as f64 / episodes.len() as f64;
    println!("episodes:        {n}");
    println!("success rate:    {:.4}", wins as f64 / n as f64);
    println!("closed fraction: {:.4}", closed as f64 / n as f64);
    println!("mean length:     {mean_len:.2}");
}
