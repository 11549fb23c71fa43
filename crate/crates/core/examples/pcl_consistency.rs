//! Path-consistency residuals on a hand-made episode: exact returns are a
//! fixed point without entropy, and an entropy bonus shifts the residuals by
//! the discounted log-ratio sum.
//!
//!     cargo run --release --example pcl_consistency

use offgrasp::algo::{gaussian_log_density, pcl_residuals};

fn main() {
    let gamma = 0.9;
    let rewards = [0.0, 0.0, 0.0, 0.0, 1.0];
    let mut values = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for t in (0..rewards.len()).rev() {
        g = rewards[t] + gamma * g;
        values[t] = g;
    }
    let logratios = [0.3, -0.2, 0.1, 0.4, -0.5];
    println!("values (exact returns) {values:.4?}");
    for (tau, d) in [(0.0, 5), (0.0, 2), (0.1, 5), (0.1, 2)] {
        let r = pcl_residuals(&values, &rewards, &logratios, gamma, tau, d);
        println!("tau {tau:<4} d {d}: residuals {r:.4?}");
    }
    let lp = gaussian_log_density(&[0.1, -0.3], &[0.0, 0.0], &[(0.5f64).ln(), (0.2f64).ln()]);
    println!("log N([0.1, -0.3]; 0, diag(0.5, 0.2)^2) = {lp:.6}");
}
