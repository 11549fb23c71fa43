//! A small resumable sweep followed by the stability and bar reports.
//!
//!     cargo run --release --example sweep_report -- [out_dir]

use offgrasp::algo::{AlgoConfig, EstimatorKind};
use offgrasp::harness::report::{write_bars, write_stability};
use offgrasp::harness::{barplot_report, read_metrics, run_sweep, stability_report, RunConfig, SweepGrid};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "sweep_demo".into());
    let grid = SweepGrid {
        learning_rates: vec![1e-3],
        widths: vec![16],
        gammas: vec![0.9],
        explore_durations: vec![10_000],
        seeds: (0..3).collect(),
    };
    for kind in [EstimatorKind::Supervised, EstimatorKind::Mc] {
        let base = RunConfig {
            algo: AlgoConfig {
                hidden: vec![16, 16],
                ..AlgoConfig::for_kind(kind)
            },
            pool_size: 300,
            train_steps: 500,
            eval_episodes: 50,
            ..RunConfig::default()
        };
        let s = run_sweep(&grid, &base, format!("{out}/{}", kind.name()), 1).expect("sweep");
        println!("{}: {} runs, {} completed, {} resumed", kind.name(), s.total, s.completed, s.skipped);
    }
    let mut rows = Vec::new();
    for kind in ["supervised", "mc"] {
        rows.extend(read_metrics(format!("{out}/{kind}/metrics.csv")).expect("metrics"));
    }
    let curves = stability_report(&rows).expect("stability");
    write_stability(out.as_ref(), &curves).expect("write");
    for c in &curves {
        println!("{:<10} sorted {:.3?} median {:.3}", c.algo, c.rates, c.median);
    }
    let bars = barplot_report(&rows).expect("bars");
    write_bars(out.as_ref(), &bars).expect("write");
    for c in &bars.cells {
        println!("{:<10} n={} mean {:.3} std {:?}", c.algo, c.n, c.mean, c.std);
    }
    println!("reports written to {out}/");
}
