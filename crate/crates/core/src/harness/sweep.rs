//! Hyperparameter sweeps over learning rate, width, discount, exploration
//! duration and seed.
//!
//! Each run writes its final metric row and resolved config to
//! `runs/<run_id>.csv` / `.toml` under the output directory; runs whose file
//! already exists are skipped, so an interrupted sweep resumes where it
//! stopped. After every run the per-run files are merged, in grid order,
//! into `metrics.csv` by an atomic rename.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::metrics::{read_metrics, write_atomic, write_metrics};
use super::run::{initial_pool, run_training_on, RunConfig};
use super::{HarnessError, MetricRow};
use crate::replay::ReplayPool;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub learning_rates: Vec<f64>,
    pub widths: Vec<usize>,
    pub gammas: Vec<f64>,
    pub explore_durations: Vec<u64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            learning_rates: vec![0.01, 0.001, 0.0001],
            widths: vec![32, 64],
            gammas: vec![0.9, 0.95],
            explore_durations: vec![10_000],
            seeds: (0..9).collect(),
        }
    }
}

impl SweepGrid {
    /// Every run of the grid for the base config's algorithm. Kinds that do
    /// not discount keep the base gamma instead of sweeping it. Hidden
    /// layers keep their count and take the swept width.
    pub fn expand(&self, base: &RunConfig) -> Vec<RunConfig> {
        let gammas = if base.algo.kind.sweeps_gamma() {
            self.gammas.clone()
        } else {
            vec![base.algo.gamma]
        };
        let depth = base.algo.hidden.len().max(1);
        let mut out = Vec::new();
        for &lr in &self.learning_rates {
            for &w in &self.widths {
                for &g in &gammas {
                    for &d in &self.explore_durations {
                        for &seed in &self.seeds {
                            let mut c = base.clone();
                            c.algo.learning_rate = lr;
                            c.algo.hidden = vec![w; depth];
                            c.algo.gamma = g;
                            c.explore_duration = d;
                            c.seed = seed;
                            out.push(c);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.learning_rates.is_empty()
            || self.widths.is_empty()
            || self.gammas.is_empty()
            || self.explore_durations.is_empty()
            || self.seeds.is_empty()
        {
            return Err(HarnessError::Config("every sweep axis needs at least one value".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSummary {
    pub total: usize,
    /// Runs found complete on disk and not repeated.
    pub skipped: usize,
    pub completed: usize,
    pub failed: usize,
    pub metrics_path: PathBuf,
}

fn run_file(dir: &Path, run_id: &str) -> PathBuf {
    dir.join("runs").join(format!("{run_id}.csv"))
}

/// Runs the grid (see the module docs for the on-disk layout). `workers`
/// threads each own one run at a time; the initial pool is shared.
pub fn run_sweep(
    grid: &SweepGrid,
    base: &RunConfig,
    out_dir: impl AsRef<Path>,
    workers: usize,
) -> Result<SweepSummary, HarnessError> {
    grid.validate()?;
    base.validate()?;
    let out_dir = out_dir.as_ref();
    let runs = grid.expand(base);
    let ids: Vec<String> = runs.iter().map(RunConfig::run_id).collect();
    let pending: Vec<usize> = (0..runs.len()).filter(|&i| !run_file(out_dir, &ids[i]).exists()).collect();
    let metrics_path = out_dir.join("metrics.csv");
    let mut summary = SweepSummary {
        total: runs.len(),
        skipped: runs.len() - pending.len(),
        completed: 0,
        failed: 0,
        metrics_path: metrics_path.clone(),
    };
    if !pending.is_empty() {
        let pool = initial_pool(base)?;
        let next = AtomicUsize::new(0);
        let shared = Mutex::new((&mut summary, None::<HarnessError>));
        std::thread::scope(|scope| {
            for _ in 0..workers.max(1) {
                scope.spawn(|| loop {
                    let k = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&i) = pending.get(k) else { break };
                    let result = execute(&runs[i], &ids[i], &pool, out_dir);
                    let mut guard = shared.lock().expect("sweep state lock");
                    match result.and_then(|ok| merge(&ids, out_dir).map(|_| ok)) {
                        Ok(true) => guard.0.completed += 1,
                        Ok(false) => guard.0.failed += 1,
                        Err(e) => {
                            guard.1.get_or_insert(e);
                            break;
                        }
                    }
                });
            }
        });
        if let (_, Some(e)) = shared.into_inner().expect("sweep state lock") {
            return Err(e);
        }
    }
    merge(&ids, out_dir)?;
    Ok(summary)
}

/// Runs one config and writes its run file. Returns whether it succeeded;
/// a failed run still produces a (failed) row.
fn execute(config: &RunConfig, run_id: &str, pool: &ReplayPool, out_dir: &Path) -> Result<bool, HarnessError> {
    let resolved = config.resolved();
    write_atomic(&out_dir.join("runs").join(format!("{run_id}.toml")), resolved.to_toml().as_bytes())?;
    let (row, ok) = match run_training_on(config, pool.clone()) {
        Ok(out) => (out.rows.last().cloned().expect("a run evaluates at its last step"), true),
        Err(f) => (
            MetricRow {
                run_id: run_id.to_string(),
                config_hash: format!("{:016x}", config.config_hash()),
                algo: config.algo.kind.name().to_string(),
                pool_size: config.pool_size,
                regime: config.regime.name().to_string(),
                seed: config.seed,
                step: f.step,
                train_loss: f64::NAN,
                success_rate: 0.0,
                wall_clock_s: f.rows.last().map_or(0.0, |r| r.wall_clock_s),
                status: format!("failed: {}", f.source),
            },
            false,
        ),
    };
    write_metrics(run_file(out_dir, run_id), &[row])?;
    Ok(ok)
}

fn merge(ids: &[String], out_dir: &Path) -> Result<(), HarnessError> {
    let mut rows = Vec::new();
    for id in ids {
        let path = run_file(out_dir, id);
        if path.exists() {
            rows.extend(read_metrics(&path)?);
        }
    }
    write_metrics(out_dir.join("metrics.csv"), &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::{AlgoConfig, EstimatorKind};

    fn base(kind: EstimatorKind) -> RunConfig {
        RunConfig {
            algo: AlgoConfig {
                hidden: vec![8],
                ..AlgoConfig::for_kind(kind)
            },
            pool_size: 20,
            train_steps: 4,
            eval_every: 4,
            eval_episodes: 2,
            ..RunConfig::default()
        }
    }

    #[test]
    fn grid_sizes_follow_the_gamma_rule() {
        let grid = SweepGrid {
            explore_durations: vec![5000, 10_000],
            ..SweepGrid::default()
        };
        assert_eq!(grid.expand(&base(EstimatorKind::Dql)).len(), 3 * 2 * 2 * 2 * 9);
        assert_eq!(grid.expand(&base(EstimatorKind::Mc)).len(), 3 * 2 * 2 * 9);
        assert_eq!(grid.expand(&base(EstimatorKind::Supervised)).len(), 3 * 2 * 2 * 9);
        let ids: std::collections::HashSet<_> =
            grid.expand(&base(EstimatorKind::Dql)).iter().map(RunConfig::run_id).collect();
        assert_eq!(ids.len(), 3 * 2 * 2 * 2 * 9);
    }

    #[test]
    fn sweep_resumes_without_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let grid = SweepGrid {
            learning_rates: vec![0.01, 0.001],
            widths: vec![4],
            gammas: vec![0.9],
            explore_durations: vec![100],
            seeds: vec![0, 1],
        };
        let b = base(EstimatorKind::Mc);
        let first = run_sweep(&grid, &b, dir.path(), 1).unwrap();
        assert_eq!((first.total, first.completed, first.skipped), (4, 4, 0));
        let rows = read_metrics(&first.metrics_path).unwrap();
        assert_eq!(rows.len(), 4);

        // drop one run as if interrupted, then resume
        std::fs::remove_file(run_file(dir.path(), &rows[2].run_id)).unwrap();
        let again = run_sweep(&grid, &b, dir.path(), 2).unwrap();
        assert_eq!((again.completed, again.skipped), (1, 3));
        let strip = |rs: Vec<MetricRow>| {
            rs.into_iter()
                .map(|r| MetricRow { wall_clock_s: 0.0, ..r })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(read_metrics(&again.metrics_path).unwrap()), strip(rows));
        let snapshot = dir.path().join("runs").join(format!("{}.toml", grid.expand(&b)[0].run_id()));
        assert!(RunConfig::load(snapshot).unwrap().algo.nu_anneal_steps.is_some());
    }

    #[test]
    fn failed_runs_become_failed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let grid = SweepGrid {
            learning_rates: vec![0.01],
            widths: vec![4],
            gammas: vec![0.9],
            explore_durations: vec![100],
            seeds: vec![0, 1],
        };
        let mut b = base(EstimatorKind::Dql);
        b.algo.argmax_samples = 0;
        let s = run_sweep(&grid, &b, dir.path(), 1).unwrap();
        assert_eq!((s.completed, s.failed), (0, 2));
        let rows = read_metrics(&s.metrics_path).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.status.starts_with("failed")));
    }
}
