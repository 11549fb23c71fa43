//! Experiment protocol: pools, training regimes, evaluation, sweeps, reports.

pub mod eval;
pub mod metrics;
pub mod report;
pub mod run;
pub mod sweep;

use thiserror::Error;

use crate::algo::AlgoError;
use crate::env::EnvError;
use crate::replay::PoolError;

pub use eval::{evaluate, EvalOutcome};
pub use metrics::{final_rows, read_metrics, write_metrics, MetricRow, METRICS_HEADER};
pub use report::{barplot_report, stability_report, BarCell, BarReport, StabilityCurve};
pub use run::{initial_pool, CollectionEvent, run_training, run_training_on, Regime, RunConfig, RunFailure, RunOutcome};
pub use sweep::{run_sweep, SweepGrid, SweepSummary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Algo(#[from] AlgoError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}
