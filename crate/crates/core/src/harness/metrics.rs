//! Metric rows and their CSV file format.
//!
//! Header (fixed): `run_id,config_hash,algo,pool_size,regime,seed,step,
//! train_loss,success_rate,wall_clock_s,status`. `status` is `ok` or
//! `failed: <message>`; failed rows carry the step at which the run stopped.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

pub const METRICS_HEADER: [&str; 11] = [
    "run_id",
    "config_hash",
    "algo",
    "pool_size",
    "regime",
    "seed",
    "step",
    "train_loss",
    "success_rate",
    "wall_clock_s",
    "status",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub config_hash: String,
    pub algo: String,
    pub pool_size: usize,
    pub regime: String,
    pub seed: u64,
    pub step: u64,
    pub train_loss: f64,
    pub success_rate: f64,
    pub wall_clock_s: f64,
    pub status: String,
}

impl MetricRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

pub fn write_metrics(path: impl AsRef<Path>, rows: &[MetricRow]) -> Result<(), HarnessError> {
    let path = path.as_ref();
    // header written by hand so that empty files still carry it
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(METRICS_HEADER).map_err(|e| io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| io(path, e))?;
    write_atomic(path, &bytes)
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricRow>, HarnessError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| io(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| io(path, e))?.iter().map(String::from).collect();
    if header != METRICS_HEADER {
        return Err(HarnessError::Config(format!(
            "{}: unexpected metrics header {header:?}",
            path.display()
        )));
    }
    r.deserialize().map(|row| row.map_err(|e| io(path, e))).collect()
}

/// Writes to a sibling temporary file, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(|e| io(path, e))?;
    fs::rename(&tmp, path).map_err(|e| io(path, e))
}

/// The last row of every run, in run-id order.
pub fn final_rows(rows: &[MetricRow]) -> Vec<MetricRow> {
    let mut last: BTreeMap<&str, &MetricRow> = BTreeMap::new();
    for r in rows {
        let keep = last.get(r.run_id.as_str()).map_or(true, |prev| r.step >= prev.step);
        if keep {
            last.insert(&r.run_id, r);
        }
    }
    last.into_values().cloned().collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn row(run: &str, algo: &str, pool: usize, regime: &str, seed: u64, step: u64, rate: f64) -> MetricRow {
        MetricRow {
            run_id: run.into(),
            config_hash: "00".into(),
            algo: algo.into(),
            pool_size: pool,
            regime: regime.into(),
            seed,
            step,
            train_loss: 0.5,
            success_rate: rate,
            wall_clock_s: 1.25,
            status: "ok".into(),
        }
    }

    #[test]
    fn csv_round_trip_with_fixed_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut failed = row("b", "mc", 1000, "on_policy", 2, 7, 0.0);
        failed.status = "failed: pool is empty".into();
        let rows = vec![row("a", "dql", 5000, "off_policy", 1, 1000, 0.25), failed];
        write_metrics(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(&METRICS_HEADER.join(",")));
        assert_eq!(read_metrics(&path).unwrap(), rows);
        write_metrics(&path, &[]).unwrap();
        assert!(read_metrics(&path).unwrap().is_empty());
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_metrics(&path), Err(HarnessError::Config(_))));
    }

    #[test]
    fn final_rows_take_last_step() {
        let rows = vec![
            row("a", "dql", 5, "off_policy", 0, 1000, 0.1),
            row("b", "dql", 5, "off_policy", 1, 1000, 0.3),
            row("a", "dql", 5, "off_policy", 0, 2000, 0.2),
        ];
        let f = final_rows(&rows);
        assert_eq!(f.len(), 2);
        assert_eq!((f[0].step, f[0].success_rate), (2000, 0.2));
    }
}
