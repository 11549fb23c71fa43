//! Stability curves and grouped bar summaries over metric rows, as CSV and
//! standalone SVG.
//!
//! Both reports use the final row of each run and leave failed runs out of
//! the statistics (they are counted separately).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use super::metrics::{final_rows, write_atomic};
use super::{HarnessError, MetricRow};

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCurve {
    pub algo: String,
    /// Final success rates, sorted in decreasing order.
    pub rates: Vec<f64>,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub failed_runs: usize,
}

impl StabilityCurve {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Quantile with linear interpolation between order statistics.
/// `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// One sorted curve per algorithm, in algorithm-name order.
pub fn stability_report(rows: &[MetricRow]) -> Result<Vec<StabilityCurve>, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Config("no metric rows".into()));
    }
    let mut by_algo: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    let finals = final_rows(rows);
    for r in &finals {
        let entry = by_algo.entry(&r.algo).or_default();
        if r.is_ok() {
            entry.0.push(r.success_rate);
        } else {
            entry.1 += 1;
        }
    }
    Ok(by_algo
        .into_iter()
        .map(|(algo, (mut rates, failed_runs))| {
            rates.sort_by(|a, b| a.total_cmp(b));
            let (median, q1, q3) = if rates.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (quantile(&rates, 0.5), quantile(&rates, 0.25), quantile(&rates, 0.75))
            };
            rates.reverse();
            StabilityCurve {
                algo: algo.to_string(),
                rates,
                median,
                q1,
                q3,
                failed_runs,
            }
        })
        .collect())
}

pub fn stability_csv(curves: &[StabilityCurve]) -> String {
    let mut s = String::from("algo,rank,success_rate\n");
    for c in curves {
        for (i, r) in c.rates.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", c.algo, i + 1, r);
        }
    }
    s
}

pub fn stability_summary_csv(curves: &[StabilityCurve]) -> String {
    let mut s = String::from("algo,runs,failed_runs,median,q1,q3,iqr\n");
    for c in curves {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            c.algo,
            c.rates.len(),
            c.failed_runs,
            c.median,
            c.q1,
            c.q3,
            c.iqr()
        );
    }
    s
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn svg_frame(title: &str, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let (x0, y0, x1, y1) = (MARGIN, H - MARGIN, W - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let y = y0 - v * (y0 - y1);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, x0 - 4.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn y_of(v: f64) -> f64 {
    (H - MARGIN) - v.clamp(0.0, 1.0) * (H - 2.0 * MARGIN)
}

/// Sorted success curves, one polyline per algorithm.
pub fn stability_svg(curves: &[StabilityCurve]) -> String {
    let mut s = svg_frame("Final success by rank", "run rank (sorted)", "success rate");
    let longest = curves.iter().map(|c| c.rates.len()).max().unwrap_or(1).max(2);
    let x_of = |i: usize| MARGIN + i as f64 / (longest - 1) as f64 * (W - 2.0 * MARGIN);
    for (k, c) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = c
            .rates
            .iter()
            .enumerate()
            .map(|(i, r)| format!("{:.1},{:.1}", x_of(i), y_of(*r)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        if c.rates.len() == 1 {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, x_of(0), y_of(c.rates[0]));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}" text-anchor="end">{}</text>"#,
            W - MARGIN,
            MARGIN + 14.0 * (k + 1) as f64,
            escape(&c.algo)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarCell {
    pub algo: String,
    pub pool_size: usize,
    pub regime: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; `None` with a single run.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarReport {
    pub cells: Vec<BarCell>,
    /// `(algo, pool_size, regime)` combinations with no successful run.
    pub missing: Vec<(String, usize, String)>,
}

/// Mean and standard deviation of final success per (algo, pool size,
/// regime). Missing combinations of the observed axis values are listed,
/// never filled in.
pub fn barplot_report(rows: &[MetricRow]) -> Result<BarReport, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Config("no metric rows".into()));
    }
    let finals = final_rows(rows);
    let algos: BTreeSet<&str> = finals.iter().map(|r| r.algo.as_str()).collect();
    let pools: BTreeSet<usize> = finals.iter().map(|r| r.pool_size).collect();
    let regimes: BTreeSet<&str> = finals.iter().map(|r| r.regime.as_str()).collect();
    let mut groups: BTreeMap<(&str, usize, &str), Vec<f64>> = BTreeMap::new();
    for r in finals.iter().filter(|r| r.is_ok()) {
        groups
            .entry((r.algo.as_str(), r.pool_size, r.regime.as_str()))
            .or_default()
            .push(r.success_rate);
    }
    let mut cells = Vec::new();
    let mut missing = Vec::new();
    for &a in &algos {
        for &p in &pools {
            for &g in &regimes {
                match groups.get(&(a, p, g)) {
                    Some(xs) => {
                        let n = xs.len();
                        let mean = xs.iter().sum::<f64>() / n as f64;
                        let std = (n > 1).then(|| {
                            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                        });
                        cells.push(BarCell {
                            algo: a.to_string(),
                            pool_size: p,
                            regime: g.to_string(),
                            n,
                            mean,
                            std,
                        });
                    }
                    None => missing.push((a.to_string(), p, g.to_string())),
                }
            }
        }
    }
    Ok(BarReport { cells, missing })
}

pub fn barplot_csv(report: &BarReport) -> String {
    let mut s = String::from("algo,pool_size,regime,n,mean,std\n");
    for c in &report.cells {
        let std = c.std.map_or_else(|| "NA".to_string(), |v| v.to_string());
        let _ = writeln!(s, "{},{},{},{},{},{}", c.algo, c.pool_size, c.regime, c.n, c.mean, std);
    }
    s
}

/// Bars grouped by (pool size, regime), one color per algorithm, with
/// ±std whiskers where defined.
pub fn barplot_svg(report: &BarReport) -> String {
    let mut s = svg_frame("Final success (mean ± std over seeds)", "pool size / regime", "success rate");
    let algos: Vec<&str> = report
        .cells
        .iter()
        .map(|c| c.algo.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let groups: Vec<(usize, &str)> = report
        .cells
        .iter()
        .map(|c| (c.pool_size, c.regime.as_str()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let group_w = (W - 2.0 * MARGIN) / groups.len().max(1) as f64;
    let bar_w = group_w * 0.8 / algos.len().max(1) as f64;
    for (gi, (pool, regime)) in groups.iter().enumerate() {
        let gx = MARGIN + gi as f64 * group_w + group_w * 0.1;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{pool} {}</text>"#,
            gx + group_w * 0.4,
            H - MARGIN + 16.0,
            escape(regime)
        );
        for (ai, algo) in algos.iter().enumerate() {
            let Some(c) = report
                .cells
                .iter()
                .find(|c| c.algo == *algo && c.pool_size == *pool && c.regime == *regime)
            else {
                continue;
            };
            let x = gx + ai as f64 * bar_w;
            let color = PALETTE[ai % PALETTE.len()];
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}"/>"#,
                y_of(c.mean),
                bar_w * 0.9,
                y_of(0.0) - y_of(c.mean)
            );
            if let Some(sd) = c.std {
                let cx = x + bar_w * 0.45;
                let _ = writeln!(
                    s,
                    r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
                    y_of(c.mean - sd),
                    y_of(c.mean + sd)
                );
            }
        }
    }
    for (ai, algo) in algos.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{}" text-anchor="end">{}</text>"#,
            W - MARGIN,
            MARGIN + 14.0 * (ai + 1) as f64,
            PALETTE[ai % PALETTE.len()],
            escape(algo)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `stability.csv`, `stability_summary.csv` and `stability.svg`.
pub fn write_stability(dir: &Path, curves: &[StabilityCurve]) -> Result<(), HarnessError> {
    write_atomic(&dir.join("stability.csv"), stability_csv(curves).as_bytes())?;
    write_atomic(&dir.join("stability_summary.csv"), stability_summary_csv(curves).as_bytes())?;
    write_atomic(&dir.join("stability.svg"), stability_svg(curves).as_bytes())
}

/// Writes `bars.csv` and `bars.svg`.
pub fn write_bars(dir: &Path, report: &BarReport) -> Result<(), HarnessError> {
    write_atomic(&dir.join("bars.csv"), barplot_csv(report).as_bytes())?;
    write_atomic(&dir.join("bars.svg"), barplot_svg(report).as_bytes())
}
