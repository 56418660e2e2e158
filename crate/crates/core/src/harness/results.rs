//! Machine-readable experiment results and plot-data export.
//!
//! The results file is JSON:
//!
//! ```text
//! { "format": "softik-results", "version": 1, "robot": "...", "width": mm,
//!   "follow": [FollowReport], "positioning": PositioningReport | null,
//!   "bench": BenchReport | null, "s2r_curves": [{ "arm": "full"|"simplified", "points": [CurvePoint] }] }
//! ```
//!
//! Plot data is one whitespace-separated `.dat` file per series, with a `#`
//! header line naming the columns.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bench::BenchReport;
use super::experiment::{FollowReport, PositioningReport};
use super::pipeline::{CurvePoint, SimArm};
use crate::error::{Error, Result};

pub const RESULTS_FORMAT: &str = "softik-results";
pub const RESULTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub arm: SimArm,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub format: String,
    pub version: u32,
    pub robot: String,
    pub width: f64,
    #[serde(default)]
    pub follow: Vec<FollowReport>,
    #[serde(default)]
    pub positioning: Option<PositioningReport>,
    #[serde(default)]
    pub bench: Option<BenchReport>,
    #[serde(default)]
    pub s2r_curves: Vec<CurveSeries>,
}

impl ExperimentResults {
    pub fn new(robot: &str, width: f64) -> Self {
        Self {
            format: RESULTS_FORMAT.into(),
            version: RESULTS_VERSION,
            robot: robot.into(),
            width,
            follow: Vec::new(),
            positioning: None,
            bench: None,
            s2r_curves: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let results: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("results file: {e}")))?;
        if results.format != RESULTS_FORMAT || results.version != RESULTS_VERSION {
            return Err(Error::Config(format!(
                "unsupported results file {} v{}",
                results.format, results.version
            )));
        }
        Ok(results)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn table(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = format!("# {header}\n");
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

fn slug(text: &str) -> String {
    text.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// Write one `.dat` file per series into `dir`; returns the paths written.
pub fn export_plot_data(results: &ExperimentResults, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(String, String)> = Vec::new();
    for report in &results.follow {
        let name = format!(
            "follow_{}_{}_{}{}",
            slug(&report.label),
            report.method,
            report.ground_truth,
            if report.use_s2r { "_s2r" } else { "" }
        );
        files.push((
            format!("{name}_error.dat"),
            table(
                "waypoint error_mm",
                report.waypoints.iter().enumerate().map(|(i, w)| vec![i as f64, w.error_mm]),
            ),
        ));
        let m = report.waypoints.first().map_or(0, |w| w.c.len());
        let header = std::iter::once("waypoint".to_string())
            .chain((1..=m).map(|k| format!("c{k}")))
            .collect::<Vec<_>>()
            .join(" ");
        files.push((
            format!("{name}_actuation.dat"),
            table(
                &header,
                report.waypoints.iter().enumerate().map(|(i, w)| {
                    let mut row = vec![i as f64];
                    row.extend_from_slice(&w.c);
                    row
                }),
            ),
        ));
        files.push((
            format!("{name}_iterations.dat"),
            table(
                "iterations waypoints",
                report.iteration_histogram.iter().enumerate().map(|(k, n)| vec![k as f64, *n as f64]),
            ),
        ));
    }
    if let Some(pos) = &results.positioning {
        files.push((
            "positioning.dat".into(),
            table(
                "target mean_error_mm max_error_pct deviation_mm",
                pos.targets
                    .iter()
                    .enumerate()
                    .map(|(i, t)| vec![i as f64, t.mean_error_mm, t.max_error_pct, t.deviation_mm]),
            ),
        ));
    }
    if let Some(bench) = &results.bench {
        files.push((
            "hb_scaling.dat".into(),
            table(
                "hb per_iteration_us",
                bench.scaling.iter().map(|s| vec![s.hb as f64, s.per_iteration_us]),
            ),
        ));
        files.push((
            "method_timing.dat".into(),
            table(
                "method_index per_waypoint_ms mean_iterations",
                bench
                    .methods
                    .iter()
                    .enumerate()
                    .map(|(i, m)| vec![i as f64, m.per_waypoint_ms, m.mean_iterations]),
            ),
        ));
    }
    for series in &results.s2r_curves {
        let arm = match series.arm {
            SimArm::Full => "full",
            SimArm::Simplified => "simplified",
        };
        files.push((
            format!("s2r_curve_{arm}.dat"),
            table(
                "samples mean_pct max_pct",
                series.points.iter().map(|p| vec![p.samples as f64, p.mean_pct, p.max_pct]),
            ),
        ));
    }
    files
        .into_iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_round_trip_and_export() {
        let mut results = ExperimentResults::new("planar_finger", 267.5);
        results.s2r_curves.push(CurveSeries {
            arm: SimArm::Full,
            points: vec![CurvePoint {
                samples: 50,
                hidden: 13,
                mean_pct: 0.2,
                max_pct: 0.9,
                train_time_s: 0.1,
            }],
        });
        let back = ExperimentResults::from_json(&results.to_json().unwrap()).unwrap();
        assert_eq!(back, results);

        let dir = tempfile::tempdir().unwrap();
        let files = export_plot_data(&results, dir.path()).unwrap();
        assert_eq!(files.len(), 1);
        let text = fs::read_to_string(&files[0]).unwrap();
        assert!(text.starts_with("# samples mean_pct max_pct\n"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn foreign_results_rejected() {
        let mut results = ExperimentResults::new("x", 1.0);
        results.format = "other".into();
        let text = serde_json::to_string(&results).unwrap();
        assert!(ExperimentResults::from_json(&text).is_err());
    }
}
