use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::train::TrainingSet;
use crate::error::{Error, Result};

/// Euclidean prediction errors over a test set, in output units and as a
/// percentage of workspace width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    pub mean_pct: f64,
    pub median_pct: f64,
    pub max_pct: f64,
}

impl ErrorStats {
    /// Summary of per-sample distances.
    pub fn from_distances(distances: &[f64], width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::validation(format!("workspace width must be positive, got {width}")));
        }
        if distances.is_empty() {
            return Err(Error::validation("no errors to summarize"));
        }
        let mut sorted = distances.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let max = sorted[n - 1];
        let pct = |v: f64| 100.0 * v / width;
        Ok(Self {
            mean,
            median,
            max,
            mean_pct: pct(mean),
            median_pct: pct(median),
            max_pct: pct(max),
        })
    }
}

/// Per-sample Euclidean distance between predictions and targets.
pub fn prediction_errors(net: &Mlp, set: &TrainingSet) -> Result<Vec<f64>> {
    let predicted = net.forward_batch(&set.inputs)?;
    Ok(column_distances(&predicted, &set.targets))
}

pub(crate) fn column_distances(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    a.column_iter().zip(b.column_iter()).map(|(x, y)| (x - y).norm()).collect()
}

pub fn evaluate(net: &Mlp, test_set: &TrainingSet, workspace_width: f64) -> Result<ErrorStats> {
    if test_set.is_empty() {
        return Err(Error::validation("test set is empty"));
    }
    ErrorStats::from_distances(&prediction_errors(net, test_set)?, workspace_width)
}

/// Hidden-layer size of the sim-to-real net: `⌈η · samples⌉`.
pub fn size_s2r(sample_count: usize, eta: f64) -> Result<usize> {
    if sample_count < 4 {
        return Err(Error::validation(format!("need at least 4 samples, got {sample_count}")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::validation(format!("eta must be in (0, 1], got {eta}")));
    }
    Ok((eta * sample_count as f64).ceil() as usize)
}
