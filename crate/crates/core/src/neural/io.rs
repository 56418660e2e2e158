//! JSON model files.
//!
//! ```json
//! {
//!   "format": "softik-mlp", "version": 1,
//!   "meta": { "role": "fk", "robot": "planar_finger", "seed": 0, "config_digest": "…", … },
//!   "input_scaler": { "min": [...], "max": [...] },
//!   "output_scaler": { "min": [...], "max": [...] },
//!   "layers": [ { "rows": 30, "cols": 3, "activation": "tansig",
//!                 "weights": [row-major, rows·cols values], "bias": [rows values] }, … ]
//! }
//! ```

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Layer, Mlp, Scaler};
use crate::error::{check_dim, Error, Result};

pub const MODEL_FORMAT: &str = "softik-mlp";
pub const MODEL_VERSION: u32 = 1;

/// Provenance stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    /// fk, jac, s2r or direct.
    pub role: String,
    pub robot: String,
    pub seed: u64,
    pub config_digest: String,
    #[serde(default)]
    pub workspace_width: Option<f64>,
    #[serde(default)]
    pub test_error_pct_width: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    rows: usize,
    cols: usize,
    activation: Activation,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    format: String,
    version: u32,
    meta: ModelMeta,
    input_scaler: Scaler,
    output_scaler: Scaler,
    layers: Vec<LayerRecord>,
}

pub fn model_to_json(net: &Mlp, meta: &ModelMeta) -> String {
    let layers = net
        .layers
        .iter()
        .map(|l| {
            let (rows, cols) = l.weights.shape();
            let weights = (0..rows).flat_map(|r| l.weights.row(r).iter().copied().collect::<Vec<_>>()).collect();
            LayerRecord {
                rows,
                cols,
                activation: l.activation,
                weights,
                bias: l.bias.as_slice().to_vec(),
            }
        })
        .collect();
    let record = ModelRecord {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        meta: meta.clone(),
        input_scaler: net.input_scaler.clone(),
        output_scaler: net.output_scaler.clone(),
        layers,
    };
    serde_json::to_string_pretty(&record).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<(Mlp, ModelMeta)> {
    let record: ModelRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        reason: e.to_string(),
    })?;
    if record.format != MODEL_FORMAT {
        return Err(Error::validation(format!("not a model file (format {:?})", record.format)));
    }
    if record.version != MODEL_VERSION {
        return Err(Error::validation(format!("unsupported model version {}", record.version)));
    }
    let layers = record
        .layers
        .into_iter()
        .map(|l| {
            check_dim(l.rows * l.cols, l.weights.len())?;
            check_dim(l.rows, l.bias.len())?;
            Ok(Layer {
                weights: DMatrix::from_row_slice(l.rows, l.cols, &l.weights),
                bias: DVector::from_vec(l.bias),
                activation: l.activation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let net = Mlp {
        layers,
        input_scaler: record.input_scaler,
        output_scaler: record.output_scaler,
    };
    net.validate()?;
    Ok((net, record.meta))
}

pub fn save_model(path: &Path, net: &Mlp, meta: &ModelMeta) -> Result<()> {
    fs::write(path, model_to_json(net, meta)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(Mlp, ModelMeta)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}
