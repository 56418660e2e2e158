//! Feed-forward networks with tansig hidden layers: forward pass, analytic
//! input Jacobian, Levenberg–Marquardt and Adam training, evaluation and
//! model files.

mod io;
mod metrics;
mod mlp;
mod train;

pub use io::{load_model, model_from_json, model_to_json, save_model, ModelMeta, MODEL_FORMAT, MODEL_VERSION};
pub use metrics::{evaluate, prediction_errors, size_s2r, ErrorStats};
pub use mlp::{tansig, Activation, Layer, Mlp, Scaler};
pub use train::{fit_network, lm_step, train, Optimizer, StopReason, TrainConfig, TrainReport, TrainingSet};
