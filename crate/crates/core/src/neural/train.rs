use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, Scaler};
use crate::dataset::{Dataset, PairedSample};
use crate::error::{check_dim, check_finite, Error, Result};

/// Regression data, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
}

impl TrainingSet {
    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        check_dim(inputs.ncols(), targets.ncols())?;
        if inputs.ncols() == 0 {
            return Err(Error::validation("training set is empty"));
        }
        Ok(Self { inputs, targets })
    }

    pub fn from_pairs<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
    {
        let (xs, ys): (Vec<&[f64]>, Vec<&[f64]>) = rows.into_iter().unzip();
        let first_x = xs.first().ok_or_else(|| Error::validation("training set is empty"))?;
        let (in_dim, out_dim) = (first_x.len(), ys[0].len());
        for (x, y) in xs.iter().zip(&ys) {
            check_dim(in_dim, x.len())?;
            check_dim(out_dim, y.len())?;
        }
        let inputs = DMatrix::from_fn(in_dim, xs.len(), |r, c| xs[c][r]);
        let targets = DMatrix::from_fn(out_dim, ys.len(), |r, c| ys[c][r]);
        Self::new(inputs, targets)
    }

    /// `c → pˢ`.
    pub fn forward_kinematics(data: &Dataset) -> Result<Self> {
        Self::from_pairs(data.samples.iter().map(|s| (s.c.as_slice(), s.p_s.as_slice())))
    }

    /// `c → vec(Jˢ)` (row-major).
    pub fn jacobian(data: &Dataset) -> Result<Self> {
        Self::from_pairs(data.samples.iter().map(|s| (s.c.as_slice(), s.j_s.as_slice())))
    }

    /// `pˢ → c`, the direct IK regression.
    pub fn inverse(data: &Dataset) -> Result<Self> {
        Self::from_pairs(data.samples.iter().map(|s| (s.p_s.as_slice(), s.c.as_slice())))
    }

    /// `pˢ → pʳ`.
    pub fn sim_to_real(pairs: &[PairedSample]) -> Result<Self> {
        Self::from_pairs(pairs.iter().map(|s| (s.p_s.as_slice(), s.p_r.as_slice())))
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_columns(idx),
            targets: self.targets.select_columns(idx),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Levenberg–Marquardt on the full training set.
    Lm,
    /// Mini-batch Adam.
    FirstOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// First-order step size at the start of the cosine schedule.
    pub learning_rate: f64,
    /// Final step size as a fraction of `learning_rate`.
    pub lr_floor: f64,
    pub lm_damping_init: f64,
    pub lm_damping_up: f64,
    pub lm_damping_down: f64,
    pub lm_damping_max: f64,
    /// Stop once training MSE (normalized units) drops below this.
    pub target_mse: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Lm,
            max_epochs: 13_500,
            batch_size: 200,
            learning_rate: 0.04,
            lr_floor: 0.01,
            lm_damping_init: 1e-3,
            lm_damping_up: 10.0,
            lm_damping_down: 10.0,
            lm_damping_max: 1e10,
            target_mse: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.learning_rate,
            self.lr_floor,
            self.lm_damping_init,
            self.lm_damping_max,
        ];
        if self.max_epochs == 0 || self.batch_size == 0 || positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::validation("training config values must be positive"));
        }
        if !(self.lm_damping_up > 1.0 && self.lm_damping_down > 1.0) {
            return Err(Error::validation("damping factors must exceed 1"));
        }
        if !(self.target_mse >= 0.0) {
            return Err(Error::validation("target_mse must be non-negative"));
        }
        Ok(())
    }

    /// Stable FNV-1a digest of the serialized config, recorded in model files.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in text.bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{hash:016x}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    TargetReached,
    /// LM could not find a decreasing step before damping hit its cap.
    DampingCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub optimizer: Optimizer,
    /// Normalized-unit MSE.
    pub train_mse: f64,
    pub test_mse: f64,
    /// Mean Euclidean test error as % of workspace width, when known.
    pub test_error_pct_width: Option<f64>,
    pub epochs: usize,
    pub wall_time_s: f64,
    pub stop_reason: StopReason,
    /// Training MSE after every accepted epoch, starting from the initial net.
    pub history: Vec<f64>,
}

/// Fit `net` in place. Scalers are taken as-is; fit them beforehand.
pub fn train(net: &mut Mlp, train_set: &TrainingSet, test_set: &TrainingSet, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    net.validate()?;
    for set in [train_set, test_set] {
        if set.is_empty() {
            return Err(Error::validation("training and test sets must be non-empty"));
        }
        check_dim(net.input_dim(), set.inputs.nrows())?;
        check_dim(net.output_dim(), set.targets.nrows())?;
        check_finite("training inputs", set.inputs.as_slice())?;
        check_finite("training targets", set.targets.as_slice())?;
    }
    let start = Instant::now();
    let x = net.input_scaler.scale_columns(&train_set.inputs);
    let y = net.output_scaler.scale_columns(&train_set.targets);
    let batch = cfg.batch_size.min(train_set.len());
    let (epochs, stop_reason, history) = match cfg.optimizer {
        Optimizer::Lm => train_lm(net, &x, &y, batch, cfg)?,
        Optimizer::FirstOrder => train_adam(net, &x, &y, batch, cfg),
    };
    let train_mse = *history.last().expect("initial loss recorded");
    let test_mse = scaled_mse(
        net,
        &net.input_scaler.scale_columns(&test_set.inputs),
        &net.output_scaler.scale_columns(&test_set.targets),
    );
    Ok(TrainReport {
        optimizer: cfg.optimizer,
        train_mse,
        test_mse,
        test_error_pct_width: None,
        epochs,
        wall_time_s: start.elapsed().as_secs_f64(),
        stop_reason,
        history,
    })
}

/// Build a fresh network for `train_set`, fit both scalers to it and train.
pub fn fit_network(
    hidden: &[usize],
    train_set: &TrainingSet,
    test_set: &TrainingSet,
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainReport)> {
    if train_set.is_empty() {
        return Err(Error::validation("training set is empty"));
    }
    let mut net = Mlp::new(train_set.inputs.nrows(), hidden, train_set.targets.nrows(), cfg.seed);
    net.input_scaler = Scaler::fit(&train_set.inputs);
    net.output_scaler = Scaler::fit(&train_set.targets);
    let report = train(&mut net, train_set, test_set, cfg)?;
    Ok((net, report))
}

/// Mean squared error over every output of every sample, scaled units.
pub(crate) fn scaled_mse(net: &Mlp, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let acts = net.forward_batch_scaled(x);
    let out = acts.last().expect("output layer");
    (out - y).norm_squared() / y.len() as f64
}

/// Damped Gauss–Newton step `(JᵀJ + μI) δ = −Jᵀr`, `None` if the damped
/// system is not positive definite.
pub fn lm_step(jtj: &DMatrix<f64>, jtr: &DVector<f64>, damping: f64) -> Option<DVector<f64>> {
    let mut a = jtj.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += damping;
    }
    let chol = a.cholesky()?;
    let step = chol.solve(&(-jtr));
    step.iter().all(|v| v.is_finite()).then_some(step)
}

/// Accumulate `JᵀJ` and `Jᵀr` of the scaled residuals over fixed-size
/// chunks of the training set.
pub(crate) fn accumulate_normal_equations(
    net: &Mlp,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    batch: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    let p = net.param_count();
    let mut jtj = DMatrix::zeros(p, p);
    let mut jtr = DVector::zeros(p);
    let n = x.ncols();
    let mut begin = 0;
    while begin < n {
        let end = (begin + batch).min(n);
        let xb = x.columns(begin, end - begin).into_owned();
        let yb = y.columns(begin, end - begin).into_owned();
        let (jt, r) = residual_jacobian_t(net, &xb, &yb);
        jtj.gemm(1.0, &jt, &jt.transpose(), 1.0);
        jtr.gemv(1.0, &jt, &r, 1.0);
        begin = end;
    }
    (jtj, jtr)
}

/// Transposed residual Jacobian (params × residuals) and the residual vector
/// for one batch. Residual `s·out + k` is output `k` of sample `s`.
fn residual_jacobian_t(net: &Mlp, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let acts = net.forward_batch_scaled(x);
    let out_dim = net.output_dim();
    let samples = x.ncols();
    let layers = net.layers.len();
    let slopes: Vec<DMatrix<f64>> = (0..layers).map(|l| net.activation_slopes(l, &acts[l + 1])).collect();
    let mut offsets = Vec::with_capacity(layers);
    let mut acc = 0;
    for layer in &net.layers {
        offsets.push(acc);
        acc += layer.param_count();
    }
    let mut jt = DMatrix::zeros(net.param_count(), samples * out_dim);
    for k in 0..out_dim {
        let mut delta = DMatrix::zeros(out_dim, samples);
        delta.row_mut(k).fill(1.0);
        for l in (0..layers).rev() {
            if l + 1 < layers {
                delta = net.layers[l + 1].weights.tr_mul(&delta);
            }
            delta.component_mul_assign(&slopes[l]);
            let prev = &acts[l];
            let (rows, cols) = net.layers[l].weights.shape();
            for s in 0..samples {
                let mut col = jt.column_mut(s * out_dim + k);
                let base = offsets[l];
                for a in 0..rows {
                    let d = delta[(a, s)];
                    let row_base = base + a * cols;
                    for b in 0..cols {
                        col[row_base + b] = d * prev[(b, s)];
                    }
                    col[base + rows * cols + a] = d;
                }
            }
        }
    }
    let residual = acts.last().expect("output layer") - y;
    (jt, DVector::from_column_slice(residual.as_slice()))
}

fn train_lm(
    net: &mut Mlp,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    batch: usize,
    cfg: &TrainConfig,
) -> Result<(usize, StopReason, Vec<f64>)> {
    let mut damping = cfg.lm_damping_init;
    let mut loss = scaled_mse(net, x, y);
    let mut history = vec![loss];
    for epoch in 0..cfg.max_epochs {
        if loss <= cfg.target_mse {
            return Ok((epoch, StopReason::TargetReached, history));
        }
        let (jtj, jtr) = accumulate_normal_equations(net, x, y, batch);
        let params = net.params();
        loop {
            let Some(step) = lm_step(&jtj, &jtr, damping) else {
                damping *= cfg.lm_damping_up;
                if damping > cfg.lm_damping_max {
                    return Err(Error::Training(format!(
                        "damped normal equations singular up to damping {:e}",
                        cfg.lm_damping_max
                    )));
                }
                continue;
            };
            net.set_params((&params + step).as_slice())?;
            let trial = scaled_mse(net, x, y);
            if trial < loss {
                loss = trial;
                history.push(loss);
                damping = (damping / cfg.lm_damping_down).max(1e-20);
                break;
            }
            damping *= cfg.lm_damping_up;
            if damping > cfg.lm_damping_max {
                net.set_params(params.as_slice())?;
                return Ok((epoch, StopReason::DampingCap, history));
            }
        }
    }
    let reason = if loss <= cfg.target_mse {
        StopReason::TargetReached
    } else {
        StopReason::MaxEpochs
    };
    Ok((cfg.max_epochs, reason, history))
}

/// Gradient of the scaled batch MSE, in `Mlp::params` order.
pub(crate) fn loss_gradient(net: &Mlp, x: &DMatrix<f64>, y: &DMatrix<f64>) -> DVector<f64> {
    let acts = net.forward_batch_scaled(x);
    let layers = net.layers.len();
    let norm = 2.0 / y.len() as f64;
    let mut delta = (acts.last().expect("output layer") - y) * norm;
    let mut grads: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(layers);
    for l in (0..layers).rev() {
        if l + 1 < layers {
            delta = net.layers[l + 1].weights.tr_mul(&delta);
        }
        delta.component_mul_assign(&net.activation_slopes(l, &acts[l + 1]));
        let gw = &delta * acts[l].transpose();
        let gb = delta.column_sum();
        grads.push((gw, gb));
    }
    grads.reverse();
    let mut out = Vec::with_capacity(net.param_count());
    for (gw, gb) in &grads {
        for r in 0..gw.nrows() {
            out.extend(gw.row(r).iter());
        }
        out.extend(gb.iter());
    }
    DVector::from_vec(out)
}

fn train_adam(net: &mut Mlp, x: &DMatrix<f64>, y: &DMatrix<f64>, batch: usize, cfg: &TrainConfig) -> (usize, StopReason, Vec<f64>) {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let p = net.param_count();
    let mut params = net.params();
    let mut m: DVector<f64> = DVector::zeros(p);
    let mut v: DVector<f64> = DVector::zeros(p);
    let mut order: Vec<usize> = (0..x.ncols()).collect();
    let mut step: i32 = 0;
    let mut history = vec![scaled_mse(net, x, y)];
    for epoch in 0..cfg.max_epochs {
        if *history.last().expect("non-empty") <= cfg.target_mse {
            return (epoch, StopReason::TargetReached, history);
        }
        let progress = epoch as f64 / cfg.max_epochs as f64;
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        let lr = cfg.learning_rate * (cfg.lr_floor + (1.0 - cfg.lr_floor) * cosine);
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let xb = x.select_columns(chunk);
            let yb = y.select_columns(chunk);
            let g = loss_gradient(net, &xb, &yb);
            step += 1;
            let c1 = 1.0 - BETA1.powi(step);
            let c2 = 1.0 - BETA2.powi(step);
            for i in 0..p {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
            }
            net.set_params(params.as_slice()).expect("same parameter count");
        }
        history.push(scaled_mse(net, x, y));
    }
    let reason = if *history.last().expect("non-empty") <= cfg.target_mse {
        StopReason::TargetReached
    } else {
        StopReason::MaxEpochs
    };
    (cfg.max_epochs, reason, history)
}
