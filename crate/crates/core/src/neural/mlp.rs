use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};

/// `2/(1+e^(−2x)) − 1`, evaluated as `tanh` (same function, exact oddness,
/// no cancellation near zero). Saturates to ±1 beyond |x| > 20.
pub fn tansig(x: f64) -> f64 {
    if x > 20.0 {
        1.0
    } else if x < -20.0 {
        -1.0
    } else {
        x.tanh()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tansig,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tansig => tansig(z),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation value `a = f(z)`.
    fn slope_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tansig => 1.0 - a * a,
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `outputs × inputs`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Per-dimension min/max map onto [−1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    /// Maps [−1, 1] onto itself.
    pub fn unit(dim: usize) -> Self {
        Self {
            min: vec![-1.0; dim],
            max: vec![1.0; dim],
        }
    }

    /// Fit to the columns of `data` (one column per sample). Degenerate
    /// dimensions are widened by ±1 so the map stays invertible.
    pub fn fit(data: &DMatrix<f64>) -> Self {
        let mut min = Vec::with_capacity(data.nrows());
        let mut max = Vec::with_capacity(data.nrows());
        for row in data.row_iter() {
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
                min.push(lo);
                max.push(hi);
            } else {
                min.push(lo - 1.0);
                max.push(hi + 1.0);
            }
        }
        Self { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.min.len(), self.max.len())?;
        check_finite("scaler", &self.min)?;
        check_finite("scaler", &self.max)?;
        if self.min.iter().zip(&self.max).any(|(lo, hi)| lo >= hi) {
            return Err(Error::validation("scaler needs min < max in every dimension"));
        }
        Ok(())
    }

    /// d(scaled)/d(raw) per dimension.
    pub fn slopes(&self) -> Vec<f64> {
        self.min.iter().zip(&self.max).map(|(lo, hi)| 2.0 / (hi - lo)).collect()
    }

    pub fn scale(&self, raw: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            raw.len(),
            raw.iter()
                .zip(self.min.iter().zip(&self.max))
                .map(|(x, (lo, hi))| 2.0 * (x - lo) / (hi - lo) - 1.0),
        )
    }

    pub fn unscale(&self, scaled: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            scaled.len(),
            scaled
                .iter()
                .zip(self.min.iter().zip(&self.max))
                .map(|(s, (lo, hi))| lo + 0.5 * (s + 1.0) * (hi - lo)),
        )
    }

    pub(crate) fn scale_columns(&self, raw: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = raw.clone();
        for (r, mut row) in out.row_iter_mut().enumerate() {
            let (lo, hi) = (self.min[r], self.max[r]);
            for v in row.iter_mut() {
                *v = 2.0 * (*v - lo) / (hi - lo) - 1.0;
            }
        }
        out
    }

    pub(crate) fn unscale_columns(&self, scaled: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = scaled.clone();
        for (r, mut row) in out.row_iter_mut().enumerate() {
            let (lo, hi) = (self.min[r], self.max[r]);
            for v in row.iter_mut() {
                *v = lo + 0.5 * (*v + 1.0) * (hi - lo);
            }
        }
        out
    }
}

/// Feed-forward network: tansig hidden layers, linear output, min/max
/// scaling on both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub input_scaler: Scaler,
    pub output_scaler: Scaler,
}

impl Mlp {
    /// Uniform init in ±1/√fan_in, unit scalers.
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights = DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-bound..=bound));
                let bias = DVector::from_fn(fan_out, |_, _| rng.random_range(-bound..=bound));
                let activation = if i + 2 == dims.len() {
                    Activation::Linear
                } else {
                    Activation::Tansig
                };
                Layer {
                    weights,
                    bias,
                    activation,
                }
            })
            .collect();
        Self {
            layers,
            input_scaler: Scaler::unit(input_dim),
            output_scaler: Scaler::unit(output_dim),
        }
    }

    /// A single linear layer `y = W x + b` with unit scalers.
    pub fn linear(weights: DMatrix<f64>, bias: DVector<f64>) -> Self {
        let (rows, cols) = weights.shape();
        Self {
            layers: vec![Layer {
                weights,
                bias,
                activation: Activation::Linear,
            }],
            input_scaler: Scaler::unit(cols),
            output_scaler: Scaler::unit(rows),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(Layer::outputs).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let last = self
            .layers
            .last()
            .ok_or_else(|| Error::validation("network has no layers"))?;
        for pair in self.layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::validation(format!(
                    "layer dimensions do not chain: {} outputs feed {} inputs",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        for layer in &self.layers {
            check_dim(layer.outputs(), layer.bias.len())?;
            check_finite("weights", layer.weights.as_slice())?;
            check_finite("bias", layer.bias.as_slice())?;
        }
        if last.activation != Activation::Linear {
            return Err(Error::validation("output layer must be linear"));
        }
        self.input_scaler.validate()?;
        self.output_scaler.validate()?;
        check_dim(self.input_dim(), self.input_scaler.dim())?;
        check_dim(self.output_dim(), self.output_scaler.dim())?;
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim(self.input_dim(), x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> DVector<f64> {
        let mut a = self.input_scaler.scale(x);
        for layer in &self.layers {
            let mut z = &layer.weights * &a + &layer.bias;
            z.apply(|v| *v = layer.activation.apply(*v));
            a = z;
        }
        self.output_scaler.unscale(a.as_slice())
    }

    /// Analytic `d forward / d x`, `output_dim × input_dim`, including both
    /// scaler slopes.
    pub fn input_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let in_slopes = self.input_scaler.slopes();
        let mut a = self.input_scaler.scale(x);
        let mut d = DMatrix::from_diagonal(&DVector::from_vec(in_slopes));
        for layer in &self.layers {
            let mut z = &layer.weights * &a + &layer.bias;
            z.apply(|v| *v = layer.activation.apply(*v));
            let mut next = &layer.weights * &d;
            if layer.activation != Activation::Linear {
                for (r, mut row) in next.row_iter_mut().enumerate() {
                    row *= layer.activation.slope_from_output(z[r]);
                }
            }
            d = next;
            a = z;
        }
        for (r, mut row) in d.row_iter_mut().enumerate() {
            row *= 0.5 * (self.output_scaler.max[r] - self.output_scaler.min[r]);
        }
        Ok(d)
    }

    /// Forward pass over a batch, one sample per column, in scaled units.
    /// Returns the activations of every layer, input first.
    pub(crate) fn forward_batch_scaled(&self, scaled_inputs: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(scaled_inputs.clone());
        for layer in &self.layers {
            let prev = acts.last().expect("input pushed");
            let mut z = &layer.weights * prev;
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            if layer.activation != Activation::Linear {
                z.apply(|v| *v = layer.activation.apply(*v));
            }
            acts.push(z);
        }
        acts
    }

    /// Batched forward pass in raw units, one sample per column.
    pub fn forward_batch(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.input_dim(), inputs.nrows())?;
        let scaled = self.input_scaler.scale_columns(inputs);
        let acts = self.forward_batch_scaled(&scaled);
        Ok(self.output_scaler.unscale_columns(acts.last().expect("output layer")))
    }

    pub(crate) fn activation_slopes(&self, layer: usize, output: &DMatrix<f64>) -> DMatrix<f64> {
        let act = self.layers[layer].activation;
        output.map(|a| act.slope_from_output(a))
    }

    /// All weights and biases, layer by layer, weights row-major then bias.
    pub fn params(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            for r in 0..layer.outputs() {
                out.extend(layer.weights.row(r).iter());
            }
            out.extend(layer.bias.iter());
        }
        DVector::from_vec(out)
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim(self.param_count(), params.len())?;
        let mut at = 0;
        for layer in &mut self.layers {
            let (rows, cols) = layer.weights.shape();
            for r in 0..rows {
                for c in 0..cols {
                    layer.weights[(r, c)] = params[at];
                    at += 1;
                }
            }
            for r in 0..rows {
                layer.bias[r] = params[at];
                at += 1;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    /// Straightforward reimplementation used as the forward-pass oracle.
    fn reference_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let sc = &net.input_scaler;
        let mut a: Vec<f64> = (0..x.len())
            .map(|i| 2.0 * (x[i] - sc.min[i]) / (sc.max[i] - sc.min[i]) - 1.0)
            .collect();
        for layer in &net.layers {
            let mut next = vec![0.0; layer.outputs()];
            for (r, out) in next.iter_mut().enumerate() {
                let mut z = layer.bias[r];
                for (c, v) in a.iter().enumerate() {
                    z += layer.weights[(r, c)] * v;
                }
                *out = match layer.activation {
                    Activation::Tansig => 2.0 / (1.0 + (-2.0 * z).exp()) - 1.0,
                    Activation::Linear => z,
                };
            }
            a = next;
        }
        let so = &net.output_scaler;
        a.iter()
            .enumerate()
            .map(|(i, s)| so.min[i] + (s + 1.0) * (so.max[i] - so.min[i]) / 2.0)
            .collect()
    }

    fn random_net(seed: u64) -> Mlp {
        let mut net = Mlp::new(3, &[35, 35], 3, seed);
        net.input_scaler = Scaler {
            min: vec![0.0, -1.0, 2.0],
            max: vec![3.0, 4.0, 2.5],
        };
        net.output_scaler = Scaler {
            min: vec![-40.0, -10.0, 50.0],
            max: vec![40.0, 30.0, 90.0],
        };
        net
    }

    #[test]
    fn tansig_values() {
        assert_eq!(tansig(0.0), 0.0);
        // 2/(1+e^−1) − 1 at 30 digits
        assert!((tansig(0.5) - 0.462_117_157_260_009_758_5).abs() < 1e-15);
        assert_eq!(tansig(25.0), 1.0);
        assert_eq!(tansig(-25.0), -1.0);
    }

    #[test]
    fn zero_weight_net_outputs_scaler_midpoint() {
        let mut net = Mlp::new(2, &[4], 2, 1);
        let zeros = vec![0.0; net.param_count()];
        net.set_params(&zeros).unwrap();
        net.output_scaler = Scaler {
            min: vec![0.0, 10.0],
            max: vec![4.0, 20.0],
        };
        let y = net.forward(&[0.3, -0.7]).unwrap();
        assert_eq!(y.as_slice(), &[2.0, 15.0]);
    }

    #[test]
    fn identity_linear_layer_passes_through() {
        let net = Mlp::linear(DMatrix::identity(3, 3), DVector::zeros(3));
        let y = net.forward(&[0.25, -0.5, 0.75]).unwrap();
        assert_eq!(y.as_slice(), &[0.25, -0.5, 0.75]);
    }

    #[test]
    fn forward_matches_reference() {
        let net = random_net(9);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..3.0)).collect();
            let got = net.forward(&x).unwrap();
            for (g, w) in got.iter().zip(reference_forward(&net, &x)) {
                assert!((g - w).abs() < 1e-12 * w.abs().max(1.0));
            }
        }
    }

    #[test]
    fn batch_forward_matches_single() {
        let net = random_net(4);
        let inputs = DMatrix::from_row_slice(3, 2, &[0.1, 2.0, 0.5, -0.5, 2.1, 2.4]);
        let batch = net.forward_batch(&inputs).unwrap();
        for j in 0..2 {
            let single = net.forward(inputs.column(j).as_slice()).unwrap();
            assert!((batch.column(j) - single).norm() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = random_net(1);
        assert!(matches!(net.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(net.input_jacobian(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn linear_layer_jacobian_is_its_matrix() {
        let w = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.25, 4.0, -1.5]);
        let net = Mlp::linear(w.clone(), DVector::from_vec(vec![1.0, 2.0]));
        assert_eq!(net.input_jacobian(&[0.3, 0.1, -0.2]).unwrap(), w);
    }

    #[test]
    fn frozen_zero_hidden_weights_give_zero_jacobian() {
        let mut net = Mlp::new(3, &[8], 2, 3);
        net.layers[0].weights.fill(0.0);
        let j = net.input_jacobian(&[0.2, 0.4, -0.1]).unwrap();
        assert!(j.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn params_round_trip() {
        let net = random_net(5);
        let mut other = random_net(6);
        other.set_params(net.params().as_slice()).unwrap();
        assert_eq!(other, net);
        assert!(other.set_params(&[1.0]).is_err());
    }

    #[test]
    fn validate_catches_broken_chain() {
        let mut net = random_net(2);
        assert!(net.validate().is_ok());
        net.layers[1].weights = DMatrix::zeros(35, 34);
        assert!(net.validate().is_err());
    }

    /// Central differences of `forward`, step 1e-5.
    pub(crate) fn fd_jacobian(net: &Mlp, x: &[f64]) -> DMatrix<f64> {
        let h = 1e-5;
        let mut j = DMatrix::zeros(net.output_dim(), x.len());
        for k in 0..x.len() {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[k] += h;
            lo[k] -= h;
            let col = (net.forward(&hi).unwrap() - net.forward(&lo).unwrap()) / (2.0 * h);
            j.set_column(k, &col);
        }
        j
    }

    proptest! {
        #[test]
        fn tansig_is_odd_and_bounded(x in -15.0..15.0f64) {
            prop_assert_eq!(tansig(x), -tansig(-x));
            prop_assert!(tansig(x) > -1.0 && tansig(x) < 1.0);
        }

        #[test]
        fn tansig_derivative_identity(x in -5.0..5.0f64) {
            let h = 1e-5;
            let numeric = (tansig(x + h) - tansig(x - h)) / (2.0 * h);
            let f = tansig(x);
            prop_assert!((numeric - (1.0 - f * f)).abs() < 1e-8);
        }

        #[test]
        fn input_jacobian_matches_finite_differences(seed in 0u64..500, a in 0.0..3.0f64, b in -1.0..4.0f64, c in 2.0..2.5f64) {
            let net = random_net(seed);
            let x = [a, b, c];
            let analytic = net.input_jacobian(&x).unwrap();
            let numeric = fd_jacobian(&net, &x);
            let scale = numeric.norm().max(1e-8);
            prop_assert!((analytic - numeric).norm() <= 1e-4 * scale);
        }

        #[test]
        fn scaler_round_trip(v in proptest::collection::vec(-100.0..100.0f64, 3)) {
            let s = Scaler { min: vec![-50.0, 0.0, 10.0], max: vec![50.0, 0.5, 90.0] };
            let back = s.unscale(s.scale(&v).as_slice());
            for (x, y) in v.iter().zip(back.iter()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }
}
