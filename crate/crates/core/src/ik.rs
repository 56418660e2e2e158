//! Jacobian-based IK: minimize `‖target − p(c)‖²` by stepping along the
//! negative gradient `2 Jᵀ (target − p)` with a backtracking line search,
//! clamping every trial to the actuation ranges.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::neural::{load_model, save_model, Mlp, ModelMeta};
use crate::robot::{central_difference_jacobian, ActuationVector, Jacobian, RealTwin, RobotSpec, TaskPoint};

/// Anything the solver can drive: a position model and its Jacobian over
/// actuation space.
pub trait KinematicModel {
    fn spec(&self) -> &RobotSpec;

    /// `(pˢ, p)`: the simulated position and the position the solver tracks.
    /// They coincide unless a sim-to-real correction is active.
    fn predict(&self, c: &[f64]) -> Result<(DVector<f64>, DVector<f64>)>;

    /// `dp/dc` of the tracked position, n×m.
    fn jacobian(&self, c: &[f64]) -> Result<DMatrix<f64>>;

    fn position(&self, c: &[f64]) -> Result<DVector<f64>> {
        Ok(self.predict(c)?.1)
    }
}

/// The three learned networks for one robot.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub spec: RobotSpec,
    /// `c → pˢ`.
    pub net_fk: Mlp,
    /// `c → vec(Jˢ)`, row-major.
    pub net_jac: Mlp,
    /// `pˢ → pʳ`.
    pub net_s2r: Option<Mlp>,
    /// Workspace width (mm) used for tolerances and reporting.
    pub width: f64,
}

pub const FK_FILE: &str = "fk.json";
pub const JAC_FILE: &str = "jac.json";
pub const S2R_FILE: &str = "s2r.json";
pub const ROBOT_FILE: &str = "robot.toml";

impl ModelBundle {
    pub fn new(spec: RobotSpec, net_fk: Mlp, net_jac: Mlp, net_s2r: Option<Mlp>, width: f64) -> Result<Self> {
        spec.validate()?;
        let (m, n) = (spec.m, spec.n);
        let shape = |net: &Mlp, what: &str, inputs: usize, outputs: usize| -> Result<()> {
            net.validate()?;
            if net.input_dim() != inputs || net.output_dim() != outputs {
                return Err(Error::Config(format!(
                    "{what} network maps {}→{}, robot needs {inputs}→{outputs}",
                    net.input_dim(),
                    net.output_dim()
                )));
            }
            Ok(())
        };
        shape(&net_fk, "fk", m, n)?;
        shape(&net_jac, "jacobian", m, n * m)?;
        if let Some(s2r) = &net_s2r {
            shape(s2r, "sim-to-real", n, n)?;
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Config(format!("workspace width must be positive, got {width}")));
        }
        Ok(Self {
            spec,
            net_fk,
            net_jac,
            net_s2r,
            width,
        })
    }

    pub fn has_s2r(&self) -> bool {
        self.net_s2r.is_some()
    }

    /// A view that tracks either the sim-to-real-corrected or the simulated position.
    pub fn view(&self, use_s2r: bool) -> Result<BundleView<'_>> {
        if use_s2r && self.net_s2r.is_none() {
            return Err(Error::Config("no sim-to-real network loaded".into()));
        }
        Ok(BundleView { bundle: self, use_s2r })
    }

    /// `(pˢ, r(pˢ))`, or `(pˢ, pˢ)` without a sim-to-real network.
    pub fn predict(&self, c: &ActuationVector) -> Result<(TaskPoint, TaskPoint)> {
        let (p_s, p) = KinematicModel::predict(self, c.as_slice())?;
        Ok((p_s.into(), p.into()))
    }

    /// `Jʳ = diff(N_s2r)(pˢ) · Jˢ`, or `Jˢ` without a sim-to-real network.
    pub fn composed_jacobian(&self, c: &ActuationVector) -> Result<Jacobian> {
        Ok(Jacobian::new(KinematicModel::jacobian(self, c.as_slice())?))
    }

    fn simulated_jacobian(&self, c: &[f64]) -> DMatrix<f64> {
        let flat = self.net_jac.forward_unchecked(c);
        DMatrix::from_row_slice(self.spec.n, self.spec.m, flat.as_slice())
    }

    fn predict_with(&self, c: &[f64], use_s2r: bool) -> Result<(DVector<f64>, DVector<f64>)> {
        self.spec.check_actuation(c)?;
        let p_s = self.net_fk.forward_unchecked(c);
        let p = match (&self.net_s2r, use_s2r) {
            (Some(s2r), true) => s2r.forward_unchecked(p_s.as_slice()),
            _ => p_s.clone(),
        };
        Ok((p_s, p))
    }

    fn jacobian_with(&self, c: &[f64], use_s2r: bool) -> Result<DMatrix<f64>> {
        self.spec.check_actuation(c)?;
        let j_s = self.simulated_jacobian(c);
        match (&self.net_s2r, use_s2r) {
            (Some(s2r), true) => {
                let p_s = self.net_fk.forward_unchecked(c);
                Ok(s2r.input_jacobian(p_s.as_slice())? * j_s)
            }
            _ => Ok(j_s),
        }
    }

    /// Write `robot.toml`, `fk.json`, `jac.json` and (if present) `s2r.json`.
    pub fn save(&self, dir: &Path, meta: &ModelMeta) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let robot = dir.join(ROBOT_FILE);
        fs::write(&robot, self.spec.to_toml()?).map_err(|e| Error::io(&robot, e))?;
        let with_role = |role: &str| ModelMeta {
            role: role.into(),
            robot: self.spec.id.to_string(),
            workspace_width: Some(self.width),
            ..meta.clone()
        };
        save_model(&dir.join(FK_FILE), &self.net_fk, &with_role("fk"))?;
        save_model(&dir.join(JAC_FILE), &self.net_jac, &with_role("jac"))?;
        if let Some(s2r) = &self.net_s2r {
            save_model(&dir.join(S2R_FILE), s2r, &with_role("s2r"))?;
        }
        Ok(())
    }

    /// Load a bundle directory written by [`ModelBundle::save`]. The
    /// sim-to-real network is optional.
    pub fn load(dir: &Path) -> Result<Self> {
        let robot = dir.join(ROBOT_FILE);
        let text = fs::read_to_string(&robot).map_err(|e| Error::io(&robot, e))?;
        let spec = RobotSpec::from_toml(&text)?;
        let (net_fk, fk_meta) = load_model(&dir.join(FK_FILE))?;
        let (net_jac, _) = load_model(&dir.join(JAC_FILE))?;
        let s2r_path = dir.join(S2R_FILE);
        let net_s2r = if s2r_path.exists() {
            Some(load_model(&s2r_path)?.0)
        } else {
            None
        };
        let width = fk_meta
            .workspace_width
            .ok_or_else(|| Error::Config("fk model file lacks workspace_width".into()))?;
        Self::new(spec, net_fk, net_jac, net_s2r, width)
    }
}

impl KinematicModel for ModelBundle {
    fn spec(&self) -> &RobotSpec {
        &self.spec
    }

    fn predict(&self, c: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        self.predict_with(c, true)
    }

    fn jacobian(&self, c: &[f64]) -> Result<DMatrix<f64>> {
        self.jacobian_with(c, true)
    }
}

/// A bundle with the sim-to-real correction explicitly on or off.
#[derive(Debug, Clone, Copy)]
pub struct BundleView<'a> {
    pub bundle: &'a ModelBundle,
    pub use_s2r: bool,
}

impl KinematicModel for BundleView<'_> {
    fn spec(&self) -> &RobotSpec {
        &self.bundle.spec
    }

    fn predict(&self, c: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        self.bundle.predict_with(c, self.use_s2r)
    }

    fn jacobian(&self, c: &[f64]) -> Result<DMatrix<f64>> {
        self.bundle.jacobian_with(c, self.use_s2r)
    }
}

/// Ground-truth model: the analytic robot, optionally seen through the twin.
/// Jacobians are central differences with step `range/(10·segments)`.
#[derive(Debug, Clone)]
pub struct AnalyticModel {
    pub spec: RobotSpec,
    pub twin: Option<RealTwin>,
    pub segments: usize,
}

impl AnalyticModel {
    pub fn new(spec: RobotSpec, twin: Option<RealTwin>) -> Self {
        Self {
            spec,
            twin,
            segments: 100,
        }
    }

    fn tracked(&self, c: &[f64]) -> DVector<f64> {
        let p = self.spec.tip(c);
        match &self.twin {
            Some(twin) => twin.map_slice(p.as_slice()),
            None => p,
        }
    }
}

impl KinematicModel for AnalyticModel {
    fn spec(&self) -> &RobotSpec {
        &self.spec
    }

    fn predict(&self, c: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        self.spec.check_actuation(c)?;
        Ok((self.spec.tip(c), self.tracked(c)))
    }

    fn jacobian(&self, c: &[f64]) -> Result<DMatrix<f64>> {
        self.spec.check_actuation(c)?;
        central_difference_jacobian(|x| Ok(self.tracked(x)), c, &self.spec.ranges, self.segments)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Convergence radius (mm): stop when `O < ε²`.
    pub epsilon: f64,
    pub max_iters: usize,
    /// How the first trial step of each line search is chosen.
    pub step_rule: StepRule,
    /// Multiplier on the rule's first trial step.
    pub initial_step: f64,
    pub shrink: f64,
    pub max_halvings: usize,
    /// Stalled when the objective falls by less than this fraction over
    /// `stall_window` iterations.
    pub stall_tolerance: f64,
    pub stall_window: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            max_iters: 50,
            step_rule: StepRule::BarzilaiBorwein,
            initial_step: 1.0,
            shrink: 0.5,
            max_halvings: 20,
            stall_tolerance: 1e-8,
            stall_window: 3,
        }
    }
}

impl SolverConfig {
    /// Defaults with `ε = 0.1%` of the workspace width.
    pub fn for_width(width: f64) -> Self {
        Self {
            epsilon: 0.001 * width,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.initial_step > 0.0) {
            return Err(Error::validation("epsilon and initial step must be positive"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::validation("shrink factor must be in (0, 1)"));
        }
        if !(self.stall_tolerance >= 0.0 && self.stall_window >= 1) {
            return Err(Error::validation("stall settings out of range"));
        }
        Ok(())
    }
}

/// First trial step along `−g` before halving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `‖g‖² / (2‖Jg‖²)`, the minimizer of the linearized objective along `−g`.
    Cauchy,
    /// `sᵀy / yᵀy` from the previous accepted step `s` and gradient change
    /// `y`; the Cauchy step on the first iteration or when `sᵀy ≤ 0`.
    BarzilaiBorwein,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    Stalled,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkResult {
    pub c: Vec<f64>,
    /// Model-predicted marker position at `c`.
    pub p_pred: Vec<f64>,
    /// `‖target − p_pred‖` (mm).
    pub residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    #[serde(with = "duration_secs")]
    pub wall_time: Duration,
    /// Objective before the first iteration and after every accepted step.
    pub objective_trace: Vec<f64>,
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(secs.max(0.0)))
    }
}

/// `‖target − p‖²`.
pub fn objective(target: &[f64], p: &[f64]) -> Result<f64> {
    check_dim(target.len(), p.len())?;
    Ok(target.iter().zip(p).map(|(t, v)| (t - v) * (t - v)).sum())
}

/// `dO/dc = −2 (target − p)ᵀ J`, as a column vector of length m.
pub fn grad<M: KinematicModel + ?Sized>(model: &M, target: &[f64], c: &[f64]) -> Result<DVector<f64>> {
    check_dim(model.spec().n, target.len())?;
    let p = model.position(c)?;
    let j = model.jacobian(c)?;
    let r = DVector::from_column_slice(target) - p;
    Ok(j.tr_mul(&r) * -2.0)
}

pub fn solve_waypoint<M: KinematicModel + ?Sized>(
    model: &M,
    target: &[f64],
    c0: &[f64],
    cfg: &SolverConfig,
) -> Result<IkResult> {
    cfg.validate()?;
    let spec = model.spec();
    check_dim(spec.n, target.len())?;
    check_finite("target", target)?;
    spec.check_actuation(c0)?;
    let start = Instant::now();
    let t = DVector::from_column_slice(target);
    let eps2 = cfg.epsilon * cfg.epsilon;

    let mut c = c0.to_vec();
    let mut p = model.position(&c)?;
    let mut obj = (&t - &p).norm_squared();
    let mut trace = vec![obj];
    let mut iterations = 0;
    let mut previous: Option<(Vec<f64>, DVector<f64>)> = None;
    let status = loop {
        if obj < eps2 {
            break SolveStatus::Converged;
        }
        if iterations >= cfg.max_iters {
            break SolveStatus::MaxIters;
        }
        let j = model.jacobian(&c)?;
        let g = j.tr_mul(&(&t - &p)) * -2.0;
        let g2 = g.norm_squared();
        let jg = &j * &g;
        let curvature = 2.0 * jg.norm_squared();
        if g2 == 0.0 || curvature == 0.0 {
            break SolveStatus::Stalled;
        }
        let mut step = g2 / curvature;
        if let (StepRule::BarzilaiBorwein, Some((c_prev, g_prev))) = (cfg.step_rule, &previous) {
            let s_dot_y: f64 = (0..c.len()).map(|k| (c[k] - c_prev[k]) * (g[k] - g_prev[k])).sum();
            let y2 = (&g - g_prev).norm_squared();
            if s_dot_y > 0.0 && y2 > 0.0 {
                step = s_dot_y / y2;
            }
        }
        step *= cfg.initial_step;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let mut trial: Vec<f64> = c.iter().zip(g.iter()).map(|(ci, gi)| ci - step * gi).collect();
            spec.clamp(&mut trial);
            let p_trial = model.position(&trial)?;
            let obj_trial = (&t - &p_trial).norm_squared();
            if obj_trial < obj {
                accepted = Some((trial, p_trial, obj_trial));
                break;
            }
            step *= cfg.shrink;
        }
        let Some((trial, p_trial, obj_trial)) = accepted else {
            break SolveStatus::Stalled;
        };
        previous = Some((std::mem::replace(&mut c, trial), g));
        p = p_trial;
        obj = obj_trial;
        trace.push(obj);
        iterations += 1;
        if obj >= eps2 && trace.len() > cfg.stall_window {
            let before = trace[trace.len() - 1 - cfg.stall_window];
            if before - obj < cfg.stall_tolerance * before {
                break SolveStatus::Stalled;
            }
        }
    };
    Ok(IkResult {
        residual: obj.sqrt(),
        p_pred: p.as_slice().to_vec(),
        c,
        iterations,
        status,
        wall_time: start.elapsed(),
        objective_trace: trace,
    })
}

/// Solve waypoints in order, each warm-started from the previous solution.
pub fn follow_path<M: KinematicModel + ?Sized>(
    model: &M,
    waypoints: &[Vec<f64>],
    c0: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<IkResult>> {
    if waypoints.is_empty() {
        return Err(Error::validation("path needs at least one waypoint"));
    }
    let mut results = Vec::with_capacity(waypoints.len());
    let mut warm = c0.to_vec();
    for target in waypoints {
        let result = solve_waypoint(model, target, &warm, cfg)?;
        warm.clone_from(&result.c);
        results.push(result);
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Scaler;
    use crate::robot::ActuationRange;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// n = m = 1 toy robot whose nets are exact: p(c) = c, J = 1.
    fn unit_bundle() -> ModelBundle {
        let spec = RobotSpec {
            ranges: vec![ActuationRange::new(-3.0, 3.0)],
            m: 1,
            n: 1,
            ..RobotSpec::three_chamber()
        };
        let fk = Mlp::linear(DMatrix::identity(1, 1), DVector::zeros(1));
        let jac = Mlp::linear(DMatrix::zeros(1, 1), DVector::from_vec(vec![1.0]));
        ModelBundle {
            spec,
            net_fk: fk,
            net_jac: jac,
            net_s2r: None,
            width: 6.0,
        }
    }

    fn random_bundle(seed: u64, with_s2r: bool) -> ModelBundle {
        let spec = RobotSpec::planar_finger();
        let mut fk = Mlp::new(3, &[12, 12], 2, seed);
        fk.input_scaler = Scaler {
            min: vec![-3.0; 3],
            max: vec![3.0; 3],
        };
        fk.output_scaler = Scaler {
            min: vec![-100.0, -50.0],
            max: vec![100.0, 150.0],
        };
        let mut jac = Mlp::new(3, &[10], 6, seed + 1);
        jac.input_scaler = fk.input_scaler.clone();
        jac.output_scaler = Scaler {
            min: vec![-80.0; 6],
            max: vec![80.0; 6],
        };
        let s2r = with_s2r.then(|| {
            let mut net = Mlp::new(2, &[6], 2, seed + 2);
            net.input_scaler = fk.output_scaler.clone();
            net.output_scaler = fk.output_scaler.clone();
            net
        });
        ModelBundle::new(spec, fk, jac, s2r, 250.0).unwrap()
    }

    #[test]
    fn objective_basics() {
        assert_eq!(objective(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(objective(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!(objective(&[1.0], &[0.0, 0.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(-50.0..50.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.random_range(-50.0..50.0)).collect();
            let direct = (DVector::from_vec(a.clone()) - DVector::from_vec(b.clone())).norm_squared();
            assert!((objective(&a, &b).unwrap() - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn bundle_shape_checks() {
        let b = random_bundle(1, false);
        let bad = ModelBundle::new(b.spec.clone(), b.net_jac.clone(), b.net_jac.clone(), None, 1.0);
        assert!(matches!(bad, Err(Error::Config(_))));
        assert!(matches!(b.view(true), Err(Error::Config(_))));
        let zero_width = ModelBundle::new(b.spec.clone(), b.net_fk.clone(), b.net_jac.clone(), None, 0.0);
        assert!(zero_width.is_err());
    }

    #[test]
    fn predict_without_s2r_returns_same_point_twice() {
        let b = random_bundle(2, false);
        let (p_s, p) = b.predict(&ActuationVector::new(vec![0.5, -1.0, 2.0])).unwrap();
        assert_eq!(p_s, p);
        assert!(b.predict(&ActuationVector::new(vec![0.5, -1.0, 4.0])).is_err());
    }

    #[test]
    fn composed_jacobian_without_s2r_is_jacobian_net() {
        let b = random_bundle(3, false);
        let c = [0.1, 0.2, -0.3];
        let j = b.composed_jacobian(&ActuationVector::from(&c[..])).unwrap();
        let flat = b.net_jac.forward(&c).unwrap();
        assert_eq!(j.to_row_major(), flat.as_slice().to_vec());
    }

    #[test]
    fn linear_s2r_multiplies_jacobian() {
        let mut b = random_bundle(4, false);
        let m = DMatrix::from_row_slice(2, 2, &[1.05, 0.02, -0.03, 0.97]);
        b.net_s2r = Some(Mlp::linear(m.clone(), DVector::from_vec(vec![1.0, -2.0])));
        let c = [0.7, -0.2, 1.3];
        let j_r = b.composed_jacobian(&ActuationVector::from(&c[..])).unwrap();
        let j_s = b.view(false).unwrap().jacobian(&c).unwrap();
        assert!((j_r.into_inner() - &m * j_s).norm() < 1e-12);
    }

    #[test]
    fn toy_gradient() {
        let b = unit_bundle();
        for (t, c) in [(1.0, 0.0), (-2.0, 0.5), (0.3, 0.3)] {
            let g = grad(&b, &[t], &[c]).unwrap();
            assert!((g[0] + 2.0 * (t - c)).abs() < 1e-12);
        }
        let g = grad(&b, &[1.25], &[1.25]).unwrap();
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn solving_the_predicted_point_takes_no_iterations() {
        let b = random_bundle(5, true);
        let c0 = [0.4, -0.9, 1.1];
        let target = b.position(&c0).unwrap();
        let cfg = SolverConfig::for_width(b.width);
        let r = solve_waypoint(&b, target.as_slice(), &c0, &cfg).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert_eq!(r.iterations, 0);
        assert!(r.residual < cfg.epsilon);
    }

    #[test]
    fn analytic_model_converges_with_warm_start() {
        let model = AnalyticModel::new(RobotSpec::planar_finger(), None);
        let cfg = SolverConfig::for_width(267.0);
        let c_true = [0.8, -1.2, 1.7];
        let target = model.position(&c_true).unwrap();
        let warm = [0.85, -1.15, 1.65];
        let r = solve_waypoint(&model, target.as_slice(), &warm, &cfg).unwrap();
        assert_eq!(r.status, SolveStatus::Converged, "{r:?}");
        assert!(r.objective_trace.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn far_target_stops_gracefully_in_range() {
        let model = AnalyticModel::new(RobotSpec::three_chamber(), None);
        let cfg = SolverConfig::for_width(92.6);
        let target = [0.0, 0.0, 84.0 + 2.0 * 92.6];
        let r = solve_waypoint(&model, &target, &[1.0, 1.0, 1.0], &cfg).unwrap();
        assert_ne!(r.status, SolveStatus::Converged);
        assert!(model.spec.check_actuation(&r.c).is_ok());
        // Highest reachable point is full equal pressure.
        assert!(r.c.iter().all(|v| (v - 3.0).abs() < 1e-6), "{:?}", r.c);
    }

    #[test]
    fn path_of_one_equals_single_solve() {
        let b = random_bundle(6, false);
        let cfg = SolverConfig::for_width(b.width);
        let target = vec![10.0, 100.0];
        let c0 = [0.0, 0.5, 0.0];
        let path = follow_path(&b, std::slice::from_ref(&target), &c0, &cfg).unwrap();
        let single = solve_waypoint(&b, &target, &c0, &cfg).unwrap();
        assert_eq!(path.len(), 1);
        assert_eq!(path[0].c, single.c);
        assert_eq!(path[0].status, single.status);
        assert!(follow_path(&b, &[], &c0, &cfg).is_err());
    }

    #[test]
    fn solver_is_deterministic() {
        let b = random_bundle(7, true);
        let cfg = SolverConfig::for_width(b.width);
        let a = solve_waypoint(&b, &[20.0, 90.0], &[0.0, 0.0, 0.0], &cfg).unwrap();
        let again = solve_waypoint(&b, &[20.0, 90.0], &[0.0, 0.0, 0.0], &cfg).unwrap();
        assert_eq!(a.c, again.c);
        assert_eq!(a.objective_trace, again.objective_trace);
    }

    #[test]
    fn bundle_save_load_round_trip() {
        let b = random_bundle(8, true);
        let dir = tempfile::tempdir().unwrap();
        b.save(dir.path(), &ModelMeta::default()).unwrap();
        assert_eq!(ModelBundle::load(dir.path()).unwrap(), b);
        let mut no_s2r = b.clone();
        no_s2r.net_s2r = None;
        let dir2 = tempfile::tempdir().unwrap();
        no_s2r.save(dir2.path(), &ModelMeta::default()).unwrap();
        assert!(!ModelBundle::load(dir2.path()).unwrap().has_s2r());
    }

    fn fd_gradient<M: KinematicModel>(model: &M, target: &[f64], c: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..c.len())
            .map(|k| {
                let mut hi = c.to_vec();
                let mut lo = c.to_vec();
                hi[k] += h;
                lo[k] -= h;
                let oh = objective(target, model.position(&hi).unwrap().as_slice()).unwrap();
                let ol = objective(target, model.position(&lo).unwrap().as_slice()).unwrap();
                (oh - ol) / (2.0 * h)
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gradient_matches_finite_differences(
            seed in 0u64..200,
            c in proptest::collection::vec(-2.9..2.9f64, 3),
            t in proptest::collection::vec(-80.0..80.0f64, 2),
        ) {
            // With exact Jacobians (the FK net's own input Jacobian) the
            // learned gradient must match the objective's finite differences.
            let b = random_bundle(seed, true);
            let exact = crate::baselines::FkGradientModel::new(&b.spec, &b.net_fk, b.net_s2r.as_ref());
            let g = grad(&exact, &t, &c).unwrap();
            let fd = fd_gradient(&exact, &t, &c);
            let scale = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-6);
            for (a, b) in g.iter().zip(&fd) {
                prop_assert!((a - b).abs() <= 1e-3 * scale);
            }
        }

        #[test]
        fn accepted_steps_decrease_and_stay_in_range(
            seed in 0u64..100,
            c0 in proptest::collection::vec(-3.0..3.0f64, 3),
            t in proptest::collection::vec(-60.0..60.0f64, 2),
        ) {
            let b = random_bundle(seed, false);
            let r = solve_waypoint(&b, &t, &c0, &SolverConfig::for_width(b.width)).unwrap();
            prop_assert!(r.objective_trace.windows(2).all(|w| w[1] < w[0]));
            prop_assert!(b.spec.check_actuation(&r.c).is_ok());
            prop_assert!((r.residual - (objective(&t, &r.p_pred).unwrap()).sqrt()).abs() < 1e-12);
            if r.status == SolveStatus::Converged {
                prop_assert!(r.residual < 0.001 * b.width);
            }
        }
    }
}
