//! Python bindings: load or train a model bundle, then solve IK from Python.
//!
//! ```python
//! import softik_py as sk
//! b = sk.Bundle.train("three_chamber", epoch_scale=0.1)
//! p_sim, p_real = b.predict([1.0, 2.0, 0.5])
//! sol = b.solve(p_real)
//! sol.status, sol.c
//! ```

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use softik::harness::{approach, build_robot, PipelineConfig};
use softik::ik::{follow_path, solve_waypoint, IkResult, KinematicModel, ModelBundle, SolveStatus, SolverConfig};
use softik::neural::ModelMeta;
use softik::robot::{self, ActuationVector, RobotId, RobotSpec};

fn err(e: softik::Error) -> PyErr {
    match e {
        softik::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        softik::Error::Training(_) | softik::Error::Config(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn spec_of(robot: &str) -> PyResult<RobotSpec> {
    Ok(RobotSpec::by_id(robot.parse::<RobotId>().map_err(err)?))
}

#[pyclass(module = "softik_py", frozen, get_all)]
struct Solution {
    c: Vec<f64>,
    p_pred: Vec<f64>,
    /// Distance to the target under the model (mm).
    residual: f64,
    iterations: usize,
    /// "converged", "stalled" or "max_iters".
    status: String,
}

#[pymethods]
impl Solution {
    fn __repr__(&self) -> String {
        format!(
            "Solution(status={:?}, iterations={}, residual={:.4}, c={:?})",
            self.status, self.iterations, self.residual, self.c
        )
    }
}

impl From<IkResult> for Solution {
    fn from(r: IkResult) -> Self {
        let status = match r.status {
            SolveStatus::Converged => "converged",
            SolveStatus::Stalled => "stalled",
            SolveStatus::MaxIters => "max_iters",
        };
        Self {
            c: r.c,
            p_pred: r.p_pred,
            residual: r.residual,
            iterations: r.iterations,
            status: status.into(),
        }
    }
}

#[pyclass(module = "softik_py", name = "Bundle", frozen)]
struct PyBundle {
    inner: ModelBundle,
}

impl PyBundle {
    fn use_s2r(&self, flag: Option<bool>) -> PyResult<bool> {
        match flag {
            Some(true) if !self.inner.has_s2r() => Err(PyValueError::new_err("bundle has no sim-to-real network")),
            Some(f) => Ok(f),
            None => Ok(self.inner.has_s2r()),
        }
    }

    fn solver(&self, epsilon: Option<f64>, max_iters: Option<usize>) -> SolverConfig {
        let mut cfg = SolverConfig::for_width(self.inner.width);
        if let Some(eps) = epsilon {
            cfg.epsilon = eps;
        }
        if let Some(n) = max_iters {
            cfg.max_iters = n;
        }
        cfg
    }
}

#[pymethods]
impl PyBundle {
    /// Load a model directory written by `softik build` or `Bundle.save`.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: ModelBundle::load(&path).map_err(err)?,
        })
    }

    /// Sample the grid and train fk, jac and s2r nets with the default
    /// recipes, every epoch budget scaled by `epoch_scale`.
    #[staticmethod]
    #[pyo3(signature = (robot, epoch_scale = 1.0, segments = None, twin_seed = 7))]
    fn train(py: Python<'_>, robot: &str, epoch_scale: f64, segments: Option<usize>, twin_seed: u64) -> PyResult<Self> {
        let spec = spec_of(robot)?;
        let mut cfg = PipelineConfig::for_robot(spec.id).scaled_epochs(epoch_scale);
        cfg.direct = None;
        cfg.twin_seed = twin_seed;
        if let Some(n) = segments {
            cfg.segments = n;
        }
        let art = py.detach(|| build_robot(&spec, &cfg)).map_err(err)?;
        Ok(Self { inner: art.bundle })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path, &ModelMeta::default()).map_err(err)
    }

    #[getter]
    fn robot(&self) -> String {
        self.inner.spec.id.to_string()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.spec.m
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.spec.n
    }

    #[getter]
    fn width(&self) -> f64 {
        self.inner.width
    }

    #[getter]
    fn has_s2r(&self) -> bool {
        self.inner.has_s2r()
    }

    /// `(p_sim, p_real)`; both equal without a sim-to-real net.
    fn predict(&self, c: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        self.inner.spec.check_actuation(&c).map_err(err)?;
        let (ps, pr) = self.inner.predict(&ActuationVector::new(c)).map_err(err)?;
        Ok((ps.as_slice().to_vec(), pr.as_slice().to_vec()))
    }

    /// n×m Jacobian as a list of rows.
    #[pyo3(signature = (c, use_s2r = None))]
    fn jacobian(&self, c: Vec<f64>, use_s2r: Option<bool>) -> PyResult<Vec<Vec<f64>>> {
        self.inner.spec.check_actuation(&c).map_err(err)?;
        let view = self.inner.view(self.use_s2r(use_s2r)?).map_err(err)?;
        let j = view.jacobian(&c).map_err(err)?;
        Ok(j.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    /// Solve for one target. Without `warm_start` the solve starts from a
    /// grid search near the target.
    #[pyo3(signature = (target, warm_start = None, use_s2r = None, epsilon = None, max_iters = None))]
    fn solve(
        &self,
        py: Python<'_>,
        target: Vec<f64>,
        warm_start: Option<Vec<f64>>,
        use_s2r: Option<bool>,
        epsilon: Option<f64>,
        max_iters: Option<usize>,
    ) -> PyResult<Solution> {
        let view = self.inner.view(self.use_s2r(use_s2r)?).map_err(err)?;
        let cfg = self.solver(epsilon, max_iters);
        py.detach(|| {
            let c0 = match warm_start {
                Some(c) => c,
                None => approach(&view, &target, &cfg)?,
            };
            solve_waypoint(&view, &target, &c0, &cfg)
        })
        .map(Solution::from)
        .map_err(err)
    }

    /// Solve waypoints in order, each warm-started from the previous one.
    #[pyo3(signature = (waypoints, warm_start = None, use_s2r = None))]
    fn follow(
        &self,
        py: Python<'_>,
        waypoints: Vec<Vec<f64>>,
        warm_start: Option<Vec<f64>>,
        use_s2r: Option<bool>,
    ) -> PyResult<Vec<Solution>> {
        let view = self.inner.view(self.use_s2r(use_s2r)?).map_err(err)?;
        let cfg = self.solver(None, None);
        let first = waypoints
            .first()
            .ok_or_else(|| PyValueError::new_err("no waypoints"))?
            .clone();
        py.detach(|| {
            let c0 = match warm_start {
                Some(c) => c,
                None => approach(&view, &first, &cfg)?,
            };
            follow_path(&view, &waypoints, &c0, &cfg)
        })
        .map(|rs| rs.into_iter().map(Solution::from).collect())
        .map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Bundle(robot={:?}, width={:.2}, s2r={})",
            self.robot(),
            self.inner.width,
            self.inner.has_s2r()
        )
    }
}

/// Tip position of the analytic model.
#[pyfunction]
fn forward_kinematics(robot: &str, c: Vec<f64>) -> PyResult<Vec<f64>> {
    let spec = spec_of(robot)?;
    let p = robot::fk_virtual(&spec, &ActuationVector::new(c)).map_err(err)?;
    Ok(p.as_slice().to_vec())
}

/// Points along the robot body, base to tip.
#[pyfunction]
#[pyo3(signature = (robot, c, samples_per_segment = 16))]
fn body_curve(robot: &str, c: Vec<f64>, samples_per_segment: usize) -> PyResult<Vec<Vec<f64>>> {
    let spec = spec_of(robot)?;
    let pts = robot::body_curve(&spec, &ActuationVector::new(c), samples_per_segment).map_err(err)?;
    Ok(pts.iter().map(|p| p.as_slice().to_vec()).collect())
}

/// `(aabb_min, aabb_max, width)` of the grid-sampled workspace.
#[pyfunction]
fn workspace(robot: &str, segments: usize) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let ws = robot::workspace_of(&spec_of(robot)?, segments).map_err(err)?;
    Ok((ws.aabb_min, ws.aabb_max, ws.width))
}

#[pymodule]
fn softik_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBundle>()?;
    m.add_class::<Solution>()?;
    m.add_function(wrap_pyfunction!(forward_kinematics, m)?)?;
    m.add_function(wrap_pyfunction!(body_curve, m)?)?;
    m.add_function(wrap_pyfunction!(workspace, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use softik::neural::Mlp;

    use super::*;

    fn bundle(s2r: bool) -> PyBundle {
        let spec = RobotSpec::planar_finger();
        let fk = Mlp::new(3, &[4], 2, 0);
        let jac = Mlp::new(3, &[4], 6, 1);
        let s2r = s2r.then(|| Mlp::new(2, &[2], 2, 2));
        PyBundle {
            inner: ModelBundle::new(spec, fk, jac, s2r, 250.0).unwrap(),
        }
    }

    #[test]
    fn s2r_flag_defaults_to_availability() {
        assert!(bundle(true).use_s2r(None).unwrap());
        assert!(!bundle(false).use_s2r(None).unwrap());
        assert!(!bundle(true).use_s2r(Some(false)).unwrap());
        assert!(bundle(false).use_s2r(Some(true)).is_err());
    }

    #[test]
    fn solver_overrides_apply() {
        let b = bundle(false);
        assert!((b.solver(None, None).epsilon - 0.25).abs() < 1e-12);
        let cfg = b.solver(Some(0.5), Some(7));
        assert_eq!((cfg.epsilon, cfg.max_iters), (0.5, 7));
    }

    #[test]
    fn status_names() {
        let result = |status| IkResult {
            c: vec![0.0; 3],
            p_pred: vec![0.0; 2],
            residual: 1.0,
            iterations: 2,
            status,
            wall_time: Duration::ZERO,
            objective_trace: vec![],
        };
        assert_eq!(Solution::from(result(SolveStatus::Converged)).status, "converged");
        assert_eq!(Solution::from(result(SolveStatus::Stalled)).status, "stalled");
        assert_eq!(Solution::from(result(SolveStatus::MaxIters)).status, "max_iters");
    }
}
