use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::experiment::approach;
use crate::baselines::{solve_direct, DirectIk, FkGradientModel};
use crate::error::{Error, Result};
use crate::ik::{follow_path, solve_waypoint, KinematicModel, ModelBundle, SolveStatus, SolverConfig};
use crate::neural::{Mlp, Scaler};
use crate::robot::RobotSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: String,
    pub waypoints: usize,
    pub total_s: f64,
    pub per_waypoint_ms: f64,
    pub waypoints_per_sec: f64,
    pub mean_iterations: f64,
    pub max_iterations: usize,
    pub converged_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    /// Hidden layers × neurons per layer.
    pub hb: usize,
    pub hidden: Vec<usize>,
    pub params: usize,
    pub per_iteration_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub robot: String,
    pub methods: Vec<MethodTiming>,
    pub scaling: Vec<ScalingPoint>,
}

impl BenchReport {
    pub fn method(&self, name: &str) -> Option<&MethodTiming> {
        self.methods.iter().find(|m| m.method == name)
    }
}

fn time_follow<M: KinematicModel + ?Sized>(
    model: &M,
    method: &str,
    waypoints: &[Vec<f64>],
    cfg: &SolverConfig,
) -> Result<MethodTiming> {
    let c0 = approach(model, &waypoints[0], cfg)?;
    let start = Instant::now();
    let results = follow_path(model, waypoints, &c0, cfg)?;
    let total_s = start.elapsed().as_secs_f64();
    let count = results.len() as f64;
    let iterations: Vec<usize> = results.iter().map(|r| r.iterations).collect();
    let converged = results.iter().filter(|r| r.status == SolveStatus::Converged).count();
    Ok(MethodTiming {
        method: method.into(),
        waypoints: results.len(),
        total_s,
        per_waypoint_ms: 1e3 * total_s / count,
        waypoints_per_sec: count / total_s.max(1e-12),
        mean_iterations: iterations.iter().sum::<usize>() as f64 / count,
        max_iterations: iterations.iter().copied().max().unwrap_or(0),
        converged_fraction: converged as f64 / count,
    })
}

/// Time the Jacobian solver, the FK-gradient solver and (if given) direct IK
/// over the same waypoints, plus per-iteration cost against net size.
pub fn bench(
    bundle: &ModelBundle,
    direct: Option<&DirectIk>,
    waypoints: &[Vec<f64>],
    cfg: &SolverConfig,
    hb_sizes: &[usize],
) -> Result<BenchReport> {
    if waypoints.is_empty() {
        return Err(Error::validation("bench needs waypoints"));
    }
    let mut methods = vec![time_follow(bundle, "jacobian", waypoints, cfg)?];
    let fk_grad = FkGradientModel::new(&bundle.spec, &bundle.net_fk, bundle.net_s2r.as_ref());
    methods.push(time_follow(&fk_grad, "fk_gradient", waypoints, cfg)?);
    if let Some(direct) = direct {
        let start = Instant::now();
        for target in waypoints {
            solve_direct(direct, target)?;
        }
        let total_s = start.elapsed().as_secs_f64();
        let count = waypoints.len() as f64;
        methods.push(MethodTiming {
            method: "direct".into(),
            waypoints: waypoints.len(),
            total_s,
            per_waypoint_ms: 1e3 * total_s / count,
            waypoints_per_sec: count / total_s.max(1e-12),
            mean_iterations: 0.0,
            max_iterations: 0,
            converged_fraction: 1.0,
        });
    }
    let scaling = hb_sizes
        .iter()
        .map(|&hb| iteration_cost(&bundle.spec, hb, 200))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport {
        robot: bundle.spec.id.to_string(),
        methods,
        scaling,
    })
}

/// Mean wall time of one solver iteration with random two-layer nets of
/// `hb/2` neurons per layer, measured over a fixed iteration count.
pub fn iteration_cost(spec: &RobotSpec, hb: usize, iterations: usize) -> Result<ScalingPoint> {
    if hb < 2 || iterations == 0 {
        return Err(Error::validation("hb must be at least 2 and iterations positive"));
    }
    let hidden = vec![hb / 2; 2];
    let (m, n) = (spec.m, spec.n);
    let ranges = Scaler {
        min: spec.ranges.iter().map(|r| r.min).collect(),
        max: spec.ranges.iter().map(|r| r.max).collect(),
    };
    let mut fk = Mlp::new(m, &hidden, n, hb as u64);
    fk.input_scaler = ranges.clone();
    let mut jac = Mlp::new(m, &hidden, n * m, hb as u64 + 1);
    jac.input_scaler = ranges;
    let bundle = ModelBundle::new(spec.clone(), fk, jac, None, 1.0)?;
    // Unreachable target and zero tolerances: every call runs the full budget
    // unless the line search fails, so time is divided by the iterations done.
    let cfg = SolverConfig {
        epsilon: 1e-300,
        max_iters: iterations,
        stall_tolerance: 0.0,
        max_halvings: 4,
        ..SolverConfig::default()
    };
    let target = vec![1e3; n];
    let mut c = spec.mid_actuation();
    let (mut done, mut elapsed) = (0usize, 0.0);
    while done < iterations {
        let start = Instant::now();
        let r = solve_waypoint(&bundle, &target, &c, &cfg)?;
        elapsed += start.elapsed().as_secs_f64();
        done += r.iterations.max(1);
        c = spec.mid_actuation();
        c[0] = spec.ranges[0].clamp(c[0] + 0.01 * done as f64);
    }
    Ok(ScalingPoint {
        hb,
        params: bundle.net_fk.param_count() + bundle.net_jac.param_count(),
        hidden,
        per_iteration_us: 1e6 * elapsed / done as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_points_are_positive() {
        let spec = RobotSpec::planar_finger();
        for hb in [32, 64] {
            let p = iteration_cost(&spec, hb, 20).unwrap();
            assert_eq!(p.hidden, vec![hb / 2, hb / 2]);
            assert!(p.per_iteration_us > 0.0);
        }
        assert!(iteration_cost(&spec, 1, 10).is_err());
    }
}
