use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::trajectory::distance;
use crate::baselines::{solve_direct, DirectIk};
use crate::dataset::grid_actuations;
use crate::error::{check_dim, Error, Result};
use crate::ik::{follow_path, solve_waypoint, KinematicModel, ModelBundle, SolveStatus, SolverConfig};
use crate::robot::{RealTwin, RobotSpec};

/// What the achieved configuration is measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    Virtual,
    Twin(RealTwin),
}

impl GroundTruth {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Virtual => "virtual",
            Self::Twin(_) => "twin",
        }
    }

    pub fn position(&self, spec: &RobotSpec, c: &[f64]) -> Result<Vec<f64>> {
        spec.check_actuation(c)?;
        let p = spec.tip(c);
        Ok(match self {
            Self::Virtual => p.as_slice().to_vec(),
            Self::Twin(twin) => twin.map_slice(p.as_slice()).as_slice().to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointRecord {
    pub target: Vec<f64>,
    pub c: Vec<f64>,
    /// Ground-truth position reached.
    pub p_true: Vec<f64>,
    pub error_mm: f64,
    pub iterations: usize,
    /// `None` for methods without iteration.
    pub status: Option<SolveStatus>,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowReport {
    pub label: String,
    pub method: String,
    pub use_s2r: bool,
    pub ground_truth: String,
    pub width: f64,
    pub waypoints: Vec<WaypointRecord>,
    pub mean_error_mm: f64,
    pub max_error_mm: f64,
    pub mean_error_pct: f64,
    pub max_error_pct: f64,
    /// Largest `‖c_i − c_{i−1}‖∞` between consecutive waypoints.
    pub max_jump: f64,
    /// `max_jump` as % of the widest actuation range.
    pub max_jump_pct_range: f64,
    /// `iteration_histogram[k]` = waypoints solved in `k` iterations.
    pub iteration_histogram: Vec<usize>,
    pub converged: usize,
    pub stalled: usize,
    pub max_iters: usize,
    pub total_time_s: f64,
    pub mean_time_ms: f64,
}

impl FollowReport {
    fn assemble(
        label: &str,
        method: &str,
        use_s2r: bool,
        truth: &GroundTruth,
        spec: &RobotSpec,
        width: f64,
        waypoints: Vec<WaypointRecord>,
    ) -> Self {
        let count = waypoints.len().max(1) as f64;
        let errors: Vec<f64> = waypoints.iter().map(|w| w.error_mm).collect();
        let mean = errors.iter().sum::<f64>() / count;
        let max = errors.iter().copied().fold(0.0, f64::max);
        let max_jump = max_consecutive_jump(waypoints.iter().map(|w| w.c.as_slice()));
        let span = spec.ranges.iter().map(|r| r.span()).fold(0.0, f64::max);
        let mut hist = Vec::new();
        let (mut converged, mut stalled, mut max_iters) = (0, 0, 0);
        for w in &waypoints {
            if hist.len() <= w.iterations {
                hist.resize(w.iterations + 1, 0);
            }
            hist[w.iterations] += 1;
            match w.status {
                Some(SolveStatus::Converged) => converged += 1,
                Some(SolveStatus::Stalled) => stalled += 1,
                Some(SolveStatus::MaxIters) => max_iters += 1,
                None => {}
            }
        }
        let total: f64 = waypoints.iter().map(|w| w.time_s).sum();
        Self {
            label: label.into(),
            method: method.into(),
            use_s2r,
            ground_truth: truth.label().into(),
            width,
            mean_error_mm: mean,
            max_error_mm: max,
            mean_error_pct: 100.0 * mean / width,
            max_error_pct: 100.0 * max / width,
            max_jump,
            max_jump_pct_range: 100.0 * max_jump / span,
            iteration_histogram: hist,
            converged,
            stalled,
            max_iters,
            total_time_s: total,
            mean_time_ms: 1e3 * total / count,
            waypoints,
        }
    }

    pub fn errors_mm(&self) -> Vec<f64> {
        self.waypoints.iter().map(|w| w.error_mm).collect()
    }
}

/// Largest `‖Δc‖∞` between consecutive configurations.
pub fn max_consecutive_jump<'a, I: IntoIterator<Item = &'a [f64]>>(configs: I) -> f64 {
    let mut prev: Option<&[f64]> = None;
    let mut max = 0.0f64;
    for c in configs {
        if let Some(p) = prev {
            let jump = c.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            max = max.max(jump);
        }
        prev = Some(c);
    }
    max
}

/// Starting configuration for a path. The closest points of a coarse
/// actuation grid are refined on the first waypoint with a generous iteration
/// budget; among those that converge, the one nearest mid-range wins.
pub fn approach<M: KinematicModel + ?Sized>(model: &M, first: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    const SIDE: usize = 7;
    const CANDIDATES: usize = 8;
    let spec = model.spec();
    let patient = SolverConfig {
        max_iters: cfg.max_iters.max(1) * 20,
        ..cfg.clone()
    };
    let mut seeds = grid_actuations(spec, SIDE)?
        .into_iter()
        .map(|c| Ok((distance(model.position(&c)?.as_slice(), first), c)))
        .collect::<Result<Vec<_>>>()?;
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mid = spec.mid_actuation();
    let off_center = |c: &[f64]| {
        c.iter()
            .zip(&mid)
            .zip(&spec.ranges)
            .map(|((v, m), r)| (v - m).abs() / r.span())
            .fold(0.0, f64::max)
    };
    let mut best: Option<(bool, f64, f64, Vec<f64>)> = None;
    for (_, seed) in seeds.into_iter().take(CANDIDATES) {
        let r = solve_waypoint(model, first, &seed, &patient)?;
        let key = (r.status == SolveStatus::Converged, off_center(&r.c), r.residual);
        let better = match &best {
            None => true,
            Some((conv, off, res, _)) => match (key.0, *conv) {
                (true, false) => true,
                (false, true) => false,
                (true, true) => key.1 < *off,
                (false, false) => key.2 < *res,
            },
        };
        if better {
            best = Some((key.0, key.1, key.2, r.c));
        }
    }
    Ok(best.expect("grid is non-empty").3)
}

/// Follow `waypoints` with the Jacobian solver and measure against `truth`.
pub fn run_follow_experiment(
    bundle: &ModelBundle,
    label: &str,
    waypoints: &[Vec<f64>],
    use_s2r: bool,
    truth: &GroundTruth,
    cfg: &SolverConfig,
) -> Result<FollowReport> {
    let view = bundle.view(use_s2r)?;
    follow_with(&view, "jacobian", label, waypoints, use_s2r, truth, bundle.width, cfg)
}

/// As [`run_follow_experiment`] for any kinematic model.
#[allow(clippy::too_many_arguments)]
pub fn follow_with<M: KinematicModel + ?Sized>(
    model: &M,
    method: &str,
    label: &str,
    waypoints: &[Vec<f64>],
    use_s2r: bool,
    truth: &GroundTruth,
    width: f64,
    cfg: &SolverConfig,
) -> Result<FollowReport> {
    let spec = model.spec();
    let first = waypoints.first().ok_or_else(|| Error::validation("no waypoints"))?;
    let c0 = approach(model, first, cfg)?;
    let results = follow_path(model, waypoints, &c0, cfg)?;
    let records = waypoints
        .iter()
        .zip(results)
        .map(|(target, r)| {
            let p_true = truth.position(spec, &r.c)?;
            Ok(WaypointRecord {
                error_mm: distance(target, &p_true),
                target: target.clone(),
                p_true,
                iterations: r.iterations,
                status: Some(r.status),
                time_s: r.wall_time.as_secs_f64(),
                c: r.c,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FollowReport::assemble(label, method, use_s2r, truth, spec, width, records))
}

/// Follow `waypoints` with the direct IK network.
pub fn run_direct_follow(
    model: &DirectIk,
    label: &str,
    waypoints: &[Vec<f64>],
    truth: &GroundTruth,
    width: f64,
) -> Result<FollowReport> {
    let records = waypoints
        .iter()
        .map(|target| {
            let start = Instant::now();
            let c = solve_direct(model, target)?.to_vec();
            let time_s = start.elapsed().as_secs_f64();
            let p_true = truth.position(&model.spec, &c)?;
            Ok(WaypointRecord {
                error_mm: distance(target, &p_true),
                target: target.clone(),
                p_true,
                c,
                iterations: 0,
                status: None,
                time_s,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FollowReport::assemble(label, "direct", false, truth, &model.spec, width, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositioningConfig {
    pub repeats: usize,
    pub use_s2r: bool,
    /// Std-dev of Gaussian noise added to each measured position (mm).
    pub noise_sigma_mm: f64,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl PositioningConfig {
    pub fn new(width: f64) -> Self {
        Self {
            repeats: 10,
            use_s2r: true,
            noise_sigma_mm: 0.0,
            seed: 0,
            solver: SolverConfig::for_width(width),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetOutcome {
    pub target: Vec<f64>,
    pub c: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub errors_mm: Vec<f64>,
    pub mean_error_mm: f64,
    pub max_error_pct: f64,
    /// Spread of the repeated errors, `max − min` (mm).
    pub deviation_mm: f64,
    /// `‖c − c_prev‖` to the previous target's configuration.
    pub config_distance: Option<f64>,
    /// Task-space distance to the previous target.
    pub target_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositioningReport {
    pub ground_truth: String,
    pub width: f64,
    pub solves: usize,
    pub targets: Vec<TargetOutcome>,
    pub max_error_pct: f64,
}

/// Independent solves from zero actuation, `repeats` times per target.
pub fn run_positioning_experiment(
    bundle: &ModelBundle,
    targets: &[Vec<f64>],
    truth: &GroundTruth,
    cfg: &PositioningConfig,
) -> Result<PositioningReport> {
    if targets.is_empty() || cfg.repeats == 0 {
        return Err(Error::validation("need at least one target and one repeat"));
    }
    if !(cfg.noise_sigma_mm >= 0.0) {
        return Err(Error::validation("noise sigma must be non-negative"));
    }
    let view = bundle.view(cfg.use_s2r)?;
    let spec = &bundle.spec;
    let zero = vec![0.0; spec.m];
    spec.check_actuation(&zero)?;
    let noise = Normal::new(0.0, cfg.noise_sigma_mm).map_err(|e| Error::validation(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut outcomes: Vec<TargetOutcome> = Vec::with_capacity(targets.len());
    for target in targets {
        check_dim(spec.n, target.len())?;
        let mut errors = Vec::with_capacity(cfg.repeats);
        let mut last = None;
        for _ in 0..cfg.repeats {
            let r = solve_waypoint(&view, target, &zero, &cfg.solver)?;
            let mut p = truth.position(spec, &r.c)?;
            if cfg.noise_sigma_mm > 0.0 {
                p.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            }
            errors.push(distance(target, &p));
            last = Some(r);
        }
        let r = last.expect("repeats > 0");
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        let (lo, hi) = errors.iter().fold((f64::INFINITY, 0.0f64), |(l, h), e| (l.min(*e), h.max(*e)));
        let previous = outcomes.last();
        outcomes.push(TargetOutcome {
            config_distance: previous.map(|o| distance(&o.c, &r.c)),
            target_distance: previous.map(|o| distance(&o.target, target)),
            target: target.clone(),
            status: r.status,
            iterations: r.iterations,
            c: r.c,
            mean_error_mm: mean,
            max_error_pct: 100.0 * hi / bundle.width,
            deviation_mm: hi - lo,
            errors_mm: errors,
        });
    }
    let max_error_pct = outcomes.iter().map(|o| o.max_error_pct).fold(0.0, f64::max);
    Ok(PositioningReport {
        ground_truth: truth.label().into(),
        width: bundle.width,
        solves: targets.len() * cfg.repeats,
        targets: outcomes,
        max_error_pct,
    })
}

/// Six scripted targets for the positioning study, placed from the workspace.
pub fn positioning_targets(spec: &RobotSpec, width: f64) -> Vec<Vec<f64>> {
    let rest = spec.tip(&spec.rest_actuation());
    let offsets: [[f64; 2]; 6] = match spec.n {
        2 => [
            [-0.15, -0.15],
            [0.15, -0.15],
            [-0.25, -0.3],
            [0.25, -0.3],
            [0.1, -0.1],
            [0.12, -0.1],
        ],
        _ => [[-0.2, 0.1], [0.2, 0.1], [0.0, -0.25], [0.15, -0.15], [0.05, 0.2], [0.07, 0.2]],
    };
    offsets
        .iter()
        .map(|[u, v]| {
            let mut p = rest.as_slice().to_vec();
            p[0] += u * width;
            if spec.n == 2 {
                p[1] += v * width;
            } else {
                p[1] += v * width;
                p[2] += 0.06 * width;
            }
            p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ik::AnalyticModel;

    #[test]
    fn jumps_are_infinity_norm() {
        let cs = [vec![0.0, 0.0], vec![0.1, -0.3], vec![0.2, -0.3]];
        assert!((max_consecutive_jump(cs.iter().map(Vec::as_slice)) - 0.3).abs() < 1e-12);
        assert_eq!(max_consecutive_jump(std::iter::once(&[1.0][..])), 0.0);
    }

    #[test]
    fn twin_truth_applies_the_warp() {
        let spec = RobotSpec::planar_finger();
        let twin = RealTwin::with_offset(vec![1.0, -2.0]);
        let c = [0.5, 0.5, 0.5];
        let v = GroundTruth::Virtual.position(&spec, &c).unwrap();
        let t = GroundTruth::Twin(twin).position(&spec, &c).unwrap();
        assert!((t[0] - v[0] - 1.0).abs() < 1e-12 && (t[1] - v[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn approach_reaches_a_target_off_the_rest_pose() {
        let model = AnalyticModel::new(RobotSpec::planar_finger(), None);
        let target = model.position(&[0.5, 1.0, -0.5]).unwrap();
        let c = approach(&model, target.as_slice(), &SolverConfig::for_width(267.0)).unwrap();
        let reached = model.position(&c).unwrap();
        assert!((reached - target).norm() < 0.3);
    }

    #[test]
    fn analytic_follow_tracks_exactly() {
        let spec = RobotSpec::planar_finger();
        let model = AnalyticModel::new(spec.clone(), None);
        let waypoints: Vec<Vec<f64>> = (0..20).map(|i| vec![-20.0 + 2.0 * i as f64, 100.0]).collect();
        let cfg = SolverConfig::for_width(267.0);
        let report = follow_with(&model, "analytic", "line", &waypoints, false, &GroundTruth::Virtual, 267.0, &cfg).unwrap();
        assert_eq!(report.waypoints.len(), 20);
        assert_eq!(report.converged, 20);
        assert!(report.max_error_mm < cfg.epsilon * 1.01);
        assert_eq!(report.iteration_histogram.iter().sum::<usize>(), 20);
    }

    #[test]
    fn finger_positioning_targets_are_reachable() {
        let spec = RobotSpec::planar_finger();
        let model = AnalyticModel::new(spec.clone(), None);
        let cfg = SolverConfig::for_width(267.0);
        for t in positioning_targets(&spec, 267.0) {
            let c = approach(&model, &t, &cfg).unwrap();
            let p = model.position(&c).unwrap();
            assert!(distance(p.as_slice(), &t) < cfg.epsilon, "{t:?}");
        }
    }
}
