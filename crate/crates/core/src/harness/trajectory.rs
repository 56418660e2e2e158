use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::robot::{RobotId, RobotSpec, WorkspaceStats};

/// Dense samples per waypoint when resampling smooth curves.
const DENSITY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Flower,
    Box,
    Figure8,
    #[serde(rename = "L_path", alias = "l_path")]
    LPath,
    Custom,
}

impl TrajectoryKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Flower => "flower",
            Self::Box => "box",
            Self::Figure8 => "figure8",
            Self::LPath => "L_path",
            Self::Custom => "custom",
        }
    }

    fn is_closed(self) -> bool {
        matches!(self, Self::Flower | Self::Box | Self::Figure8)
    }
}

impl std::str::FromStr for TrajectoryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "flower" => Ok(Self::Flower),
            "box" => Ok(Self::Box),
            "figure8" | "figure-8" | "eight" => Ok(Self::Figure8),
            "l_path" | "l" | "lpath" => Ok(Self::LPath),
            "custom" => Ok(Self::Custom),
            other => Err(Error::validation(format!("unknown trajectory '{other}'"))),
        }
    }
}

/// Plane holding a planar shape on a 3-D robot. Ignored when n = 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    /// Horizontal, at the centre's z.
    Xy,
    /// Vertical, at the centre's y.
    Xz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub waypoint_count: usize,
    /// Shape centre in task space (mm).
    pub center: Vec<f64>,
    /// Half-extents along the plane's two axes (mm). The flower uses the
    /// first as its outer radius.
    pub half_extent: [f64; 2],
    pub plane: Plane,
    /// Flower: number of petals `k`.
    #[serde(default = "default_petals")]
    pub petals: u32,
    /// Flower: `R₁ / (R₀ + R₁)`.
    #[serde(default = "default_petal_depth")]
    pub petal_depth: f64,
    /// Custom: polyline vertices (absolute, mm).
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
}

fn default_petals() -> u32 {
    5
}

fn default_petal_depth() -> f64 {
    0.3
}

impl TrajectorySpec {
    /// Default placement for a robot, sized from its workspace width.
    pub fn preset(kind: TrajectoryKind, robot: &RobotSpec, workspace: &WorkspaceStats, waypoint_count: usize) -> Result<Self> {
        let w = workspace.width;
        // (centre offset from the rest tip along the robot axis, half-extents), in widths.
        let (offset, half, plane) = match (robot.id, kind) {
            (RobotId::ThreeChamber, TrajectoryKind::Flower) => (0.057, [0.28, 0.28], Plane::Xy),
            (RobotId::ThreeChamber, TrajectoryKind::Box) => (0.11, [0.15, 0.07], Plane::Xz),
            (RobotId::ThreeChamber, TrajectoryKind::Figure8) => (0.057, [0.25, 0.12], Plane::Xy),
            (RobotId::ThreeChamber, TrajectoryKind::LPath) => (0.13, [0.16, 0.1], Plane::Xz),
            (RobotId::PlanarFinger, TrajectoryKind::Flower) => (-0.217, [0.09, 0.09], Plane::Xy),
            (RobotId::PlanarFinger, TrajectoryKind::Box) => (-0.217, [0.205, 0.075], Plane::Xy),
            (RobotId::PlanarFinger, TrajectoryKind::Figure8) => (-0.224, [0.225, 0.075], Plane::Xy),
            (RobotId::PlanarFinger, TrajectoryKind::LPath) => (-0.157, [0.185, 0.11], Plane::Xy),
            (_, TrajectoryKind::Custom) => {
                return Err(Error::validation("custom trajectories need explicit points"));
            }
        };
        let mut center = robot.tip(&robot.rest_actuation()).as_slice().to_vec();
        let axis = robot.n - 1;
        center[axis] += offset * w;
        Ok(Self {
            kind,
            waypoint_count,
            center,
            half_extent: [half[0] * w, half[1] * w],
            plane,
            petals: default_petals(),
            petal_depth: default_petal_depth(),
            points: Vec::new(),
        })
    }

    pub fn custom(points: Vec<Vec<f64>>, waypoint_count: usize) -> Self {
        let dim = points.first().map_or(0, Vec::len);
        Self {
            kind: TrajectoryKind::Custom,
            waypoint_count,
            center: vec![0.0; dim],
            half_extent: [1.0, 1.0],
            plane: Plane::Xy,
            petals: default_petals(),
            petal_depth: default_petal_depth(),
            points,
        }
    }

    fn embed(&self, u: f64, v: f64) -> Vec<f64> {
        let mut p = self.center.clone();
        match (p.len(), self.plane) {
            (3, Plane::Xz) => {
                p[0] += u;
                p[2] += v;
            }
            _ => {
                p[0] += u;
                p[1] += v;
            }
        }
        p
    }

    /// Vertices (polylines) or dense samples (smooth curves) before resampling.
    fn outline(&self) -> Vec<Vec<f64>> {
        let [a, b] = self.half_extent;
        let dense = DENSITY * self.waypoint_count.max(16);
        let curve = |f: &dyn Fn(f64) -> (f64, f64)| -> Vec<Vec<f64>> {
            (0..=dense)
                .map(|i| {
                    let (u, v) = f(TAU * i as f64 / dense as f64);
                    self.embed(u, v)
                })
                .collect()
        };
        match self.kind {
            TrajectoryKind::Flower => {
                let r1 = self.petal_depth * a;
                let r0 = a - r1;
                let k = f64::from(self.petals);
                curve(&|t| {
                    let r = r0 + r1 * (k * t).cos();
                    (r * t.cos(), r * t.sin())
                })
            }
            TrajectoryKind::Figure8 => curve(&|t| (a * t.sin(), b * (2.0 * t).sin())),
            TrajectoryKind::Box => [(-a, -b), (a, -b), (a, b), (-a, b), (-a, -b)]
                .iter()
                .map(|&(u, v)| self.embed(u, v))
                .collect(),
            TrajectoryKind::LPath => [(-a, -b), (a, -b), (a, b)]
                .iter()
                .map(|&(u, v)| self.embed(u, v))
                .collect(),
            TrajectoryKind::Custom => self.points.clone(),
        }
    }
}

/// Waypoints at uniform arc length along the shape. Closed shapes repeat the
/// first point at the end.
pub fn make_trajectory(spec: &TrajectorySpec, workspace: &WorkspaceStats) -> Result<Vec<Vec<f64>>> {
    if !(workspace.width > 0.0) {
        return Err(Error::validation("workspace width must be positive"));
    }
    let n = workspace.aabb_min.len();
    if spec.waypoint_count < 2 {
        return Err(Error::validation("a trajectory needs at least 2 waypoints"));
    }
    if spec.kind == TrajectoryKind::Custom {
        if spec.points.len() < 2 {
            return Err(Error::validation("custom trajectory needs at least 2 points"));
        }
        for p in &spec.points {
            if p.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: p.len(),
                });
            }
            check_finite("trajectory point", p)?;
        }
    } else {
        if spec.center.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: spec.center.len(),
            });
        }
        check_finite("trajectory centre", &spec.center)?;
        if !spec.half_extent.iter().all(|h| *h > 0.0 && h.is_finite()) {
            return Err(Error::validation("half extents must be positive"));
        }
        if spec.kind == TrajectoryKind::Flower && !(spec.petal_depth >= 0.0 && spec.petal_depth < 1.0 && spec.petals > 0) {
            return Err(Error::validation("flower needs petals > 0 and depth in [0, 1)"));
        }
    }
    let mut points = resample_equal_chord(&spec.outline(), spec.waypoint_count);
    if spec.kind.is_closed() {
        let first = points[0].clone();
        *points.last_mut().expect("non-empty") = first;
    }
    let scale = match spec.kind {
        TrajectoryKind::LPath | TrajectoryKind::Custom => 1.0,
        _ => 0.7,
    };
    let (lo, hi) = scaled_aabb(workspace, scale);
    for (i, p) in points.iter().enumerate() {
        for d in 0..n {
            if p[d] < lo[d] - 1e-9 || p[d] > hi[d] + 1e-9 {
                return Err(Error::validation(format!(
                    "{} waypoint {i} leaves the {:.0}% workspace box on axis {d} ({:.2} not in [{:.2}, {:.2}])",
                    spec.kind.name(),
                    scale * 100.0,
                    p[d],
                    lo[d],
                    hi[d]
                )));
            }
        }
    }
    Ok(points)
}

/// The workspace AABB shrunk about its centre by `scale`.
pub fn scaled_aabb(workspace: &WorkspaceStats, scale: f64) -> (Vec<f64>, Vec<f64>) {
    workspace
        .aabb_min
        .iter()
        .zip(&workspace.aabb_max)
        .map(|(lo, hi)| {
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo) * scale;
            (mid - half, mid + half)
        })
        .unzip()
}

/// `count` points at uniform arc length along a polyline, both ends included.
pub fn resample(polyline: &[Vec<f64>], count: usize) -> Vec<Vec<f64>> {
    let mut cumulative = Vec::with_capacity(polyline.len());
    cumulative.push(0.0);
    for w in polyline.windows(2) {
        let d = distance(&w[0], &w[1]);
        cumulative.push(cumulative.last().expect("seeded") + d);
    }
    let total = *cumulative.last().expect("seeded");
    let mut seg = 0;
    (0..count)
        .map(|i| {
            let s = if count == 1 { 0.0 } else { total * i as f64 / (count - 1) as f64 };
            while seg + 2 < cumulative.len() && cumulative[seg + 1] < s {
                seg += 1;
            }
            let span = cumulative[seg + 1] - cumulative[seg];
            let t = if span > 0.0 { ((s - cumulative[seg]) / span).clamp(0.0, 1.0) } else { 0.0 };
            polyline[seg]
                .iter()
                .zip(&polyline[seg + 1])
                .map(|(a, b)| a + t * (b - a))
                .collect()
        })
        .collect()
}

/// `count` points along a polyline with equal straight-line spacing between
/// consecutive points, both ends included. Falls back to arc-length spacing
/// if no uniform chord fits.
pub fn resample_equal_chord(polyline: &[Vec<f64>], count: usize) -> Vec<Vec<f64>> {
    let arc = resample(polyline, count);
    if count < 3 {
        return arc;
    }
    let end = polyline.last().expect("non-empty");
    // Steps that fit with chord `d`, plus the fractional remainder to the end.
    let fit = |d: f64| -> (f64, Vec<Vec<f64>>) {
        let mut points = vec![polyline[0].clone()];
        let (mut seg, mut t) = (0usize, 0.0f64);
        while points.len() < count {
            let q = points.last().expect("seeded").clone();
            match next_at_chord(polyline, &q, d, seg, t) {
                Some((s, u, p)) => {
                    seg = s;
                    t = u;
                    points.push(p);
                }
                None => {
                    let steps = (points.len() - 1) as f64 + distance(&q, end) / d;
                    return (steps, points);
                }
            }
        }
        ((count - 1) as f64 + distance(points.last().expect("seeded"), end) / d, points)
    };
    let target = (count - 1) as f64;
    let d0 = arc.windows(2).map(|w| distance(&w[0], &w[1])).sum::<f64>() / target;
    let (mut lo, mut hi) = (0.5 * d0, 1.5 * d0);
    if fit(lo).0 < target || fit(hi).0 > target {
        return arc;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if fit(mid).0 > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (_, mut points) = fit(hi);
    points.truncate(count - 1);
    points.push(end.clone());
    if points.len() == count {
        points
    } else {
        arc
    }
}

/// First point after `(seg, t)` along the polyline at distance `d` from `q`.
fn next_at_chord(polyline: &[Vec<f64>], q: &[f64], d: f64, seg: usize, t: f64) -> Option<(usize, f64, Vec<f64>)> {
    for s in seg..polyline.len() - 1 {
        let (a, b) = (&polyline[s], &polyline[s + 1]);
        let t_lo = if s == seg { t } else { 0.0 };
        // |a + u(b − a) − q|² = d², smallest root in [t_lo, 1] where the curve leaves the sphere.
        let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
        let aq: Vec<f64> = a.iter().zip(q).map(|(x, y)| x - y).collect();
        let qa = ab.iter().map(|v| v * v).sum::<f64>();
        if qa == 0.0 {
            continue;
        }
        let qb = 2.0 * ab.iter().zip(&aq).map(|(x, y)| x * y).sum::<f64>();
        let qc = aq.iter().map(|v| v * v).sum::<f64>() - d * d;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            continue;
        }
        let u = (-qb + disc.sqrt()) / (2.0 * qa);
        if u >= t_lo && u <= 1.0 {
            let p = a.iter().zip(&ab).map(|(x, v)| x + u * v).collect();
            return Some((s, u, p));
        }
    }
    None
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Rotate `p` by 180° about `center` (in the first two coordinates).
#[cfg(test)]
fn half_turn(p: &[f64], center: &[f64]) -> Vec<f64> {
    let mut q = p.to_vec();
    for d in 0..2 {
        q[d] = 2.0 * center[d] - p[d];
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::workspace_of;

    fn finger_ws() -> (RobotSpec, WorkspaceStats) {
        let spec = RobotSpec::planar_finger();
        let ws = workspace_of(&spec, 16).unwrap();
        (spec, ws)
    }

    fn spacings(points: &[Vec<f64>]) -> Vec<f64> {
        points.windows(2).map(|w| distance(&w[0], &w[1])).collect()
    }

    #[test]
    fn flower_spacing_is_uniform() {
        let (spec, ws) = finger_ws();
        let t = TrajectorySpec::preset(TrajectoryKind::Flower, &spec, &ws, 120).unwrap();
        let pts = make_trajectory(&t, &ws).unwrap();
        assert_eq!(pts.len(), 120);
        let d = spacings(&pts);
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
        assert!(hi / lo < 1.01, "spacing {lo}..{hi}");
    }

    #[test]
    fn box_is_closed() {
        let spec = RobotSpec::three_chamber();
        let ws = workspace_of(&spec, 16).unwrap();
        let t = TrajectorySpec::preset(TrajectoryKind::Box, &spec, &ws, 240).unwrap();
        let pts = make_trajectory(&t, &ws).unwrap();
        assert_eq!(pts.len(), 240);
        assert_eq!(pts[0], pts[239]);
        // Vertical plane: y is constant.
        assert!(pts.iter().all(|p| (p[1] - t.center[1]).abs() < 1e-12));
    }

    #[test]
    fn figure8_has_half_turn_symmetry() {
        let (spec, ws) = finger_ws();
        let t = TrajectorySpec::preset(TrajectoryKind::Figure8, &spec, &ws, 200).unwrap();
        let pts = make_trajectory(&t, &ws).unwrap();
        assert_eq!(pts.len(), 200);
        for (i, p) in pts.iter().enumerate() {
            let q = half_turn(p, &t.center);
            let mirror = &pts[199 - i];
            assert!(distance(&q, mirror) < 1e-6 * ws.width, "{i}");
        }
    }

    #[test]
    fn presets_fit_the_box() {
        for spec in [RobotSpec::three_chamber(), RobotSpec::planar_finger()] {
            let ws = workspace_of(&spec, 16).unwrap();
            for kind in [TrajectoryKind::Flower, TrajectoryKind::Box, TrajectoryKind::Figure8, TrajectoryKind::LPath] {
                let t = TrajectorySpec::preset(kind, &spec, &ws, 100).unwrap();
                let pts = make_trajectory(&t, &ws).unwrap_or_else(|e| panic!("{:?} {kind:?}: {e}", spec.id));
                assert_eq!(pts.len(), 100);
            }
        }
    }

    #[test]
    fn out_of_workspace_is_rejected() {
        let (spec, ws) = finger_ws();
        let mut t = TrajectorySpec::preset(TrajectoryKind::Flower, &spec, &ws, 50).unwrap();
        t.center[0] += ws.width;
        assert!(matches!(make_trajectory(&t, &ws), Err(Error::Validation(_))));
        t = TrajectorySpec::preset(TrajectoryKind::Box, &spec, &ws, 1).unwrap();
        assert!(make_trajectory(&t, &ws).is_err());
        let bad = TrajectorySpec::custom(vec![vec![0.0, 100.0]], 10);
        assert!(make_trajectory(&bad, &ws).is_err());
    }

    #[test]
    fn custom_polyline_resamples_to_count() {
        let (_, ws) = finger_ws();
        let t = TrajectorySpec::custom(vec![vec![-10.0, 100.0], vec![10.0, 100.0], vec![10.0, 120.0]], 41);
        let pts = make_trajectory(&t, &ws).unwrap();
        assert_eq!(pts.len(), 41);
        assert_eq!(pts[0], vec![-10.0, 100.0]);
        assert!(distance(&pts[40], &[10.0, 120.0]) < 1e-12);
        assert!(distance(&pts[20], &[10.0, 100.0]) < 1e-12);
        let d = spacings(&pts);
        assert!(d.iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn l_path_turns_once() {
        let (spec, ws) = finger_ws();
        let t = TrajectorySpec::preset(TrajectoryKind::LPath, &spec, &ws, 61).unwrap();
        let pts = make_trajectory(&t, &ws).unwrap();
        let [a, b] = t.half_extent;
        let start = t.embed(-a, -b);
        let end = t.embed(a, b);
        assert!(distance(&pts[0], &start) < 1e-9);
        assert!(distance(&pts[60], &end) < 1e-9);
        assert!(pts[0] != pts[60]);
    }

    #[test]
    fn kind_names_parse_back() {
        for kind in [
            TrajectoryKind::Flower,
            TrajectoryKind::Box,
            TrajectoryKind::Figure8,
            TrajectoryKind::LPath,
            TrajectoryKind::Custom,
        ] {
            assert_eq!(kind.name().parse::<TrajectoryKind>().unwrap(), kind);
        }
    }
}
