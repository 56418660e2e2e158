//! Analytic constant-curvature models for the two robot archetypes.
//!
//! `three_chamber` is a single extensible segment driven by three chambers
//! spaced 120° apart; `planar_finger` is three bending segments in series,
//! each actuated by a signed pressure. Lengths are mm, pressures bar, angles
//! rad.

mod twin;
mod workspace;

use std::f64::consts::PI;
use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};

pub use twin::RealTwin;
pub use workspace::{workspace_of, workspace_stats, WorkspaceStats};

/// Below this bend angle the arc formulas switch to their series expansion.
const STRAIGHT_LIMIT: f64 = 1e-6;

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

/// Actuation parameters `c`, one entry per actuator (bar).
#[derive(Debug, Clone, PartialEq)]
pub struct ActuationVector(DVector<f64>);

/// A position in task space (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPoint(DVector<f64>);

/// `dp/dc`, n rows (task) by m columns (actuators).
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian(DMatrix<f64>);

macro_rules! vector_newtype {
    ($name:ident) => {
        impl $name {
            pub fn new(values: Vec<f64>) -> Self {
                Self(DVector::from_vec(values))
            }

            pub fn zeros(len: usize) -> Self {
                Self(DVector::zeros(len))
            }

            pub fn into_inner(self) -> DVector<f64> {
                self.0
            }

            pub fn to_vec(&self) -> Vec<f64> {
                self.0.as_slice().to_vec()
            }
        }

        impl Deref for $name {
            type Target = DVector<f64>;

            fn deref(&self) -> &DVector<f64> {
                &self.0
            }
        }

        impl From<DVector<f64>> for $name {
            fn from(v: DVector<f64>) -> Self {
                Self(v)
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self::new(v)
            }
        }

        impl From<&[f64]> for $name {
            fn from(v: &[f64]) -> Self {
                Self::new(v.to_vec())
            }
        }
    };
}

vector_newtype!(ActuationVector);
vector_newtype!(TaskPoint);

impl Jacobian {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self(matrix)
    }

    /// Rebuild from the row-major flattening used by datasets and `N_J`.
    pub fn from_row_major(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        check_dim(rows * cols, values.len())?;
        Ok(Self(DMatrix::from_row_slice(rows, cols, values)))
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.0.len());
        for r in 0..self.0.nrows() {
            out.extend(self.0.row(r).iter());
        }
        out
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

impl Deref for Jacobian {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotId {
    ThreeChamber,
    PlanarFinger,
}

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RobotId::ThreeChamber => "three_chamber",
            RobotId::PlanarFinger => "planar_finger",
        })
    }
}

impl FromStr for RobotId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "three_chamber" => Ok(RobotId::ThreeChamber),
            "planar_finger" | "finger" => Ok(RobotId::PlanarFinger),
            other => Err(Error::validation(format!("unknown robot id {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuationRange {
    pub min: f64,
    pub max: f64,
}

impl ActuationRange {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    ThreeChamber {
        /// Segment length at zero pressure.
        rest_length_mm: f64,
        /// Radial distance of each chamber from the central axis.
        chamber_offset_mm: f64,
        /// Chamber elongation per bar.
        gain_mm_per_bar: f64,
    },
    PlanarFinger {
        segment_length_mm: f64,
        /// Bend of one segment at full-range pressure.
        max_bend_rad: f64,
    },
}

/// Geometry and actuation ranges of an analytic soft-robot model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub id: RobotId,
    /// Actuator-space dimension.
    pub m: usize,
    /// Task-space dimension.
    pub n: usize,
    pub ranges: Vec<ActuationRange>,
    pub geometry: Geometry,
}

impl RobotSpec {
    pub fn three_chamber() -> Self {
        Self {
            id: RobotId::ThreeChamber,
            m: 3,
            n: 3,
            ranges: vec![ActuationRange::new(0.0, 3.0); 3],
            geometry: Geometry::ThreeChamber {
                rest_length_mm: 60.0,
                chamber_offset_mm: 10.0,
                gain_mm_per_bar: 8.0,
            },
        }
    }

    pub fn planar_finger() -> Self {
        Self::planar_finger_with(50.0)
    }

    pub fn planar_finger_with(segment_length_mm: f64) -> Self {
        Self {
            id: RobotId::PlanarFinger,
            m: 3,
            n: 2,
            ranges: vec![ActuationRange::new(-3.0, 3.0); 3],
            geometry: Geometry::PlanarFinger {
                segment_length_mm,
                max_bend_rad: 2.0 * PI / 3.0,
            },
        }
    }

    pub fn by_id(id: RobotId) -> Self {
        match id {
            RobotId::ThreeChamber => Self::three_chamber(),
            RobotId::PlanarFinger => Self::planar_finger(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = match self.geometry {
            Geometry::ThreeChamber {
                rest_length_mm,
                chamber_offset_mm,
                gain_mm_per_bar,
            } => {
                if !(rest_length_mm > 0.0 && chamber_offset_mm > 0.0 && gain_mm_per_bar > 0.0) {
                    return Err(Error::validation("three_chamber geometry must be positive"));
                }
                (3, 3)
            }
            Geometry::PlanarFinger {
                segment_length_mm,
                max_bend_rad,
            } => {
                if !(segment_length_mm > 0.0 && max_bend_rad > 0.0) {
                    return Err(Error::validation("planar_finger geometry must be positive"));
                }
                (3, 2)
            }
        };
        let id_matches = matches!(
            (self.id, &self.geometry),
            (RobotId::ThreeChamber, Geometry::ThreeChamber { .. })
                | (RobotId::PlanarFinger, Geometry::PlanarFinger { .. })
        );
        if !id_matches {
            return Err(Error::validation("robot id does not match geometry kind"));
        }
        if self.m != m || self.n != n {
            return Err(Error::validation(format!(
                "{} requires m={m}, n={n}, got m={}, n={}",
                self.id, self.m, self.n
            )));
        }
        check_dim(self.m, self.ranges.len())?;
        for r in &self.ranges {
            if !(r.min.is_finite() && r.max.is_finite() && r.min < r.max) {
                return Err(Error::validation(format!("bad actuation range [{}, {}]", r.min, r.max)));
            }
        }
        Ok(())
    }

    /// Dimension, finiteness and range checks for an actuation vector.
    pub fn check_actuation(&self, c: &[f64]) -> Result<()> {
        check_dim(self.m, c.len())?;
        check_finite("actuation", c)?;
        for (index, (&value, r)) in c.iter().zip(&self.ranges).enumerate() {
            if !r.contains(value) {
                return Err(Error::Domain {
                    index,
                    value,
                    min: r.min,
                    max: r.max,
                });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, c: &mut [f64]) {
        for (v, r) in c.iter_mut().zip(&self.ranges) {
            *v = r.clamp(*v);
        }
    }

    /// Midpoint of every actuation range.
    pub fn mid_actuation(&self) -> Vec<f64> {
        self.ranges.iter().map(|r| 0.5 * (r.min + r.max)).collect()
    }

    /// Zero actuation clamped into range.
    pub fn rest_actuation(&self) -> Vec<f64> {
        self.ranges.iter().map(|r| r.clamp(0.0)).collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Tip position with no range check. Callers must validate first.
    pub(crate) fn tip(&self, c: &[f64]) -> DVector<f64> {
        match self.geometry {
            Geometry::ThreeChamber {
                rest_length_mm,
                chamber_offset_mm,
                gain_mm_per_bar,
            } => {
                let lengths = [0, 1, 2].map(|i| rest_length_mm + gain_mm_per_bar * c[i]);
                three_chamber_tip(lengths, chamber_offset_mm, 1.0)
            }
            Geometry::PlanarFinger {
                segment_length_mm,
                max_bend_rad,
            } => {
                let bends = self.finger_bends(c, max_bend_rad);
                finger_tip(&bends, segment_length_mm)
            }
        }
    }

    fn finger_bends(&self, c: &[f64], max_bend_rad: f64) -> Vec<f64> {
        c.iter()
            .zip(&self.ranges)
            .map(|(&v, r)| max_bend_rad * v / r.max.abs().max(r.min.abs()))
            .collect()
    }
}

/// `sin θ / θ`.
fn sinc(theta: f64) -> f64 {
    if theta.abs() < STRAIGHT_LIMIT {
        1.0 - theta * theta / 6.0
    } else {
        theta.sin() / theta
    }
}

/// `(1 − cos θ) / θ²`.
fn versc(theta: f64) -> f64 {
    if theta.abs() < STRAIGHT_LIMIT {
        0.5 - theta * theta / 24.0
    } else {
        (1.0 - theta.cos()) / (theta * theta)
    }
}

/// Tip of a three-chamber constant-curvature segment, evaluated at
/// `fraction` of its arc length (1.0 gives the tip).
///
/// Chambers sit at angles 0, 2π/3, 4π/3 around the axis. With
/// `(a, b) = Σ lᵢ (cos ψᵢ, sin ψᵢ)` the bend vector `u = −2 (a, b) / (3d)`
/// has magnitude θ and points along the bending plane.
fn three_chamber_tip(lengths: [f64; 3], offset: f64, fraction: f64) -> DVector<f64> {
    let [l1, l2, l3] = lengths;
    let mean = (l1 + l2 + l3) / 3.0;
    let a = l1 - 0.5 * (l2 + l3);
    let b = SQRT3_2 * (l2 - l3);
    let scale = -2.0 * fraction / (3.0 * offset);
    let (ux, uy) = (scale * a, scale * b);
    let theta = ux.hypot(uy);
    let arc = mean * fraction;
    let lateral = mean * versc(theta);
    DVector::from_vec(vec![lateral * ux, lateral * uy, arc * sinc(theta)])
}

/// Serial composition of planar arcs starting at the origin, heading +y.
/// Positive bend turns the heading toward +x.
fn finger_tip(bends: &[f64], segment_length: f64) -> DVector<f64> {
    let (mut x, mut y, mut heading) = (0.0, 0.0, 0.0_f64);
    for &theta in bends {
        let (dx, dy) = arc_chord(heading, theta, segment_length);
        x += dx;
        y += dy;
        heading += theta;
    }
    DVector::from_vec(vec![x, y])
}

fn arc_chord(heading: f64, theta: f64, length: f64) -> (f64, f64) {
    let s = sinc(theta);
    let c = theta * versc(theta);
    let (sin_h, cos_h) = heading.sin_cos();
    (
        length * (sin_h * s + cos_h * c),
        length * (cos_h * s - sin_h * c),
    )
}

/// Forward kinematics of the virtual (analytic) robot.
pub fn fk_virtual(spec: &RobotSpec, c: &ActuationVector) -> Result<TaskPoint> {
    spec.check_actuation(c.as_slice())?;
    Ok(TaskPoint(spec.tip(c.as_slice())))
}

/// Deliberately coarse variants of the two models, used to compare how much
/// twin data the sim-to-real layer needs when the simulator is less faithful.
///
/// `three_chamber` ignores extension (the segment keeps its rest length);
/// `planar_finger` collapses the three segments into one arc of the total
/// length carrying the summed bend.
pub fn fk_simplified(spec: &RobotSpec, c: &ActuationVector) -> Result<TaskPoint> {
    spec.check_actuation(c.as_slice())?;
    let c = c.as_slice();
    let p = match spec.geometry {
        Geometry::ThreeChamber {
            rest_length_mm,
            chamber_offset_mm,
            gain_mm_per_bar,
        } => {
            let mean_c = (c[0] + c[1] + c[2]) / 3.0;
            let lengths = [0, 1, 2].map(|i| rest_length_mm + gain_mm_per_bar * (c[i] - mean_c));
            three_chamber_tip(lengths, chamber_offset_mm, 1.0)
        }
        Geometry::PlanarFinger {
            segment_length_mm,
            max_bend_rad,
        } => {
            let total: f64 = spec.finger_bends(c, max_bend_rad).iter().sum();
            finger_tip(&[total], 3.0 * segment_length_mm)
        }
    };
    Ok(TaskPoint(p))
}

/// Points along the robot body for rendering, base first, tip last.
pub fn body_curve(spec: &RobotSpec, c: &ActuationVector, samples_per_segment: usize) -> Result<Vec<TaskPoint>> {
    spec.check_actuation(c.as_slice())?;
    let samples = samples_per_segment.max(1);
    let c = c.as_slice();
    let mut points = vec![TaskPoint::zeros(spec.n)];
    match spec.geometry {
        Geometry::ThreeChamber {
            rest_length_mm,
            chamber_offset_mm,
            gain_mm_per_bar,
        } => {
            let lengths = [0, 1, 2].map(|i| rest_length_mm + gain_mm_per_bar * c[i]);
            for k in 1..=samples {
                let t = k as f64 / samples as f64;
                points.push(TaskPoint(three_chamber_tip(lengths, chamber_offset_mm, t)));
            }
        }
        Geometry::PlanarFinger {
            segment_length_mm,
            max_bend_rad,
        } => {
            let (mut x, mut y, mut heading) = (0.0, 0.0, 0.0_f64);
            for theta in spec.finger_bends(c, max_bend_rad) {
                for k in 1..=samples {
                    let t = k as f64 / samples as f64;
                    let (dx, dy) = arc_chord(heading, theta * t, segment_length_mm * t);
                    points.push(TaskPoint::new(vec![x + dx, y + dy]));
                }
                let (dx, dy) = arc_chord(heading, theta, segment_length_mm);
                x += dx;
                y += dy;
                heading += theta;
            }
        }
    }
    Ok(points)
}

/// Probe half-width for the central-difference Jacobian: one tenth of a grid
/// cell when the range is divided into `segments` samples.
pub fn jacobian_step(range: &ActuationRange, segments: usize) -> f64 {
    range.span() / (10.0 * segments as f64)
}

/// Central-difference Jacobian of an arbitrary map over a box domain.
///
/// Column k uses `(f(c + Δc·e_k) − f(c − Δc·e_k)) / (2Δc)`. Near a range
/// boundary the probe centre is shifted inward so both evaluations stay in
/// range.
pub fn central_difference_jacobian<F>(
    f: F,
    c: &[f64],
    ranges: &[ActuationRange],
    segments: usize,
) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
{
    if segments == 0 {
        return Err(Error::validation("segment count must be at least 1"));
    }
    check_dim(ranges.len(), c.len())?;
    let mut probe = c.to_vec();
    let mut columns = Vec::with_capacity(c.len());
    for (k, range) in ranges.iter().enumerate() {
        let step = jacobian_step(range, segments);
        let centre = c[k].clamp(range.min + step, range.max - step);
        probe[k] = centre + step;
        let plus = f(&probe)?;
        probe[k] = centre - step;
        let minus = f(&probe)?;
        probe[k] = c[k];
        columns.push((plus - minus) / (2.0 * step));
    }
    Ok(DMatrix::from_columns(&columns))
}

/// Finite-difference Jacobian of the virtual robot with step `range/(10N)`.
pub fn jacobian_virtual(spec: &RobotSpec, c: &ActuationVector, segments: usize) -> Result<Jacobian> {
    spec.check_actuation(c.as_slice())?;
    let j = central_difference_jacobian(|x| Ok(spec.tip(x)), c.as_slice(), &spec.ranges, segments)?;
    Ok(Jacobian(j))
}

/// Tip position on the physical twin: the twin warp applied to the virtual tip.
pub fn fk_real(spec: &RobotSpec, twin: &RealTwin, c: &ActuationVector) -> Result<TaskPoint> {
    let p_s = fk_virtual(spec, c)?;
    twin.map(&p_s)
}
