use serde::{Deserialize, Serialize};

use super::{RobotSpec, TaskPoint};
use crate::dataset::grid_actuations;
use crate::error::{Error, Result};

/// Upper bound on the number of points kept for rendering.
const MAX_RENDER_POINTS: usize = 512;

/// Axis-aligned extent of a set of reachable positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceStats {
    pub aabb_min: Vec<f64>,
    pub aabb_max: Vec<f64>,
    /// Largest side of the bounding box; the unit for percent-of-width errors.
    pub width: f64,
    /// Outline for rendering: the convex hull in 2-D, a strided subsample otherwise.
    pub sample_hull: Vec<Vec<f64>>,
}

impl WorkspaceStats {
    pub fn center(&self) -> Vec<f64> {
        self.aabb_min
            .iter()
            .zip(&self.aabb_max)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.aabb_min.iter().zip(&self.aabb_max))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn percent_of_width(&self, mm: f64) -> f64 {
        100.0 * mm / self.width
    }
}

pub fn workspace_stats(points: &[TaskPoint]) -> Result<WorkspaceStats> {
    let first = points
        .first()
        .ok_or_else(|| Error::validation("workspace needs at least one point"))?;
    let dim = first.len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in points {
        crate::error::check_dim(dim, p.len())?;
        crate::error::check_finite("workspace point", p.as_slice())?;
        for k in 0..dim {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let width = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let sample_hull = if dim == 2 {
        convex_hull(points)
    } else {
        let stride = points.len().div_ceil(MAX_RENDER_POINTS).max(1);
        points.iter().step_by(stride).map(|p| p.to_vec()).collect()
    };
    Ok(WorkspaceStats {
        aabb_min: lo,
        aabb_max: hi,
        width,
        sample_hull,
    })
}

/// Workspace sampled on the N-per-axis actuation grid of the virtual model.
pub fn workspace_of(spec: &RobotSpec, segments: usize) -> Result<WorkspaceStats> {
    spec.validate()?;
    let points: Vec<TaskPoint> = grid_actuations(spec, segments)?
        .iter()
        .map(|c| TaskPoint::from(spec.tip(c)))
        .collect();
    workspace_stats(&points)
}

/// Andrew's monotone chain, counter-clockwise, no repeated endpoint.
fn convex_hull(points: &[TaskPoint]) -> Vec<Vec<f64>> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
    pts.dedup();
    if pts.len() < 3 {
        return pts.into_iter().map(|(x, y)| vec![x, y]).collect();
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull.into_iter().map(|(x, y)| vec![x, y]).collect()
}
