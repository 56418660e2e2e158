use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{RobotSpec, TaskPoint};
use crate::dataset::grid_actuations;
use crate::error::{check_dim, check_finite, Error, Result};

const BUMP_COUNT: usize = 4;
/// Grid resolution used to calibrate the warp over the workspace.
pub(crate) const CALIBRATION_SEGMENTS: usize = 16;
/// Largest tip displacement of a seeded twin, as a fraction of workspace width.
const TARGET_DISPLACEMENT: f64 = 0.045;
const MAX_AFFINE_DEVIATION: f64 = 0.1;

/// Deterministic smooth warp standing in for the physical robot:
/// `pʳ = A·pˢ + b + Σⱼ aⱼ exp(−‖pˢ − μⱼ‖² / 2σⱼ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealTwin {
    /// Row-major n×n matrix `A`.
    pub affine: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
    pub warp_centers: Vec<Vec<f64>>,
    pub warp_amplitudes: Vec<Vec<f64>>,
    pub warp_widths: Vec<f64>,
    pub seed: u64,
}

impl RealTwin {
    pub fn identity(n: usize) -> Self {
        let affine = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            affine,
            offset: vec![0.0; n],
            warp_centers: Vec::new(),
            warp_amplitudes: Vec::new(),
            warp_widths: Vec::new(),
            seed: 0,
        }
    }

    pub fn with_offset(offset: Vec<f64>) -> Self {
        let mut twin = Self::identity(offset.len());
        twin.offset = offset;
        twin
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    /// Random warp calibrated so the largest displacement over the sampled
    /// workspace is 4.5% of its width.
    pub fn seeded(spec: &RobotSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let points: Vec<DVector<f64>> = grid_actuations(spec, CALIBRATION_SEGMENTS)?
            .iter()
            .map(|c| spec.tip(c))
            .collect();
        let tips: Vec<TaskPoint> = points.iter().cloned().map(TaskPoint::from).collect();
        let stats = super::workspace_stats(&tips)?;
        let width = stats.width;
        let center = DVector::from_vec(stats.center());
        let n = spec.n;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spread = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.03..0.03));
        let base_offset = DVector::from_fn(n, |_, _| rng.random_range(-0.02..0.02) * width);
        let mut warp_centers = Vec::with_capacity(BUMP_COUNT);
        let mut warp_amplitudes = Vec::with_capacity(BUMP_COUNT);
        let mut warp_widths = Vec::with_capacity(BUMP_COUNT);
        for _ in 0..BUMP_COUNT {
            let anchor = &points[rng.random_range(0..points.len())];
            warp_centers.push(anchor.as_slice().to_vec());
            warp_amplitudes.push((0..n).map(|_| rng.random_range(-0.03..0.03) * width).collect::<Vec<_>>());
            warp_widths.push(rng.random_range(0.15..0.3) * width);
        }

        let mut twin = Self::identity(n);
        twin.seed = seed;
        // Two passes: the affine part is shrunk if scaling pushed it past the
        // allowed deviation from identity, which changes the calibration.
        for _ in 0..2 {
            let raw = Self::assemble(&spread, &base_offset, &center, &warp_centers, &warp_amplitudes, &warp_widths, 1.0, seed);
            let worst = raw.max_displacement_slices(&points);
            let scale = TARGET_DISPLACEMENT * width / worst;
            twin = Self::assemble(&spread, &base_offset, &center, &warp_centers, &warp_amplitudes, &warp_widths, scale, seed);
            let deviation = twin.affine_deviation();
            if deviation <= MAX_AFFINE_DEVIATION {
                break;
            }
            spread *= 0.9 * MAX_AFFINE_DEVIATION / deviation;
        }
        twin.validate()?;
        Ok(twin)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        spread: &DMatrix<f64>,
        base_offset: &DVector<f64>,
        center: &DVector<f64>,
        centers: &[Vec<f64>],
        amplitudes: &[Vec<f64>],
        widths: &[f64],
        scale: f64,
        seed: u64,
    ) -> Self {
        let n = center.len();
        // displacement = scale·(E(p − center) + b) + bumps
        let a = DMatrix::identity(n, n) + spread * scale;
        let b = (base_offset - spread * center) * scale;
        Self {
            affine: (0..n).map(|i| a.row(i).iter().copied().collect()).collect(),
            offset: b.as_slice().to_vec(),
            warp_centers: centers.to_vec(),
            warp_amplitudes: amplitudes
                .iter()
                .map(|amp| amp.iter().map(|v| v * scale).collect())
                .collect(),
            warp_widths: widths.to_vec(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        check_dim(n, self.affine.len())?;
        for row in &self.affine {
            check_dim(n, row.len())?;
            check_finite("twin affine", row)?;
        }
        check_finite("twin offset", &self.offset)?;
        check_dim(self.warp_centers.len(), self.warp_amplitudes.len())?;
        check_dim(self.warp_centers.len(), self.warp_widths.len())?;
        for (c, a) in self.warp_centers.iter().zip(&self.warp_amplitudes) {
            check_dim(n, c.len())?;
            check_dim(n, a.len())?;
            check_finite("twin warp", c)?;
            check_finite("twin warp", a)?;
        }
        if self.warp_widths.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::validation("twin warp widths must be positive"));
        }
        let deviation = self.affine_deviation();
        if deviation > MAX_AFFINE_DEVIATION + 1e-12 {
            return Err(Error::validation(format!(
                "twin affine part deviates {deviation:.3} from identity (limit {MAX_AFFINE_DEVIATION})"
            )));
        }
        Ok(())
    }

    fn affine_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.affine[i][j])
    }

    /// Operator norm of `A − I`.
    pub fn affine_deviation(&self) -> f64 {
        let n = self.dim();
        let diff = self.affine_matrix() - DMatrix::identity(n, n);
        diff.singular_values().max()
    }

    pub(crate) fn map_slice(&self, p: &[f64]) -> DVector<f64> {
        let n = self.dim();
        let mut out = DVector::from_column_slice(&self.offset);
        for i in 0..n {
            out[i] += self.affine[i].iter().zip(p).map(|(a, x)| a * x).sum::<f64>();
        }
        for ((mu, amp), sigma) in self.warp_centers.iter().zip(&self.warp_amplitudes).zip(&self.warp_widths) {
            let d2: f64 = p.iter().zip(mu).map(|(x, m)| (x - m) * (x - m)).sum();
            let g = (-d2 / (2.0 * sigma * sigma)).exp();
            for i in 0..n {
                out[i] += amp[i] * g;
            }
        }
        out
    }

    pub fn map(&self, p_s: &TaskPoint) -> Result<TaskPoint> {
        check_dim(self.dim(), p_s.len())?;
        check_finite("task point", p_s.as_slice())?;
        Ok(TaskPoint::from(self.map_slice(p_s.as_slice())))
    }

    fn max_displacement_slices(&self, points: &[DVector<f64>]) -> f64 {
        points
            .iter()
            .map(|p| (self.map_slice(p.as_slice()) - p).norm())
            .fold(0.0, f64::max)
    }

    /// Largest `‖r(p) − p‖` over the given points.
    pub fn max_displacement(&self, points: &[TaskPoint]) -> f64 {
        points
            .iter()
            .map(|p| (self.map_slice(p.as_slice()) - &**p).norm())
            .fold(0.0, f64::max)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let twin: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        twin.validate()?;
        Ok(twin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::{fk_real, fk_virtual, workspace_of, ActuationVector};
    use rand::Rng;

    #[test]
    fn identity_twin_is_passthrough() {
        let twin = RealTwin::identity(3);
        let p = TaskPoint::new(vec![1.0, -2.0, 3.5]);
        assert_eq!(twin.map(&p).unwrap(), p);
    }

    #[test]
    fn pure_offset() {
        let twin = RealTwin::with_offset(vec![1.0, 0.0, 0.0]);
        let p = twin.map(&TaskPoint::new(vec![10.0, 20.0, 30.0])).unwrap();
        assert_eq!(p.as_slice(), &[11.0, 20.0, 30.0]);
    }

    #[test]
    fn seeded_twin_displacement_is_calibrated() {
        for spec in [RobotSpec::three_chamber(), RobotSpec::planar_finger()] {
            let twin = RealTwin::seeded(&spec, 7).unwrap();
            let ws = workspace_of(&spec, CALIBRATION_SEGMENTS).unwrap();
            let tips: Vec<TaskPoint> = grid_actuations(&spec, CALIBRATION_SEGMENTS)
                .unwrap()
                .iter()
                .map(|c| TaskPoint::from(spec.tip(c)))
                .collect();
            let frac = twin.max_displacement(&tips) / ws.width;
            assert!((0.03..=0.06).contains(&frac), "{}: {frac}", spec.id);
            assert!(twin.affine_deviation() <= 0.1);
            // independent of the calibration grid
            let finer: Vec<TaskPoint> = grid_actuations(&spec, 21)
                .unwrap()
                .iter()
                .map(|c| TaskPoint::from(spec.tip(c)))
                .collect();
            assert!(twin.max_displacement(&finer) / ws.width <= 0.06);
        }
    }

    #[test]
    fn seeded_twin_is_deterministic() {
        let spec = RobotSpec::planar_finger();
        assert_eq!(RealTwin::seeded(&spec, 3).unwrap(), RealTwin::seeded(&spec, 3).unwrap());
        assert_ne!(RealTwin::seeded(&spec, 3).unwrap(), RealTwin::seeded(&spec, 4).unwrap());
    }

    #[test]
    fn twin_is_lipschitz_on_workspace() {
        for spec in [RobotSpec::three_chamber(), RobotSpec::planar_finger()] {
            let twin = RealTwin::seeded(&spec, 7).unwrap();
            let h = 1e-4;
            let mut worst: f64 = 0.0;
            for c in grid_actuations(&spec, 12).unwrap() {
                let p = spec.tip(&c);
                let mut jac = DMatrix::zeros(spec.n, spec.n);
                for k in 0..spec.n {
                    let mut hi = p.clone();
                    let mut lo = p.clone();
                    hi[k] += h;
                    lo[k] -= h;
                    let col = (twin.map_slice(hi.as_slice()) - twin.map_slice(lo.as_slice())) / (2.0 * h);
                    jac.set_column(k, &col);
                }
                worst = worst.max(jac.singular_values().max());
            }
            assert!(worst <= 1.2, "{}: {worst}", spec.id);
        }
    }

    #[test]
    fn fk_real_is_composition() {
        let spec = RobotSpec::three_chamber();
        let twin = RealTwin::seeded(&spec, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let c = ActuationVector::new((0..3).map(|_| rng.random_range(0.0..3.0)).collect());
            let composed = twin.map(&fk_virtual(&spec, &c).unwrap()).unwrap();
            assert_eq!(fk_real(&spec, &twin, &c).unwrap(), composed);
        }
        let identity = RealTwin::identity(2);
        let finger = RobotSpec::planar_finger();
        let c = ActuationVector::new(vec![0.0; 3]);
        assert_eq!(fk_real(&finger, &identity, &c).unwrap().as_slice(), &[0.0, 150.0]);
    }

    #[test]
    fn toml_round_trip() {
        let twin = RealTwin::seeded(&RobotSpec::planar_finger(), 9).unwrap();
        let back = RealTwin::from_toml(&twin.to_toml().unwrap()).unwrap();
        assert_eq!(back, twin);
    }
}
