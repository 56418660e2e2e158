//! Reference methods: a network regressing actuation directly from position,
//! and the Jacobian solver driven by the FK network's own input Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{check_dim, check_finite, Error, Result};
use crate::ik::KinematicModel;
use crate::neural::{fit_network, Mlp, TrainConfig, TrainReport, TrainingSet};
use crate::robot::{ActuationVector, RobotSpec, TaskPoint};

/// `p → c` regression with outputs clamped to the actuation ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectIk {
    pub spec: RobotSpec,
    pub net: Mlp,
}

impl DirectIk {
    pub fn new(spec: RobotSpec, net: Mlp) -> Result<Self> {
        net.validate()?;
        if net.input_dim() != spec.n || net.output_dim() != spec.m {
            return Err(Error::Config(format!(
                "direct network maps {}→{}, robot needs {}→{}",
                net.input_dim(),
                net.output_dim(),
                spec.n,
                spec.m
            )));
        }
        Ok(Self { spec, net })
    }

    pub fn solve(&self, target: &TaskPoint) -> Result<ActuationVector> {
        solve_direct(self, target.as_slice())
    }
}

/// Train a direct IK network on the swapped pairs of a simulation dataset.
pub fn train_direct_ik(
    spec: &RobotSpec,
    train: &Dataset,
    test: &Dataset,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(DirectIk, TrainReport)> {
    train.meta.check_against(spec)?;
    let (net, report) = fit_network(hidden, &TrainingSet::inverse(train)?, &TrainingSet::inverse(test)?, cfg)?;
    Ok((DirectIk::new(spec.clone(), net)?, report))
}

pub fn solve_direct(model: &DirectIk, target: &[f64]) -> Result<ActuationVector> {
    check_dim(model.spec.n, target.len())?;
    check_finite("target", target)?;
    let mut c = model.net.forward_unchecked(target).as_slice().to_vec();
    model.spec.clamp(&mut c);
    Ok(ActuationVector::new(c))
}

/// FK network (optionally followed by a sim-to-real network) whose Jacobian
/// is the analytic input Jacobian of the network chain.
#[derive(Debug, Clone, Copy)]
pub struct FkGradientModel<'a> {
    spec: &'a RobotSpec,
    fk: &'a Mlp,
    s2r: Option<&'a Mlp>,
}

impl<'a> FkGradientModel<'a> {
    pub fn new(spec: &'a RobotSpec, fk: &'a Mlp, s2r: Option<&'a Mlp>) -> Self {
        Self { spec, fk, s2r }
    }
}

impl KinematicModel for FkGradientModel<'_> {
    fn spec(&self) -> &RobotSpec {
        self.spec
    }

    fn predict(&self, c: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        self.spec.check_actuation(c)?;
        let p_s = self.fk.forward_unchecked(c);
        let p = match self.s2r {
            Some(s2r) => s2r.forward_unchecked(p_s.as_slice()),
            None => p_s.clone(),
        };
        Ok((p_s, p))
    }

    fn jacobian(&self, c: &[f64]) -> Result<DMatrix<f64>> {
        self.spec.check_actuation(c)?;
        let j_s = self.fk.input_jacobian(c)?;
        match self.s2r {
            Some(s2r) => {
                let p_s = self.fk.forward_unchecked(c);
                Ok(s2r.input_jacobian(p_s.as_slice())? * j_s)
            }
            None => Ok(j_s),
        }
    }
}

/// The Jacobian the solver would use if it differentiated the FK network.
pub fn jacobian_via_fk_net(spec: &RobotSpec, fk: &Mlp, c: &ActuationVector) -> Result<DMatrix<f64>> {
    FkGradientModel::new(spec, fk, None).jacobian(c.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{grid_sample, split};
    use crate::neural::Optimizer;

    #[test]
    fn direct_output_is_clamped() {
        let spec = RobotSpec::planar_finger();
        let w = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let model = DirectIk::new(spec, Mlp::linear(w, DVector::zeros(3))).unwrap();
        let c = solve_direct(&model, &[100.0, -7.0]).unwrap();
        assert_eq!(c.to_vec(), vec![3.0, -3.0, 0.0]);
        assert!(solve_direct(&model, &[1.0]).is_err());
        assert!(solve_direct(&model, &[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn direct_shape_is_checked() {
        let spec = RobotSpec::three_chamber();
        let net = Mlp::new(3, &[4], 2, 0);
        assert!(matches!(DirectIk::new(spec, net), Err(Error::Config(_))));
    }

    #[test]
    fn direct_ik_learns_three_chamber_roughly() {
        let spec = RobotSpec::three_chamber();
        let data = grid_sample(&spec, 8).unwrap();
        let (train, test) = split(&data, 0.7, 1).unwrap();
        let cfg = TrainConfig {
            optimizer: Optimizer::Lm,
            max_epochs: 20,
            ..TrainConfig::default()
        };
        let (model, report) = train_direct_ik(&spec, &train, &test, &[10], &cfg).unwrap();
        assert!(report.train_mse < report.history[0]);
        let c = model.solve(&TaskPoint::new(vec![0.0, 0.0, 80.0])).unwrap();
        assert!(spec.check_actuation(c.as_slice()).is_ok());
    }

    #[test]
    fn fk_gradient_jacobian_is_network_derivative() {
        let spec = RobotSpec::planar_finger();
        let fk = Mlp::new(3, &[8], 2, 4);
        let c = ActuationVector::new(vec![0.2, 0.4, -0.6]);
        let j = jacobian_via_fk_net(&spec, &fk, &c).unwrap();
        assert_eq!(j, fk.input_jacobian(c.as_slice()).unwrap());
    }
}
