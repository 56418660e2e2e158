use serde::{Deserialize, Serialize};

use crate::baselines::{train_direct_ik, DirectIk};
use crate::dataset::{grid_sample, split, twin_sample, twin_sample_with, split_indices, Dataset, PairedSample};
use crate::error::{Error, Result};
use crate::ik::ModelBundle;
use crate::neural::{evaluate, fit_network, size_s2r, ErrorStats, Mlp, Optimizer, TrainConfig, TrainReport, TrainingSet};
use crate::robot::{fk_simplified, workspace_stats, ActuationVector, RealTwin, RobotId, RobotSpec, WorkspaceStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetRecipe {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S2rRecipe {
    pub samples: usize,
    /// Hidden neurons per twin sample.
    pub eta: f64,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub segments: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub twin_seed: u64,
    pub fk: NetRecipe,
    pub jac: NetRecipe,
    pub direct: Option<NetRecipe>,
    pub s2r: Option<S2rRecipe>,
}

fn adam(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        optimizer: Optimizer::FirstOrder,
        max_epochs: epochs,
        learning_rate: 0.01,
        seed,
        ..TrainConfig::default()
    }
}

/// LM settings for the sim-to-real net.
pub fn s2r_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        optimizer: Optimizer::Lm,
        max_epochs: 50,
        target_mse: 1e-8,
        seed,
        ..TrainConfig::default()
    }
}

impl PipelineConfig {
    pub fn for_robot(id: RobotId) -> Self {
        match id {
            RobotId::ThreeChamber => Self {
                segments: 16,
                split_ratio: 0.7,
                seed: 0,
                twin_seed: 7,
                fk: NetRecipe {
                    hidden: vec![35, 35],
                    train: adam(1000, 1),
                },
                jac: NetRecipe {
                    hidden: vec![35, 35],
                    train: adam(1000, 2),
                },
                direct: Some(NetRecipe {
                    hidden: vec![35, 35],
                    train: adam(1000, 3),
                }),
                s2r: Some(S2rRecipe {
                    samples: 343,
                    eta: 0.25,
                    train: s2r_train_config(4),
                }),
            },
            RobotId::PlanarFinger => Self {
                segments: 29,
                split_ratio: 0.7,
                seed: 0,
                twin_seed: 7,
                fk: NetRecipe {
                    hidden: vec![30, 30, 30],
                    train: adam(400, 1),
                },
                jac: NetRecipe {
                    hidden: vec![64, 64],
                    train: adam(200, 2),
                },
                direct: Some(NetRecipe {
                    hidden: vec![30, 30, 30],
                    train: adam(200, 3),
                }),
                s2r: Some(S2rRecipe {
                    samples: 620,
                    eta: 0.25,
                    train: s2r_train_config(4),
                }),
            },
        }
    }

    /// Scale every epoch budget by `factor` (at least one epoch each).
    pub fn scaled_epochs(mut self, factor: f64) -> Self {
        let scale = |cfg: &mut TrainConfig| cfg.max_epochs = ((cfg.max_epochs as f64 * factor).round() as usize).max(1);
        scale(&mut self.fk.train);
        scale(&mut self.jac.train);
        if let Some(d) = &mut self.direct {
            scale(&mut d.train);
        }
        if let Some(s) = &mut self.s2r {
            scale(&mut s.train);
        }
        self
    }
}

/// Relative Frobenius error of predicted Jacobians, summarized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobianStats {
    pub median_rel: f64,
    pub p90_rel: f64,
    pub max_rel: f64,
}

pub fn jacobian_stats(net: &Mlp, test: &TrainingSet) -> Result<JacobianStats> {
    let pred = net.forward_batch(&test.inputs)?;
    let mut rel: Vec<f64> = pred
        .column_iter()
        .zip(test.targets.column_iter())
        .map(|(p, t)| (p - t).norm() / t.norm().max(f64::MIN_POSITIVE))
        .collect();
    rel.sort_by(f64::total_cmp);
    let at = |q: f64| rel[((rel.len() - 1) as f64 * q).round() as usize];
    Ok(JacobianStats {
        median_rel: at(0.5),
        p90_rel: at(0.9),
        max_rel: rel[rel.len() - 1],
    })
}

pub fn train_fk(train: &Dataset, test: &Dataset, recipe: &NetRecipe, width: f64) -> Result<(Mlp, TrainReport, ErrorStats)> {
    let test_set = TrainingSet::forward_kinematics(test)?;
    let (net, mut report) = fit_network(&recipe.hidden, &TrainingSet::forward_kinematics(train)?, &test_set, &recipe.train)?;
    let stats = evaluate(&net, &test_set, width)?;
    report.test_error_pct_width = Some(stats.mean_pct);
    Ok((net, report, stats))
}

pub fn train_jac(train: &Dataset, test: &Dataset, recipe: &NetRecipe) -> Result<(Mlp, TrainReport, JacobianStats)> {
    let test_set = TrainingSet::jacobian(test)?;
    let (net, report) = fit_network(&recipe.hidden, &TrainingSet::jacobian(train)?, &test_set, &recipe.train)?;
    let stats = jacobian_stats(&net, &test_set)?;
    Ok((net, report, stats))
}

/// Fit the sim-to-real net on a 70/30 split of `pairs`, with `⌈η·|pairs|⌉`
/// hidden neurons. Errors are measured on the held-out pairs.
pub fn train_s2r(pairs: &[PairedSample], eta: f64, cfg: &TrainConfig, width: f64) -> Result<(Mlp, TrainReport, ErrorStats)> {
    let hidden = size_s2r(pairs.len(), eta)?;
    if hidden <= 1 {
        log::warn!("sim-to-real net has a single hidden neuron ({} samples)", pairs.len());
    }
    let set = TrainingSet::sim_to_real(pairs)?;
    let (train_idx, test_idx) = split_indices(set.len(), 0.7, cfg.seed)?;
    let (train, test) = (set.subset(&train_idx), set.subset(&test_idx));
    let (net, mut report) = fit_network(&[hidden], &train, &test, cfg)?;
    let stats = evaluate(&net, &test, width)?;
    report.test_error_pct_width = Some(stats.mean_pct);
    Ok((net, report, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSummary {
    pub role: String,
    pub hidden: Vec<usize>,
    pub params: usize,
    pub report: TrainReport,
}

/// Everything trained for one robot.
#[derive(Debug, Clone)]
pub struct RobotArtifacts {
    pub spec: RobotSpec,
    pub workspace: WorkspaceStats,
    pub twin: RealTwin,
    pub dataset: Dataset,
    pub train: Dataset,
    pub test: Dataset,
    pub bundle: ModelBundle,
    pub direct: Option<DirectIk>,
    pub fk_stats: ErrorStats,
    pub jac_stats: JacobianStats,
    pub s2r_stats: Option<ErrorStats>,
    pub nets: Vec<NetSummary>,
}

fn summary(role: &str, net: &Mlp, report: TrainReport) -> NetSummary {
    NetSummary {
        role: role.into(),
        hidden: net.hidden_sizes(),
        params: net.param_count(),
        report,
    }
}

/// Sample the grid, train every net and assemble the bundle.
pub fn build_robot(spec: &RobotSpec, cfg: &PipelineConfig) -> Result<RobotArtifacts> {
    let dataset = grid_sample(spec, cfg.segments)?;
    let workspace = workspace_stats(&dataset.positions())?;
    let (train, test) = split(&dataset, cfg.split_ratio, cfg.seed)?;
    let twin = RealTwin::seeded(spec, cfg.twin_seed)?;
    log::info!("{}: {} samples, width {:.2} mm", spec.id, dataset.len(), workspace.width);

    let (net_fk, fk_report, fk_stats) = train_fk(&train, &test, &cfg.fk, workspace.width)?;
    log::info!("fk: mean test error {:.3}% width", fk_stats.mean_pct);
    let (net_jac, jac_report, jac_stats) = train_jac(&train, &test, &cfg.jac)?;
    log::info!("jac: median relative error {:.4}", jac_stats.median_rel);
    let mut nets = vec![summary("fk", &net_fk, fk_report), summary("jac", &net_jac, jac_report)];

    let (net_s2r, s2r_stats) = match &cfg.s2r {
        Some(recipe) => {
            let pairs = twin_sample(spec, &twin, recipe.samples, cfg.twin_seed)?;
            let (net, report, stats) = train_s2r(&pairs, recipe.eta, &recipe.train, workspace.width)?;
            log::info!("s2r: mean test error {:.3}% width", stats.mean_pct);
            nets.push(summary("s2r", &net, report));
            (Some(net), Some(stats))
        }
        None => (None, None),
    };
    let direct = match &cfg.direct {
        Some(recipe) => {
            let (model, report) = train_direct_ik(spec, &train, &test, &recipe.hidden, &recipe.train)?;
            nets.push(summary("direct", &model.net, report));
            Some(model)
        }
        None => None,
    };
    let bundle = ModelBundle::new(spec.clone(), net_fk, net_jac, net_s2r, workspace.width)?;
    Ok(RobotArtifacts {
        spec: spec.clone(),
        workspace,
        twin,
        dataset,
        train,
        test,
        bundle,
        direct,
        fk_stats,
        jac_stats,
        s2r_stats,
        nets,
    })
}

/// Where the simulated side of the sim-to-real pairs comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimArm {
    /// The full virtual model.
    Full,
    /// The reduced analytic model (finger: one arc; three_chamber: no extension).
    Simplified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub samples: usize,
    pub hidden: usize,
    pub mean_pct: f64,
    pub max_pct: f64,
    pub train_time_s: f64,
}

/// s2r test error against twin sample count.
pub fn s2r_sample_curve(
    spec: &RobotSpec,
    twin: &RealTwin,
    counts: &[usize],
    arm: SimArm,
    eta: f64,
    cfg: &TrainConfig,
    width: f64,
) -> Result<Vec<CurvePoint>> {
    counts
        .iter()
        .map(|&count| {
            let pairs = match arm {
                SimArm::Full => twin_sample(spec, twin, count, cfg.seed)?,
                SimArm::Simplified => twin_sample_with(spec, twin, count, cfg.seed, |c| {
                    Ok(fk_simplified(spec, &ActuationVector::from(c))?.into_inner())
                })?,
            };
            let (net, report, stats) = train_s2r(&pairs, eta, cfg, width)?;
            Ok(CurvePoint {
                samples: count,
                hidden: net.hidden_sizes()[0],
                mean_pct: stats.mean_pct,
                max_pct: stats.max_pct,
                train_time_s: report.wall_time_s,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmComparison {
    pub threshold_pct: f64,
    pub full: Vec<CurvePoint>,
    pub simplified: Vec<CurvePoint>,
    /// Smallest tested count reaching the threshold, if any.
    pub full_needs: Option<usize>,
    pub simplified_needs: Option<usize>,
}

impl ArmComparison {
    /// The simplified arm needs strictly more samples (never reaching the
    /// threshold counts as more).
    pub fn simplified_needs_more(&self) -> bool {
        match (self.full_needs, self.simplified_needs) {
            (Some(f), Some(s)) => s > f,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

pub fn compare_sim_arms(
    spec: &RobotSpec,
    twin: &RealTwin,
    counts: &[usize],
    eta: f64,
    cfg: &TrainConfig,
    width: f64,
    threshold_pct: f64,
) -> Result<ArmComparison> {
    if counts.is_empty() {
        return Err(Error::validation("need at least one sample count"));
    }
    let full = s2r_sample_curve(spec, twin, counts, SimArm::Full, eta, cfg, width)?;
    let simplified = s2r_sample_curve(spec, twin, counts, SimArm::Simplified, eta, cfg, width)?;
    let needs = |curve: &[CurvePoint]| curve.iter().find(|p| p.mean_pct <= threshold_pct).map(|p| p.samples);
    Ok(ArmComparison {
        threshold_pct,
        full_needs: needs(&full),
        simplified_needs: needs(&simplified),
        full,
        simplified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_robot_shapes() {
        let cfg = PipelineConfig::for_robot(RobotId::PlanarFinger);
        assert_eq!(cfg.fk.hidden, vec![30, 30, 30]);
        assert_eq!(cfg.jac.hidden, vec![64, 64]);
        assert_eq!(cfg.s2r.as_ref().unwrap().samples, 620);
        let cfg = PipelineConfig::for_robot(RobotId::ThreeChamber);
        assert_eq!(cfg.fk.hidden, vec![35, 35]);
        assert_eq!(cfg.jac.hidden, vec![35, 35]);
        assert_eq!(cfg.s2r.as_ref().unwrap().samples, 343);
        let scaled = cfg.scaled_epochs(0.0);
        assert_eq!(scaled.fk.train.max_epochs, 1);
    }

    #[test]
    fn tiny_pipeline_builds_a_consistent_bundle() {
        let spec = RobotSpec::three_chamber();
        let mut cfg = PipelineConfig::for_robot(spec.id).scaled_epochs(0.02);
        cfg.segments = 6;
        cfg.fk.hidden = vec![8];
        cfg.jac.hidden = vec![8];
        cfg.direct.as_mut().unwrap().hidden = vec![8];
        cfg.s2r.as_mut().unwrap().samples = 40;
        let art = build_robot(&spec, &cfg).unwrap();
        assert_eq!(art.dataset.len(), 216);
        assert_eq!(art.train.len() + art.test.len(), 216);
        assert!(art.bundle.has_s2r());
        assert_eq!(art.bundle.net_s2r.as_ref().unwrap().hidden_sizes(), vec![10]);
        assert_eq!(art.nets.len(), 4);
        assert!((art.bundle.width - art.workspace.width).abs() < 1e-12);
    }

    #[test]
    fn s2r_on_identity_twin_stays_near_identity() {
        let spec = RobotSpec::planar_finger();
        let twin = RealTwin::identity(2);
        let pairs = twin_sample(&spec, &twin, 60, 1).unwrap();
        let (net, _, stats) = train_s2r(&pairs, 0.25, &s2r_train_config(0), 267.0).unwrap();
        assert!(stats.mean_pct < 0.5, "{stats:?}");
        let p = net.forward(&[10.0, 100.0]).unwrap();
        assert!((p[0] - 10.0).abs() < 2.0 && (p[1] - 100.0).abs() < 2.0, "{p}");
    }

    #[test]
    fn arm_comparison_rules() {
        let point = |samples, mean_pct| CurvePoint {
            samples,
            hidden: 1,
            mean_pct,
            max_pct: mean_pct,
            train_time_s: 0.0,
        };
        let mut cmp = ArmComparison {
            threshold_pct: 1.0,
            full: vec![point(100, 0.5)],
            simplified: vec![point(100, 3.0)],
            full_needs: Some(100),
            simplified_needs: None,
        };
        assert!(cmp.simplified_needs_more());
        cmp.simplified_needs = Some(100);
        assert!(!cmp.simplified_needs_more());
        cmp.full_needs = None;
        assert!(!cmp.simplified_needs_more());
    }
}
