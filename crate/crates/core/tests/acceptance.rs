//! End-to-end acceptance run: trains both robots once, then checks each
//! criterion and prints one PASS/FAIL line for it. Exits non-zero if any
//! check fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use softik::harness::{
    bench, build_robot, compare_sim_arms, make_trajectory, positioning_targets, run_direct_follow,
    run_follow_experiment, run_positioning_experiment, s2r_sample_curve, s2r_train_config, FollowReport, GroundTruth,
    PipelineConfig, PositioningConfig, RobotArtifacts, SimArm, TrajectoryKind, TrajectorySpec,
};
use softik::ik::{solve_waypoint, KinematicModel, SolveStatus, SolverConfig};
use softik::neural::Mlp;
use softik::robot::{fk_virtual, ActuationVector, RobotSpec};

struct Outcome {
    id: String,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Report {
    outcomes: Vec<Outcome>,
}

impl Report {
    fn record(&mut self, id: &str, pass: bool, detail: String) {
        println!("[{}] criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.outcomes.push(Outcome {
            id: id.into(),
            pass,
            detail,
        });
    }
}

fn train(spec: RobotSpec) -> RobotArtifacts {
    let start = Instant::now();
    let art = build_robot(&spec, &PipelineConfig::for_robot(spec.id)).expect("pipeline");
    println!(
        "# trained {} in {:.1}s: width {:.2} mm, nets {:?}",
        spec.id,
        start.elapsed().as_secs_f64(),
        art.workspace.width,
        art.nets
            .iter()
            .map(|n| format!("{} {:?} ({} epochs)", n.role, n.hidden, n.report.epochs))
            .collect::<Vec<_>>()
    );
    art
}

fn trajectory(art: &RobotArtifacts, kind: TrajectoryKind, count: usize) -> Vec<Vec<f64>> {
    let spec = TrajectorySpec::preset(kind, &art.spec, &art.workspace, count).expect("preset");
    make_trajectory(&spec, &art.workspace).expect("trajectory")
}

fn worst_fd_mismatch(net: &Mlp, inputs: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let col = rng.random_range(0..inputs.ncols());
        let x: Vec<f64> = inputs.column(col).iter().copied().collect();
        let analytic = net.input_jacobian(&x).expect("jacobian");
        let mut fd = DMatrix::zeros(analytic.nrows(), analytic.ncols());
        for k in 0..x.len() {
            let h = 1e-5 * (net.input_scaler.max[k] - net.input_scaler.min[k]).abs().max(1e-3);
            let (mut hi, mut lo) = (x.clone(), x.clone());
            hi[k] += h;
            lo[k] -= h;
            let d = (net.forward(&hi).unwrap() - net.forward(&lo).unwrap()) / (2.0 * h);
            fd.set_column(k, &d);
        }
        worst = worst.max((analytic - &fd).norm() / fd.norm().max(1e-12));
    }
    worst
}

fn criterion_1(report: &mut Report, arts: &[&RobotArtifacts]) {
    let pass = arts.iter().all(|a| a.fk_stats.mean_pct <= 1.0);
    let detail = arts
        .iter()
        .map(|a| format!("{} fk test error mean {:.3}% (max {:.3}%)", a.spec.id, a.fk_stats.mean_pct, a.fk_stats.max_pct))
        .collect::<Vec<_>>()
        .join("; ");
    report.record("1", pass, format!("{detail}; limit 1% width"));
}

fn criterion_2(report: &mut Report, arts: &[&RobotArtifacts]) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_fd = 0.0f64;
    let mut jac_ok = true;
    let mut parts = Vec::new();
    for art in arts {
        jac_ok &= art.jac_stats.median_rel <= 0.05;
        parts.push(format!("{} N_J median rel {:.4}", art.spec.id, art.jac_stats.median_rel));
        let test_c = softik::neural::TrainingSet::forward_kinematics(&art.test).unwrap().inputs;
        let test_p = softik::neural::TrainingSet::inverse(&art.test).unwrap().inputs;
        worst_fd = worst_fd.max(worst_fd_mismatch(&art.bundle.net_fk, &test_c, &mut rng));
        worst_fd = worst_fd.max(worst_fd_mismatch(&art.bundle.net_jac, &test_c, &mut rng));
        if let Some(s2r) = &art.bundle.net_s2r {
            worst_fd = worst_fd.max(worst_fd_mismatch(s2r, &test_p, &mut rng));
        }
        if let Some(direct) = &art.direct {
            worst_fd = worst_fd.max(worst_fd_mismatch(&direct.net, &test_p, &mut rng));
        }
    }
    let pass = jac_ok && worst_fd <= 1e-4;
    report.record(
        "2",
        pass,
        format!("{}; limit 0.05; input_jacobian vs FD worst rel {worst_fd:.2e} (limit 1e-4)", parts.join(", ")),
    );
}

fn criterion_3(report: &mut Report, arts: &[&RobotArtifacts]) {
    let mut parts = Vec::new();
    let mut pass = true;
    for art in arts {
        let spec = &art.spec;
        let model = art.bundle.view(false).unwrap();
        let cfg = SolverConfig::for_width(art.workspace.width);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut converged, mut monotone, mut steps, mut max_it) = (0, true, 0usize, 0usize);
        let trials = 500;
        for _ in 0..trials {
            let c: Vec<f64> = spec
                .ranges
                .iter()
                .map(|r| rng.random_range(r.min + 0.05 * r.span()..=r.max - 0.05 * r.span()))
                .collect();
            let mut c_nb: Vec<f64> = c
                .iter()
                .zip(&spec.ranges)
                .map(|(v, r)| v + rng.random_range(-0.02..=0.02) * r.span())
                .collect();
            spec.clamp(&mut c_nb);
            let t_nb = fk_virtual(spec, &ActuationVector::from(&c_nb[..])).unwrap();
            let target = fk_virtual(spec, &ActuationVector::from(&c[..])).unwrap();
            let nb = solve_waypoint(&model, t_nb.as_slice(), &c_nb, &cfg).unwrap();
            let r = solve_waypoint(&model, target.as_slice(), &nb.c, &cfg).unwrap();
            for trace in [&nb.objective_trace, &r.objective_trace] {
                monotone &= trace.windows(2).all(|w| w[1] < w[0]);
                steps += trace.len() - 1;
            }
            max_it = max_it.max(r.iterations);
            if r.status == SolveStatus::Converged && r.iterations <= 50 {
                converged += 1;
            }
        }
        let rate = converged as f64 / trials as f64;
        pass &= rate >= 0.99 && monotone;
        parts.push(format!(
            "{} {converged}/{trials} converged ({:.1}%), max {max_it} iterations, {steps} accepted steps {}",
            spec.id,
            100.0 * rate,
            if monotone { "all strictly decreasing" } else { "NOT all decreasing" }
        ));
    }
    report.record("3", pass, format!("{}; need >= 99%", parts.join("; ")));
}

fn follow(art: &RobotArtifacts, kind: TrajectoryKind, count: usize, use_s2r: bool, truth: &GroundTruth) -> FollowReport {
    let waypoints = trajectory(art, kind, count);
    let label = format!("{}_{}", art.spec.id, kind.name());
    run_follow_experiment(
        &art.bundle,
        &label,
        &waypoints,
        use_s2r,
        truth,
        &SolverConfig::for_width(art.workspace.width),
    )
    .unwrap()
}

fn criterion_4(report: &mut Report, arts: &[&RobotArtifacts]) {
    let mut parts = Vec::new();
    let mut pass = true;
    for art in arts {
        for (kind, count) in [(TrajectoryKind::Flower, 120), (TrajectoryKind::Box, 240)] {
            let r = follow(art, kind, count, false, &GroundTruth::Virtual);
            pass &= r.mean_error_pct <= 0.5;
            parts.push(format!(
                "{} mean {:.3}% max {:.3}% ({} converged)",
                r.label, r.mean_error_pct, r.max_error_pct, r.converged
            ));
        }
    }
    report.record("4", pass, format!("{}; limit mean 0.5%", parts.join("; ")));
}

fn criterion_5(report: &mut Report, arts: &[&RobotArtifacts]) {
    let mut parts = Vec::new();
    let mut pass = true;
    for art in arts {
        let s2r = art.s2r_stats.expect("s2r trained");
        let samples = PipelineConfig::for_robot(art.spec.id).s2r.unwrap().samples;
        pass &= s2r.mean_pct <= 1.0 && samples <= if art.spec.n == 3 { 343 } else { 620 };
        parts.push(format!("{} s2r from {samples} samples: test mean {:.4}%", art.spec.id, s2r.mean_pct));
        let truth = GroundTruth::Twin(art.twin.clone());
        for (kind, count) in [(TrajectoryKind::Flower, 120), (TrajectoryKind::Box, 240)] {
            let with = follow(art, kind, count, true, &truth);
            let without = follow(art, kind, count, false, &truth);
            let ratio = without.mean_error_mm / with.mean_error_mm;
            pass &= with.max_error_pct <= 2.0 && ratio >= 3.0;
            parts.push(format!(
                "{} twin: with s2r max {:.3}% mean {:.3}%, without mean {:.3}% (ratio {ratio:.1})",
                with.label, with.max_error_pct, with.mean_error_pct, without.mean_error_pct
            ));
        }
    }
    report.record("5", pass, format!("{}; limits max 2%, ratio >= 3", parts.join("; ")));
}

fn criterion_6(report: &mut Report, finger: &RobotArtifacts) {
    let waypoints = trajectory(finger, TrajectoryKind::Figure8, 200);
    let cfg = SolverConfig::for_width(finger.workspace.width);
    let jac = run_follow_experiment(&finger.bundle, "figure8", &waypoints, false, &GroundTruth::Virtual, &cfg).unwrap();
    let direct = run_direct_follow(
        finger.direct.as_ref().expect("direct trained"),
        "figure8",
        &waypoints,
        &GroundTruth::Virtual,
        finger.workspace.width,
    )
    .unwrap();
    let pass = jac.max_jump_pct_range <= 5.0 && jac.max_jump < direct.max_jump;
    report.record(
        "6",
        pass,
        format!(
            "figure8 200 wp: jacobian max jump {:.4} ({:.2}% range, tracking mean {:.3}%), direct IK max jump {:.4} ({:.2}% range, tracking mean {:.3}%)",
            jac.max_jump,
            jac.max_jump_pct_range,
            jac.mean_error_pct,
            direct.max_jump,
            direct.max_jump_pct_range,
            direct.mean_error_pct
        ),
    );
}

fn criterion_7(report: &mut Report, finger: &RobotArtifacts) {
    let targets = positioning_targets(&finger.spec, finger.workspace.width);
    let cfg = PositioningConfig::new(finger.workspace.width);
    let truth = GroundTruth::Twin(finger.twin.clone());
    let r = run_positioning_experiment(&finger.bundle, &targets, &truth, &cfg).unwrap();
    let pass = r.solves == 60 && r.max_error_pct <= 0.9;
    let per_target: Vec<String> = r
        .targets
        .iter()
        .map(|t| format!("{:.3}%/{}it", t.max_error_pct, t.iterations))
        .collect();
    report.record(
        "7",
        pass,
        format!(
            "{} solves vs twin, worst {:.3}% width (limit 0.9%); per target {}",
            r.solves,
            r.max_error_pct,
            per_target.join(" ")
        ),
    );
}

fn criterion_8(report: &mut Report, finger: &RobotArtifacts) {
    let waypoints = trajectory(finger, TrajectoryKind::Figure8, 200);
    let cfg = SolverConfig::for_width(finger.workspace.width);
    let b = bench(&finger.bundle, finger.direct.as_ref(), &waypoints, &cfg, &[32, 64, 128]).unwrap();
    let ours = b.method("jacobian").unwrap();
    let pass = ours.waypoints_per_sec >= 35.0;
    let methods: Vec<String> = b
        .methods
        .iter()
        .map(|m| format!("{} {:.3} ms/wp", m.method, m.per_waypoint_ms))
        .collect();
    let scaling: Vec<String> = b
        .scaling
        .iter()
        .map(|s| format!("hb={} {:.1} us/it", s.hb, s.per_iteration_us))
        .collect();
    report.record(
        "8",
        pass,
        format!(
            "{:.0} waypoints/s with s2r + largest nets (need >= 35); {}; scaling {}",
            ours.waypoints_per_sec,
            methods.join(", "),
            scaling.join(", ")
        ),
    );
}

fn criterion_9(report: &mut Report, arts: &[&RobotArtifacts]) {
    let mut parts = Vec::new();
    let mut pass = true;
    for art in arts {
        let mut cfg = s2r_train_config(9);
        cfg.max_epochs = 30;
        let cmp = compare_sim_arms(&art.spec, &art.twin, &[100, 343, 1000], 0.25, &cfg, art.workspace.width, 1.0).unwrap();
        pass &= cmp.simplified_needs_more();
        let show = |pts: &[softik::harness::CurvePoint]| {
            pts.iter()
                .map(|p| format!("{}:{:.3}%", p.samples, p.mean_pct))
                .collect::<Vec<_>>()
                .join(" ")
        };
        parts.push(format!(
            "{} full arm [{}] reaches 1% at {:?}; simplified arm [{}] at {:?}",
            art.spec.id,
            show(&cmp.full),
            cmp.full_needs,
            show(&cmp.simplified),
            cmp.simplified_needs
        ));
    }
    report.record("9", pass, parts.join("; "));
}

/// Harness invariants that need trained models.
fn invariants(report: &mut Report, three: &RobotArtifacts, finger: &RobotArtifacts) {
    // L-path through the singular boundary region.
    let mut l_ok = true;
    let mut l_parts = Vec::new();
    for art in [three, finger] {
        let r = follow(art, TrajectoryKind::LPath, 120, false, &GroundTruth::Virtual);
        let statuses_ok = r.max_iters == 0;
        let in_range = r.waypoints.iter().all(|w| art.spec.check_actuation(&w.c).is_ok());
        l_ok &= statuses_ok && in_range;
        l_parts.push(format!(
            "{} {} converged, {} stalled, {} max_iters",
            r.label, r.converged, r.stalled, r.max_iters
        ));
    }
    report.record("inv-L", l_ok, l_parts.join("; "));

    // Sample-efficiency curve over {50, 100, 200, 343, 620}.
    let mut curve_ok = true;
    let mut curve_parts = Vec::new();
    for art in [three, finger] {
        let pts = s2r_sample_curve(
            &art.spec,
            &art.twin,
            &[50, 100, 200, 343, 620],
            SimArm::Full,
            0.25,
            &s2r_train_config(5),
            art.workspace.width,
        )
        .unwrap();
        let means: Vec<f64> = pts.iter().map(|p| p.mean_pct).collect();
        // Non-increasing on average: every later half beats the earlier half.
        let first: f64 = means[..2].iter().sum::<f64>() / 2.0;
        let last: f64 = means[3..].iter().sum::<f64>() / 2.0;
        curve_ok &= last <= first;
        curve_parts.push(format!(
            "{} {}",
            art.spec.id,
            pts.iter()
                .map(|p| format!("{}:{:.4}%", p.samples, p.mean_pct))
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    report.record("inv-curve", curve_ok, curve_parts.join("; "));

    // Model-side consistency: trained-bundle composed Jacobian vs FD of the net chain.
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for art in [three, finger] {
        let fk_chain = softik::baselines::FkGradientModel::new(&art.spec, &art.bundle.net_fk, art.bundle.net_s2r.as_ref());
        for _ in 0..20 {
            let c: Vec<f64> = art
                .spec
                .ranges
                .iter()
                .map(|r| rng.random_range(r.min + 0.05 * r.span()..=r.max - 0.05 * r.span()))
                .collect();
            let composed = art.bundle.jacobian(&c).unwrap();
            let exact = fk_chain.jacobian(&c).unwrap();
            worst = worst.max((composed - &exact).norm() / exact.norm());
        }
    }
    report.record(
        "inv-composed",
        worst <= 0.05,
        format!("composed Jacobian vs derivative of the net chain, worst rel {worst:.4}"),
    );
}

fn main() -> ExitCode {
    let start = Instant::now();
    let three = train(RobotSpec::three_chamber());
    let finger = train(RobotSpec::planar_finger());
    let arts = [&three, &finger];
    let mut report = Report::default();
    criterion_1(&mut report, &arts);
    criterion_2(&mut report, &arts);
    criterion_3(&mut report, &arts);
    criterion_4(&mut report, &arts);
    criterion_5(&mut report, &arts);
    criterion_6(&mut report, &finger);
    criterion_7(&mut report, &finger);
    criterion_8(&mut report, &finger);
    criterion_9(&mut report, &arts);
    invariants(&mut report, &three, &finger);
    let failed: Vec<&Outcome> = report.outcomes.iter().filter(|o| !o.pass).collect();
    println!(
        "# acceptance: {} checks, {} failed, {:.1}s",
        report.outcomes.len(),
        failed.len(),
        start.elapsed().as_secs_f64()
    );
    for f in &failed {
        println!("# failed {}: {}", f.id, f.detail);
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
