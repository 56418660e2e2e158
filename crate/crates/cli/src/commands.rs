use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use softik::baselines::{solve_direct, train_direct_ik, FkGradientModel};
use softik::dataset::{grid_sample, read_dataset, split, twin_sample, write_dataset, Dataset};
use softik::harness::{
    approach, bench, build_robot, compare_sim_arms, export_plot_data, follow_with, make_trajectory, positioning_targets,
    run_direct_follow, run_follow_experiment, run_positioning_experiment, s2r_train_config, train_fk, train_jac,
    train_s2r, CurveSeries, ExperimentResults, FollowReport, GroundTruth, NetRecipe, PipelineConfig, PositioningConfig,
    SimArm, TrajectoryKind, TrajectorySpec,
};
use softik::ik::{solve_waypoint, ModelBundle, SolverConfig, FK_FILE, JAC_FILE, ROBOT_FILE, S2R_FILE};
use softik::neural::{ErrorStats, Mlp, ModelMeta, Optimizer, TrainConfig, TrainReport};
use softik::robot::{fk_virtual, workspace_stats, RealTwin, RobotSpec, WorkspaceStats};

use crate::args::*;
use crate::config::AppConfig;
use crate::service::{self, AppState, LoadedModel};
use crate::store::{self, Loaded, DIRECT_FILE};
use crate::waypoints::{format_waypoints, parse_waypoints};

pub fn run(cli: Cli) -> Result<()> {
    let cfg = AppConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(&cfg, a),
        Command::Build(a) => build(&cfg, a),
        Command::Solve(a) => solve(&cfg, a),
        Command::Follow(a) => follow(&cfg, a),
        Command::Bench(a) => bench_cmd(&cfg, a),
        Command::Experiment(a) => experiment(&cfg, a),
        Command::ExportPlot(a) => export_plot(a),
        Command::Serve(a) => serve(&cfg, a),
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn print_workspace(ws: &WorkspaceStats) {
    println!("workspace aabb {} .. {}", fmt_vec(&ws.aabb_min), fmt_vec(&ws.aabb_max));
    println!("workspace width {:.3} mm", ws.width);
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let spec = RobotSpec::by_id(a.robot);
    let data = grid_sample(&spec, a.segments)?;
    write_dataset(&a.out, &data)?;
    println!(
        "{} samples ({} per actuator) for {} written to {}",
        data.len(),
        a.segments,
        spec.id,
        a.out.display()
    );
    print_workspace(&workspace_stats(&data.positions())?);
    Ok(())
}

#[derive(Serialize)]
struct NetReport<'a> {
    role: &'a str,
    robot: String,
    hidden: Vec<usize>,
    params: usize,
    train_samples: usize,
    test_samples: usize,
    train: &'a TrainReport,
    test_error: serde_json::Value,
}

/// Create `dir`, refusing one that already holds models for another robot.
fn prepare_model_dir(dir: &Path, spec: &RobotSpec) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let robot = dir.join(ROBOT_FILE);
    if robot.is_file() {
        let existing = RobotSpec::from_toml(&fs::read_to_string(&robot)?)?;
        if existing != *spec {
            bail!(
                "{} holds models for {}; the dataset is for {}",
                dir.display(),
                existing.id,
                spec.id
            );
        }
    } else {
        fs::write(&robot, spec.to_toml()?)?;
    }
    Ok(())
}

fn train_overrides(base: TrainConfig, a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.train_config {
        Some(path) => toml::from_str(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
            .with_context(|| format!("parsing {}", path.display()))?,
        None => base,
    };
    if let Some(n) = a.epochs {
        cfg.max_epochs = n;
    }
    if let Some(lr) = a.lr {
        cfg.learning_rate = lr;
    }
    if let Some(opt) = a.optimizer {
        cfg.optimizer = match opt {
            OptimizerArg::Lm => Optimizer::Lm,
            OptimizerArg::Adam => Optimizer::FirstOrder,
        };
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_training(role: &str, hidden: &[usize], params: usize, report: &TrainReport) {
    println!(
        "trained {role} {hidden:?} ({params} params) in {:.1}s: {} epochs, {:?}, test mse {:.3e}",
        report.wall_time_s, report.epochs, report.stop_reason, report.test_mse
    );
}

fn print_errors(stats: &ErrorStats) {
    println!(
        "test error mean {:.4} mm ({:.3}% width), max {:.4} mm ({:.3}% width)",
        stats.mean, stats.mean_pct, stats.max, stats.max_pct
    );
}

/// Position error of direct IK on held-out samples, measured through the
/// analytic model.
fn direct_errors(spec: &RobotSpec, model: &softik::baselines::DirectIk, test: &Dataset, width: f64) -> Result<ErrorStats> {
    let distances = test
        .samples
        .iter()
        .map(|s| {
            let c = solve_direct(model, s.p_s.as_slice())?;
            let p = fk_virtual(spec, &c)?;
            Ok((p.into_inner() - s.p_s.clone().into_inner()).norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ErrorStats::from_distances(&distances, width)?)
}

fn train(cfg: &AppConfig, a: TrainArgs) -> Result<()> {
    let data_path = cfg.require_dataset(a.data.as_deref())?;
    let dataset = read_dataset(&data_path).with_context(|| format!("reading {}", data_path.display()))?;
    let spec = RobotSpec::by_id(dataset.meta.robot);
    dataset.meta.check_against(&spec)?;
    if let Some(id) = cfg.robot {
        if id != spec.id {
            bail!("{} holds {} data but the config names {id}", data_path.display(), spec.id);
        }
    }
    let out = a
        .out
        .clone()
        .or_else(|| cfg.models.clone())
        .context("no model directory: pass --out or set `models` in the config")?;
    prepare_model_dir(&out, &spec)?;
    let ws = workspace_stats(&dataset.positions())?;
    store::save_workspace(&out, &ws)?;

    let recipes = PipelineConfig::for_robot(spec.id);
    let (train_set, test_set) = split(&dataset, recipes.split_ratio, a.split_seed)?;
    let (base_hidden, base_cfg) = match a.role {
        Role::Fk => (recipes.fk.hidden, recipes.fk.train),
        Role::Jac => (recipes.jac.hidden, recipes.jac.train),
        Role::Direct => {
            let d = recipes.direct.expect("every robot has a direct recipe");
            (d.hidden, d.train)
        }
        Role::S2r => (Vec::new(), s2r_train_config(4)),
    };
    let train_cfg = train_overrides(base_cfg, &a)?;
    let recipe = NetRecipe {
        hidden: a.hidden.clone().unwrap_or(base_hidden),
        train: train_cfg.clone(),
    };
    let meta = |role: &str, pct: Option<f64>| ModelMeta {
        role: role.into(),
        robot: spec.id.to_string(),
        seed: train_cfg.seed,
        config_digest: train_cfg.digest(),
        workspace_width: Some(ws.width),
        test_error_pct_width: pct,
    };
    let save = |role: &str, net: &Mlp, train: &TrainReport, n_train: usize, n_test: usize, stats: serde_json::Value| -> Result<()> {
        let report = NetReport {
            role,
            robot: spec.id.to_string(),
            hidden: net.hidden_sizes(),
            params: net.param_count(),
            train_samples: n_train,
            test_samples: n_test,
            train,
            test_error: stats,
        };
        store::save_report(&out, role, &report)
    };

    let (file, role) = match a.role {
        Role::Fk => {
            let (net, tr, stats) = train_fk(&train_set, &test_set, &recipe, ws.width)?;
            print_training("fk", &net.hidden_sizes(), net.param_count(), &tr);
            print_errors(&stats);
            store::save_net(&out, FK_FILE, &net, &meta("fk", Some(stats.mean_pct)))?;
            save("fk", &net, &tr, train_set.len(), test_set.len(), serde_json::to_value(stats)?)?;
            (FK_FILE, "fk")
        }
        Role::Jac => {
            let (net, tr, stats) = train_jac(&train_set, &test_set, &recipe)?;
            print_training("jac", &net.hidden_sizes(), net.param_count(), &tr);
            println!(
                "relative jacobian error median {:.4}, p90 {:.4}, max {:.4}",
                stats.median_rel, stats.p90_rel, stats.max_rel
            );
            store::save_net(&out, JAC_FILE, &net, &meta("jac", None))?;
            save("jac", &net, &tr, train_set.len(), test_set.len(), serde_json::to_value(stats)?)?;
            (JAC_FILE, "jac")
        }
        Role::S2r => {
            let samples = a
                .twin_samples
                .unwrap_or_else(|| recipes.s2r.as_ref().map_or(343, |s| s.samples));
            let twin_seed = a.twin_seed.unwrap_or(cfg.twin_seed);
            let twin = RealTwin::seeded(&spec, twin_seed)?;
            let pairs = twin_sample(&spec, &twin, samples, twin_seed)?;
            let (net, tr, stats) = train_s2r(&pairs, a.eta, &train_cfg, ws.width)?;
            println!("{} twin samples (seed {twin_seed}) -> {} hidden neurons", pairs.len(), net.hidden_sizes()[0]);
            print_training("s2r", &net.hidden_sizes(), net.param_count(), &tr);
            print_errors(&stats);
            store::save_twin(&out, &twin)?;
            store::save_net(&out, S2R_FILE, &net, &meta("s2r", Some(stats.mean_pct)))?;
            let n_train = (0.7 * pairs.len() as f64).floor() as usize;
            save("s2r", &net, &tr, n_train, pairs.len() - n_train, serde_json::to_value(stats)?)?;
            (S2R_FILE, "s2r")
        }
        Role::Direct => {
            let (model, tr) = train_direct_ik(&spec, &train_set, &test_set, &recipe.hidden, &train_cfg)?;
            let stats = direct_errors(&spec, &model, &test_set, ws.width)?;
            print_training("direct", &model.net.hidden_sizes(), model.net.param_count(), &tr);
            print_errors(&stats);
            store::save_net(&out, DIRECT_FILE, &model.net, &meta("direct", Some(stats.mean_pct)))?;
            save("direct", &model.net, &tr, train_set.len(), test_set.len(), serde_json::to_value(stats)?)?;
            (DIRECT_FILE, "direct")
        }
    };
    println!("wrote {} and {role}_report.json", out.join(file).display());
    Ok(())
}

fn build(cfg: &AppConfig, a: BuildArgs) -> Result<()> {
    let spec = RobotSpec::by_id(a.robot);
    let mut pc = PipelineConfig::for_robot(spec.id).scaled_epochs(a.epoch_scale);
    if let Some(n) = a.segments {
        pc.segments = n;
    }
    pc.twin_seed = cfg.twin_seed;
    let art = build_robot(&spec, &pc)?;
    prepare_model_dir(&a.out, &spec)?;
    write_dataset(&a.out.join("dataset.txt"), &art.dataset)?;
    let meta = ModelMeta {
        seed: pc.fk.train.seed,
        config_digest: pc.fk.train.digest(),
        ..ModelMeta::default()
    };
    art.bundle.save(&a.out, &meta)?;
    if let (Some(direct), Some(recipe)) = (&art.direct, &pc.direct) {
        let meta = ModelMeta {
            role: "direct".into(),
            robot: spec.id.to_string(),
            seed: recipe.train.seed,
            config_digest: recipe.train.digest(),
            workspace_width: Some(art.workspace.width),
            test_error_pct_width: None,
        };
        store::save_net(&a.out, DIRECT_FILE, &direct.net, &meta)?;
    }
    store::save_twin(&a.out, &art.twin)?;
    store::save_workspace(&a.out, &art.workspace)?;
    let summary = serde_json::json!({
        "robot": spec.id,
        "samples": art.dataset.len(),
        "pipeline": pc,
        "nets": art.nets,
        "fk_test_error": art.fk_stats,
        "jac_test_error": art.jac_stats,
        "s2r_test_error": art.s2r_stats,
    });
    fs::write(a.out.join("build_report.json"), serde_json::to_string_pretty(&summary)?)?;

    println!("{} samples", art.dataset.len());
    print_workspace(&art.workspace);
    for net in &art.nets {
        print_training(&net.role, &net.hidden, net.params, &net.report);
    }
    println!("fk test error mean {:.3}% width", art.fk_stats.mean_pct);
    if let Some(s) = &art.s2r_stats {
        println!("s2r test error mean {:.3}% width", s.mean_pct);
    }
    println!("models written to {}", a.out.display());
    Ok(())
}

fn load_models(cfg: &AppConfig, m: &ModelArgs) -> Result<(Loaded, SolverConfig)> {
    let dir = cfg.require_models(m.models.as_deref())?;
    let loaded = store::load(&dir, cfg.twin_seed)?;
    if let Some(id) = cfg.robot {
        if id != loaded.bundle.spec.id {
            bail!("{} holds {} models but the config names {id}", dir.display(), loaded.bundle.spec.id);
        }
    }
    let solver = cfg.solver.resolve(loaded.bundle.width)?;
    Ok((loaded, solver))
}

fn want_s2r(bundle: &ModelBundle, no_s2r: bool) -> bool {
    if !no_s2r && !bundle.has_s2r() {
        log::warn!("no sim-to-real network in the bundle; using the simulation model alone");
    }
    !no_s2r && bundle.has_s2r()
}

fn solve(cfg: &AppConfig, a: SolveArgs) -> Result<()> {
    let (loaded, solver) = load_models(cfg, &a.models)?;
    let bundle = &loaded.bundle;
    let view = bundle.view(want_s2r(bundle, a.no_s2r))?;
    let c0 = match a.warm_start {
        Some(c) => {
            bundle.spec.check_actuation(&c)?;
            c
        }
        None => {
            if a.target.len() != bundle.spec.n {
                bail!("target has {} coordinates, robot needs {}", a.target.len(), bundle.spec.n);
            }
            approach(&view, &a.target, &solver)?
        }
    };
    let r = solve_waypoint(&view, &a.target, &c0, &solver)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
        return Ok(());
    }
    println!("status {:?} after {} iterations", r.status, r.iterations);
    println!("c = {}", fmt_vec(&r.c));
    println!("p_pred = {}", fmt_vec(&r.p_pred));
    println!(
        "residual {:.5} mm ({:.4}% width)",
        r.residual,
        100.0 * r.residual / bundle.width
    );
    Ok(())
}

fn builtin_path(loaded: &Loaded, name: &str, count: usize) -> Result<(String, Vec<Vec<f64>>)> {
    let kind: TrajectoryKind = name.parse()?;
    if kind == TrajectoryKind::Custom {
        bail!("custom paths come from --waypoints");
    }
    let spec = TrajectorySpec::preset(kind, &loaded.bundle.spec, &loaded.workspace, count)?;
    Ok((kind.name().to_string(), make_trajectory(&spec, &loaded.workspace)?))
}

fn print_follow(r: &FollowReport) {
    println!(
        "{} ({}{}, vs {}): {} waypoints, {} converged, {} stalled, {} at max iterations",
        r.label,
        r.method,
        if r.use_s2r { " + s2r" } else { "" },
        r.ground_truth,
        r.waypoints.len(),
        r.converged,
        r.stalled,
        r.max_iters
    );
    println!(
        "  error mean {:.4} mm ({:.3}% width), max {:.4} mm ({:.3}% width)",
        r.mean_error_mm, r.mean_error_pct, r.max_error_mm, r.max_error_pct
    );
    println!(
        "  max actuation jump {:.4} ({:.2}% range), {:.3} ms/waypoint",
        r.max_jump, r.max_jump_pct_range, r.mean_time_ms
    );
    if r.method != "direct" {
        let hist: Vec<String> = r
            .iteration_histogram
            .iter()
            .enumerate()
            .filter(|(_, n)| **n > 0)
            .map(|(k, n)| format!("{k}:{n}"))
            .collect();
        println!("  iterations {}", hist.join(" "));
    }
}

fn follow(cfg: &AppConfig, a: FollowArgs) -> Result<()> {
    let (loaded, solver) = load_models(cfg, &a.models)?;
    let bundle = &loaded.bundle;
    let (label, waypoints) = match &a.waypoints {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let points = parse_waypoints(&text, bundle.spec.n).with_context(|| format!("in {}", path.display()))?;
            let label = path.file_stem().map_or("waypoints".into(), |s| s.to_string_lossy().into_owned());
            (label, points)
        }
        None => builtin_path(&loaded, a.trajectory.as_deref().unwrap_or("flower"), a.count)?,
    };
    let truth = match a.truth {
        Truth::Virtual => GroundTruth::Virtual,
        Truth::Twin => GroundTruth::Twin(loaded.twin.clone()),
    };
    let report = match a.method {
        Method::Jacobian => {
            let use_s2r = want_s2r(bundle, a.no_s2r);
            run_follow_experiment(bundle, &label, &waypoints, use_s2r, &truth, &solver)?
        }
        Method::FkGradient => {
            let use_s2r = want_s2r(bundle, a.no_s2r);
            let s2r = if use_s2r { bundle.net_s2r.as_ref() } else { None };
            let model = FkGradientModel::new(&bundle.spec, &bundle.net_fk, s2r);
            follow_with(&model, "fk_gradient", &label, &waypoints, use_s2r, &truth, bundle.width, &solver)?
        }
        Method::Direct => {
            let direct = loaded.direct.as_ref().context("bundle has no direct.json; train it with `train direct`")?;
            run_direct_follow(direct, &label, &waypoints, &truth, bundle.width)?
        }
    };
    print_follow(&report);
    if let Some(path) = &a.save_waypoints {
        fs::write(path, format_waypoints(&waypoints)?)?;
    }
    if let Some(path) = &a.out {
        let mut results = ExperimentResults::new(&bundle.spec.id.to_string(), bundle.width);
        results.follow.push(report);
        results.save(path)?;
        println!("results written to {}", path.display());
    }
    Ok(())
}

fn without_s2r(bundle: &ModelBundle) -> Result<ModelBundle> {
    Ok(ModelBundle::new(
        bundle.spec.clone(),
        bundle.net_fk.clone(),
        bundle.net_jac.clone(),
        None,
        bundle.width,
    )?)
}

fn bench_cmd(cfg: &AppConfig, a: BenchArgs) -> Result<()> {
    let (loaded, solver) = load_models(cfg, &a.models)?;
    let (_, waypoints) = builtin_path(&loaded, &a.trajectory, a.count)?;
    let stripped;
    let bundle = if a.no_s2r {
        stripped = without_s2r(&loaded.bundle)?;
        &stripped
    } else {
        &loaded.bundle
    };
    let report = bench(bundle, loaded.direct.as_ref(), &waypoints, &solver, &a.hb)?;
    println!("{:<12} {:>12} {:>14} {:>10} {:>10}", "method", "ms/waypoint", "waypoints/s", "mean it", "converged");
    for m in &report.methods {
        println!(
            "{:<12} {:>12.4} {:>14.1} {:>10.2} {:>9.1}%",
            m.method,
            m.per_waypoint_ms,
            m.waypoints_per_sec,
            m.mean_iterations,
            100.0 * m.converged_fraction
        );
    }
    println!("{:<6} {:>14} {:>10} {:>16}", "hb", "hidden", "params", "us/iteration");
    for s in &report.scaling {
        println!("{:<6} {:>14} {:>10} {:>16.2}", s.hb, format!("{:?}", s.hidden), s.params, s.per_iteration_us);
    }
    Ok(())
}

fn experiment(cfg: &AppConfig, a: ExperimentArgs) -> Result<()> {
    let (loaded, solver) = load_models(cfg, &a.models)?;
    let bundle = &loaded.bundle;
    let spec = &bundle.spec;
    let s2r = bundle.has_s2r();
    let twin = GroundTruth::Twin(loaded.twin.clone());
    let mut results = ExperimentResults::new(&spec.id.to_string(), bundle.width);

    for name in ["flower", "box"] {
        let (label, path) = builtin_path(&loaded, name, a.count)?;
        results
            .follow
            .push(run_follow_experiment(bundle, &label, &path, false, &GroundTruth::Virtual, &solver)?);
        results.follow.push(run_follow_experiment(bundle, &label, &path, false, &twin, &solver)?);
        if s2r {
            results.follow.push(run_follow_experiment(bundle, &label, &path, true, &twin, &solver)?);
        }
    }
    let (label, eight) = builtin_path(&loaded, "figure8", a.count)?;
    results.follow.push(run_follow_experiment(bundle, &label, &eight, s2r, &twin, &solver)?);
    if let Some(direct) = &loaded.direct {
        results.follow.push(run_direct_follow(direct, &label, &eight, &twin, bundle.width)?);
    }
    let positioning = PositioningConfig {
        use_s2r: s2r,
        solver: solver.clone(),
        ..PositioningConfig::new(bundle.width)
    };
    let targets = positioning_targets(spec, bundle.width);
    results.positioning = Some(run_positioning_experiment(bundle, &targets, &twin, &positioning)?);
    results.bench = Some(bench(bundle, loaded.direct.as_ref(), &eight, &solver, &[32, 64, 128])?);
    if !a.s2r_curve.is_empty() {
        let cmp = compare_sim_arms(
            spec,
            &loaded.twin,
            &a.s2r_curve,
            0.25,
            &s2r_train_config(4),
            bundle.width,
            1.0,
        )?;
        println!(
            "twin samples for 1% width: full model {:?}, simplified model {:?}",
            cmp.full_needs, cmp.simplified_needs
        );
        results.s2r_curves.push(CurveSeries {
            arm: SimArm::Full,
            points: cmp.full,
        });
        results.s2r_curves.push(CurveSeries {
            arm: SimArm::Simplified,
            points: cmp.simplified,
        });
    }

    for r in &results.follow {
        print_follow(r);
    }
    if let Some(p) = &results.positioning {
        println!("positioning: {} solves, worst error {:.3}% width", p.solves, p.max_error_pct);
    }
    if let Some(b) = &results.bench {
        if let Some(m) = b.method("jacobian") {
            println!("throughput {:.0} waypoints/s", m.waypoints_per_sec);
        }
    }
    results.save(&a.out)?;
    println!("results written to {}", a.out.display());
    if let Some(dir) = &a.plot_dir {
        let files = export_plot_data(&results, dir)?;
        println!("{} plot files written to {}", files.len(), dir.display());
    }
    Ok(())
}

fn export_plot(a: ExportPlotArgs) -> Result<()> {
    let results = ExperimentResults::load(&a.results)?;
    for path in export_plot_data(&results, &a.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn serve(cfg: &AppConfig, a: ServeArgs) -> Result<()> {
    let model = match a.models.models.as_deref().or(cfg.models.as_deref()) {
        Some(dir) => {
            let (loaded, solver) = load_models(cfg, &ModelArgs {
                models: Some(dir.to_path_buf()),
            })?;
            log::info!(
                "loaded {} bundle from {} (s2r: {})",
                loaded.bundle.spec.id,
                dir.display(),
                loaded.bundle.has_s2r()
            );
            Some(LoadedModel {
                bundle: loaded.bundle,
                workspace: loaded.workspace,
                solver,
            })
        }
        None => {
            log::warn!("no model directory configured; model endpoints will answer 409");
            None
        }
    };
    let bind: IpAddr = a
        .bind
        .as_deref()
        .unwrap_or(&cfg.service.bind)
        .parse()
        .context("bind address must be an IP address")?;
    let addr = SocketAddr::new(bind, a.port.unwrap_or(cfg.service.port));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(service::serve(Arc::new(AppState::new(model)), addr))
}
