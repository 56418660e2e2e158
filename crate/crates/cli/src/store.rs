//! Model directory layout: the core bundle files plus `direct.json`,
//! `twin.toml`, `workspace.json` and one `<role>_report.json` per trained net.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use softik::baselines::DirectIk;
use softik::ik::ModelBundle;
use softik::neural::{load_model, save_model, Mlp, ModelMeta};
use softik::robot::{workspace_of, RealTwin, RobotSpec, WorkspaceStats};

pub const DIRECT_FILE: &str = "direct.json";
pub const TWIN_FILE: &str = "twin.toml";
pub const WORKSPACE_FILE: &str = "workspace.json";

/// Grid resolution for the workspace outline when `workspace.json` is absent.
const FALLBACK_SEGMENTS: usize = 16;

pub struct Loaded {
    pub bundle: ModelBundle,
    pub workspace: WorkspaceStats,
    pub direct: Option<DirectIk>,
    pub twin: RealTwin,
}

pub fn load(dir: &Path, twin_seed: u64) -> Result<Loaded> {
    let bundle = ModelBundle::load(dir).with_context(|| format!("loading bundle from {}", dir.display()))?;
    let workspace = load_workspace(dir, &bundle)?;
    let direct_path = dir.join(DIRECT_FILE);
    let direct = if direct_path.is_file() {
        let (net, _) = load_model(&direct_path)?;
        Some(DirectIk::new(bundle.spec.clone(), net)?)
    } else {
        None
    };
    let twin = load_twin(dir, &bundle.spec, twin_seed)?;
    Ok(Loaded {
        bundle,
        workspace,
        direct,
        twin,
    })
}

/// The saved workspace, else a grid estimate whose width is forced to the
/// bundle's so every report uses one number.
pub fn load_workspace(dir: &Path, bundle: &ModelBundle) -> Result<WorkspaceStats> {
    let path = dir.join(WORKSPACE_FILE);
    if path.is_file() {
        let text = fs::read_to_string(&path)?;
        return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
    }
    let mut ws = workspace_of(&bundle.spec, FALLBACK_SEGMENTS)?;
    ws.width = bundle.width;
    Ok(ws)
}

pub fn load_twin(dir: &Path, spec: &RobotSpec, seed: u64) -> Result<RealTwin> {
    let path = dir.join(TWIN_FILE);
    if path.is_file() {
        return Ok(RealTwin::from_toml(&fs::read_to_string(&path)?)?);
    }
    Ok(RealTwin::seeded(spec, seed)?)
}

pub fn save_workspace(dir: &Path, ws: &WorkspaceStats) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(WORKSPACE_FILE), serde_json::to_string_pretty(ws)?)?;
    Ok(())
}

pub fn save_twin(dir: &Path, twin: &RealTwin) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(TWIN_FILE), twin.to_toml()?)?;
    Ok(())
}

pub fn save_net(dir: &Path, file: &str, net: &Mlp, meta: &ModelMeta) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_model(&dir.join(file), net, meta)?;
    Ok(())
}

pub fn save_report<T: Serialize>(dir: &Path, role: &str, report: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{role}_report.json")), serde_json::to_string_pretty(report)?)?;
    Ok(())
}
