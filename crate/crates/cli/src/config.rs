//! Application config file.
//!
//! ```toml
//! robot = "planar_finger"        # three_chamber | planar_finger
//! dataset = "data/finger.txt"    # grid dataset for `train`
//! models = "models/finger"       # bundle directory for solve/follow/serve
//! twin_seed = 7
//!
//! [solver]                       # every key optional
//! epsilon_mm = 0.27              # default 0.1% of workspace width
//! max_iters = 50
//! step_rule = "barzilai_borwein" # or "cauchy"
//!
//! [service]
//! bind = "127.0.0.1"
//! port = 8080
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use softik::ik::{SolverConfig, StepRule, FK_FILE};
use softik::robot::RobotId;

pub const CONFIG_ENV: &str = "SOFTIK_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub robot: Option<RobotId>,
    pub dataset: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub twin_seed: u64,
    pub solver: SolverSettings,
    pub service: ServiceSettings,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            robot: None,
            dataset: None,
            models: None,
            twin_seed: 7,
            solver: SolverSettings::default(),
            service: ServiceSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub epsilon_mm: Option<f64>,
    pub max_iters: Option<usize>,
    pub step_rule: Option<StepRule>,
}

impl SolverSettings {
    pub fn resolve(&self, width: f64) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::for_width(width);
        if let Some(eps) = self.epsilon_mm {
            cfg.epsilon = eps;
        }
        if let Some(n) = self.max_iters {
            cfg.max_iters = n;
        }
        if let Some(rule) = self.step_rule {
            cfg.step_rule = rule;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub bind: String,
    pub port: u16,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.dataset, &mut cfg.models].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// `--config` (which also reads `$SOFTIK_CONFIG`), else defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// The model directory, which must exist and hold a forward model.
    pub fn require_models(&self, flag: Option<&Path>) -> Result<PathBuf> {
        let dir = flag
            .map(Path::to_path_buf)
            .or_else(|| self.models.clone())
            .context("no model directory: pass --models or set `models` in the config")?;
        if !dir.join(FK_FILE).is_file() {
            bail!("{} does not contain a trained bundle ({FK_FILE} missing)", dir.display());
        }
        Ok(dir)
    }

    pub fn require_dataset(&self, flag: Option<&Path>) -> Result<PathBuf> {
        let path = flag
            .map(Path::to_path_buf)
            .or_else(|| self.dataset.clone())
            .context("no dataset: pass --data or set `dataset` in the config")?;
        if !path.is_file() {
            bail!("dataset {} not found", path.display());
        }
        Ok(path)
    }
}
