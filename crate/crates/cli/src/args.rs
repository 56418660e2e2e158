use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use softik::robot::RobotId;

use crate::config::CONFIG_ENV;

#[derive(Debug, Parser)]
#[command(name = "softik", version, about = "Learned inverse kinematics for soft robots")]
pub struct Cli {
    /// Application config file (TOML).
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the analytic model on a uniform actuation grid.
    GenData(GenDataArgs),
    /// Train one network into a model directory.
    Train(TrainArgs),
    /// Generate data and train every network with the default recipes.
    Build(BuildArgs),
    /// Solve IK for one target.
    Solve(SolveArgs),
    /// Follow a built-in trajectory or a waypoint file.
    Follow(FollowArgs),
    /// Time the solvers and the per-iteration cost against net size.
    Bench(BenchArgs),
    /// Run the experiment suite and write a results file.
    Experiment(ExperimentArgs),
    /// Write plot data from a results file.
    ExportPlot(ExportPlotArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Role {
    Fk,
    Jac,
    S2r,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Lm,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Truth {
    Virtual,
    Twin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Jacobian,
    FkGradient,
    Direct,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub robot: RobotId,
    /// Grid values per actuator.
    #[arg(long)]
    pub segments: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub role: Role,
    /// Grid dataset (defaults to `dataset` from the config).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model directory (defaults to `models` from the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Hidden layer sizes, e.g. `30,30,30`. Ignored for s2r.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// TrainConfig TOML replacing the recipe's settings.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train/test split seed.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Twin samples for s2r (default 343 for three_chamber, 620 for planar_finger).
    #[arg(long)]
    pub twin_samples: Option<usize>,
    #[arg(long)]
    pub twin_seed: Option<u64>,
    /// s2r hidden neurons per twin sample.
    #[arg(long, default_value_t = 0.25)]
    pub eta: f64,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub robot: RobotId,
    #[arg(long)]
    pub out: PathBuf,
    /// Override the grid resolution.
    #[arg(long)]
    pub segments: Option<usize>,
    /// Multiply every epoch budget.
    #[arg(long, default_value_t = 1.0)]
    pub epoch_scale: f64,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model directory (defaults to `models` from the config).
    #[arg(long)]
    pub models: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    /// Target position, comma-separated (mm).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub target: Vec<f64>,
    /// Starting actuation; a grid search when omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub warm_start: Option<Vec<f64>>,
    /// Solve against the simulation model only.
    #[arg(long)]
    pub no_s2r: bool,
    /// Print the full result as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct FollowArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    /// flower, box, figure8 or L_path.
    #[arg(long, conflicts_with = "waypoints")]
    pub trajectory: Option<String>,
    /// Waypoint file (JSON or text).
    #[arg(long)]
    pub waypoints: Option<PathBuf>,
    /// Waypoints for a built-in trajectory.
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, value_enum, default_value = "twin")]
    pub truth: Truth,
    #[arg(long, value_enum, default_value = "jacobian")]
    pub method: Method,
    #[arg(long)]
    pub no_s2r: bool,
    /// Write a results file with the per-waypoint records.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the waypoints followed, as a waypoint file.
    #[arg(long)]
    pub save_waypoints: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    #[arg(long, default_value = "figure8")]
    pub trajectory: String,
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    /// Net sizes (layers × neurons) for the per-iteration scaling data.
    #[arg(long, value_delimiter = ',', default_value = "32,64,128")]
    pub hb: Vec<usize>,
    #[arg(long)]
    pub no_s2r: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Also export plot data here.
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    /// Train s2r nets at these twin-sample counts for the full and simplified
    /// simulation arms (slow); skipped when empty.
    #[arg(long, value_delimiter = ',')]
    pub s2r_curve: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct ExportPlotArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub bind: Option<String>,
}
