//! Trajectories, training pipeline, experiments and benchmarks.

mod bench;
mod experiment;
mod pipeline;
mod results;
mod trajectory;

pub use bench::{bench, iteration_cost, BenchReport, MethodTiming, ScalingPoint};
pub use experiment::{
    approach, follow_with, max_consecutive_jump, positioning_targets, run_direct_follow, run_follow_experiment,
    run_positioning_experiment, FollowReport, GroundTruth, PositioningConfig, PositioningReport, TargetOutcome,
    WaypointRecord,
};
pub use pipeline::{
    build_robot, compare_sim_arms, jacobian_stats, s2r_sample_curve, s2r_train_config, train_fk, train_jac, train_s2r,
    ArmComparison, CurvePoint, JacobianStats, NetRecipe, NetSummary, PipelineConfig, RobotArtifacts, S2rRecipe, SimArm,
};
pub use results::{export_plot_data, CurveSeries, ExperimentResults, RESULTS_FORMAT, RESULTS_VERSION};
pub use trajectory::{make_trajectory, resample, resample_equal_chord, scaled_aabb, Plane, TrajectoryKind, TrajectorySpec};
