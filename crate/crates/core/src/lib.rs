//! Frontier-driven exploration with gradient-refined paths on 2-D occupancy
//! grids.

pub mod autodiff;
pub mod boundariness;
pub mod config;
pub mod error;
pub mod explorer;
pub mod free_space;
pub mod geometry;
pub mod grid_map;
pub mod info_gain;
pub mod map_io;
pub mod optimizer;
pub mod planner;
pub mod rng;
pub mod world_sim;

pub use boundariness::{cell_boundariness, BoundarinessMap, BoundarinessParams};
pub use config::ScenarioConfig;
pub use error::{Error, Result};
pub use explorer::{
    coverage_metrics, run_exploration, run_exploration_with, CoverageMetrics, EpisodeRecord,
    ExplorationOutcome, ExplorationReport, ExplorerConfig, Status, TerminationCriteria,
};
pub use free_space::FreeSpace;
pub use geometry::{wrap_angle, Cell, GridGeometry, Path, ViewPoint};
pub use grid_map::{CellBox, InverseSensorModel, LogOddsMap};
pub use info_gain::{
    build_view_filter, path_information_gain, view_information_gain, FuzzyFilter, PathGainResult,
    SamplePoint,
};
pub use optimizer::{
    gradient_check, optimize_path, Objective, ObjectiveParams, ObjectiveTerms, OptimizationResult,
    OptimizerConfig, TraceRow,
};
pub use planner::{
    plan_rrt, score_goal_candidate, select_goal, GoalChoice, GoalScoreParams, RrtParams,
};
pub use world_sim::{cast_scan, cast_scan_noisy, Beam, Scan, SensorSpec, WorldMap};
