//! Scenario files: flat `key = value` lines covering the world, start pose,
//! seed and every explorer parameter.
//!
//! Angles are written in degrees (keys ending in `_deg`). `#` starts a
//! comment. Unknown keys are errors, so typos do not silently fall back to
//! defaults. `world` and `output_dir` are resolved against the directory
//! holding the file.

use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};

use crate::error::{Error, Result};
use crate::explorer::ExplorerConfig;
use crate::geometry::ViewPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub world: PathBuf,
    /// Cell edge length in meters.
    pub resolution: f64,
    pub start: ViewPoint,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub explorer: ExplorerConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            world: PathBuf::from("world.txt"),
            resolution: 0.3,
            start: ViewPoint::new(1.05, 1.05, 0.0),
            seed: 0,
            output_dir: PathBuf::from("out"),
            explorer: ExplorerConfig::default(),
        }
    }
}

/// Every key, in the order `to_text` writes them.
pub const KEYS: &[&str] = &[
    "world",
    "resolution",
    "start_x",
    "start_y",
    "start_theta_deg",
    "seed",
    "output_dir",
    "sensor_range",
    "sensor_fov_deg",
    "beam_aperture_deg",
    "angular_resolution_deg",
    "range_eps",
    "range_noise",
    "l_min",
    "l_max",
    "bd_weight",
    "bd_spread",
    "alpha",
    "w_x",
    "w_y",
    "w_theta",
    "optimize",
    "step_size",
    "max_iterations",
    "tolerance",
    "shrink",
    "max_translation",
    "max_rotation_deg",
    "collision_check",
    "goal_lambda_distance",
    "goal_lambda_obstacles",
    "goal_box",
    "goal_samples",
    "goal_min_distance",
    "rrt_iterations",
    "rrt_steer_step",
    "rrt_goal_bias",
    "rrt_shortcuts",
    "rrt_vertex_spacing",
    "rrt_inflation",
    "boundary_threshold",
    "min_boundary_cells",
    "gain_window",
    "max_episodes",
    "retry_budget",
];

fn num<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse {value:?}"))
}

fn flag(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got {value:?}")),
    }
}

fn deg(value: &str) -> std::result::Result<f64, String> {
    num::<f64>(value).map(f64::to_radians)
}

impl ScenarioConfig {
    /// Reads a scenario file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| FsPath::new(""));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &FsPath) -> Result<Self> {
        let mut config = Self::default();
        let mut world_seen = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            config
                .apply(key, value.trim())
                .map_err(|message| Error::Parse {
                    line: n + 1,
                    message: format!("`{key}`: {message}"),
                })?;
            world_seen |= key == "world";
        }
        if !world_seen {
            return Err(Error::Parse {
                line: 0,
                message: "missing `world`".into(),
            });
        }
        config.world = base.join(&config.world);
        config.output_dir = base.join(&config.output_dir);
        config.validate()?;
        Ok(config)
    }

    /// Override a single key, as a command-line `--set key=value` does.
    /// Paths are taken as given.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.apply(key, value.trim())
            .map_err(|message| Error::Config {
                key: key.to_string(),
                message,
            })?;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::param("resolution", "must be positive"));
        }
        if ![self.start.x, self.start.y, self.start.theta]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::param("start", "must be finite"));
        }
        self.explorer.validate()
    }

    fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let e = &mut self.explorer;
        match key {
            "world" => self.world = PathBuf::from(value),
            "resolution" => self.resolution = num(value)?,
            "start_x" => self.start.x = num(value)?,
            "start_y" => self.start.y = num(value)?,
            "start_theta_deg" => self.start.theta = crate::geometry::wrap_angle(deg(value)?),
            "seed" => self.seed = num(value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "sensor_range" => e.sensor.max_range = num(value)?,
            "sensor_fov_deg" => e.sensor.fov = deg(value)?,
            "beam_aperture_deg" => e.sensor.beam_aperture = deg(value)?,
            "angular_resolution_deg" => e.sensor.angular_resolution = deg(value)?,
            "range_eps" => e.sensor.range_noise_eps = num(value)?,
            "range_noise" => e.range_noise = num(value)?,
            "l_min" => e.l_min = num(value)?,
            "l_max" => e.l_max = num(value)?,
            "bd_weight" => e.boundariness.weight = num(value)?,
            "bd_spread" => e.boundariness.spread = num(value)?,
            "alpha" => e.objective.alpha = num(value)?,
            "w_x" => e.objective.weights[0] = num(value)?,
            "w_y" => e.objective.weights[1] = num(value)?,
            "w_theta" => e.objective.weights[2] = num(value)?,
            "optimize" => e.optimize = flag(value)?,
            "step_size" => e.optimizer.step_size = num(value)?,
            "max_iterations" => e.optimizer.max_iterations = num(value)?,
            "tolerance" => e.optimizer.tolerance = num(value)?,
            "shrink" => e.optimizer.shrink = num(value)?,
            "max_translation" => e.optimizer.max_translation = num(value)?,
            "max_rotation_deg" => e.optimizer.max_rotation = deg(value)?,
            "collision_check" => e.optimizer.collision_check = flag(value)?,
            "goal_lambda_distance" => e.goal.lambda_distance = num(value)?,
            "goal_lambda_obstacles" => e.goal.lambda_obstacles = num(value)?,
            "goal_box" => e.goal.obstacle_box = num(value)?,
            "goal_samples" => e.goal.samples = num(value)?,
            "goal_min_distance" => e.goal.min_distance = num(value)?,
            "rrt_iterations" => e.rrt.max_iterations = num(value)?,
            "rrt_steer_step" => e.rrt.steer_step = num(value)?,
            "rrt_goal_bias" => e.rrt.goal_bias = num(value)?,
            "rrt_shortcuts" => e.rrt.shortcut_attempts = num(value)?,
            "rrt_vertex_spacing" => e.rrt.vertex_spacing = num(value)?,
            "rrt_inflation" => e.rrt.inflation = num(value)?,
            "boundary_threshold" => e.termination.boundary_threshold = num(value)?,
            "min_boundary_cells" => e.termination.min_boundary_cells = num(value)?,
            "gain_window" => e.termination.gain_window = num(value)?,
            "max_episodes" => e.termination.max_episodes = num(value)?,
            "retry_budget" => e.retry_budget = num(value)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> String {
        let e = &self.explorer;
        let d = |r: f64| r.to_degrees().to_string();
        match key {
            "world" => self.world.display().to_string(),
            "resolution" => self.resolution.to_string(),
            "start_x" => self.start.x.to_string(),
            "start_y" => self.start.y.to_string(),
            "start_theta_deg" => d(self.start.theta),
            "seed" => self.seed.to_string(),
            "output_dir" => self.output_dir.display().to_string(),
            "sensor_range" => e.sensor.max_range.to_string(),
            "sensor_fov_deg" => d(e.sensor.fov),
            "beam_aperture_deg" => d(e.sensor.beam_aperture),
            "angular_resolution_deg" => d(e.sensor.angular_resolution),
            "range_eps" => e.sensor.range_noise_eps.to_string(),
            "range_noise" => e.range_noise.to_string(),
            "l_min" => e.l_min.to_string(),
            "l_max" => e.l_max.to_string(),
            "bd_weight" => e.boundariness.weight.to_string(),
            "bd_spread" => e.boundariness.spread.to_string(),
            "alpha" => e.objective.alpha.to_string(),
            "w_x" => e.objective.weights[0].to_string(),
            "w_y" => e.objective.weights[1].to_string(),
            "w_theta" => e.objective.weights[2].to_string(),
            "optimize" => e.optimize.to_string(),
            "step_size" => e.optimizer.step_size.to_string(),
            "max_iterations" => e.optimizer.max_iterations.to_string(),
            "tolerance" => e.optimizer.tolerance.to_string(),
            "shrink" => e.optimizer.shrink.to_string(),
            "max_translation" => e.optimizer.max_translation.to_string(),
            "max_rotation_deg" => d(e.optimizer.max_rotation),
            "collision_check" => e.optimizer.collision_check.to_string(),
            "goal_lambda_distance" => e.goal.lambda_distance.to_string(),
            "goal_lambda_obstacles" => e.goal.lambda_obstacles.to_string(),
            "goal_box" => e.goal.obstacle_box.to_string(),
            "goal_samples" => e.goal.samples.to_string(),
            "goal_min_distance" => e.goal.min_distance.to_string(),
            "rrt_iterations" => e.rrt.max_iterations.to_string(),
            "rrt_steer_step" => e.rrt.steer_step.to_string(),
            "rrt_goal_bias" => e.rrt.goal_bias.to_string(),
            "rrt_shortcuts" => e.rrt.shortcut_attempts.to_string(),
            "rrt_vertex_spacing" => e.rrt.vertex_spacing.to_string(),
            "rrt_inflation" => e.rrt.inflation.to_string(),
            "boundary_threshold" => e.termination.boundary_threshold.to_string(),
            "min_boundary_cells" => e.termination.min_boundary_cells.to_string(),
            "gain_window" => e.termination.gain_window.to_string(),
            "max_episodes" => e.termination.max_episodes.to_string(),
            "retry_budget" => e.retry_budget.to_string(),
            _ => unreachable!("key list and printer out of sync: {key}"),
        }
    }

    /// The full configuration in the file format, one key per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.value_of(key));
        }
        out
    }
}
