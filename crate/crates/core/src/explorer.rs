//! Closed exploration loop: sense, update the maps, pick a goal, plan,
//! optimize, drive the path while scanning, repeat.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::boundariness::{BoundarinessMap, BoundarinessParams};
use crate::error::{Error, Result};
use crate::free_space::FreeSpace;
use crate::geometry::{Path, ViewPoint};
use crate::grid_map::{default_l_max, default_l_min, InverseSensorModel, LogOddsMap};
use crate::info_gain::{
    path_information_gain, sample_augmentation, sample_viewpoints, SamplePoint,
};
use crate::optimizer::{optimize_path, Objective, ObjectiveParams, OptimizerConfig, TraceRow};
use crate::planner::{plan_rrt, select_goal, GoalScoreParams, RrtParams};
use crate::rng::{stream, Stream};
use crate::world_sim::{cast_scan, cast_scan_noisy, SensorSpec, WorldMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationCriteria {
    /// Boundariness above which a cell counts as a boundary cell.
    pub boundary_threshold: f64,
    /// Exploration continues while more boundary cells than this remain.
    pub min_boundary_cells: usize,
    /// Number of recent path gains that must not all be zero.
    pub gain_window: usize,
    pub max_episodes: usize,
}

impl Default for TerminationCriteria {
    fn default() -> Self {
        Self {
            boundary_threshold: 0.6,
            min_boundary_cells: 10,
            gain_window: 3,
            max_episodes: 200,
        }
    }
}

impl TerminationCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(self.boundary_threshold > 0.0 && self.boundary_threshold < 1.0) {
            return Err(Error::param("boundary_threshold", "must lie in (0, 1)"));
        }
        if self.gain_window == 0 {
            return Err(Error::param("gain_window", "must be at least 1"));
        }
        Ok(())
    }
}

/// Every knob of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorerConfig {
    pub sensor: SensorSpec,
    /// Standard deviation of simulated range noise; 0 for exact ranges.
    pub range_noise: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub boundariness: BoundarinessParams,
    pub objective: ObjectiveParams,
    pub optimizer: OptimizerConfig,
    /// Run the gradient optimizer; off gives the RRT-only baseline.
    pub optimize: bool,
    pub goal: GoalScoreParams,
    pub rrt: RrtParams,
    pub termination: TerminationCriteria,
    /// Goal/plan attempts per episode before giving up.
    pub retry_budget: usize,
}

impl Default for ExplorerConfig {
    fn default() -> Self {
        let sensor = SensorSpec::default();
        Self {
            sensor,
            range_noise: 0.0,
            l_min: default_l_min(),
            l_max: default_l_max(),
            boundariness: BoundarinessParams::default(),
            objective: ObjectiveParams::default(),
            optimizer: OptimizerConfig::default(),
            optimize: true,
            goal: GoalScoreParams::default(),
            rrt: RrtParams::for_sensor(&sensor),
            termination: TerminationCriteria::default(),
            retry_budget: 5,
        }
    }
}

impl ExplorerConfig {
    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        if !(self.range_noise >= 0.0 && self.range_noise.is_finite()) {
            return Err(Error::param("range_noise", "must be non-negative"));
        }
        if !(self.l_min < 0.0 && self.l_max > 0.0) {
            return Err(Error::param("l_min", "requires l_min < 0 < l_max"));
        }
        self.boundariness.validate()?;
        self.objective.validate()?;
        self.optimizer.validate()?;
        self.goal.validate()?;
        self.rrt.validate()?;
        self.termination.validate()?;
        if self.retry_budget == 0 {
            return Err(Error::param("retry_budget", "must be at least 1"));
        }
        Ok(())
    }
}

/// Per-class classification of a belief map against the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassBreakdown {
    pub correct: f64,
    pub misclassified: f64,
    pub unknown: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageMetrics {
    /// Fraction of truly free cells believed free.
    pub coverage: f64,
    pub free: ClassBreakdown,
    pub occupied: ClassBreakdown,
    /// Fraction of all cells with zero log-odds.
    pub unknown_fraction: f64,
    pub path_length: f64,
}

pub fn coverage_metrics(odds: &LogOddsMap, world: &WorldMap, path_length: f64) -> CoverageMetrics {
    let g = world.geometry();
    let mut free = [0usize; 3];
    let mut occ = [0usize; 3];
    let mut unknown = 0usize;
    for c in g.cells() {
        let l = odds.get(c);
        let slot = if l < 0.0 {
            0
        } else if l > 0.0 {
            1
        } else {
            unknown += 1;
            2
        };
        if world.is_occupied(c) {
            // Correct for an obstacle means believed occupied.
            occ[[1, 0, 2][slot]] += 1;
        } else {
            free[slot] += 1;
        }
    }
    let split = |counts: [usize; 3]| {
        let n: usize = counts.iter().sum();
        let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        ClassBreakdown {
            correct: frac(counts[0]),
            misclassified: frac(counts[1]),
            unknown: frac(counts[2]),
        }
    };
    let free = split(free);
    CoverageMetrics {
        coverage: free.correct,
        free,
        occupied: split(occ),
        unknown_fraction: unknown as f64 / g.cell_count() as f64,
        path_length,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    /// Too few boundary cells remain.
    Complete,
    /// The recent path gains summed to zero.
    Terminated,
    IterationCap,
    PlannerExhausted,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Complete => "complete",
            Status::Terminated => "terminated",
            Status::IterationCap => "iteration-cap",
            Status::PlannerExhausted => "planner-exhausted",
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, Status::Complete | Status::Terminated)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub start: ViewPoint,
    pub goal: ViewPoint,
    pub goal_score: f64,
    pub planning_attempts: usize,
    pub vertices: usize,
    pub path_length: f64,
    pub initial_path_length: f64,
    /// Objective of the planner's path.
    pub f_initial: f64,
    /// Objective after optimization (equal to `f_initial` when disabled).
    pub f_final: f64,
    pub gain_initial: f64,
    /// Path gain entering the termination window.
    pub gain: f64,
    pub optimizer_iterations: usize,
    pub scans: usize,
    pub boundary_cells: usize,
    pub coverage: CoverageMetrics,
    pub cumulative_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub status: Status,
    pub seed: u64,
    pub optimize: bool,
    pub episodes: Vec<EpisodeRecord>,
    pub initial_coverage: CoverageMetrics,
    pub final_coverage: CoverageMetrics,
    pub cumulative_length: f64,
    pub boundary_cells: usize,
    /// Executed segments that crossed a ground-truth obstacle.
    pub collisions: usize,
}

impl ExplorationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// What an episode hands to an observer, e.g. for writing snapshots.
#[derive(Debug)]
pub struct EpisodeView<'a> {
    pub record: &'a EpisodeRecord,
    pub planned: &'a Path,
    pub executed: &'a Path,
    pub samples: &'a [SamplePoint],
    pub trace: &'a [TraceRow],
    pub odds: &'a LogOddsMap,
    pub bd: &'a BoundarinessMap,
}

/// Live state of the loop.
#[derive(Debug, Clone)]
pub struct ExplorationState {
    pub pose: ViewPoint,
    pub odds: LogOddsMap,
    pub bd: BoundarinessMap,
    /// Gains of the most recent paths, oldest first.
    pub window: VecDeque<f64>,
    pub episode: usize,
    pub path_length: f64,
}

impl ExplorationState {
    fn new(world: &WorldMap, pose: ViewPoint, config: &ExplorerConfig) -> Result<Self> {
        let geometry = *world.geometry();
        let odds = LogOddsMap::with_bounds(geometry, config.l_min, config.l_max)?;
        Ok(Self {
            pose,
            bd: BoundarinessMap::zeros(geometry, config.boundariness),
            odds,
            window: std::iter::repeat_n(1.0, config.termination.gain_window).collect(),
            episode: 0,
            path_length: 0.0,
        })
    }

    fn push_gain(&mut self, gain: f64) {
        self.window.push_back(gain);
        self.window.pop_front();
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct ExplorationOutcome {
    pub report: ExplorationReport,
    pub state: ExplorationState,
    pub traces: Vec<Vec<TraceRow>>,
    /// Paths handed to the optimizer and the paths it returned.
    pub planned: Vec<Path>,
    pub executed: Vec<Path>,
}

struct Sensing<'a> {
    world: &'a WorldMap,
    spec: SensorSpec,
    model: InverseSensorModel,
    noise: f64,
    rng: rand_chacha::ChaCha8Rng,
}

impl Sensing<'_> {
    fn scan(&mut self, pose: &ViewPoint, state: &mut ExplorationState) -> Result<()> {
        let scan = if self.noise > 0.0 {
            cast_scan_noisy(self.world, pose, &self.spec, self.noise, &mut self.rng)?
        } else {
            cast_scan(self.world, pose, &self.spec)?
        };
        if let Some(changed) = state.odds.update_with_scan(&scan, &self.model) {
            state.bd.refresh(&state.odds, changed);
        }
        Ok(())
    }
}

pub fn run_exploration(
    world: &WorldMap,
    start: ViewPoint,
    config: &ExplorerConfig,
    seed: u64,
) -> Result<ExplorationOutcome> {
    run_exploration_with(world, start, config, seed, |_| {})
}

/// [`run_exploration`] with a callback after every episode.
pub fn run_exploration_with(
    world: &WorldMap,
    start: ViewPoint,
    config: &ExplorerConfig,
    seed: u64,
    mut observe: impl FnMut(&EpisodeView<'_>),
) -> Result<ExplorationOutcome> {
    config.validate()?;
    if !world.is_free_pose(&start) {
        return Err(Error::InvalidPose {
            x: start.x,
            y: start.y,
            reason: "start is not free in the world",
        });
    }
    let spec = config.sensor;
    let resolution = world.geometry().resolution;
    let mut goal_rng = stream(seed, Stream::GoalSampling);
    let mut rrt_rng = stream(seed, Stream::Rrt);
    let mut sample_rng = stream(seed, Stream::PathSampling);
    let mut sensing = Sensing {
        world,
        spec,
        model: InverseSensorModel::new(spec),
        noise: config.range_noise,
        rng: stream(seed, Stream::RangeNoise),
    };

    let mut state = ExplorationState::new(world, start, config)?;
    sensing.scan(&start, &mut state)?;
    let initial_coverage = coverage_metrics(&state.odds, world, 0.0);

    let mut episodes = Vec::new();
    let mut traces = Vec::new();
    let mut planned_paths = Vec::new();
    let mut executed_paths = Vec::new();
    let mut collisions = 0;
    let term = config.termination;

    let status = loop {
        if state.bd.count_above(term.boundary_threshold) <= term.min_boundary_cells {
            break Status::Complete;
        }
        if state.window.iter().sum::<f64>() == 0.0 {
            break Status::Terminated;
        }
        if state.episode >= term.max_episodes {
            break Status::IterationCap;
        }
        state.episode += 1;

        let mut free = FreeSpace::from_log_odds(&state.odds, config.rrt.inflation);
        free.exempt_point(state.pose.x, state.pose.y);

        let mut plan = None;
        let mut attempts = 0;
        while attempts < config.retry_budget && plan.is_none() {
            attempts += 1;
            let Ok(choice) = select_goal(
                &state.bd,
                &state.odds,
                &free,
                &state.pose,
                &spec,
                &config.goal,
                &mut goal_rng,
            ) else {
                continue;
            };
            if let Ok(path) = plan_rrt(&state.pose, &choice.goal, &free, &config.rrt, &mut rrt_rng)
            {
                plan = Some((choice, path));
            }
        }
        let Some((choice, planned)) = plan else {
            break Status::PlannerExhausted;
        };

        let (path, samples, record_f, trace) = if planned.len() >= 2 {
            let samples = sample_augmentation(&planned, resolution, &mut sample_rng);
            let objective = Objective::new(
                &planned,
                &state.bd,
                &spec,
                config.objective,
                samples.clone(),
            )?;
            if config.optimize {
                let out = optimize_path(&planned, &objective, &config.optimizer, &free)?;
                let f = (out.initial.value, out.last.value, out.initial.gain);
                (out.path, samples, f, out.trace)
            } else {
                let t = objective.terms(planned.interior())?;
                (
                    planned.clone(),
                    samples,
                    (t.value, t.value, t.gain),
                    Vec::new(),
                )
            }
        } else {
            (planned.clone(), Vec::new(), (0.0, 0.0, 0.0), Vec::new())
        };
        let gain = if path.len() >= 2 {
            path_information_gain(&path, &state.bd, &spec, &samples).gain
        } else {
            0.0
        };
        state.push_gain(gain);

        // Drive along the path in arc-length order, scanning at every vertex
        // and every augmentation point.
        let stops = execution_order(&path, &samples);
        let mut previous = state.pose;
        let mut scans = 0;
        for pose in &stops {
            if !world.segment_is_free(&previous, pose) {
                collisions += 1;
            }
            if world.is_free_pose(pose) {
                sensing.scan(pose, &mut state)?;
                scans += 1;
            }
            previous = *pose;
        }
        state.path_length += path.length();
        state.pose = path.goal();

        let coverage = coverage_metrics(&state.odds, world, state.path_length);
        let record = EpisodeRecord {
            episode: state.episode,
            start: path.start(),
            goal: choice.goal,
            goal_score: choice.score,
            planning_attempts: attempts,
            vertices: path.len(),
            path_length: path.length(),
            initial_path_length: planned.length(),
            f_initial: record_f.0,
            f_final: record_f.1,
            gain_initial: record_f.2,
            gain,
            optimizer_iterations: trace.len().saturating_sub(1),
            scans,
            boundary_cells: state.bd.count_above(term.boundary_threshold),
            coverage,
            cumulative_length: state.path_length,
        };
        observe(&EpisodeView {
            record: &record,
            planned: &planned,
            executed: &path,
            samples: &samples,
            trace: &trace,
            odds: &state.odds,
            bd: &state.bd,
        });
        episodes.push(record);
        traces.push(trace);
        planned_paths.push(planned);
        executed_paths.push(path);
    };

    let final_coverage = coverage_metrics(&state.odds, world, state.path_length);
    let report = ExplorationReport {
        status,
        seed,
        optimize: config.optimize,
        episodes,
        initial_coverage,
        final_coverage,
        cumulative_length: state.path_length,
        boundary_cells: state.bd.count_above(term.boundary_threshold),
        collisions,
    };
    Ok(ExplorationOutcome {
        report,
        state,
        traces,
        planned: planned_paths,
        executed: executed_paths,
    })
}

/// Vertices and augmentation points of `path` sorted by position along it,
/// starting at the first vertex.
pub fn execution_order(path: &Path, samples: &[SamplePoint]) -> Vec<ViewPoint> {
    let v = path.vertices();
    let points = sample_viewpoints(path, samples);
    let interior = path.interior().len();
    let mut keyed: Vec<((usize, f64), ViewPoint)> = Vec::with_capacity(v.len() + samples.len());
    for (k, p) in v.iter().enumerate() {
        keyed.push(((k, 0.0), *p));
    }
    for (s, p) in samples.iter().zip(&points[interior..]) {
        keyed.push(((s.segment, s.t), *p));
    }
    keyed.sort_by(|a, b| a.0 .0.cmp(&b.0 .0).then(a.0 .1.total_cmp(&b.0 .1)));
    keyed.into_iter().map(|(_, p)| p).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Cell;

    #[test]
    fn untouched_map_has_no_coverage() {
        let world = WorldMap::empty_room(8, 8, 0.3).unwrap();
        let odds = LogOddsMap::new(*world.geometry());
        let m = coverage_metrics(&odds, &world, 0.0);
        assert_eq!(m.coverage, 0.0);
        assert_eq!(m.unknown_fraction, 1.0);
    }

    #[test]
    fn perfect_map_has_full_coverage() {
        let world = WorldMap::empty_room(8, 8, 0.3).unwrap();
        let mut odds = LogOddsMap::new(*world.geometry());
        for c in world.geometry().cells() {
            odds.set(c, if world.is_occupied(c) { 2.0 } else { -0.8 });
        }
        let m = coverage_metrics(&odds, &world, 1.5);
        assert_eq!(m.free.correct, 1.0);
        assert_eq!(m.occupied.correct, 1.0);
        assert_eq!(m.path_length, 1.5);
    }

    #[test]
    fn class_fractions_partition() {
        let world = WorldMap::empty_room(8, 8, 0.3).unwrap();
        let mut odds = LogOddsMap::new(*world.geometry());
        odds.set(Cell::new(0, 0), 1.0);
        odds.set(Cell::new(1, 0), -1.0);
        odds.set(Cell::new(3, 3), 1.0);
        odds.set(Cell::new(4, 3), -1.0);
        let m = coverage_metrics(&odds, &world, 0.0);
        for c in [m.free, m.occupied] {
            assert!((c.correct + c.misclassified + c.unknown - 1.0).abs() < 1e-12);
        }
        assert_eq!(m.occupied.misclassified, 1.0 / 28.0);
    }

    #[test]
    fn execution_order_follows_the_path() {
        let path = Path::new(vec![
            ViewPoint::new(0.0, 0.0, 0.0),
            ViewPoint::new(1.0, 0.0, 0.0),
            ViewPoint::new(2.0, 0.0, 0.0),
        ])
        .unwrap();
        let samples = [
            SamplePoint { segment: 1, t: 0.5 },
            SamplePoint {
                segment: 0,
                t: 0.25,
            },
        ];
        let xs: Vec<f64> = execution_order(&path, &samples)
            .iter()
            .map(|p| p.x)
            .collect();
        assert_eq!(xs, vec![0.0, 0.25, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn fully_visible_room_finishes_quickly() {
        let world = WorldMap::empty_room(6, 6, 0.3).unwrap();
        let config = ExplorerConfig {
            sensor: SensorSpec {
                max_range: 3.0,
                fov: std::f64::consts::TAU,
                ..SensorSpec::default()
            },
            ..ExplorerConfig::default()
        };
        let out = run_exploration(&world, ViewPoint::new(0.9, 0.9, 0.0), &config, 1).unwrap();
        assert!(out.report.status.is_success(), "{:?}", out.report.status);
        assert!(out.report.episodes.len() <= 1);
        assert_eq!(out.report.final_coverage.coverage, 1.0);
    }
}
