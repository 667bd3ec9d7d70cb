//! Python bindings. Poses are `(x, y, theta)` tuples and paths are lists of
//! poses; maps are exposed as flat row-major lists.

use std::path::PathBuf;

use diffexplore::info_gain::sample_augmentation;
use diffexplore::map_io::{
    load_world, log_odds_from_csv, log_odds_to_csv, parse_world_ascii, world_to_ascii,
};
use diffexplore::rng::{stream, Stream};
use diffexplore::{
    cast_scan, optimize_path, path_information_gain, run_exploration, view_information_gain,
    BoundarinessMap, Cell, FreeSpace, GridGeometry, InverseSensorModel, LogOddsMap, Objective,
    Path, ScenarioConfig, ViewPoint, WorldMap,
};
use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Pose = (f64, f64, f64);

fn py_err(e: diffexplore::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pose(p: Pose) -> ViewPoint {
    ViewPoint::new(p.0, p.1, p.2)
}

fn to_path(points: Vec<Pose>) -> PyResult<Path> {
    Path::new(points.into_iter().map(pose).collect()).map_err(py_err)
}

fn from_path(path: &Path) -> Vec<Pose> {
    path.vertices()
        .iter()
        .map(|v| (v.x, v.y, v.theta))
        .collect()
}

fn cell(g: &GridGeometry, i: i64, j: i64) -> PyResult<Cell> {
    g.checked_cell(i, j).ok_or_else(|| {
        PyIndexError::new_err(format!(
            "cell ({i}, {j}) outside a {}x{} grid",
            g.width, g.height
        ))
    })
}

/// Ground-truth occupancy grid.
#[pyclass(name = "World", module = "diffexplore_py")]
struct PyWorld(WorldMap);

#[pymethods]
impl PyWorld {
    /// Parses `#` / `.` rows, top row first.
    #[staticmethod]
    fn from_ascii(text: &str, resolution: f64) -> PyResult<Self> {
        parse_world_ascii(text, resolution)
            .map(Self)
            .map_err(py_err)
    }

    /// Loads a `.txt` or `.pgm` map.
    #[staticmethod]
    fn load(path: PathBuf, resolution: f64) -> PyResult<Self> {
        load_world(&path, resolution).map(Self).map_err(py_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.geometry().width
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.geometry().height
    }

    #[getter]
    fn resolution(&self) -> f64 {
        self.0.geometry().resolution
    }

    fn is_occupied(&self, i: i64, j: i64) -> PyResult<bool> {
        Ok(self.0.is_occupied(cell(self.0.geometry(), i, j)?))
    }

    fn free_cell_count(&self) -> usize {
        self.0.free_cell_count()
    }

    fn to_ascii(&self) -> String {
        world_to_ascii(&self.0)
    }
}

/// Scenario settings; keys are the same as in scenario files.
#[pyclass(name = "Config", module = "diffexplore_py")]
#[derive(Default)]
struct PyConfig(ScenarioConfig);

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ScenarioConfig::load(&path).map(Self).map_err(py_err)
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.0.set(key, value).map_err(py_err)
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn start(&self) -> Pose {
        let s = self.0.start;
        (s.x, s.y, s.theta)
    }

    #[getter]
    fn world(&self) -> PathBuf {
        self.0.world.clone()
    }
}

/// Clamped log-odds occupancy map.
#[pyclass(name = "OccupancyMap", module = "diffexplore_py")]
struct PyOccupancyMap(LogOddsMap);

#[pymethods]
impl PyOccupancyMap {
    #[new]
    fn new(width: usize, height: usize, resolution: f64) -> PyResult<Self> {
        let g = GridGeometry::new(width, height, resolution).map_err(py_err)?;
        Ok(Self(LogOddsMap::new(g)))
    }

    /// A blank map on the world's grid.
    #[staticmethod]
    fn for_world(world: &PyWorld) -> Self {
        Self(LogOddsMap::new(*world.0.geometry()))
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        log_odds_from_csv(text).map(Self).map_err(py_err)
    }

    fn to_csv(&self) -> String {
        log_odds_to_csv(&self.0)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.geometry().width
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.geometry().height
    }

    #[getter]
    fn bounds(&self) -> (f64, f64) {
        self.0.bounds()
    }

    fn get(&self, i: i64, j: i64) -> PyResult<f64> {
        Ok(self.0.get(cell(self.0.geometry(), i, j)?))
    }

    /// Stores `value` clamped to the map bounds.
    fn set(&mut self, i: i64, j: i64, value: f64) -> PyResult<()> {
        let c = cell(self.0.geometry(), i, j)?;
        self.0.set(c, value);
        Ok(())
    }

    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn probabilities(&self) -> Vec<f64> {
        self.0.to_probability_map()
    }

    fn known_count(&self) -> usize {
        self.0.known_count()
    }

    /// Simulates a noiseless scan from `pose` in `world` and fuses it.
    /// Returns the number of cells touched.
    fn integrate_scan(
        &mut self,
        world: &PyWorld,
        pose_: Pose,
        config: &PyConfig,
    ) -> PyResult<usize> {
        let spec = config.0.explorer.sensor;
        let scan = cast_scan(&world.0, &pose(pose_), &spec).map_err(py_err)?;
        let changed = self
            .0
            .update_with_scan(&scan, &InverseSensorModel::new(spec));
        Ok(changed.map_or(0, |b| b.cells().count()))
    }

    /// Boundariness of every cell, row-major.
    fn boundariness(&self, config: &PyConfig) -> Vec<f64> {
        BoundarinessMap::compute(&self.0, config.0.explorer.boundariness)
            .values()
            .to_vec()
    }
}

/// Information gain of a single view-point.
#[pyfunction]
fn view_gain(map: &PyOccupancyMap, pose_: Pose, config: &PyConfig) -> f64 {
    let bd = BoundarinessMap::compute(&map.0, config.0.explorer.boundariness);
    view_information_gain(&pose(pose_), &bd, &config.0.explorer.sensor)
}

/// Information gain of a path, with augmentation samples drawn from `seed`.
#[pyfunction]
#[pyo3(signature = (map, path, config, seed = 0))]
fn path_gain(map: &PyOccupancyMap, path: Vec<Pose>, config: &PyConfig, seed: u64) -> PyResult<f64> {
    let path = to_path(path)?;
    let bd = BoundarinessMap::compute(&map.0, config.0.explorer.boundariness);
    let samples = sample_augmentation(
        &path,
        map.0.geometry().resolution,
        &mut stream(seed, Stream::PathSampling),
    );
    Ok(path_information_gain(&path, &bd, &config.0.explorer.sensor, &samples).gain)
}

fn objective(
    map: &PyOccupancyMap,
    path: &Path,
    config: &PyConfig,
    seed: u64,
) -> PyResult<Objective> {
    let e = &config.0.explorer;
    let bd = BoundarinessMap::compute(&map.0, e.boundariness);
    let samples = sample_augmentation(
        path,
        map.0.geometry().resolution,
        &mut stream(seed, Stream::PathSampling),
    );
    Objective::new(path, &bd, &e.sensor, e.objective, samples).map_err(py_err)
}

/// Refines the interior vertices of `path`. Returns the new path and the
/// objective values of the accepted iterates.
#[pyfunction]
#[pyo3(signature = (map, path, config, seed = 0))]
fn optimize(
    map: &PyOccupancyMap,
    path: Vec<Pose>,
    config: &PyConfig,
    seed: u64,
) -> PyResult<(Vec<Pose>, Vec<f64>)> {
    let path = to_path(path)?;
    let obj = objective(map, &path, config, seed)?;
    let e = &config.0.explorer;
    let mut free = FreeSpace::from_log_odds(&map.0, e.rrt.inflation);
    let start = path.start();
    free.exempt_point(start.x, start.y);
    let result = optimize_path(&path, &obj, &e.optimizer, &free).map_err(py_err)?;
    Ok((from_path(&result.path), result.accepted_values()))
}

/// Compares the objective gradient with central finite differences.
#[pyfunction]
#[pyo3(signature = (map, path, config, seed = 0, step = 1e-6))]
fn gradient_check<'py>(
    py: Python<'py>,
    map: &PyOccupancyMap,
    path: Vec<Pose>,
    config: &PyConfig,
    seed: u64,
    step: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let path = to_path(path)?;
    let obj = objective(map, &path, config, seed)?;
    let check = diffexplore::gradient_check(&obj, path.interior(), step).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("max_relative_error", check.max_relative_error)?;
    out.set_item("worst_vertex", check.worst_vertex)?;
    out.set_item("worst_coordinate", check.worst_coordinate)?;
    out.set_item("branch_margin", obj.branch_margin(path.interior()))?;
    Ok(out)
}

/// Runs the exploration loop and returns the report as JSON text.
#[pyfunction]
#[pyo3(signature = (world, config, optimize = None))]
fn explore(
    py: Python<'_>,
    world: &PyWorld,
    config: &PyConfig,
    optimize: Option<bool>,
) -> PyResult<String> {
    let mut explorer = config.0.explorer;
    if let Some(flag) = optimize {
        explorer.optimize = flag;
    }
    let (start, seed) = (config.0.start, config.0.seed);
    let outcome = py
        .detach(|| run_exploration(&world.0, start, &explorer, seed))
        .map_err(py_err)?;
    Ok(outcome.report.to_json())
}

#[pymodule]
fn diffexplore_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWorld>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyOccupancyMap>()?;
    m.add_function(wrap_pyfunction!(view_gain, m)?)?;
    m.add_function(wrap_pyfunction!(path_gain, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_check, m)?)?;
    m.add_function(wrap_pyfunction!(explore, m)?)?;
    Ok(())
}
