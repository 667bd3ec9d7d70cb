//! Ground-truth environment and a ray-cast range sensor.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cell, GridGeometry, RayTraversal, ViewPoint};

/// Boolean occupancy grid of the environment being explored.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldMap {
    geometry: GridGeometry,
    occupied: Vec<bool>,
}

impl WorldMap {
    /// Builds a world from row-major cells (`j` major, `true` = obstacle).
    /// The outer ring of cells must be occupied so the region is closed.
    pub fn new(geometry: GridGeometry, occupied: Vec<bool>) -> Result<Self> {
        if occupied.len() != geometry.cell_count() {
            return Err(Error::param(
                "cells",
                format!(
                    "expected {} cells, got {}",
                    geometry.cell_count(),
                    occupied.len()
                ),
            ));
        }
        let world = Self { geometry, occupied };
        if let Some(cell) = geometry
            .cells()
            .filter(|c| {
                c.i == 0 || c.j == 0 || c.i + 1 == geometry.width || c.j + 1 == geometry.height
            })
            .find(|c| !world.is_occupied(*c))
        {
            return Err(Error::param(
                "cells",
                format!(
                    "world is not closed: border cell ({}, {}) is free",
                    cell.i, cell.j
                ),
            ));
        }
        Ok(world)
    }

    /// An empty room: free interior with a one-cell wall around it.
    pub fn empty_room(width: usize, height: usize, resolution: f64) -> Result<Self> {
        let geometry = GridGeometry::new(width, height, resolution)?;
        let occupied = geometry
            .cells()
            .map(|c| c.i == 0 || c.j == 0 || c.i + 1 == width || c.j + 1 == height)
            .collect();
        Self::new(geometry, occupied)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.occupied[self.geometry.index(cell)]
    }

    /// Out-of-grid cells count as occupied.
    pub fn is_occupied_signed(&self, i: i64, j: i64) -> bool {
        match self.geometry.checked_cell(i, j) {
            Some(c) => self.is_occupied(c),
            None => true,
        }
    }

    pub fn set_occupied(&mut self, cell: Cell, value: bool) {
        let idx = self.geometry.index(cell);
        self.occupied[idx] = value;
    }

    pub fn free_cell_count(&self) -> usize {
        self.occupied.iter().filter(|o| !**o).count()
    }

    pub fn is_free_pose(&self, pose: &ViewPoint) -> bool {
        self.geometry
            .cell_of(pose.x, pose.y)
            .is_some_and(|c| !self.is_occupied(c))
    }

    /// True when the straight segment crosses no occupied cell.
    pub fn segment_is_free(&self, a: &ViewPoint, b: &ViewPoint) -> bool {
        RayTraversal::segment(&self.geometry, (a.x, a.y), (b.x, b.y))
            .all(|c| !self.is_occupied_signed(c.i, c.j))
    }
}

/// Range sensor parameters. `fov` is the total field of view Ω; `beam_aperture`
/// is the per-beam width ω used by the inverse sensor model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub max_range: f64,
    pub fov: f64,
    pub beam_aperture: f64,
    pub angular_resolution: f64,
    pub range_noise_eps: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        let one_degree = 1f64.to_radians();
        Self {
            max_range: 3.0,
            fov: 90f64.to_radians(),
            beam_aperture: 2.0 * one_degree,
            angular_resolution: one_degree,
            range_noise_eps: 0.05,
        }
    }
}

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::param("max_range", "must be positive"));
        }
        if !(self.beam_aperture > 0.0 && self.beam_aperture <= self.fov && self.fov <= TAU) {
            return Err(Error::param(
                "fov",
                "requires 0 < beam_aperture <= fov <= 2π",
            ));
        }
        if !(self.range_noise_eps > 0.0 && self.range_noise_eps < self.max_range) {
            return Err(Error::param(
                "range_noise_eps",
                "requires 0 < ε < max_range",
            ));
        }
        if !(self.angular_resolution > 0.0) {
            return Err(Error::param("angular_resolution", "must be positive"));
        }
        Ok(())
    }

    pub fn beam_count(&self) -> usize {
        // Tolerate Ω/res landing a hair below an integer.
        (self.fov / self.angular_resolution + 1e-9).floor() as usize + 1
    }

    /// Bearings relative to the sensor axis, from −Ω/2 upward.
    pub fn bearings(&self) -> impl Iterator<Item = f64> + '_ {
        let start = -self.fov / 2.0;
        (0..self.beam_count()).map(move |k| start + k as f64 * self.angular_resolution)
    }

    /// Footprint half-width in cells, `h = R_max / ϱ` rounded up.
    pub fn range_in_cells(&self, resolution: f64) -> i64 {
        (self.max_range / resolution - 1e-9).ceil() as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    /// Bearing relative to the sensor heading.
    pub bearing: f64,
    pub range: f64,
    /// An obstacle was struck within `max_range`.
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub origin: ViewPoint,
    pub beams: Vec<Beam>,
}

fn check_pose(world: &WorldMap, pose: &ViewPoint) -> Result<()> {
    if !world.geometry.contains_point(pose.x, pose.y) {
        return Err(Error::InvalidPose {
            x: pose.x,
            y: pose.y,
            reason: "outside the world bounds",
        });
    }
    if !world.is_free_pose(pose) {
        return Err(Error::InvalidPose {
            x: pose.x,
            y: pose.y,
            reason: "inside an obstacle",
        });
    }
    Ok(())
}

/// Noise-free scan: each beam reports the distance to the entry point of the
/// first occupied cell along its ray, or `max_range` with `hit = false`.
pub fn cast_scan(world: &WorldMap, pose: &ViewPoint, spec: &SensorSpec) -> Result<Scan> {
    check_pose(world, pose)?;
    let beams = spec
        .bearings()
        .map(|bearing| {
            let angle = pose.theta + bearing;
            let dir = (angle.cos(), angle.sin());
            let hit = RayTraversal::new(&world.geometry, (pose.x, pose.y), dir, spec.max_range)
                .find(|c| world.is_occupied_signed(c.i, c.j));
            match hit {
                Some(c) => Beam {
                    bearing,
                    range: c.t_enter,
                    hit: true,
                },
                None => Beam {
                    bearing,
                    range: spec.max_range,
                    hit: false,
                },
            }
        })
        .collect();
    Ok(Scan {
        origin: *pose,
        beams,
    })
}

/// Scan with additive Gaussian range noise of standard deviation `sigma`
/// on beams that hit something. Ranges stay inside `(0, max_range]`.
pub fn cast_scan_noisy<R: Rng + ?Sized>(
    world: &WorldMap,
    pose: &ViewPoint,
    spec: &SensorSpec,
    sigma: f64,
    rng: &mut R,
) -> Result<Scan> {
    let mut scan = cast_scan(world, pose, spec)?;
    if sigma > 0.0 {
        let normal =
            Normal::new(0.0, sigma).map_err(|e| Error::param("range_noise", e.to_string()))?;
        for beam in scan.beams.iter_mut().filter(|b| b.hit) {
            let noisy = beam.range + normal.sample(rng);
            beam.range = noisy.clamp(1e-6, spec.max_range);
        }
    }
    Ok(scan)
}
