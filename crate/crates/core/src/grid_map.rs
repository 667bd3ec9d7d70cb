//! Log-odds occupancy grid fused with a clamped binary Bayes filter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Cell, GridGeometry, RayTraversal};
use crate::world_sim::{Scan, SensorSpec};

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn logistic(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Default upper clamp, `log(0.9 / 0.1)`.
pub fn default_l_max() -> f64 {
    (0.9f64 / 0.1).ln()
}

/// Default lower clamp, `log(0.3 / 0.7)`.
pub fn default_l_min() -> f64 {
    (0.3f64 / 0.7).ln()
}

/// Inclusive bounding box of cells, used to report what a scan changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellBox {
    pub i0: usize,
    pub j0: usize,
    pub i1: usize,
    pub j1: usize,
}

impl CellBox {
    pub fn single(cell: Cell) -> Self {
        Self {
            i0: cell.i,
            j0: cell.j,
            i1: cell.i,
            j1: cell.j,
        }
    }

    pub fn include(&mut self, cell: Cell) {
        self.i0 = self.i0.min(cell.i);
        self.j0 = self.j0.min(cell.j);
        self.i1 = self.i1.max(cell.i);
        self.j1 = self.j1.max(cell.j);
    }

    pub fn union(self, other: CellBox) -> CellBox {
        CellBox {
            i0: self.i0.min(other.i0),
            j0: self.j0.min(other.j0),
            i1: self.i1.max(other.i1),
            j1: self.j1.max(other.j1),
        }
    }

    /// Grows the box by `margin` cells, clipped to the grid.
    pub fn dilate(self, margin: usize, geometry: &GridGeometry) -> CellBox {
        CellBox {
            i0: self.i0.saturating_sub(margin),
            j0: self.j0.saturating_sub(margin),
            i1: (self.i1 + margin).min(geometry.width - 1),
            j1: (self.j1 + margin).min(geometry.height - 1),
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (self.j0..=self.j1).flat_map(move |j| (self.i0..=self.i1).map(move |i| Cell::new(i, j)))
    }
}

/// Range-sensor inverse model: occupancy probability of a cell at distance
/// `δ` along a beam and angle `θ` off the beam axis, given the measured range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseSensorModel {
    pub spec: SensorSpec,
}

impl InverseSensorModel {
    pub fn new(spec: SensorSpec) -> Self {
        Self { spec }
    }

    fn radial(&self, delta: f64, range: f64) -> f64 {
        let eps = self.spec.range_noise_eps;
        if delta <= range - eps {
            let q = delta / (range - eps);
            1.0 - q * q
        } else if delta <= range + eps {
            let q = (delta - range) / eps;
            q * q - 1.0
        } else {
            0.0
        }
    }

    /// `ρ = (1 − O_r(δ)·O_a(θ)) / 2`: 0 means certainly free, 1 certainly
    /// occupied, 0.5 no information.
    pub fn occupancy_probability(&self, delta: f64, theta: f64, range: f64) -> Result<f64> {
        let half = self.spec.beam_aperture / 2.0;
        if theta.abs() > half {
            return Err(Error::OutOfBeam {
                theta,
                half_aperture: half,
            });
        }
        Ok(self.probability_in_beam(delta, theta, range))
    }

    fn probability_in_beam(&self, delta: f64, theta: f64, range: f64) -> f64 {
        if delta > range + self.spec.range_noise_eps {
            return 0.5;
        }
        let q = 2.0 * theta / self.spec.beam_aperture;
        let angular = 1.0 - q * q;
        (1.0 - self.radial(delta, range) * angular) / 2.0
    }
}

/// Clamped log-odds occupancy beliefs. 0 is unknown, negative free,
/// positive occupied.
#[derive(Debug, Clone, PartialEq)]
pub struct LogOddsMap {
    geometry: GridGeometry,
    values: Vec<f64>,
    l_min: f64,
    l_max: f64,
}

impl LogOddsMap {
    pub fn new(geometry: GridGeometry) -> Self {
        Self::with_bounds(geometry, default_l_min(), default_l_max())
            .expect("default clamp bounds are valid")
    }

    pub fn with_bounds(geometry: GridGeometry, l_min: f64, l_max: f64) -> Result<Self> {
        if !(l_min < 0.0 && 0.0 < l_max) {
            return Err(Error::param("l_min/l_max", "requires l_min < 0 < l_max"));
        }
        Ok(Self {
            geometry,
            values: vec![0.0; geometry.cell_count()],
            l_min,
            l_max,
        })
    }

    /// Builds a map from raw row-major values, clamping each into bounds.
    pub fn from_values(
        geometry: GridGeometry,
        values: Vec<f64>,
        l_min: f64,
        l_max: f64,
    ) -> Result<Self> {
        let mut map = Self::with_bounds(geometry, l_min, l_max)?;
        if values.len() != geometry.cell_count() {
            return Err(Error::param("values", "length does not match the grid"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("values", "log-odds must be finite"));
        }
        map.values = values.into_iter().map(|v| v.clamp(l_min, l_max)).collect();
        Ok(map)
    }

    /// Inverse of [`Self::to_probability_map`], clamped into bounds.
    pub fn from_probability_map(
        geometry: GridGeometry,
        probabilities: &[f64],
        l_min: f64,
        l_max: f64,
    ) -> Result<Self> {
        Self::from_values(
            geometry,
            probabilities.iter().map(|&p| logit(p)).collect(),
            l_min,
            l_max,
        )
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.l_min, self.l_max)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, cell: Cell) -> f64 {
        self.values[self.geometry.index(cell)]
    }

    /// Value at signed indices, or `None` outside the grid.
    pub fn get_signed(&self, i: i64, j: i64) -> Option<f64> {
        self.geometry.checked_cell(i, j).map(|c| self.get(c))
    }

    pub fn set(&mut self, cell: Cell, value: f64) {
        let idx = self.geometry.index(cell);
        self.values[idx] = value.clamp(self.l_min, self.l_max);
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.get(cell) < 0.0
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.get(cell) > 0.0
    }

    pub fn known_count(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    /// `max(min(old + update, l_max), l_min)`.
    pub fn fuse(&mut self, cell: Cell, update: f64) {
        let idx = self.geometry.index(cell);
        let v = self.values[idx] + update;
        self.values[idx] = v.min(self.l_max).max(self.l_min);
    }

    pub fn to_probability_map(&self) -> Vec<f64> {
        self.values.iter().map(|&v| logistic(v)).collect()
    }

    /// Fuses every beam of `scan` and returns the box of touched cells.
    ///
    /// Cells are enumerated by line-stepping along each beam up to
    /// `min(R + ε, R_max)` (`R_max − ε` for beams that hit nothing). A cell is
    /// evaluated at `δ` = the distance at which the beam enters it and `θ` =
    /// the angle between the beam axis and the cell center; cells whose center
    /// falls outside the beam aperture are left to neighbouring beams. The
    /// cell holding the beam endpoint is evaluated at the measured point,
    /// `(δ, θ) = (R, 0)`.
    pub fn update_with_scan(&mut self, scan: &Scan, model: &InverseSensorModel) -> Option<CellBox> {
        let spec = &model.spec;
        let eps = spec.range_noise_eps;
        let half = spec.beam_aperture / 2.0;
        let origin = (scan.origin.x, scan.origin.y);
        let mut touched: Option<CellBox> = None;
        for beam in &scan.beams {
            let angle = scan.origin.theta + beam.bearing;
            let dir = (angle.cos(), angle.sin());
            let extent = if beam.hit {
                (beam.range + eps).min(spec.max_range)
            } else {
                spec.max_range - eps
            };
            if extent <= 0.0 {
                continue;
            }
            for c in RayTraversal::new(&self.geometry, origin, dir, extent) {
                let Some(cell) = self.geometry.checked_cell(c.i, c.j) else {
                    continue;
                };
                let endpoint = beam.hit && c.t_enter <= beam.range && beam.range < c.t_exit;
                let (delta, theta) = if endpoint {
                    (beam.range, 0.0)
                } else {
                    let (cx, cy) = self.geometry.cell_center(cell);
                    let theta = wrap_angle((cy - origin.1).atan2(cx - origin.0) - angle);
                    if theta.abs() > half {
                        continue;
                    }
                    (c.t_enter, theta)
                };
                let rho = model.probability_in_beam(delta, theta, beam.range);
                if rho == 0.5 {
                    continue;
                }
                self.fuse(cell, logit(rho));
                match touched.as_mut() {
                    Some(b) => b.include(cell),
                    None => touched = Some(CellBox::single(cell)),
                }
            }
        }
        touched
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ViewPoint;
    use crate::world_sim::{cast_scan, WorldMap};

    fn model() -> InverseSensorModel {
        InverseSensorModel::new(SensorSpec::default())
    }

    #[test]
    fn closed_form_spot_values() {
        let m = model();
        let eps = m.spec.range_noise_eps;
        let r = 2.0;
        assert_eq!(m.occupancy_probability(0.0, 0.0, r).unwrap(), 0.0);
        assert_eq!(m.occupancy_probability(r, 0.0, r).unwrap(), 1.0);
        assert!((m.occupancy_probability(r - eps, 0.0, r).unwrap() - 0.5).abs() < 1e-12);
        assert!((m.occupancy_probability(r + eps, 0.0, r).unwrap() - 0.5).abs() < 1e-12);
        let edge = m.spec.beam_aperture / 2.0;
        for delta in [0.0, 0.7, r, r + 0.5] {
            assert!((m.occupancy_probability(delta, edge, r).unwrap() - 0.5).abs() < 1e-12);
            assert!((m.occupancy_probability(delta, -edge, r).unwrap() - 0.5).abs() < 1e-12);
        }
        assert_eq!(m.occupancy_probability(r + 1.0, 0.0, r).unwrap(), 0.5);
    }

    #[test]
    fn out_of_beam_is_an_error() {
        let m = model();
        let too_wide = m.spec.beam_aperture;
        assert!(matches!(
            m.occupancy_probability(1.0, too_wide, 2.0),
            Err(Error::OutOfBeam { .. })
        ));
    }

    #[test]
    fn probability_stays_in_unit_interval() {
        let m = model();
        let half = m.spec.beam_aperture / 2.0;
        for k in 0..=40 {
            for a in -4..=4 {
                let delta = k as f64 * 0.06;
                let p = m
                    .occupancy_probability(delta, half * a as f64 / 4.0, 1.7)
                    .unwrap();
                assert!((0.0..=1.0).contains(&p), "ρ = {p}");
            }
        }
    }

    #[test]
    fn clamp_bounds_match_reported_probabilities() {
        let g = GridGeometry::new(2, 1, 0.3).unwrap();
        let mut map = LogOddsMap::new(g);
        map.set(Cell::new(0, 0), f64::INFINITY);
        map.set(Cell::new(1, 0), f64::NEG_INFINITY);
        let p = map.to_probability_map();
        assert!((p[0] - 0.9).abs() < 1e-12);
        assert!((p[1] - 0.3).abs() < 1e-12);
        assert_eq!(LogOddsMap::new(g).to_probability_map(), vec![0.5, 0.5]);
    }

    #[test]
    fn hit_cell_saturates_to_l_max() {
        let world = WorldMap::empty_room(20, 20, 0.3).unwrap();
        let pose = ViewPoint::new(3.0, 3.05, 0.0);
        let spec = SensorSpec::default();
        let scan = cast_scan(&world, &pose, &spec).unwrap();
        let mut map = LogOddsMap::new(*world.geometry());
        map.update_with_scan(&scan, &InverseSensorModel::new(spec));
        // Axis beam hits the right wall (column 19) 2.7 m away.
        assert_eq!(map.get(Cell::new(19, 10)), default_l_max());
    }

    #[test]
    fn corridor_is_carved_free() {
        let world = WorldMap::empty_room(30, 30, 0.3).unwrap();
        let pose = ViewPoint::new(4.5, 4.5, 0.0);
        let spec = SensorSpec::default();
        let model = InverseSensorModel::new(spec);
        let scan = cast_scan(&world, &pose, &spec).unwrap();
        let mut map = LogOddsMap::new(*world.geometry());
        map.update_with_scan(&scan, &model);
        let eps = spec.range_noise_eps;
        // Cells whose centers lie on the axis beam, short of R_max − ε.
        for i in 16..25 {
            let cell = Cell::new(i, 15);
            let (cx, _) = world.geometry().cell_center(cell);
            if cx - 4.5 < spec.max_range - eps - 0.3 {
                assert!(map.get(cell) < 0.0, "cell {i} = {}", map.get(cell));
            }
        }
    }

    #[test]
    fn saturated_cells_stay_put() {
        let world = WorldMap::empty_room(30, 30, 0.3).unwrap();
        let pose = ViewPoint::new(4.5, 4.5, 0.8);
        let spec = SensorSpec::default();
        let model = InverseSensorModel::new(spec);
        let scan = cast_scan(&world, &pose, &spec).unwrap();
        let mut map = LogOddsMap::new(*world.geometry());
        let mut previous = Vec::new();
        for round in 0..12 {
            map.update_with_scan(&scan, &model);
            let (lo, hi) = map.bounds();
            assert!(map.values().iter().all(|v| (lo..=hi).contains(v)));
            if round >= 10 {
                assert_eq!(previous, map.values());
            }
            previous = map.values().to_vec();
        }
    }
}
