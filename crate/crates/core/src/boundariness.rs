//! Continuous frontier score per cell, computed from the log-odds of the cell
//! and its eight neighbours.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cell, GridGeometry};
use crate::grid_map::{CellBox, LogOddsMap};

const NEIGHBORS: [(i64, i64); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarinessParams {
    /// Weight `w` of the "cell is unknown" term; `1 − w` goes to the
    /// neighbourhood-balance term.
    pub weight: f64,
    /// Spread `σ` in log-odds units.
    pub spread: f64,
}

impl Default for BoundarinessParams {
    fn default() -> Self {
        Self {
            weight: 0.5,
            spread: 0.3,
        }
    }
}

impl BoundarinessParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(Error::param("weight", "must lie in [0, 1]"));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(Error::param("spread", "must be positive"));
        }
        Ok(())
    }
}

/// Score of cell `(i0, j0)`.
///
/// Returns 0 when every in-bounds neighbour is unknown, or when at least one
/// neighbour is known and none of the known ones is free (an occluded cell).
/// At the map edge only in-bounds neighbours are summed and the normaliser
/// uses their count.
pub fn cell_boundariness(
    odds: &LogOddsMap,
    i0: i64,
    j0: i64,
    params: &BoundarinessParams,
) -> Result<f64> {
    let g = odds.geometry();
    let Some(center) = g.checked_cell(i0, j0) else {
        return Err(Error::IndexOutOfBounds {
            i: i0,
            j: j0,
            width: g.width,
            height: g.height,
        });
    };
    Ok(score(odds, center, params))
}

fn score(odds: &LogOddsMap, center: Cell, params: &BoundarinessParams) -> f64 {
    let (i0, j0) = (center.i as i64, center.j as i64);
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut known = 0usize;
    let mut known_free = 0usize;
    for (di, dj) in NEIGHBORS {
        if let Some(v) = odds.get_signed(i0 + di, j0 + dj) {
            count += 1;
            sum += v;
            if v != 0.0 {
                known += 1;
                if v < 0.0 {
                    known_free += 1;
                }
            }
        }
    }
    if known == 0 || known_free == 0 {
        return 0.0;
    }
    let s2 = params.spread * params.spread;
    let l = odds.get(center);
    let n = count as f64;
    params.weight * (-(l * l) / (2.0 * s2)).exp()
        + (1.0 - params.weight) * (-(sum * sum) / (2.0 * n * n * s2)).exp()
}

/// Boundariness of every cell of a log-odds map.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarinessMap {
    geometry: GridGeometry,
    values: Vec<f64>,
    params: BoundarinessParams,
}

impl BoundarinessMap {
    /// All-zero map, the state before any measurement.
    pub fn zeros(geometry: GridGeometry, params: BoundarinessParams) -> Self {
        Self {
            geometry,
            values: vec![0.0; geometry.cell_count()],
            params,
        }
    }

    pub fn compute(odds: &LogOddsMap, params: BoundarinessParams) -> Self {
        let geometry = *odds.geometry();
        let values = geometry.cells().map(|c| score(odds, c, &params)).collect();
        Self {
            geometry,
            values,
            params,
        }
    }

    /// Arbitrary values, e.g. synthetic maps for tests and tools. Values are
    /// clamped into `[0, 1]`.
    pub fn from_values(
        geometry: GridGeometry,
        values: Vec<f64>,
        params: BoundarinessParams,
    ) -> Result<Self> {
        if values.len() != geometry.cell_count() {
            return Err(Error::param("values", "length does not match the grid"));
        }
        Ok(Self {
            geometry,
            values: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            params,
        })
    }

    /// Recomputes the cells whose 8-neighbourhood intersects `changed`.
    pub fn refresh(&mut self, odds: &LogOddsMap, changed: CellBox) {
        for cell in changed.dilate(1, &self.geometry).cells() {
            let idx = self.geometry.index(cell);
            self.values[idx] = score(odds, cell, &self.params);
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn params(&self) -> &BoundarinessParams {
        &self.params
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, cell: Cell) -> f64 {
        self.values[self.geometry.index(cell)]
    }

    pub fn count_above(&self, threshold: f64) -> usize {
        self.values.iter().filter(|v| **v > threshold).count()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Same map with every value multiplied by `factor` (no clamping).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}
