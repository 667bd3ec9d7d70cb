//! Traversable cells of a belief map: known free, optionally kept clear of
//! known obstacles by an inflation radius. Unknown cells are not traversable.

use crate::geometry::{Cell, GridGeometry, Path, RayTraversal, ViewPoint};
use crate::grid_map::LogOddsMap;

#[derive(Debug, Clone, PartialEq)]
pub struct FreeSpace {
    geometry: GridGeometry,
    free: Vec<bool>,
}

impl FreeSpace {
    /// Cells with negative log-odds, minus those whose centre lies within
    /// `inflation` meters of an occupied cell centre.
    pub fn from_log_odds(odds: &LogOddsMap, inflation: f64) -> Self {
        let geometry = *odds.geometry();
        let mut free: Vec<bool> = odds.values().iter().map(|v| *v < 0.0).collect();
        if inflation > 0.0 {
            let reach = (inflation / geometry.resolution).ceil() as i64;
            let occupied: Vec<Cell> = geometry.cells().filter(|c| odds.is_occupied(*c)).collect();
            for o in occupied {
                let (ox, oy) = geometry.cell_center(o);
                let (i0, j0) = (o.i as i64, o.j as i64);
                for dj in -reach..=reach {
                    for di in -reach..=reach {
                        if let Some(c) = geometry.checked_cell(i0 + di, j0 + dj) {
                            let (cx, cy) = geometry.cell_center(c);
                            if (cx - ox).hypot(cy - oy) <= inflation {
                                free[geometry.index(c)] = false;
                            }
                        }
                    }
                }
            }
        }
        Self { geometry, free }
    }

    /// Marks the cell containing `(x, y)` traversable, e.g. the cell the
    /// robot stands in.
    pub fn exempt_point(&mut self, x: f64, y: f64) {
        if let Some(c) = self.geometry.cell_of(x, y) {
            let idx = self.geometry.index(c);
            self.free[idx] = true;
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn is_free_cell(&self, cell: Cell) -> bool {
        self.free[self.geometry.index(cell)]
    }

    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        self.geometry
            .cell_of(x, y)
            .is_some_and(|c| self.is_free_cell(c))
    }

    /// Every cell the straight segment passes through is traversable.
    pub fn segment_is_free(&self, a: &ViewPoint, b: &ViewPoint) -> bool {
        if !self.is_free_point(a.x, a.y) || !self.is_free_point(b.x, b.y) {
            return false;
        }
        RayTraversal::segment(&self.geometry, (a.x, a.y), (b.x, b.y)).all(|c| {
            self.geometry
                .checked_cell(c.i, c.j)
                .is_some_and(|cell| self.is_free_cell(cell))
        })
    }

    /// Index of the first vertex that is blocked or ends a blocked segment.
    pub fn first_collision(&self, path: &Path) -> Option<usize> {
        let v = path.vertices();
        if !self.is_free_point(v[0].x, v[0].y) {
            return Some(0);
        }
        (1..v.len()).find(|&k| !self.segment_is_free(&v[k - 1], &v[k]))
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        self.geometry
            .cells()
            .filter(|c| self.is_free_cell(*c))
            .collect()
    }
}
