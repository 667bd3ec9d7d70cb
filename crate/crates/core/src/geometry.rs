//! Poses, paths and grid geometry shared by every other module.
//!
//! Grids are indexed `(i, j)` with `i` along +x and `j` along +y. Cell
//! `(i, j)` covers `[i·ϱ, (i+1)·ϱ) × [j·ϱ, (j+1)·ϱ)` in world meters, so the
//! world origin sits at the lower-left corner of cell `(0, 0)`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduces an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Robot configuration `(x, y, θ)` in meters and radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewPoint {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl ViewPoint {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position_distance(&self, other: &ViewPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn heading(&self) -> (f64, f64) {
        (self.theta.cos(), self.theta.sin())
    }

    /// Linear interpolation of position, shortest-arc interpolation of θ.
    pub fn interpolate(&self, other: &ViewPoint, t: f64) -> ViewPoint {
        let dtheta = wrap_angle(other.theta - self.theta);
        ViewPoint {
            x: (1.0 - t) * self.x + t * other.x,
            y: (1.0 - t) * self.y + t * other.y,
            theta: self.theta + t * dtheta,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }
}

/// Ordered sequence of view-points. The first and last vertices are the
/// fixed endpoints; everything in between is free for optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    vertices: Vec<ViewPoint>,
}

impl Path {
    pub fn new(vertices: Vec<ViewPoint>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::param("path", "a path needs at least one vertex"));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[ViewPoint] {
        &self.vertices
    }

    pub fn into_vertices(self) -> Vec<ViewPoint> {
        self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn start(&self) -> ViewPoint {
        self.vertices[0]
    }

    pub fn goal(&self) -> ViewPoint {
        self.vertices[self.vertices.len() - 1]
    }

    /// Vertices strictly between the endpoints.
    pub fn interior(&self) -> &[ViewPoint] {
        if self.vertices.len() <= 2 {
            &[]
        } else {
            &self.vertices[1..self.vertices.len() - 1]
        }
    }

    /// Rebuilds the path keeping both endpoints and replacing the interior.
    pub fn with_interior(&self, interior: &[ViewPoint]) -> Path {
        let mut vertices = Vec::with_capacity(interior.len() + 2);
        vertices.push(self.start());
        vertices.extend_from_slice(interior);
        if self.vertices.len() > 1 {
            vertices.push(self.goal());
        }
        Path { vertices }
    }

    /// Euclidean length of the polyline in the plane.
    pub fn length(&self) -> f64 {
        self.vertices
            .windows(2)
            .map(|w| w[0].position_distance(&w[1]))
            .sum()
    }
}

/// Integer cell address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub i: usize,
    pub j: usize,
}

impl Cell {
    pub const fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }
}

/// Shape and resolution of a grid anchored at the world origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, resolution: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("grid", "width and height must be positive"));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::param(
                "resolution",
                format!("must be > 0, got {resolution}"),
            ));
        }
        Ok(Self {
            width,
            height,
            resolution,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
        )
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        let (w, h) = self.extent();
        x >= 0.0 && y >= 0.0 && x < w && y < h
    }

    /// Signed cell coordinates of a world point (may be outside the grid).
    pub fn cell_coords(&self, x: f64, y: f64) -> (i64, i64) {
        (
            (x / self.resolution).floor() as i64,
            (y / self.resolution).floor() as i64,
        )
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<Cell> {
        let (i, j) = self.cell_coords(x, y);
        self.checked_cell(i, j)
    }

    pub fn checked_cell(&self, i: i64, j: i64) -> Option<Cell> {
        if i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height {
            Some(Cell::new(i as usize, j as usize))
        } else {
            None
        }
    }

    pub fn cell_center(&self, cell: Cell) -> (f64, f64) {
        (
            (cell.i as f64 + 0.5) * self.resolution,
            (cell.j as f64 + 0.5) * self.resolution,
        )
    }

    /// Row-major linear index (`j` major).
    pub fn index(&self, cell: Cell) -> usize {
        cell.j * self.width + cell.i
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    /// In-bounds cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |j| (0..self.width).map(move |i| Cell::new(i, j)))
    }

    /// In-bounds part of the square box of half-width `half` cells centered on
    /// the cell containing `(x, y)`, as inclusive index ranges.
    pub fn clipped_box(
        &self,
        x: f64,
        y: f64,
        half: i64,
    ) -> Option<(
        std::ops::RangeInclusive<usize>,
        std::ops::RangeInclusive<usize>,
    )> {
        let (ci, cj) = self.cell_coords(x, y);
        let i0 = (ci - half).max(0);
        let j0 = (cj - half).max(0);
        let i1 = (ci + half).min(self.width as i64 - 1);
        let j1 = (cj + half).min(self.height as i64 - 1);
        if i0 > i1 || j0 > j1 {
            None
        } else {
            Some((i0 as usize..=i1 as usize, j0 as usize..=j1 as usize))
        }
    }
}

/// One grid cell crossed by a ray, with the entry and exit distances of the
/// ray inside it. Indices are signed: the ray may leave the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub i: i64,
    pub j: i64,
    pub t_enter: f64,
    pub t_exit: f64,
}

/// Grid line-stepping (Amanatides–Woo) along a ray from `origin` in
/// direction `dir` (unit length), up to distance `max_t`.
#[derive(Debug, Clone)]
pub struct RayTraversal {
    i: i64,
    j: i64,
    step_i: i64,
    step_j: i64,
    t_max_x: f64,
    t_max_y: f64,
    t_delta_x: f64,
    t_delta_y: f64,
    t: f64,
    max_t: f64,
    done: bool,
}

impl RayTraversal {
    pub fn new(geometry: &GridGeometry, origin: (f64, f64), dir: (f64, f64), max_t: f64) -> Self {
        let res = geometry.resolution;
        let (i, j) = geometry.cell_coords(origin.0, origin.1);
        let axis = |pos: f64, d: f64, cell: i64| -> (i64, f64, f64) {
            if d > 0.0 {
                let boundary = (cell + 1) as f64 * res;
                (1, (boundary - pos) / d, res / d)
            } else if d < 0.0 {
                let boundary = cell as f64 * res;
                (-1, (boundary - pos) / d, -res / d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (step_i, t_max_x, t_delta_x) = axis(origin.0, dir.0, i);
        let (step_j, t_max_y, t_delta_y) = axis(origin.1, dir.1, j);
        Self {
            i,
            j,
            step_i,
            step_j,
            t_max_x,
            t_max_y,
            t_delta_x,
            t_delta_y,
            t: 0.0,
            max_t,
            done: false,
        }
    }

    /// Traversal of the straight segment `a → b`.
    pub fn segment(geometry: &GridGeometry, a: (f64, f64), b: (f64, f64)) -> Self {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len = dx.hypot(dy);
        if len == 0.0 {
            Self::new(geometry, a, (1.0, 0.0), 0.0)
        } else {
            Self::new(geometry, a, (dx / len, dy / len), len)
        }
    }
}

impl Iterator for RayTraversal {
    type Item = Crossing;

    fn next(&mut self) -> Option<Crossing> {
        if self.done {
            return None;
        }
        let t_enter = self.t;
        let t_next = self.t_max_x.min(self.t_max_y);
        let crossing = Crossing {
            i: self.i,
            j: self.j,
            t_enter,
            t_exit: t_next.min(self.max_t),
        };
        if t_next >= self.max_t {
            self.done = true;
        } else if self.t_max_x < self.t_max_y {
            self.i += self.step_i;
            self.t = self.t_max_x;
            self.t_max_x += self.t_delta_x;
        } else {
            self.j += self.step_j;
            self.t = self.t_max_y;
            self.t_max_y += self.t_delta_y;
        }
        Some(crossing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(-7.0) - (-7.0 + TAU)).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn interpolation_takes_short_arc() {
        let a = ViewPoint::new(0.0, 0.0, 3.0);
        let b = ViewPoint::new(2.0, 0.0, -3.0);
        let m = a.interpolate(&b, 0.5);
        assert!((m.x - 1.0).abs() < 1e-12);
        // Midpoint of the short arc through ±π.
        assert!((wrap_angle(m.theta) - PI).abs() < 1e-9);
    }

    #[test]
    fn traversal_horizontal_ray() {
        let g = GridGeometry::new(10, 10, 1.0).unwrap();
        let cells: Vec<_> = RayTraversal::new(&g, (0.5, 0.5), (1.0, 0.0), 3.2).collect();
        let idx: Vec<_> = cells.iter().map(|c| (c.i, c.j)).collect();
        assert_eq!(idx, vec![(0, 0), (1, 0), (2, 0), (3, 0)]);
        assert!((cells[1].t_enter - 0.5).abs() < 1e-12);
        assert!((cells[3].t_exit - 3.2).abs() < 1e-12);
    }

    #[test]
    fn traversal_is_gapless_along_diagonal() {
        let g = GridGeometry::new(20, 20, 0.3).unwrap();
        let dir = (0.6f64.cos(), 0.6f64.sin());
        let cells: Vec<_> = RayTraversal::new(&g, (1.01, 1.02), dir, 4.0).collect();
        for w in cells.windows(2) {
            let step = (w[1].i - w[0].i).abs() + (w[1].j - w[0].j).abs();
            assert_eq!(step, 1);
            assert!((w[1].t_enter - w[0].t_exit).abs() < 1e-12);
        }
    }

    #[test]
    fn path_interior_and_length() {
        let p = Path::new(vec![
            ViewPoint::new(0.0, 0.0, 0.0),
            ViewPoint::new(3.0, 0.0, 0.0),
            ViewPoint::new(3.0, 4.0, 0.0),
        ])
        .unwrap();
        assert_eq!(p.interior().len(), 1);
        assert!((p.length() - 7.0).abs() < 1e-12);
        let q = p.with_interior(&[]);
        assert_eq!(q.len(), 2);
        assert!(Path::new(vec![]).is_err());
    }
}
