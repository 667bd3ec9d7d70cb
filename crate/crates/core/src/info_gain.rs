//! Fuzzy visibility filter and the information gain of view-points and paths.
//!
//! The per-cell discount is written once against [`Ops`] so that the same
//! arithmetic serves the plain evaluation here and the recorded evaluation in
//! the optimizer.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Ops, Plain};
use crate::boundariness::BoundarinessMap;
use crate::geometry::{wrap_angle, Cell, GridGeometry, Path, ViewPoint};
use crate::world_sim::SensorSpec;

/// Linear fall-off from 1 at `max_range` to 0 at twice `max_range`.
pub fn distance_discount(delta: f64, max_range: f64) -> f64 {
    if delta < max_range {
        1.0
    } else if delta <= 2.0 * max_range {
        (-1.0 / max_range) * delta + 2.0
    } else {
        0.0
    }
}

/// 1 inside the field of view, then `(1 + u·v) / (1 + cos(Ω/2))` outside it.
pub fn angle_discount(u: (f64, f64), v: (f64, f64), fov: f64) -> f64 {
    let dot = u.0 * v.0 + u.1 * v.1;
    let c = (fov / 2.0).cos();
    if dot >= c {
        1.0
    } else {
        let k = 1.0 / (1.0 + c);
        k * dot + k
    }
}

/// Discount of the cell centred at `center` seen from `(x, y)` with heading
/// `(cos θ, sin θ)`. A cell whose centre coincides with the view-point gets 1.
pub(crate) fn cell_discount<O: Ops>(
    ops: &mut O,
    pose: &OpsPose<O::S>,
    center: (f64, f64),
    spec: &SensorSpec,
) -> O::S {
    let cx = ops.constant(center.0);
    let cy = ops.constant(center.1);
    let dx = ops.sub(cx, pose.x);
    let dy = ops.sub(cy, pose.y);
    let dx2 = ops.square(dx);
    let dy2 = ops.square(dy);
    let d2 = ops.add(dx2, dy2);
    if ops.value(d2) == 0.0 {
        return ops.constant(1.0);
    }
    let delta = ops.sqrt(d2);
    let r = spec.max_range;
    let dv = ops.value(delta);
    if dv > 2.0 * r {
        return ops.constant(0.0);
    }
    let a = ops.mul(pose.cos, dx);
    let b = ops.mul(pose.sin, dy);
    let along = ops.add(a, b);
    let dot = ops.div(along, delta);
    let c = (spec.fov / 2.0).cos();
    let k = 1.0 / (1.0 + c);
    let phi_theta = (ops.value(dot) < c).then(|| ops.piecewise(dot, k, k, 1));
    let phi_d = (dv >= r).then(|| ops.piecewise(delta, -1.0 / r, 2.0, 1));
    match (phi_d, phi_theta) {
        (None, None) => ops.constant(1.0),
        (Some(p), None) | (None, Some(p)) => p,
        (Some(p), Some(q)) => ops.mul(p, q),
    }
}

/// View-point in some scalar back-end, with its heading pre-computed.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OpsPose<S> {
    pub x: S,
    pub y: S,
    pub cos: S,
    pub sin: S,
}

impl<S: Copy> OpsPose<S> {
    pub fn new<O: Ops<S = S>>(ops: &mut O, x: S, y: S, theta: S) -> Self {
        let cos = ops.cos(theta);
        let sin = ops.sin(theta);
        Self { x, y, cos, sin }
    }
}

fn plain_pose(xi: &ViewPoint) -> OpsPose<f64> {
    OpsPose::new(&mut Plain, xi.x, xi.y, xi.theta)
}

/// `Φ_ξ` of a single cell centre.
pub fn view_discount(xi: &ViewPoint, center: (f64, f64), spec: &SensorSpec) -> f64 {
    cell_discount(&mut Plain, &plain_pose(xi), center, spec)
}

/// Cells whose centre is within `max_range` and inside the field of view.
/// This is the set of cells the sensor itself covers from `xi`.
pub fn in_sensing_cone(xi: &ViewPoint, center: (f64, f64), spec: &SensorSpec) -> bool {
    let (dx, dy) = (center.0 - xi.x, center.1 - xi.y);
    let delta = dx.hypot(dy);
    if delta > spec.max_range {
        return false;
    }
    if delta == 0.0 {
        return true;
    }
    let (c, s) = xi.heading();
    (c * dx + s * dy) / delta >= (spec.fov / 2.0).cos()
}

/// In-map cells of the `(4h+1)`-wide box centred on the cell holding `xi`.
pub fn footprint_box(
    xi: &ViewPoint,
    geometry: &GridGeometry,
    spec: &SensorSpec,
) -> Option<(RangeInclusive<usize>, RangeInclusive<usize>)> {
    let h = spec.range_in_cells(geometry.resolution);
    geometry.clipped_box(xi.x, xi.y, 2 * h)
}

/// Sparse cell → discount map keyed by row-major cell index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FuzzyFilter {
    entries: BTreeMap<usize, f64>,
}

impl FuzzyFilter {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.entries.get(&index).copied()
    }

    /// `(index, discount)` pairs in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    /// Pointwise maximum with another filter.
    pub fn merge_max(&mut self, other: &FuzzyFilter) {
        for (&k, &v) in &other.entries {
            self.entries
                .entry(k)
                .and_modify(|old| {
                    if v > *old {
                        *old = v
                    }
                })
                .or_insert(v);
        }
    }

    pub fn retain(&mut self, mut keep: impl FnMut(usize) -> bool) {
        self.entries.retain(|k, _| keep(*k));
    }

    /// `Σ Φ · M_bd` over the footprint, in row-major order.
    pub fn weighted_sum(&self, bd: &BoundarinessMap) -> f64 {
        let values = bd.values();
        let mut acc = 0.0;
        for (&k, &phi) in &self.entries {
            acc += values[k] * phi;
        }
        acc
    }
}

/// `Φ_ξ` over every in-map cell of the footprint box.
pub fn build_view_filter(
    xi: &ViewPoint,
    spec: &SensorSpec,
    geometry: &GridGeometry,
) -> FuzzyFilter {
    let mut entries = BTreeMap::new();
    if let Some((is, js)) = footprint_box(xi, geometry, spec) {
        let pose = plain_pose(xi);
        for j in js {
            for i in is.clone() {
                let cell = Cell::new(i, j);
                let phi = cell_discount(&mut Plain, &pose, geometry.cell_center(cell), spec);
                entries.insert(geometry.index(cell), phi);
            }
        }
    }
    FuzzyFilter { entries }
}

/// `IG_view(ξ) = Σ Φ_ξ · M_bd`.
pub fn view_information_gain(xi: &ViewPoint, bd: &BoundarinessMap, spec: &SensorSpec) -> f64 {
    build_view_filter(xi, spec, bd.geometry()).weighted_sum(bd)
}

/// A point on segment `segment` of a path at parameter `t ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub segment: usize,
    pub t: f64,
}

/// Expected view-point count `N = ⌈L / 2ϱ⌉` minus the vertex count `k`
/// (index of the last vertex), or 0 when the path already has enough
/// vertices or is shorter than one cell.
pub fn augmentation_count(path: &Path, resolution: f64) -> usize {
    let length = path.length();
    if length < resolution {
        return 0;
    }
    let n = (length / (2.0 * resolution)).ceil() as usize;
    let k = path.len() - 1;
    n.saturating_sub(k)
}

/// Stratified-uniform arc-length samples for a path, one per stratum.
pub fn sample_augmentation<R: Rng + ?Sized>(
    path: &Path,
    resolution: f64,
    rng: &mut R,
) -> Vec<SamplePoint> {
    let m = augmentation_count(path, resolution);
    if m == 0 {
        return Vec::new();
    }
    let v = path.vertices();
    let lengths: Vec<f64> = v
        .windows(2)
        .map(|w| w[0].position_distance(&w[1]))
        .collect();
    let total: f64 = lengths.iter().sum();
    (0..m)
        .map(|stratum| {
            let u: f64 = rng.random();
            let mut s = (stratum as f64 + u) / m as f64 * total;
            let last = lengths.iter().rposition(|l| *l > 0.0).unwrap_or(0);
            for (segment, &len) in lengths.iter().enumerate() {
                if len <= 0.0 {
                    continue;
                }
                if s <= len || segment == last {
                    return SamplePoint {
                        segment,
                        t: (s / len).clamp(0.0, 1.0),
                    };
                }
                s -= len;
            }
            SamplePoint { segment: 0, t: 0.0 }
        })
        .collect()
}

/// `θ_a + t·wrap(θ_b − θ_a)` expressed with a recorded wrap branch.
pub(crate) fn wrapped_difference<O: Ops>(ops: &mut O, a: O::S, b: O::S) -> O::S {
    let d = ops.sub(b, a);
    let dv = ops.value(d);
    let offset = wrap_angle(dv) - dv;
    let branch = if offset == 0.0 {
        0
    } else if offset > 0.0 {
        1
    } else {
        2
    };
    ops.piecewise(d, 1.0, offset, branch)
}

pub(crate) fn interpolate_ops<O: Ops>(
    ops: &mut O,
    a: &[O::S; 3],
    b: &[O::S; 3],
    t: f64,
) -> [O::S; 3] {
    let x = ops.weighted_sum(&[(a[0], 1.0 - t), (b[0], t)]);
    let y = ops.weighted_sum(&[(a[1], 1.0 - t), (b[1], t)]);
    let dtheta = wrapped_difference(ops, a[2], b[2]);
    let theta = ops.weighted_sum(&[(a[2], 1.0), (dtheta, t)]);
    [x, y, theta]
}

/// Interior vertices followed by the sampled points: every view-point whose
/// filter enters the path gain.
pub fn sample_viewpoints(path: &Path, samples: &[SamplePoint]) -> Vec<ViewPoint> {
    let v = path.vertices();
    let mut out: Vec<ViewPoint> = path.interior().to_vec();
    for s in samples {
        let a = v[s.segment].as_array();
        let b = v[s.segment + 1].as_array();
        let [x, y, theta] = interpolate_ops(&mut Plain, &a, &b, s.t);
        out.push(ViewPoint::new(x, y, theta));
    }
    out
}

/// Mask of cells covered by the sensing cones of the path endpoints.
pub fn endpoint_exclusion(path: &Path, geometry: &GridGeometry, spec: &SensorSpec) -> Vec<bool> {
    let mut mask = vec![false; geometry.cell_count()];
    let ends = [path.start(), path.goal()];
    for xi in &ends {
        let h = spec.range_in_cells(geometry.resolution);
        if let Some((is, js)) = geometry.clipped_box(xi.x, xi.y, h + 1) {
            for j in js {
                for i in is.clone() {
                    let cell = Cell::new(i, j);
                    if in_sensing_cone(xi, geometry.cell_center(cell), spec) {
                        mask[geometry.index(cell)] = true;
                    }
                }
            }
        }
    }
    mask
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathGainResult {
    pub gain: f64,
    /// Max-union of the interior and sampled filters, endpoint cells removed.
    pub filter: FuzzyFilter,
    pub samples: Vec<SamplePoint>,
    pub sampled_points: Vec<ViewPoint>,
}

/// Path gain with the given augmentation samples.
pub fn path_information_gain(
    path: &Path,
    bd: &BoundarinessMap,
    spec: &SensorSpec,
    samples: &[SamplePoint],
) -> PathGainResult {
    let geometry = bd.geometry();
    let points = sample_viewpoints(path, samples);
    let mut filter = FuzzyFilter::default();
    for xi in &points {
        filter.merge_max(&build_view_filter(xi, spec, geometry));
    }
    let excluded = endpoint_exclusion(path, geometry, spec);
    filter.retain(|k| !excluded[k]);
    PathGainResult {
        gain: filter.weighted_sum(bd),
        filter,
        samples: samples.to_vec(),
        sampled_points: points,
    }
}

/// Path gain with freshly drawn augmentation samples.
pub fn path_information_gain_sampled<R: Rng + ?Sized>(
    path: &Path,
    bd: &BoundarinessMap,
    spec: &SensorSpec,
    rng: &mut R,
) -> PathGainResult {
    let samples = sample_augmentation(path, bd.geometry().resolution, rng);
    path_information_gain(path, bd, spec, &samples)
}

/// Path gain over view-points given in an arbitrary back-end. Cells with zero
/// boundariness, excluded cells and cells beyond `2·R_max` are skipped, which
/// leaves the sum unchanged.
pub(crate) fn path_gain_ops<O: Ops>(
    ops: &mut O,
    points: &[[O::S; 3]],
    bd: &BoundarinessMap,
    spec: &SensorSpec,
    excluded: &[bool],
) -> O::S {
    let geometry = bd.geometry();
    let values = bd.values();
    let mut union: BTreeMap<usize, O::S> = BTreeMap::new();
    let reach2 = (2.0 * spec.max_range).powi(2);
    for p in points {
        let xi = ViewPoint::new(ops.value(p[0]), ops.value(p[1]), ops.value(p[2]));
        let Some((is, js)) = footprint_box(&xi, geometry, spec) else {
            continue;
        };
        let pose = OpsPose::new(ops, p[0], p[1], p[2]);
        for j in js {
            for i in is.clone() {
                let cell = Cell::new(i, j);
                let idx = geometry.index(cell);
                if excluded[idx] || values[idx] == 0.0 {
                    continue;
                }
                let center = geometry.cell_center(cell);
                let (dx, dy) = (center.0 - xi.x, center.1 - xi.y);
                if dx * dx + dy * dy > reach2 {
                    continue;
                }
                let phi = cell_discount(ops, &pose, center, spec);
                if ops.value(phi) == 0.0 {
                    continue;
                }
                match union.get(&idx).copied() {
                    Some(old) => {
                        let m = ops.max(old, phi);
                        union.insert(idx, m);
                    }
                    None => {
                        union.insert(idx, phi);
                    }
                }
            }
        }
    }
    let terms: Vec<(O::S, f64)> = union.into_iter().map(|(k, s)| (s, values[k])).collect();
    ops.weighted_sum(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundariness::BoundarinessParams;
    use rand::SeedableRng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn spec() -> SensorSpec {
        SensorSpec::default()
    }

    #[test]
    fn distance_discount_ramp() {
        let r = 3.0;
        assert_eq!(distance_discount(0.5 * r, r), 1.0);
        assert!((distance_discount(1.5 * r, r) - 0.5).abs() < 1e-12);
        assert_eq!(distance_discount(2.0 * r, r), 0.0);
        assert_eq!(distance_discount(2.0 * r + 1e-9, r), 0.0);
        assert!((distance_discount(r, r) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn angle_discount_values() {
        let fov = FRAC_PI_2;
        assert_eq!(angle_discount((1.0, 0.0), (1.0, 0.0), fov), 1.0);
        assert_eq!(angle_discount((1.0, 0.0), (-1.0, 0.0), fov), 0.0);
        let side = angle_discount((1.0, 0.0), (0.0, 1.0), fov);
        assert!((side - 1.0 / (1.0 + FRAC_PI_4.cos())).abs() < 1e-12);
        // Continuous at the edge of the field of view.
        let (s, c) = (fov / 2.0).sin_cos();
        let edge = angle_discount((1.0, 0.0), (c, s), fov);
        let just_out = angle_discount(
            (1.0, 0.0),
            ((fov / 2.0 + 1e-9).cos(), (fov / 2.0 + 1e-9).sin()),
            fov,
        );
        assert!((edge - just_out).abs() < 1e-8);
    }

    #[test]
    fn own_cell_and_axis_cell_have_full_discount() {
        let g = GridGeometry::new(40, 40, 0.3).unwrap();
        let own = Cell::new(20, 20);
        let (x, y) = g.cell_center(own);
        let f = build_view_filter(&ViewPoint::new(x, y, 0.0), &spec(), &g);
        assert_eq!(f.get(g.index(own)), Some(1.0));
        // Ten cells along the axis, centre R_max away.
        let axis = Cell::new(own.i + 10, own.j);
        assert!((f.get(g.index(axis)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn footprint_is_the_clipped_box() {
        let g = GridGeometry::new(60, 60, 0.3).unwrap();
        let xi = ViewPoint::new(9.0, 9.0, 1.0);
        let f = build_view_filter(&xi, &spec(), &g);
        assert_eq!(f.len(), 41 * 41);
        assert!(f.iter().all(|(_, v)| (0.0..=1.0).contains(&v)));
        for (k, v) in f.iter() {
            let (cx, cy) = g.cell_center(g.cell_at(k));
            if (cx - xi.x).hypot(cy - xi.y) > 6.0 {
                assert_eq!(v, 0.0);
            }
        }
        let corner = build_view_filter(&ViewPoint::new(0.1, 0.1, 0.0), &spec(), &g);
        assert_eq!(corner.len(), 21 * 21);
    }

    #[test]
    fn single_boundary_cell_on_axis() {
        let g = GridGeometry::new(60, 60, 0.3).unwrap();
        let mut values = vec![0.0; g.cell_count()];
        let xi = ViewPoint::new(3.15, 9.15, 0.0);
        // Centre 4.5 m = 1.5·R_max ahead on the axis.
        let target = g.cell_of(3.15 + 4.5, 9.15).unwrap();
        values[g.index(target)] = 1.0;
        let bd = BoundarinessMap::from_values(g, values, BoundarinessParams::default()).unwrap();
        let gain = view_information_gain(&xi, &bd, &spec());
        assert!((gain - 0.5).abs() < 1e-12, "{gain}");
    }

    #[test]
    fn zero_boundariness_means_zero_gain() {
        let g = GridGeometry::new(20, 20, 0.3).unwrap();
        let bd = BoundarinessMap::zeros(g, BoundarinessParams::default());
        assert_eq!(
            view_information_gain(&ViewPoint::new(3.0, 3.0, 0.2), &bd, &spec()),
            0.0
        );
    }

    #[test]
    fn augmentation_count_rules() {
        let p = Path::new(vec![
            ViewPoint::new(0.5, 0.5, 0.0),
            ViewPoint::new(3.5, 0.5, 0.0),
        ])
        .unwrap();
        // L = 3, N = ⌈3 / 0.6⌉ = 5, k = 1.
        assert_eq!(augmentation_count(&p, 0.3), 4);
        let short = Path::new(vec![
            ViewPoint::new(0.5, 0.5, 0.0),
            ViewPoint::new(0.6, 0.5, 0.0),
        ])
        .unwrap();
        assert_eq!(augmentation_count(&short, 0.3), 0);
    }

    #[test]
    fn samples_fall_in_their_strata() {
        let p = Path::new(vec![
            ViewPoint::new(0.5, 0.5, 0.0),
            ViewPoint::new(2.5, 0.5, 0.0),
            ViewPoint::new(2.5, 0.5, 0.0),
            ViewPoint::new(2.5, 3.5, FRAC_PI_2),
        ])
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let s = sample_augmentation(&p, 0.3, &mut rng);
        assert_eq!(s.len(), augmentation_count(&p, 0.3));
        let m = s.len() as f64;
        for (k, sp) in s.iter().enumerate() {
            assert_ne!(sp.segment, 1, "zero-length segment sampled");
            let arc = match sp.segment {
                0 => 2.0 * sp.t,
                _ => 2.0 + 3.0 * sp.t,
            };
            assert!(arc >= k as f64 / m * 5.0 - 1e-12 && arc <= (k + 1) as f64 / m * 5.0 + 1e-12);
        }
    }

    #[test]
    fn interpolation_takes_the_short_arc() {
        let p = Path::new(vec![
            ViewPoint::new(0.0, 0.0, 3.0),
            ViewPoint::new(1.0, 0.0, -3.0),
        ])
        .unwrap();
        let pts = sample_viewpoints(&p, &[SamplePoint { segment: 0, t: 0.5 }]);
        assert!(
            (wrap_angle(pts[0].theta) - PI).abs() < 0.01
                || (wrap_angle(pts[0].theta) + PI).abs() < 0.01
        );
    }

    #[test]
    fn generic_gain_matches_dictionary() {
        let g = GridGeometry::new(24, 24, 0.3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let values: Vec<f64> = (0..g.cell_count())
                .map(|_| {
                    if rng.random::<f64>() < 0.3 {
                        rng.random()
                    } else {
                        0.0
                    }
                })
                .collect();
            let bd =
                BoundarinessMap::from_values(g, values, BoundarinessParams::default()).unwrap();
            let verts: Vec<ViewPoint> = (0..4)
                .map(|_| {
                    ViewPoint::new(
                        rng.random_range(0.3..6.9),
                        rng.random_range(0.3..6.9),
                        rng.random_range(-PI..PI),
                    )
                })
                .collect();
            let path = Path::new(verts).unwrap();
            let samples = sample_augmentation(&path, 0.3, &mut rng);
            let dict = path_information_gain(&path, &bd, &spec(), &samples);
            let pts: Vec<[f64; 3]> = dict.sampled_points.iter().map(|p| p.as_array()).collect();
            let excluded = endpoint_exclusion(&path, &g, &spec());
            let generic = path_gain_ops(&mut Plain, &pts, &bd, &spec(), &excluded);
            assert_eq!(dict.gain.to_bits(), generic.to_bits());
        }
    }
}
