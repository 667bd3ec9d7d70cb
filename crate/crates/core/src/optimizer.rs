//! Smoothness-plus-information objective over the interior vertices of a path
//! and a guarded gradient descent on it.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Ops, Plain, Tape};
use crate::boundariness::BoundarinessMap;
use crate::error::{Error, Result};
use crate::free_space::FreeSpace;
use crate::geometry::{wrap_angle, Path, ViewPoint};
use crate::info_gain::{
    endpoint_exclusion, footprint_box, interpolate_ops, path_gain_ops, sample_viewpoints,
    view_discount, wrapped_difference, SamplePoint,
};
use crate::world_sim::SensorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParams {
    /// Smoothness weight α.
    pub alpha: f64,
    /// Diagonal of W for `(x, y, θ)`.
    pub weights: [f64; 3],
}

impl Default for ObjectiveParams {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            weights: [1.0, 1.0, 0.1],
        }
    }
}

impl ObjectiveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", "must be non-negative"));
        }
        if self.weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::param("weights", "diagonal entries must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub smoothness: f64,
    pub gain: f64,
    /// `α · smoothness − gain`.
    pub value: f64,
}

/// `f(Ξ) = α Σ ‖ξᵢ − ξᵢ₋₁‖²_W − IG_path(Ξ)` as a function of the interior
/// vertices, with the endpoints, boundariness snapshot and augmentation
/// samples frozen.
#[derive(Debug, Clone)]
pub struct Objective {
    params: ObjectiveParams,
    bd: BoundarinessMap,
    spec: SensorSpec,
    start: ViewPoint,
    goal: ViewPoint,
    interior_len: usize,
    samples: Vec<SamplePoint>,
    excluded: Vec<bool>,
}

impl Objective {
    pub fn new(
        path: &Path,
        bd: &BoundarinessMap,
        spec: &SensorSpec,
        params: ObjectiveParams,
        samples: Vec<SamplePoint>,
    ) -> Result<Self> {
        params.validate()?;
        if path.len() < 2 {
            return Err(Error::param("path", "needs at least two vertices"));
        }
        if let Some(s) = samples.iter().find(|s| s.segment + 1 >= path.len()) {
            return Err(Error::param(
                "samples",
                format!("segment {} does not exist", s.segment),
            ));
        }
        Ok(Self {
            params,
            bd: bd.clone(),
            spec: *spec,
            start: path.start(),
            goal: path.goal(),
            interior_len: path.len() - 2,
            samples,
            excluded: endpoint_exclusion(path, bd.geometry(), spec),
        })
    }

    pub fn params(&self) -> &ObjectiveParams {
        &self.params
    }

    pub fn samples(&self) -> &[SamplePoint] {
        &self.samples
    }

    pub fn interior_len(&self) -> usize {
        self.interior_len
    }

    pub fn path_with(&self, interior: &[ViewPoint]) -> Path {
        let mut v = Vec::with_capacity(interior.len() + 2);
        v.push(self.start);
        v.extend_from_slice(interior);
        v.push(self.goal);
        Path::new(v).expect("non-empty")
    }

    fn check(&self, interior: &[ViewPoint]) -> Result<()> {
        if interior.len() != self.interior_len {
            return Err(Error::param(
                "interior",
                format!(
                    "expected {} vertices, got {}",
                    self.interior_len,
                    interior.len()
                ),
            ));
        }
        let g = self.bd.geometry();
        for p in interior {
            if !(p.x.is_finite() && p.y.is_finite() && p.theta.is_finite()) {
                return Err(Error::InvalidPose {
                    x: p.x,
                    y: p.y,
                    reason: "non-finite coordinate",
                });
            }
            if !g.contains_point(p.x, p.y) {
                return Err(Error::InvalidPose {
                    x: p.x,
                    y: p.y,
                    reason: "outside the map",
                });
            }
        }
        Ok(())
    }

    fn build<O: Ops>(&self, ops: &mut O, interior: &[[O::S; 3]]) -> (O::S, O::S, O::S) {
        let mut verts: Vec<[O::S; 3]> = Vec::with_capacity(interior.len() + 2);
        let constant = |ops: &mut O, p: &ViewPoint| {
            [ops.constant(p.x), ops.constant(p.y), ops.constant(p.theta)]
        };
        verts.push(constant(ops, &self.start));
        verts.extend_from_slice(interior);
        verts.push(constant(ops, &self.goal));

        let w = self.params.weights;
        let mut pairs = Vec::with_capacity(verts.len() - 1);
        for pair in verts.windows(2) {
            let dx = ops.sub(pair[1][0], pair[0][0]);
            let dy = ops.sub(pair[1][1], pair[0][1]);
            let dt = wrapped_difference(ops, pair[0][2], pair[1][2]);
            let terms = [
                (ops.square(dx), w[0]),
                (ops.square(dy), w[1]),
                (ops.square(dt), w[2]),
            ];
            pairs.push((ops.weighted_sum(&terms), 1.0));
        }
        let smoothness = ops.weighted_sum(&pairs);

        let mut points: Vec<[O::S; 3]> = interior.to_vec();
        for s in &self.samples {
            points.push(interpolate_ops(
                ops,
                &verts[s.segment],
                &verts[s.segment + 1],
                s.t,
            ));
        }
        let gain = path_gain_ops(ops, &points, &self.bd, &self.spec, &self.excluded);
        let value = ops.weighted_sum(&[(smoothness, self.params.alpha), (gain, -1.0)]);
        (smoothness, gain, value)
    }

    pub fn terms(&self, interior: &[ViewPoint]) -> Result<ObjectiveTerms> {
        self.check(interior)?;
        let coords: Vec<[f64; 3]> = interior.iter().map(|p| p.as_array()).collect();
        let (smoothness, gain, value) = self.build(&mut Plain, &coords);
        if !value.is_finite() {
            return Err(Error::Numerical { vertex: 0 });
        }
        Ok(ObjectiveTerms {
            smoothness,
            gain,
            value,
        })
    }

    pub fn evaluate(&self, interior: &[ViewPoint]) -> Result<f64> {
        Ok(self.terms(interior)?.value)
    }

    /// Objective terms and `∂f/∂(x, y, θ)` for every interior vertex.
    pub fn gradient(&self, interior: &[ViewPoint]) -> Result<(ObjectiveTerms, Vec<[f64; 3]>)> {
        self.check(interior)?;
        let mut tape = Tape::new();
        let inputs: Vec<[_; 3]> = interior
            .iter()
            .map(|p| [tape.input(p.x), tape.input(p.y), tape.input(p.theta)])
            .collect();
        let (smoothness, gain, value) = self.build(&mut tape, &inputs);
        let terms = ObjectiveTerms {
            smoothness: smoothness.value(),
            gain: gain.value(),
            value: value.value(),
        };
        let flat = tape.gradient(value);
        let grad: Vec<[f64; 3]> = flat.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        if let Some(vertex) = grad.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numerical { vertex: vertex + 1 });
        }
        if !terms.value.is_finite() {
            return Err(Error::Numerical { vertex: 0 });
        }
        Ok((terms, grad))
    }

    /// Smallest distance of the configuration to a switch between branches
    /// of the piecewise objective: distance and field-of-view thresholds of
    /// every contributing cell, near-ties in the max-union and the ±π wrap of
    /// consecutive headings. Finite differences are only meaningful when this
    /// margin exceeds the step.
    pub fn branch_margin(&self, interior: &[ViewPoint]) -> f64 {
        let path = self.path_with(interior);
        let mut margin = f64::INFINITY;
        for pair in path.vertices().windows(2) {
            let d = wrap_angle(pair[1].theta - pair[0].theta);
            margin = margin.min((d.abs() - std::f64::consts::PI).abs());
        }
        let points = sample_viewpoints(&path, &self.samples);
        let g = self.bd.geometry();
        let values = self.bd.values();
        let r = self.spec.max_range;
        let c = (self.spec.fov / 2.0).cos();
        let mut best: Vec<(f64, f64)> = vec![(0.0, 0.0); g.cell_count()];
        for xi in &points {
            let Some((is, js)) = footprint_box(xi, g, &self.spec) else {
                continue;
            };
            let (ct, st) = xi.heading();
            for j in js {
                for i in is.clone() {
                    let cell = crate::geometry::Cell::new(i, j);
                    let idx = g.index(cell);
                    if self.excluded[idx] || values[idx] == 0.0 {
                        continue;
                    }
                    let (cx, cy) = g.cell_center(cell);
                    let (dx, dy) = (cx - xi.x, cy - xi.y);
                    let delta = dx.hypot(dy);
                    margin = margin.min(delta).min((delta - 2.0 * r).abs());
                    if delta > 2.0 * r {
                        continue;
                    }
                    margin = margin.min((delta - r).abs());
                    margin = margin.min(((ct * dx + st * dy) / delta - c).abs());
                    let phi = view_discount(xi, (cx, cy), &self.spec);
                    let b = &mut best[idx];
                    if phi > b.0 {
                        *b = (phi, b.0);
                    } else if phi > b.1 {
                        b.1 = phi;
                    }
                }
            }
        }
        for (top, second) in best {
            if top < 1.0 && second > 0.0 {
                margin = margin.min(top - second);
            }
        }
        margin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Initial per-vertex step size η.
    pub step_size: f64,
    pub max_iterations: usize,
    /// Stop once an accepted step changes f by less than this.
    pub tolerance: f64,
    /// Factor applied to a vertex's step size when its step is rejected.
    pub shrink: f64,
    /// Largest translation of a vertex in one step, in meters.
    pub max_translation: f64,
    /// Largest rotation of a vertex in one step, in radians.
    pub max_rotation: f64,
    pub collision_check: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            max_iterations: 10,
            tolerance: 1e-4,
            shrink: 0.5,
            max_translation: 0.15,
            max_rotation: 0.3,
            collision_check: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::param("step_size", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be at least 1"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::param("tolerance", "must be non-negative"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::param("shrink", "must lie in (0, 1)"));
        }
        if !(self.max_translation > 0.0 && self.max_rotation > 0.0) {
            return Err(Error::param(
                "max_translation",
                "step limits must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub value: f64,
    pub smoothness: f64,
    pub gain: f64,
    /// Vertices whose step was kept.
    pub accepted: usize,
    /// Vertices whose step was undone.
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub path: Path,
    pub initial: ObjectiveTerms,
    pub last: ObjectiveTerms,
    pub trace: Vec<TraceRow>,
}

impl OptimizationResult {
    /// Objective values of the accepted iterates, in order.
    pub fn accepted_values(&self) -> Vec<f64> {
        std::iter::once(self.initial.value)
            .chain(
                self.trace
                    .iter()
                    .filter(|r| r.accepted > 0)
                    .map(|r| r.value),
            )
            .collect()
    }
}

const MIN_STEP: f64 = 1e-9;

/// Gradient descent on the interior vertices.
///
/// Each vertex moves by `−ηᵢ ∇ᵢf`, clipped to the configured translation and
/// rotation limits. A vertex whose new position or incident segments leave
/// `free` is put back and its ηᵢ shrunk; if the surviving moves raise f, all
/// of them are undone and shrunk. The returned path never has a larger
/// objective than the input.
pub fn optimize_path(
    path: &Path,
    objective: &Objective,
    config: &OptimizerConfig,
    free: &FreeSpace,
) -> Result<OptimizationResult> {
    config.validate()?;
    if config.collision_check {
        if let Some(vertex) = free.first_collision(path) {
            return Err(Error::PathInCollision { vertex });
        }
    }
    let mut interior = path.interior().to_vec();
    let (mut terms, mut grad) = objective.gradient(&interior)?;
    let initial = terms;
    let mut trace = vec![TraceRow {
        iteration: 0,
        value: terms.value,
        smoothness: terms.smoothness,
        gain: terms.gain,
        accepted: 0,
        rejected: 0,
    }];
    if interior.is_empty() {
        return Ok(OptimizationResult {
            path: path.clone(),
            initial,
            last: terms,
            trace,
        });
    }
    let mut eta = vec![config.step_size; interior.len()];
    let start = path.start();
    let goal = path.goal();

    for iteration in 1..=config.max_iterations {
        let mut candidate = interior.clone();
        let mut moved = vec![false; interior.len()];
        for (k, (p, g)) in interior.iter().zip(&grad).enumerate() {
            let mut dx = eta[k] * g[0];
            let mut dy = eta[k] * g[1];
            let mut dt = eta[k] * g[2];
            let norm = dx.hypot(dy);
            if norm > config.max_translation {
                dx *= config.max_translation / norm;
                dy *= config.max_translation / norm;
            }
            dt = dt.clamp(-config.max_rotation, config.max_rotation);
            if dx == 0.0 && dy == 0.0 && dt == 0.0 {
                continue;
            }
            candidate[k] = ViewPoint::new(p.x - dx, p.y - dy, wrap_angle(p.theta - dt));
            moved[k] = true;
        }
        if !moved.iter().any(|m| *m) {
            break;
        }

        let mut rejected = 0;
        if config.collision_check {
            loop {
                let mut changed = false;
                for k in 0..candidate.len() {
                    if !moved[k] {
                        continue;
                    }
                    let prev = if k == 0 { start } else { candidate[k - 1] };
                    let next = if k + 1 == candidate.len() {
                        goal
                    } else {
                        candidate[k + 1]
                    };
                    if !free.segment_is_free(&prev, &candidate[k])
                        || !free.segment_is_free(&candidate[k], &next)
                    {
                        candidate[k] = interior[k];
                        moved[k] = false;
                        eta[k] *= config.shrink;
                        rejected += 1;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            // Reverting a vertex can leave a moved neighbour on a blocked
            // segment; the loop above settles that. A fully reverted
            // candidate is the input, which is collision-free.
        }
        let accepted_count = moved.iter().filter(|m| **m).count();
        if accepted_count == 0 {
            trace.push(TraceRow {
                iteration,
                value: terms.value,
                smoothness: terms.smoothness,
                gain: terms.gain,
                accepted: 0,
                rejected,
            });
            if eta.iter().all(|e| *e < MIN_STEP) {
                break;
            }
            continue;
        }

        let trial = objective.terms(&candidate)?;
        if trial.value > terms.value {
            for (k, m) in moved.iter().enumerate() {
                if *m {
                    eta[k] *= config.shrink;
                }
            }
            trace.push(TraceRow {
                iteration,
                value: terms.value,
                smoothness: terms.smoothness,
                gain: terms.gain,
                accepted: 0,
                rejected: rejected + accepted_count,
            });
            if eta.iter().all(|e| *e < MIN_STEP) {
                break;
            }
            continue;
        }

        let decrease = terms.value - trial.value;
        interior = candidate;
        let (t, g) = objective.gradient(&interior)?;
        terms = t;
        grad = g;
        trace.push(TraceRow {
            iteration,
            value: terms.value,
            smoothness: terms.smoothness,
            gain: terms.gain,
            accepted: accepted_count,
            rejected,
        });
        if decrease < config.tolerance {
            break;
        }
    }

    Ok(OptimizationResult {
        path: objective.path_with(&interior),
        initial,
        last: terms,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    /// Largest `|g − fd| / max(1, |g|, |fd|)` over all coordinates.
    pub max_relative_error: f64,
    pub worst_vertex: usize,
    pub worst_coordinate: usize,
    pub coordinates: usize,
}

/// Compares the recorded gradient with central finite differences.
pub fn gradient_check(
    objective: &Objective,
    interior: &[ViewPoint],
    step: f64,
) -> Result<GradientCheck> {
    let (_, grad) = objective.gradient(interior)?;
    let mut out = GradientCheck {
        max_relative_error: 0.0,
        worst_vertex: 0,
        worst_coordinate: 0,
        coordinates: 0,
    };
    let mut probe = interior.to_vec();
    for k in 0..interior.len() {
        for c in 0..3 {
            let base = interior[k].as_array();
            let mut at = |offset: f64| -> Result<f64> {
                let mut a = base;
                a[c] += offset;
                probe[k] = ViewPoint::new(a[0], a[1], a[2]);
                objective.evaluate(&probe)
            };
            let fd = (at(step)? - at(-step)?) / (2.0 * step);
            probe[k] = interior[k];
            let g = grad[k][c];
            let err = (g - fd).abs() / 1f64.max(g.abs()).max(fd.abs());
            out.coordinates += 1;
            if err > out.max_relative_error {
                out.max_relative_error = err;
                out.worst_vertex = k + 1;
                out.worst_coordinate = c;
            }
        }
    }
    Ok(out)
}
