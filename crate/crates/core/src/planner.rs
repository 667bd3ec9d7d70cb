//! Initial guess for the optimizer: a scored goal view-point and an RRT path
//! to it, shortened by random shortcuts.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boundariness::BoundarinessMap;
use crate::error::{Error, Result};
use crate::free_space::FreeSpace;
use crate::geometry::{wrap_angle, Cell, Path, ViewPoint};
use crate::grid_map::LogOddsMap;
use crate::info_gain::in_sensing_cone;
use crate::world_sim::SensorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalScoreParams {
    /// Decay per meter of distance from the robot.
    pub lambda_distance: f64,
    /// Decay per occupied cell near the candidate.
    pub lambda_obstacles: f64,
    /// Half-width in meters of the box in which occupied cells are counted.
    pub obstacle_box: f64,
    /// Number of candidates drawn per selection.
    pub samples: usize,
    /// Candidates closer than this to the robot, in meters, are only used
    /// when no farther candidate scores above zero.
    pub min_distance: f64,
}

impl Default for GoalScoreParams {
    fn default() -> Self {
        Self {
            lambda_distance: 0.1,
            lambda_obstacles: 0.05,
            obstacle_box: 1.0,
            samples: 200,
            min_distance: 1.5,
        }
    }
}

impl GoalScoreParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.lambda_distance) || !unit(self.lambda_obstacles) {
            return Err(Error::param("lambda", "decay weights must lie in (0, 1)"));
        }
        if !(self.obstacle_box >= 0.0) {
            return Err(Error::param("obstacle_box", "must be non-negative"));
        }
        if self.samples == 0 {
            return Err(Error::param("goal_samples", "must be at least 1"));
        }
        if !(self.min_distance >= 0.0) {
            return Err(Error::param("goal_min_distance", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrtParams {
    pub max_iterations: usize,
    /// Longest tree edge in meters.
    pub steer_step: f64,
    pub goal_bias: f64,
    pub shortcut_attempts: usize,
    /// Spacing of the returned vertices, in cells.
    pub vertex_spacing: f64,
    /// Clearance kept from known obstacles, in meters.
    pub inflation: f64,
}

impl Default for RrtParams {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            steer_step: 1.5,
            goal_bias: 0.1,
            shortcut_attempts: 200,
            vertex_spacing: 2.0,
            inflation: 0.0,
        }
    }
}

impl RrtParams {
    /// Defaults with the steering step tied to the sensor range.
    pub fn for_sensor(spec: &SensorSpec) -> Self {
        Self {
            steer_step: 0.5 * spec.max_range,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.steer_step > 0.0 && self.steer_step.is_finite()) {
            return Err(Error::param("steer_step", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(Error::param("goal_bias", "must lie in [0, 1]"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("rrt_iterations", "must be at least 1"));
        }
        if !(self.vertex_spacing > 0.0) {
            return Err(Error::param("vertex_spacing", "must be positive"));
        }
        if !(self.inflation >= 0.0) {
            return Err(Error::param("inflation", "must be non-negative"));
        }
        Ok(())
    }
}

/// Occupied cells whose centre lies in the axis-aligned box of half-width
/// `half` meters around `(x, y)`.
pub fn occupied_in_box(odds: &LogOddsMap, x: f64, y: f64, half: f64) -> usize {
    let g = odds.geometry();
    let reach = (half / g.resolution).ceil() as i64 + 1;
    let Some((is, js)) = g.clipped_box(x, y, reach) else {
        return 0;
    };
    let mut n = 0;
    for j in js {
        for i in is.clone() {
            let c = Cell::new(i, j);
            let (cx, cy) = g.cell_center(c);
            if (cx - x).abs() <= half && (cy - y).abs() <= half && odds.is_occupied(c) {
                n += 1;
            }
        }
    }
    n
}

/// Boundariness inside the sensing cone of `xi`.
pub fn cone_boundariness(xi: &ViewPoint, bd: &BoundarinessMap, spec: &SensorSpec) -> f64 {
    let g = bd.geometry();
    let h = spec.range_in_cells(g.resolution);
    let Some((is, js)) = g.clipped_box(xi.x, xi.y, h + 1) else {
        return 0.0;
    };
    let mut sum = 0.0;
    for j in js {
        for i in is.clone() {
            let c = Cell::new(i, j);
            if in_sensing_cone(xi, g.cell_center(c), spec) {
                sum += bd.get(c);
            }
        }
    }
    sum
}

/// Goal score: boundariness in view, discounted by distance from `start` and
/// by the number of nearby obstacles.
pub fn score_goal_candidate(
    xi: &ViewPoint,
    bd: &BoundarinessMap,
    odds: &LogOddsMap,
    start: &ViewPoint,
    spec: &SensorSpec,
    params: &GoalScoreParams,
) -> f64 {
    let seen = cone_boundariness(xi, bd, spec);
    if seen == 0.0 {
        return 0.0;
    }
    let n_occ = occupied_in_box(odds, xi.x, xi.y, params.obstacle_box) as f64;
    seen * (-params.lambda_distance * start.position_distance(xi)).exp()
        * (-params.lambda_obstacles * n_occ).exp()
}

/// Candidate and its score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalChoice {
    pub goal: ViewPoint,
    pub score: f64,
}

/// Draws `params.samples` view-points uniformly over traversable cells with
/// uniform heading and returns the best; the earliest sample wins ties.
#[allow(clippy::too_many_arguments)]
pub fn select_goal<R: Rng + ?Sized>(
    bd: &BoundarinessMap,
    odds: &LogOddsMap,
    free: &FreeSpace,
    start: &ViewPoint,
    spec: &SensorSpec,
    params: &GoalScoreParams,
    rng: &mut R,
) -> Result<GoalChoice> {
    let cells = free.free_cells();
    if cells.is_empty() {
        return Err(Error::NoGoal("no traversable cell"));
    }
    let res = free.geometry().resolution;
    let mut best: Option<GoalChoice> = None;
    let mut best_near: Option<GoalChoice> = None;
    for _ in 0..params.samples {
        let c = cells[rng.random_range(0..cells.len())];
        let x = (c.i as f64 + rng.random::<f64>()) * res;
        let y = (c.j as f64 + rng.random::<f64>()) * res;
        let theta = wrap_angle(rng.random_range(-PI..PI));
        let xi = ViewPoint::new(x, y, theta);
        if !free.is_free_point(x, y) {
            continue;
        }
        let score = score_goal_candidate(&xi, bd, odds, start, spec, params);
        let slot = if start.position_distance(&xi) < params.min_distance {
            &mut best_near
        } else {
            &mut best
        };
        if slot.is_none_or(|b| score > b.score) {
            *slot = Some(GoalChoice { goal: xi, score });
        }
    }
    match (best, best_near) {
        (Some(far), _) if far.score > 0.0 => Ok(far),
        (far, Some(near)) if far.is_none_or(|f| near.score > f.score) => Ok(near),
        (far, _) => far.ok_or(Error::NoGoal("no candidate landed in free space")),
    }
}

/// RRT from `start` to `goal` through `free`, followed by shortcut smoothing
/// and resampling at `vertex_spacing` cells. Interior headings follow the
/// outgoing segment; both endpoints keep their own heading.
pub fn plan_rrt<R: Rng + ?Sized>(
    start: &ViewPoint,
    goal: &ViewPoint,
    free: &FreeSpace,
    params: &RrtParams,
    rng: &mut R,
) -> Result<Path> {
    params.validate()?;
    if start == goal {
        return Path::new(vec![*start]);
    }
    if !free.is_free_point(start.x, start.y) {
        return Err(Error::InvalidPose {
            x: start.x,
            y: start.y,
            reason: "start is not traversable",
        });
    }
    if !free.is_free_point(goal.x, goal.y) {
        return Err(Error::InvalidPose {
            x: goal.x,
            y: goal.y,
            reason: "goal is not traversable",
        });
    }
    let mut points = grow_tree(start, goal, free, params, rng)?;
    shortcut(&mut points, free, params.shortcut_attempts, rng);
    let spacing = params.vertex_spacing * free.geometry().resolution;
    let points = densify(&points, free, spacing);
    Ok(assign_headings(&points, start, goal))
}

fn pose(p: (f64, f64)) -> ViewPoint {
    ViewPoint::new(p.0, p.1, 0.0)
}

fn grow_tree<R: Rng + ?Sized>(
    start: &ViewPoint,
    goal: &ViewPoint,
    free: &FreeSpace,
    params: &RrtParams,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    let s = (start.x, start.y);
    let g = (goal.x, goal.y);
    if free.segment_is_free(&pose(s), &pose(g)) {
        return Ok(vec![s, g]);
    }
    let (w, h) = free.geometry().extent();
    let mut nodes: Vec<(f64, f64)> = vec![s];
    let mut parent: Vec<usize> = vec![0];
    for _ in 0..params.max_iterations {
        let target = if rng.random::<f64>() < params.goal_bias {
            g
        } else {
            (rng.random::<f64>() * w, rng.random::<f64>() * h)
        };
        let (near, d2) = nodes
            .iter()
            .enumerate()
            .map(|(k, p)| (k, (p.0 - target.0).powi(2) + (p.1 - target.1).powi(2)))
            .fold(
                (0, f64::INFINITY),
                |best, cur| if cur.1 < best.1 { cur } else { best },
            );
        let d = d2.sqrt();
        if d == 0.0 {
            continue;
        }
        let from = nodes[near];
        let reach = d.min(params.steer_step);
        let new = (
            from.0 + (target.0 - from.0) * reach / d,
            from.1 + (target.1 - from.1) * reach / d,
        );
        if !free.segment_is_free(&pose(from), &pose(new)) {
            continue;
        }
        nodes.push(new);
        parent.push(near);
        if free.segment_is_free(&pose(new), &pose(g)) {
            let mut chain = vec![g];
            let mut k = nodes.len() - 1;
            loop {
                chain.push(nodes[k]);
                if k == 0 {
                    break;
                }
                k = parent[k];
            }
            chain.reverse();
            chain.dedup();
            return Ok(chain);
        }
    }
    Err(Error::PlanningFailure {
        iterations: params.max_iterations,
    })
}

fn polyline_length(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
        .sum()
}

/// Point at arc length `s` and the index of the segment holding it.
fn point_at(points: &[(f64, f64)], mut s: f64) -> (usize, (f64, f64)) {
    for k in 0..points.len() - 1 {
        let (a, b) = (points[k], points[k + 1]);
        let len = (b.0 - a.0).hypot(b.1 - a.1);
        if s <= len || k + 2 == points.len() {
            let t = if len > 0.0 {
                (s / len).clamp(0.0, 1.0)
            } else {
                0.0
            };
            return (k, (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
        s -= len;
    }
    (0, points[0])
}

/// Random shortcuts between two points on the polyline. A replacement is kept
/// only when it is collision-free and strictly shorter.
pub fn shortcut<R: Rng + ?Sized>(
    points: &mut Vec<(f64, f64)>,
    free: &FreeSpace,
    attempts: usize,
    rng: &mut R,
) {
    for _ in 0..attempts {
        if points.len() < 3 {
            return;
        }
        let total = polyline_length(points);
        let mut s1 = rng.random::<f64>() * total;
        let mut s2 = rng.random::<f64>() * total;
        if s1 > s2 {
            std::mem::swap(&mut s1, &mut s2);
        }
        let (k1, p1) = point_at(points, s1);
        let (k2, p2) = point_at(points, s2);
        if k1 == k2 {
            continue;
        }
        if !free.segment_is_free(&pose(p1), &pose(p2)) {
            continue;
        }
        let mut next: Vec<(f64, f64)> = points[..=k1].to_vec();
        next.push(p1);
        next.push(p2);
        next.extend_from_slice(&points[k2 + 1..]);
        next.dedup();
        let all_free = next
            .windows(2)
            .all(|w| free.segment_is_free(&pose(w[0]), &pose(w[1])));
        if all_free && polyline_length(&next) < total {
            *points = next;
        }
    }
}

/// Splits every segment into pieces no longer than `spacing`, keeping a
/// segment whole when one of its pieces would fail the collision check.
fn densify(points: &[(f64, f64)], free: &FreeSpace, spacing: f64) -> Vec<(f64, f64)> {
    let mut out = vec![points[0]];
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b.0 - a.0).hypot(b.1 - a.1);
        let pieces = (len / spacing).ceil().max(1.0) as usize;
        let split: Vec<(f64, f64)> = (1..=pieces)
            .map(|k| {
                let t = k as f64 / pieces as f64;
                if k == pieces {
                    b
                } else {
                    (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
                }
            })
            .collect();
        let mut prev = a;
        let ok = split.iter().all(|p| {
            let fine = free.segment_is_free(&pose(prev), &pose(*p));
            prev = *p;
            fine
        });
        if ok {
            out.extend(split);
        } else {
            out.push(b);
        }
    }
    out
}

fn assign_headings(points: &[(f64, f64)], start: &ViewPoint, goal: &ViewPoint) -> Path {
    let n = points.len();
    let vertices = points
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let theta = if k == 0 {
                start.theta
            } else if k + 1 == n {
                goal.theta
            } else {
                let q = points[k + 1];
                (q.1 - p.1).atan2(q.0 - p.0)
            };
            ViewPoint::new(p.0, p.1, wrap_angle(theta))
        })
        .collect();
    Path::new(vertices).expect("at least the start vertex")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundariness::BoundarinessParams;
    use crate::geometry::GridGeometry;
    use rand::SeedableRng;

    fn open_map(n: usize) -> LogOddsMap {
        let g = GridGeometry::new(n, n, 0.3).unwrap();
        let mut m = LogOddsMap::new(g);
        for c in g.cells() {
            m.set(c, -1.0);
        }
        m
    }

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn degenerate_query_gives_single_vertex() {
        let m = open_map(10);
        let free = FreeSpace::from_log_odds(&m, 0.0);
        let p = ViewPoint::new(1.0, 1.0, 0.3);
        let path = plan_rrt(&p, &p, &free, &RrtParams::default(), &mut rng(0)).unwrap();
        assert_eq!(path.len(), 1);
    }

    #[test]
    fn open_room_path_is_nearly_straight() {
        let m = open_map(10);
        let free = FreeSpace::from_log_odds(&m, 0.0);
        let a = ViewPoint::new(0.15, 0.15, 0.0);
        let b = ViewPoint::new(2.85, 2.85, 1.0);
        let path = plan_rrt(&a, &b, &free, &RrtParams::default(), &mut rng(1)).unwrap();
        assert!(path.length() <= 1.2 * a.position_distance(&b));
        assert_eq!(path.start(), a);
        assert_eq!(path.goal(), b);
    }

    #[test]
    fn detour_around_a_wall_is_collision_free() {
        let mut m = open_map(20);
        for j in 0..15 {
            m.set(Cell::new(10, j), 2.0);
        }
        let free = FreeSpace::from_log_odds(&m, 0.0);
        let a = ViewPoint::new(1.0, 1.0, 0.0);
        let b = ViewPoint::new(5.0, 1.0, 0.0);
        for seed in 0..5 {
            let path = plan_rrt(&a, &b, &free, &RrtParams::default(), &mut rng(seed)).unwrap();
            assert_eq!(free.first_collision(&path), None);
            for w in path.vertices().windows(2) {
                for k in 0..=100 {
                    let p = w[0].interpolate(&w[1], k as f64 / 100.0);
                    assert!(free.is_free_point(p.x, p.y));
                }
                assert!(wrap_angle(w[1].theta - w[0].theta).abs() <= PI);
            }
        }
    }

    #[test]
    fn unreachable_goal_fails() {
        let mut m = open_map(12);
        for j in 0..12 {
            m.set(Cell::new(6, j), 2.0);
        }
        let free = FreeSpace::from_log_odds(&m, 0.0);
        let params = RrtParams {
            max_iterations: 300,
            ..RrtParams::default()
        };
        let r = plan_rrt(
            &ViewPoint::new(0.5, 0.5, 0.0),
            &ViewPoint::new(3.0, 0.5, 0.0),
            &free,
            &params,
            &mut rng(3),
        );
        assert!(matches!(r, Err(Error::PlanningFailure { iterations: 300 })));
    }

    #[test]
    fn goal_score_factors() {
        let m = open_map(32);
        let g = *m.geometry();
        let mut values = vec![0.0; g.cell_count()];
        values[g.index(Cell::new(20, 16))] = 1.0;
        let bd = BoundarinessMap::from_values(g, values, BoundarinessParams::default()).unwrap();
        let spec = SensorSpec::default();
        let params = GoalScoreParams::default();
        let xi = ViewPoint::new(5.0, 4.95, 0.0);
        let start = ViewPoint::new(2.0, 4.95, 0.0);
        let s = score_goal_candidate(&xi, &bd, &m, &start, &spec, &params);
        assert!((s - (-0.3f64).exp()).abs() < 1e-12);

        let far = ViewPoint::new(0.5, 4.95, 0.0);
        assert!(score_goal_candidate(&xi, &bd, &m, &far, &spec, &params) < s);

        let mut walled = m.clone();
        for j in 14..=18 {
            walled.set(Cell::new(15, j), 2.0);
        }
        // Cell centres at x = 4.65 fall inside the 1 m box around x = 5.0.
        let n = occupied_in_box(&walled, xi.x, xi.y, 1.0);
        assert_eq!(n, 5);
        let sw = score_goal_candidate(&xi, &bd, &walled, &start, &spec, &params);
        assert!((sw - s * (-0.05 * 5.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn goal_selection_tie_goes_to_first_sample() {
        let m = open_map(16);
        let free = FreeSpace::from_log_odds(&m, 0.0);
        let bd = BoundarinessMap::zeros(*m.geometry(), BoundarinessParams::default());
        let spec = SensorSpec::default();
        let params = GoalScoreParams {
            min_distance: 0.0,
            ..GoalScoreParams::default()
        };
        let start = ViewPoint::new(1.0, 1.0, 0.0);
        let choice = select_goal(&bd, &m, &free, &start, &spec, &params, &mut rng(7)).unwrap();
        let single = GoalScoreParams {
            samples: 1,
            ..params
        };
        let first = select_goal(&bd, &m, &free, &start, &spec, &single, &mut rng(7)).unwrap();
        assert_eq!(choice.goal, first.goal);
        assert_eq!(choice.score, 0.0);
    }

    #[test]
    fn nearby_goals_only_when_nothing_farther_scores() {
        let m = open_map(16);
        let free = FreeSpace::from_log_odds(&m, 0.0);
        let g = *m.geometry();
        let spec = SensorSpec::default();
        let start = ViewPoint::new(2.4, 2.4, 0.0);
        let params = GoalScoreParams::default();
        // One bright cell next to the robot: everything that sees it from
        // beyond the minimum distance still wins over closer candidates.
        let mut values = vec![0.0; g.cell_count()];
        values[g.index(Cell::new(9, 8))] = 1.0;
        let bd = BoundarinessMap::from_values(g, values, BoundarinessParams::default()).unwrap();
        let choice = select_goal(&bd, &m, &free, &start, &spec, &params, &mut rng(3)).unwrap();
        assert!(choice.score > 0.0);
        assert!(start.position_distance(&choice.goal) >= params.min_distance);
        // Nothing scores from afar when the minimum distance exceeds the map.
        let far = GoalScoreParams {
            min_distance: 100.0,
            ..params
        };
        let near = select_goal(&bd, &m, &free, &start, &spec, &far, &mut rng(3)).unwrap();
        assert!(near.score > 0.0);
    }

    #[test]
    fn no_free_cell_means_no_goal() {
        let g = GridGeometry::new(5, 5, 0.3).unwrap();
        let m = LogOddsMap::new(g);
        let free = FreeSpace::from_log_odds(&m, 0.0);
        let bd = BoundarinessMap::zeros(g, BoundarinessParams::default());
        let r = select_goal(
            &bd,
            &m,
            &free,
            &ViewPoint::new(0.5, 0.5, 0.0),
            &SensorSpec::default(),
            &GoalScoreParams::default(),
            &mut rng(0),
        );
        assert!(matches!(r, Err(Error::NoGoal(_))));
    }
}
