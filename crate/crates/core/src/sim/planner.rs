//! Grid shortest paths and the pursuit follower that turns them into atomic
//! actions.
//!
//! Planning runs Dijkstra over the 8-connected free cells (no corner cutting)
//! with a penalty on cells adjacent to obstacles, then string-pulls the cell
//! path through cells that keep a one-cell clearance. The follower chases a
//! carrot a fixed distance ahead on that polyline, turning in whole
//! `turn_step` increments and stepping forward once aligned.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use super::pose::{distance, heading_delta, kinematic_step, Point, Pose};
use super::world::{Cell, World};
use crate::grammar::{Action, ActionUnits};

/// Cost multiplier for entering a cell next to an obstacle.
const NEAR_WALL_PENALTY: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("goal is not reachable from ({x:.3}, {y:.3})")]
    Unreachable { x: f64, y: f64 },
    #[error("follower made no progress within {0} steps")]
    Stalled(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FollowerConfig {
    /// Distance of the pursuit point ahead of the agent along the path.
    pub lookahead_m: f64,
}

impl Default for FollowerConfig {
    fn default() -> Self {
        Self { lookahead_m: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    /// Starts at the query position, ends at the goal.
    pub polyline: Vec<Point>,
    pub length: f64,
}

/// Atomic actions (ending in `stop`) and the poses they visit.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionPlan {
    pub actions: Vec<Action>,
    pub poses: Vec<Pose>,
    pub geodesic_length: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    index: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn is_clear(world: &World, c: isize, r: isize) -> bool {
    (-1..=1).all(|dr| (-1..=1).all(|dc| !world.is_occupied(c + dc, r + dr)))
}

/// Cheapest cell path between two free cells.
pub fn grid_path(world: &World, from: Cell, to: Cell) -> Option<Vec<Cell>> {
    let cols = world.cols();
    let n = cols * world.rows();
    let idx = |c: Cell| c.1 * cols + c.0;
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[idx(from)] = 0.0;
    heap.push(Entry {
        cost: 0.0,
        index: idx(from),
    });
    while let Some(Entry { cost, index }) = heap.pop() {
        if index == idx(to) {
            break;
        }
        if cost > dist[index] {
            continue;
        }
        let (c, r) = ((index % cols) as isize, (index / cols) as isize);
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (nc, nr) = (c + dc, r + dr);
                if world.is_occupied(nc, nr) {
                    continue;
                }
                if dr != 0 && dc != 0 && (world.is_occupied(c + dc, r) || world.is_occupied(c, r + dr)) {
                    continue;
                }
                let base = if dr != 0 && dc != 0 {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                let penalty = if is_clear(world, nc, nr) {
                    1.0
                } else {
                    NEAR_WALL_PENALTY
                };
                let next = nr as usize * cols + nc as usize;
                let nd = cost + base * penalty;
                if nd < dist[next] {
                    dist[next] = nd;
                    prev[next] = index;
                    heap.push(Entry {
                        cost: nd,
                        index: next,
                    });
                }
            }
        }
    }
    if !dist[idx(to)].is_finite() {
        return None;
    }
    let mut path = vec![to];
    let mut cur = idx(to);
    while cur != idx(from) {
        cur = prev[cur];
        path.push((cur % cols, cur / cols));
    }
    path.reverse();
    Some(path)
}

fn line_clear(world: &World, a: Point, b: Point) -> bool {
    !world.segment_hits(a, b, |c, r| !is_clear(world, c, r))
}

/// Polyline from `from` to the goal.
pub fn plan(world: &World, from: Point) -> Result<Plan, PlanError> {
    let unreachable = PlanError::Unreachable {
        x: from[0],
        y: from[1],
    };
    let start = world.cell_of(from).ok_or(unreachable.clone())?;
    let goal = world.cell_of(world.goal).ok_or(unreachable.clone())?;
    let cells = grid_path(world, start, goal).ok_or(unreachable)?;
    let centers: Vec<Point> = cells.iter().map(|&c| world.cell_center(c)).collect();

    let mut polyline = vec![from];
    let mut anchor = 0;
    // From the raw position skip the start cell center whenever the next
    // center is directly visible; doubling back through it stalls pursuit.
    if centers.len() > 1 && world.segment_blocked(from, centers[1]) {
        polyline.push(centers[0]);
    }
    while anchor + 1 < centers.len() {
        let from_pt = centers[anchor];
        let next = (anchor + 2..centers.len())
            .rev()
            .find(|&j| line_clear(world, from_pt, centers[j]))
            .unwrap_or(anchor + 1);
        polyline.push(centers[next]);
        anchor = next;
    }
    if polyline.len() == 1 {
        polyline.push(world.goal);
    }
    *polyline.last_mut().expect("non-empty") = world.goal;
    let length = polyline.windows(2).map(|w| distance(w[0], w[1])).sum();
    Ok(Plan { polyline, length })
}

/// Arclength pursuit along a polyline. Progress never moves backwards, so a
/// path that doubles back on itself cannot trap the follower.
struct Pursuit<'a> {
    polyline: &'a [Point],
    /// Arclength at the start of each vertex.
    cumulative: Vec<f64>,
    progress: f64,
}

impl<'a> Pursuit<'a> {
    fn new(polyline: &'a [Point]) -> Self {
        let mut cumulative = vec![0.0];
        for w in polyline.windows(2) {
            cumulative.push(cumulative.last().expect("non-empty") + distance(w[0], w[1]));
        }
        Self {
            polyline,
            cumulative,
            progress: 0.0,
        }
    }

    fn segment_at(&self, s: f64) -> usize {
        let last = self.polyline.len() - 2;
        self.cumulative[1..].iter().position(|&c| c > s).unwrap_or(last).min(last)
    }

    fn point_at(&self, s: f64) -> Point {
        let total = *self.cumulative.last().expect("non-empty");
        if s >= total {
            return *self.polyline.last().expect("non-empty");
        }
        let i = self.segment_at(s);
        let (a, b) = (self.polyline[i], self.polyline[i + 1]);
        let len = self.cumulative[i + 1] - self.cumulative[i];
        let f = if len > 0.0 { (s - self.cumulative[i]) / len } else { 0.0 };
        [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
    }

    /// Projects `pos` onto the next few segments and returns the point
    /// `lookahead` further along the path.
    fn carrot(&mut self, pos: Point, lookahead: f64) -> Point {
        let first = self.segment_at(self.progress);
        let last = self.polyline.len() - 1;
        let mut best = (f64::INFINITY, self.progress);
        for i in first..last.min(first + 4) {
            let (a, b) = (self.polyline[i], self.polyline[i + 1]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let t = if len2 > 0.0 {
                (((pos[0] - a[0]) * d[0] + (pos[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let proj = [a[0] + t * d[0], a[1] + t * d[1]];
            let dist = distance(pos, proj);
            if dist < best.0 - 1e-12 {
                best = (dist, self.cumulative[i] + t * len2.sqrt());
            }
        }
        self.progress = self.progress.max(best.1);
        let total = *self.cumulative.last().expect("non-empty");
        let mut ahead = lookahead;
        loop {
            let target = self.point_at(self.progress + ahead);
            if distance(target, pos) > 1e-6 || self.progress + ahead >= total {
                return target;
            }
            ahead += lookahead;
        }
    }
}

/// Whether a forward step on the heading nearest the goal bearing gets
/// closer to the goal; only consulted within one step of it.
fn closer_step_exists(cur: &Pose, goal: Point, units: &ActionUnits) -> bool {
    let d = cur.distance_to(goal);
    if d >= units.forward_m() {
        return true;
    }
    let turn = units.turn();
    let bearing = (goal[1] - cur.y).atan2(goal[0] - cur.x).to_degrees();
    let aligned = Pose::new(cur.x, cur.y, (bearing / turn).round() * turn);
    kinematic_step(&aligned, Action::Forward, units).distance_to(goal) < d - 1e-9
}

/// Simulates the follower from `pose` until it is within half a forward step
/// of the goal, or no aligned step gets closer, then appends `stop`.
pub fn plan_actions(
    world: &World,
    pose: &Pose,
    units: &ActionUnits,
    follower: &FollowerConfig,
) -> Result<ActionPlan, PlanError> {
    let route = plan(world, pose.position())?;
    let step = units.forward_m();
    let turn = units.turn();
    let budget = 200 + (20.0 * route.length / step) as usize;
    let mut actions = Vec::new();
    let mut poses = vec![*pose];
    let mut cur = *pose;
    let mut pursuit = Pursuit::new(&route.polyline);
    loop {
        if cur.distance_to(world.goal) <= step / 2.0 + 1e-9 || !closer_step_exists(&cur, world.goal, units) {
            actions.push(Action::Stop);
            poses.push(cur);
            break;
        }
        if actions.len() >= budget {
            return Err(PlanError::Stalled(budget));
        }
        let target = pursuit.carrot(cur.position(), follower.lookahead_m);
        let bearing = (target[1] - cur.y).atan2(target[0] - cur.x).to_degrees();
        let delta = heading_delta(cur.heading, bearing);
        let ideal = (delta / turn).round() as i64;
        // Every turn count, ordered by how far it leaves us from the bearing.
        let half = (180.0 / turn).ceil() as i64;
        let mut candidates: Vec<i64> = (-half..=half).map(|k| ideal + k).collect();
        candidates.sort_by(|a, b| {
            let ea = (delta - *a as f64 * turn).abs();
            let eb = (delta - *b as f64 * turn).abs();
            ea.total_cmp(&eb).then(b.cmp(a))
        });
        let chosen = candidates.into_iter().find(|&k| {
            let probe = Pose::new(cur.x, cur.y, cur.heading + k as f64 * turn);
            let next = kinematic_step(&probe, Action::Forward, units);
            !world.segment_blocked(cur.position(), next.position())
        });
        let Some(k) = chosen else {
            return Err(PlanError::Stalled(actions.len()));
        };
        let action = match k.cmp(&0) {
            Ordering::Equal => Action::Forward,
            Ordering::Greater => Action::TurnLeft,
            Ordering::Less => Action::TurnRight,
        };
        cur = kinematic_step(&cur, action, units);
        actions.push(action);
        poses.push(cur);
    }
    Ok(ActionPlan {
        actions,
        poses,
        geodesic_length: route.length,
    })
}
