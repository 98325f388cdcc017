use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::planner::{plan_actions, FollowerConfig};
use super::policy::Policy;
use super::pose::{self, kinematic_step, Point, Pose};
use super::world::World;
use super::SimError;
use crate::entropy::{chunk_entropy, select_horizon, ChunkPrediction, EntropyError};
use crate::grammar::{flatten, Action, ActionChunk, ActionUnits};

/// How much of each prediction is executed before re-querying the policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExecMode {
    All,
    /// First `k` chunks.
    FixedTrunc(usize),
    Entropy,
}

impl ExecMode {
    /// Per-chunk entropies and the 1-based executed prefix length.
    pub fn horizon(&self, preds: &[ChunkPrediction]) -> Result<(Vec<f64>, usize), EntropyError> {
        let entropies = preds.iter().map(chunk_entropy).collect::<Result<Vec<_>, _>>()?;
        if entropies.is_empty() {
            return Err(EntropyError::EmptyProfile);
        }
        let t_star = match *self {
            ExecMode::All => entropies.len(),
            ExecMode::FixedTrunc(k) => k.clamp(1, entropies.len()),
            ExecMode::Entropy => select_horizon(&entropies)?,
        };
        Ok((entropies, t_star))
    }
}

impl fmt::Display for ExecMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecMode::All => f.write_str("all"),
            ExecMode::FixedTrunc(k) => write!(f, "fixed:{k}"),
            ExecMode::Entropy => f.write_str("entropy"),
        }
    }
}

impl FromStr for ExecMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(ExecMode::All),
            "entropy" => Ok(ExecMode::Entropy),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(ExecMode::FixedTrunc)
                .ok_or_else(|| format!("unknown exec mode {s:?}; expected all, entropy or fixed:<k>")),
        }
    }
}

impl Serialize for ExecMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExecMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Ground-truth route from the world's start.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub path: Vec<Point>,
    /// Length of the planned shortest path.
    pub length: f64,
}

pub fn reference_for(world: &World, units: &ActionUnits) -> Result<Reference, SimError> {
    let plan = plan_actions(world, &world.start, units, &FollowerConfig::default())?;
    Ok(Reference {
        path: dedup_positions(plan.poses.iter().map(Pose::position)),
        length: plan.geodesic_length,
    })
}

/// Positions with consecutive repeats removed.
pub fn dedup_positions(points: impl IntoIterator<Item = Point>) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::new();
    for p in points {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    out
}

/// One policy query during an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    /// Atomic step count when the query was made.
    pub step: usize,
    pub chunks: Vec<String>,
    pub entropies: Vec<f64>,
    pub t_star: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    #[serde(with = "pose::as_arrays")]
    pub path: Vec<Pose>,
    /// Executed actions, including a final `stop` when the agent stopped.
    pub actions: Vec<Action>,
    /// Executed movement actions; `stop` is not counted.
    pub atomic_step_count: usize,
    pub stopped: bool,
    pub collisions: usize,
    pub reference_path: Vec<Point>,
    pub goal: Point,
    pub tau: f64,
    pub shortest_path_length: f64,
    pub queries: Vec<QueryRecord>,
}

/// What a controller decided for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub chunks: Vec<ActionChunk>,
    pub entropies: Vec<f64>,
    pub t_star: usize,
}

/// An episode that ended early because the controller failed.
#[derive(Debug)]
pub struct Aborted<E> {
    pub error: E,
    pub partial: EpisodeResult,
}

/// Runs the query/execute loop, asking `decide` for chunks at each
/// replanning point, until `stop` is executed or the step budget runs out.
pub fn drive_episode<E, F>(
    world: &World,
    units: &ActionUnits,
    reference: &Reference,
    mut decide: F,
) -> Result<EpisodeResult, Aborted<E>>
where
    F: FnMut(&Pose, usize) -> Result<Decision, E>,
{
    let mut result = EpisodeResult {
        path: vec![world.start],
        actions: Vec::new(),
        atomic_step_count: 0,
        stopped: false,
        collisions: 0,
        reference_path: reference.path.clone(),
        goal: world.goal,
        tau: world.tau,
        shortest_path_length: reference.length,
        queries: Vec::new(),
    };
    let mut pose = world.start;
    'episode: while result.atomic_step_count < world.t_max {
        let decision = match decide(&pose, result.atomic_step_count) {
            Ok(d) => d,
            Err(error) => {
                return Err(Aborted {
                    error,
                    partial: result,
                })
            }
        };
        let t_star = decision.t_star.clamp(1, decision.chunks.len().max(1));
        result.queries.push(QueryRecord {
            step: result.atomic_step_count,
            chunks: decision.chunks.iter().map(|c| c.render(units).text).collect(),
            entropies: decision.entropies,
            t_star,
        });
        for action in flatten(decision.chunks.iter().take(t_star)) {
            if action == Action::Stop {
                result.actions.push(Action::Stop);
                result.stopped = true;
                break 'episode;
            }
            let (next, collided) = super::step(&pose, action, world, units);
            result.collisions += usize::from(collided);
            result.atomic_step_count += 1;
            result.actions.push(action);
            result.path.push(next);
            pose = next;
            if result.atomic_step_count >= world.t_max {
                break 'episode;
            }
        }
    }
    Ok(result)
}

/// Runs one episode in process.
pub fn run_episode<P: Policy + ?Sized>(
    world: &World,
    policy: &mut P,
    mode: ExecMode,
    units: &ActionUnits,
    k_max: usize,
) -> Result<EpisodeResult, SimError> {
    let reference = reference_for(world, units)?;
    drive_episode(world, units, &reference, |pose, _| {
        let out = policy.predict(world, pose, k_max)?;
        if out.predictions.is_empty() {
            return Err(SimError::PolicyFailure("empty prediction".into()));
        }
        let (entropies, t_star) = mode.horizon(&out.predictions)?;
        Ok(Decision {
            chunks: out.chunks(),
            entropies,
            t_star,
        })
    })
    .map_err(|a| a.error)
}

/// Pose after each action of `actions` in free space, starting at `start`.
pub fn replay(start: &Pose, actions: &[Action], units: &ActionUnits) -> Vec<Pose> {
    let mut poses = Vec::with_capacity(actions.len() + 1);
    poses.push(*start);
    let mut cur = *start;
    for &a in actions {
        cur = kinematic_step(&cur, a, units);
        poses.push(cur);
    }
    poses
}
