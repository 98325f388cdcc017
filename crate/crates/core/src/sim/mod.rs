//! A 2-D continuous-pose simulator over occupancy grids.

pub mod episode;
pub mod planner;
pub mod policy;
pub mod pose;
pub mod recover;
pub mod world;
pub mod worldgen;

use thiserror::Error;

use crate::entropy::EntropyError;
use crate::grammar::{Action, ActionUnits};
use crate::hpac::HpacError;

pub use episode::{run_episode, EpisodeResult, ExecMode};
pub use planner::PlanError;
pub use policy::{NoiseModel, NoisyPolicy, OraclePolicy, Policy};
pub use pose::{Point, Pose};
pub use world::{World, WorldError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Hpac(#[from] HpacError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("policy failure: {0}")]
    PolicyFailure(String),
}

/// Applies one action. A forward step whose segment touches an obstacle
/// leaves the agent in place and reports a collision.
pub fn step(pose: &Pose, action: Action, world: &World, units: &ActionUnits) -> (Pose, bool) {
    let next = pose::kinematic_step(pose, action, units);
    if action == Action::Forward && world.segment_blocked(pose.position(), next.position()) {
        (*pose, true)
    } else {
        (next, false)
    }
}
