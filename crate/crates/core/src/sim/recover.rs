//! Analytic inverse dynamics: the chunk that carries one pose to another.
//!
//! Only ends reachable by a rotate / straight run / rotate decomposition on
//! the action lattice are recovered. The result is canonical: the shortest
//! first rotation (left on a 180° tie), the forward run, then the shortest
//! final rotation, each split greedily into sub-chunks of at most three.

use thiserror::Error;

use super::pose::{distance, heading_delta, kinematic_step, Pose};
use crate::grammar::{Action, ActionChunk, ActionUnits, SubChunk, MAX_SUB_CHUNK_COUNT};

/// Pose tolerance (meters and degrees) for accepting a recovered chunk.
pub const RECOVER_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecoverError {
    #[error("end pose is not reachable by a turn/forward/turn chunk: {0}")]
    NotReachable(String),
    #[error("start and end poses coincide")]
    NoMotion,
}

fn push_run(subs: &mut Vec<SubChunk>, action: Action, mut count: usize) {
    while count > 0 {
        let take = count.min(usize::from(MAX_SUB_CHUNK_COUNT));
        subs.push(SubChunk::new(action, take as u8).expect("1..=3"));
        count -= take;
    }
}

fn push_rotation(subs: &mut Vec<SubChunk>, delta_deg: f64, units: &ActionUnits) -> Result<(), RecoverError> {
    let steps = delta_deg / units.turn();
    let rounded = steps.round();
    if (steps - rounded).abs() * units.turn() > RECOVER_TOLERANCE {
        return Err(RecoverError::NotReachable(format!(
            "rotation of {delta_deg}° is not a multiple of {}°",
            units.turn_deg
        )));
    }
    let n = rounded as i64;
    if n > 0 {
        push_run(subs, Action::TurnLeft, n as usize);
    } else if n < 0 {
        push_run(subs, Action::TurnRight, n.unsigned_abs() as usize);
    }
    Ok(())
}

/// Rotation in `(-180, 180]`, snapped to the turn lattice when within tolerance.
fn signed_rotation(from: f64, to: f64) -> f64 {
    let d = heading_delta(from, to);
    if (d + 180.0).abs() <= RECOVER_TOLERANCE {
        180.0
    } else {
        d
    }
}

pub fn recover_chunk(start: &Pose, end: &Pose, units: &ActionUnits) -> Result<ActionChunk, RecoverError> {
    let step = units.forward_m();
    let dist = distance(start.position(), end.position());
    let mut subs = Vec::new();
    if dist <= RECOVER_TOLERANCE {
        push_rotation(&mut subs, signed_rotation(start.heading, end.heading), units)?;
    } else {
        let bearing = (end.y - start.y).atan2(end.x - start.x).to_degrees();
        let turn = units.turn();
        let first = signed_rotation(start.heading, bearing);
        let travel_heading = start.heading + (first / turn).round() * turn;
        let forwards = (dist / step).round() as usize;
        if forwards == 0 {
            return Err(RecoverError::NotReachable(format!(
                "displacement {dist} m is shorter than half a step"
            )));
        }
        push_rotation(&mut subs, signed_rotation(start.heading, travel_heading), units)?;
        push_run(&mut subs, Action::Forward, forwards);
        push_rotation(&mut subs, signed_rotation(travel_heading, end.heading), units)?;
    }
    if subs.is_empty() {
        return Err(RecoverError::NoMotion);
    }
    let chunk = ActionChunk::new(subs).expect("movement-only sub-chunks");
    let reached = chunk
        .atomic_actions()
        .fold(*start, |p, a| kinematic_step(&p, a, units));
    if !reached.approx_eq(end, RECOVER_TOLERANCE) {
        return Err(RecoverError::NotReachable(format!(
            "best candidate ends at ({:.9}, {:.9}, {:.6}°)",
            reached.x, reached.y, reached.heading
        )));
    }
    Ok(chunk)
}
