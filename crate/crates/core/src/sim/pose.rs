use serde::{Deserialize, Serialize};

use crate::grammar::{Action, ActionUnits};

/// Planar position in meters.
pub type Point = [f64; 2];

/// Position in meters and heading in degrees, 0° along +x, counterclockwise
/// positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_heading(heading),
        }
    }

    pub fn position(&self) -> Point {
        [self.x, self.y]
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        distance(self.position(), p)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }

    /// Same position and heading within `tol` meters / degrees.
    pub fn approx_eq(&self, other: &Pose, tol: f64) -> bool {
        (self.x - other.x).abs() <= tol
            && (self.y - other.y).abs() <= tol
            && heading_delta(self.heading, other.heading).abs() <= tol
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.heading]
    }
}

impl From<[f64; 3]> for Pose {
    fn from(a: [f64; 3]) -> Self {
        Pose::new(a[0], a[1], a[2])
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Maps any angle into `[0, 360)`.
pub fn normalize_heading(h: f64) -> f64 {
    let r = h.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Signed rotation from `from` to `to`, in `(-180, 180]`.
pub fn heading_delta(from: f64, to: f64) -> f64 {
    let d = (to - from).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Pose after `action` in free space.
pub fn kinematic_step(pose: &Pose, action: Action, units: &ActionUnits) -> Pose {
    match action {
        Action::Forward => {
            let rad = pose.heading.to_radians();
            let s = units.forward_m();
            Pose {
                x: pose.x + s * rad.cos(),
                y: pose.y + s * rad.sin(),
                heading: pose.heading,
            }
        }
        Action::TurnLeft => Pose::new(pose.x, pose.y, pose.heading + units.turn()),
        Action::TurnRight => Pose::new(pose.x, pose.y, pose.heading - units.turn()),
        Action::Stop => *pose,
    }
}

/// Serde adapter storing poses as `[x, y, heading]` arrays.
pub mod as_arrays {
    use super::Pose;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(poses: &[Pose], s: S) -> Result<S::Ok, S::Error> {
        let arrays: Vec<[f64; 3]> = poses.iter().map(Pose::to_array).collect();
        arrays.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Pose>, D::Error> {
        let arrays = Vec::<[f64; 3]>::deserialize(d)?;
        Ok(arrays.into_iter().map(Pose::from).collect())
    }
}
