//! Occupancy-grid worlds and their text format.
//!
//! ```text
//! cell_size=0.5 tau=3.0 t_max=500 start_heading=90
//! ########
//! #S.....#
//! #..##..#
//! #.....G#
//! ########
//! ```
//!
//! The first text row is the top of the map. Cell `(col, row)` spans
//! `[col*cs, (col+1)*cs] x [row*cs, (row+1)*cs]` with row 0 at the bottom.
//! Everything outside the grid counts as occupied.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use super::pose::{Point, Pose};

pub const DEFAULT_TAU: f64 = 3.0;
pub const DEFAULT_T_MAX: usize = 500;

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    cols: usize,
    rows: usize,
    cell_size: f64,
    occupied: Vec<bool>,
    pub start: Pose,
    pub goal: Point,
    /// Success radius in meters.
    pub tau: f64,
    /// Atomic step budget per episode.
    pub t_max: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("world line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid world: {0}")]
    Invalid(String),
}

pub type Cell = (usize, usize);

impl World {
    /// Builds a world from a row-major grid (row 0 at the bottom).
    #[allow(clippy::too_many_arguments)]
    pub fn from_grid(
        cols: usize,
        rows: usize,
        cell_size: f64,
        occupied: Vec<bool>,
        start: Pose,
        goal: Point,
        tau: f64,
        t_max: usize,
    ) -> Result<Self, WorldError> {
        let world = Self {
            cols,
            rows,
            cell_size,
            occupied,
            start,
            goal,
            tau,
            t_max,
        };
        world.validate()?;
        Ok(world)
    }

    /// An obstacle-free `width_m` x `height_m` room.
    pub fn open(width_m: f64, height_m: f64, cell_size: f64, start: Pose, goal: Point) -> Result<Self, WorldError> {
        let cols = (width_m / cell_size).round() as usize;
        let rows = (height_m / cell_size).round() as usize;
        Self::from_grid(
            cols,
            rows,
            cell_size,
            vec![false; cols * rows],
            start,
            goal,
            DEFAULT_TAU,
            DEFAULT_T_MAX,
        )
    }

    fn validate(&self) -> Result<(), WorldError> {
        let invalid = |m: &str| Err(WorldError::Invalid(m.to_owned()));
        if self.cols == 0 || self.rows == 0 || self.occupied.len() != self.cols * self.rows {
            return invalid("grid dimensions do not match cell data");
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return invalid("cell_size must be positive");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return invalid("tau must be positive");
        }
        if !self.start.is_finite() || self.point_blocked(self.start.position()) {
            return invalid("start must lie in a free cell");
        }
        if self.point_blocked(self.goal) {
            return invalid("goal must lie in a free cell");
        }
        Ok(())
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn width(&self) -> f64 {
        self.cols as f64 * self.cell_size
    }

    pub fn height(&self) -> f64 {
        self.rows as f64 * self.cell_size
    }

    pub fn is_occupied(&self, col: isize, row: isize) -> bool {
        if col < 0 || row < 0 || col as usize >= self.cols || row as usize >= self.rows {
            return true;
        }
        self.occupied[row as usize * self.cols + col as usize]
    }

    pub fn set_occupied(&mut self, cell: Cell, value: bool) {
        self.occupied[cell.1 * self.cols + cell.0] = value;
    }

    pub fn cell_of(&self, p: Point) -> Option<Cell> {
        let c = (p[0] / self.cell_size).floor();
        let r = (p[1] / self.cell_size).floor();
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.cols && (r as usize) < self.rows)
            .then_some((c as usize, r as usize))
    }

    pub fn cell_center(&self, cell: Cell) -> Point {
        [
            (cell.0 as f64 + 0.5) * self.cell_size,
            (cell.1 as f64 + 0.5) * self.cell_size,
        ]
    }

    /// True if `p` touches an occupied cell (cells are closed sets).
    pub fn point_blocked(&self, p: Point) -> bool {
        self.segment_blocked(p, p)
    }

    /// True if the segment `a -> b` touches any occupied cell or leaves the map.
    pub fn segment_blocked(&self, a: Point, b: Point) -> bool {
        self.segment_hits(a, b, |c, r| self.is_occupied(c, r))
    }

    /// True if the closed segment touches a cell for which `blocked` holds.
    pub(crate) fn segment_hits(&self, a: Point, b: Point, blocked: impl Fn(isize, isize) -> bool) -> bool {
        let cs = self.cell_size;
        let c0 = (a[0].min(b[0]) / cs).floor() as isize - 1;
        let c1 = (a[0].max(b[0]) / cs).floor() as isize + 1;
        let r0 = (a[1].min(b[1]) / cs).floor() as isize - 1;
        let r1 = (a[1].max(b[1]) / cs).floor() as isize + 1;
        for r in r0..=r1 {
            for c in c0..=c1 {
                if !blocked(c, r) {
                    continue;
                }
                let lo = [c as f64 * cs, r as f64 * cs];
                let hi = [lo[0] + cs, lo[1] + cs];
                if segment_touches_box(a, b, lo, hi) {
                    return true;
                }
            }
        }
        false
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "cell_size={} tau={} t_max={} start_heading={}",
            self.cell_size, self.tau, self.t_max, self.start.heading
        );
        let start = self.cell_of(self.start.position());
        let goal = self.cell_of(self.goal);
        for r in (0..self.rows).rev() {
            for c in 0..self.cols {
                let ch = if Some((c, r)) == start {
                    'S'
                } else if Some((c, r)) == goal {
                    'G'
                } else if self.occupied[r * self.cols + c] {
                    '#'
                } else {
                    '.'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

/// Closed segment / axis-aligned box intersection (slab test).
fn segment_touches_box(a: Point, b: Point, lo: Point, hi: Point) -> bool {
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for k in 0..2 {
        let d = b[k] - a[k];
        if d == 0.0 {
            if a[k] < lo[k] || a[k] > hi[k] {
                return false;
            }
        } else {
            let ta = (lo[k] - a[k]) / d;
            let tb = (hi[k] - a[k]) / d;
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

impl FromStr for World {
    type Err = WorldError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(WorldError::Parse {
            line: 1,
            message: "missing header line".into(),
        })?;
        let mut cell_size = None;
        let mut tau = DEFAULT_TAU;
        let mut t_max = DEFAULT_T_MAX;
        let mut heading = 0.0;
        let perr = |line: usize, message: String| WorldError::Parse { line, message };
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| perr(1, format!("expected key=value, found {field:?}")))?;
            let num = || {
                value
                    .parse::<f64>()
                    .map_err(|_| perr(1, format!("bad number for {key}: {value:?}")))
            };
            match key {
                "cell_size" => cell_size = Some(num()?),
                "tau" => tau = num()?,
                "start_heading" => heading = num()?,
                "t_max" => {
                    t_max = value
                        .parse()
                        .map_err(|_| perr(1, format!("bad t_max {value:?}")))?
                }
                _ => return Err(perr(1, format!("unknown header key {key:?}"))),
            }
        }
        let cell_size = cell_size.ok_or_else(|| perr(1, "header lacks cell_size".into()))?;

        let grid: Vec<(usize, &str)> = lines.map(|(i, l)| (i + 1, l.trim_end())).collect();
        let rows = grid.len();
        if rows == 0 {
            return Err(perr(2, "empty grid".into()));
        }
        let cols = grid[0].1.chars().count();
        let mut occupied = vec![false; rows * cols];
        let mut start = None;
        let mut goal = None;
        for (text_row, (line, row)) in grid.iter().enumerate() {
            if row.chars().count() != cols {
                return Err(perr(*line, format!("row has {} cells, expected {cols}", row.chars().count())));
            }
            let r = rows - 1 - text_row;
            for (c, ch) in row.chars().enumerate() {
                match ch {
                    '#' => occupied[r * cols + c] = true,
                    '.' => {}
                    'S' if start.is_none() => start = Some((c, r)),
                    'G' if goal.is_none() => goal = Some((c, r)),
                    'S' | 'G' => return Err(perr(*line, format!("duplicate {ch}"))),
                    _ => return Err(perr(*line, format!("unexpected character {ch:?}"))),
                }
            }
        }
        let start = start.ok_or_else(|| perr(2, "no start cell 'S'".into()))?;
        let goal = goal.ok_or_else(|| perr(2, "no goal cell 'G'".into()))?;
        let center = |cell: Cell| [(cell.0 as f64 + 0.5) * cell_size, (cell.1 as f64 + 0.5) * cell_size];
        let s = center(start);
        World::from_grid(
            cols,
            rows,
            cell_size,
            occupied,
            Pose::new(s[0], s[1], heading),
            center(goal),
            tau,
            t_max,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAP: &str = "cell_size=0.5 tau=3 t_max=200 start_heading=90
#####
#S.G#
#.#.#
#####
";

    #[test]
    fn parses_and_round_trips() {
        let w: World = MAP.parse().unwrap();
        assert_eq!((w.cols(), w.rows()), (5, 4));
        assert_eq!(w.start, Pose::new(0.75, 1.25, 90.0));
        assert_eq!(w.goal, [1.75, 1.25]);
        assert_eq!(w.t_max, 200);
        assert!(w.is_occupied(2, 1));
        assert!(!w.is_occupied(1, 1));
        assert!(w.is_occupied(-1, 0));
        let again: World = w.to_text().parse().unwrap();
        assert_eq!(again, w);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!("".parse::<World>(), Err(WorldError::Parse { .. })));
        assert!("tau=3\n#S#G#\n".parse::<World>().is_err());
        assert!("cell_size=1\n#S#\n##\n".parse::<World>().is_err());
        assert!("cell_size=1\n#S.#\n".parse::<World>().is_err());
        assert!("cell_size=1\nSGx\n".parse::<World>().is_err());
        assert!("cell_size=1 bogus=2\nSG\n".parse::<World>().is_err());
    }

    #[test]
    fn segment_blocking() {
        let w: World = MAP.parse().unwrap();
        // along the free corridor row
        assert!(!w.segment_blocked([0.75, 1.25], [1.2, 1.25]));
        // into the wall above
        assert!(w.segment_blocked([0.75, 1.25], [0.75, 1.6]));
        // through the pillar at (2,1)
        assert!(w.segment_blocked([0.75, 0.9], [1.75, 0.9]));
        // leaving the map
        assert!(w.segment_blocked([0.75, 1.25], [-0.1, 1.25]));
    }
}
