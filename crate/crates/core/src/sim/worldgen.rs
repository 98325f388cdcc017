//! Seeded random rooms with rectangular obstacles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::planner::{grid_path, plan};
use super::pose::{distance, Pose};
use super::world::{Cell, World, WorldError};
use crate::seed::{self, derive_seed};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldGenConfig {
    pub min_cells: usize,
    pub max_cells: usize,
    pub cell_size: f64,
    pub min_obstacles: usize,
    pub max_obstacles: usize,
    /// Minimum straight-line start/goal separation in meters.
    pub min_separation: f64,
    pub tau: f64,
    pub t_max: usize,
}

impl Default for WorldGenConfig {
    fn default() -> Self {
        Self {
            min_cells: 24,
            max_cells: 40,
            cell_size: 0.5,
            min_obstacles: 3,
            max_obstacles: 8,
            min_separation: 6.0,
            tau: super::world::DEFAULT_TAU,
            t_max: super::world::DEFAULT_T_MAX,
        }
    }
}

const MAX_ATTEMPTS: usize = 200;

fn clear(world: &World, (c, r): Cell) -> bool {
    let (c, r) = (c as isize, r as isize);
    (-1..=1).all(|dr| (-1..=1).all(|dc| !world.is_occupied(c + dc, r + dr)))
}

fn random_clear_cell<R: Rng>(world: &World, rng: &mut R) -> Option<Cell> {
    (0..500)
        .map(|_| (rng.gen_range(0..world.cols()), rng.gen_range(0..world.rows())))
        .find(|&cell| clear(world, cell))
}

fn attempt<R: Rng>(cfg: &WorldGenConfig, rng: &mut R) -> Option<World> {
    let cols = rng.gen_range(cfg.min_cells..=cfg.max_cells);
    let rows = rng.gen_range(cfg.min_cells..=cfg.max_cells);
    let cs = cfg.cell_size;
    let center = |c: usize, r: usize| [(c as f64 + 0.5) * cs, (r as f64 + 0.5) * cs];
    let mut world = World::from_grid(
        cols,
        rows,
        cs,
        vec![false; cols * rows],
        Pose::new(center(0, 0)[0], center(0, 0)[1], 0.0),
        center(0, 0),
        cfg.tau,
        cfg.t_max,
    )
    .ok()?;
    for c in 0..cols {
        world.set_occupied((c, 0), true);
        world.set_occupied((c, rows - 1), true);
    }
    for r in 0..rows {
        world.set_occupied((0, r), true);
        world.set_occupied((cols - 1, r), true);
    }
    let n_obstacles = rng.gen_range(cfg.min_obstacles..=cfg.max_obstacles);
    for _ in 0..n_obstacles {
        let w = rng.gen_range(2..=cols / 4);
        let h = rng.gen_range(2..=rows / 4);
        let c0 = rng.gen_range(1..cols - w);
        let r0 = rng.gen_range(1..rows - h);
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                world.set_occupied((c, r), true);
            }
        }
    }
    let start = random_clear_cell(&world, rng)?;
    let goal = (0..50)
        .filter_map(|_| random_clear_cell(&world, rng))
        .find(|&g| distance(center(start.0, start.1), center(g.0, g.1)) >= cfg.min_separation)?;
    grid_path(&world, start, goal)?;
    let heading = f64::from(rng.gen_range(0..24u32)) * 15.0;
    let s = center(start.0, start.1);
    let world = World::from_grid(
        cols,
        rows,
        cs,
        (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (c, r)))
            .map(|(c, r)| world.is_occupied(c as isize, r as isize))
            .collect(),
        Pose::new(s[0], s[1], heading),
        center(goal.0, goal.1),
        cfg.tau,
        cfg.t_max,
    )
    .ok()?;
    plan(&world, world.start.position()).ok()?;
    Some(world)
}

/// Draws a world from a stream seeded with `seed`.
pub fn generate(cfg: &WorldGenConfig, seed: u64) -> Result<World, WorldError> {
    let mut rng = seed::stream(seed);
    (0..MAX_ATTEMPTS)
        .find_map(|_| attempt(cfg, &mut rng))
        .ok_or_else(|| WorldError::Invalid(format!("no valid world after {MAX_ATTEMPTS} attempts")))
}

/// World `index` of the evaluation set drawn from `master`.
pub fn nth_world(cfg: &WorldGenConfig, master: u64, index: usize) -> Result<World, WorldError> {
    generate(cfg, derive_seed(master, &format!("world-{index}")))
}
