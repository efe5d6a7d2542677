//! Greedy joint steering: every agent steps toward its own target each
//! timestep, and the walk stops on target arrival, a conflict, or cost budget
//! exhaustion.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{bfs_distance_field, Cell, DistanceField, GridWorld};
use crate::jointstate::{collision_free, Cost, JointPath, JointState};

/// Distance estimate used by per-agent steps. `Bfs` is exact under obstacles
/// but costs a one-time flood fill per distinct target.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicMode {
    #[default]
    Euclidean,
    Bfs,
}

/// Outcome of a greedy walk.
#[derive(Clone, Debug)]
pub struct SteerResult {
    /// Final joint state, the last step of `path`.
    pub reached: JointState,
    /// Visited joint states, starting at the walk's source.
    pub path: JointPath,
    /// Accumulated per-step cost of `path`.
    pub cost: Cost,
    /// Whether the walk ended exactly on its target.
    pub reached_target: bool,
}

/// Steering context for one world. Caches BFS fields per target so repeated
/// walks under `HeuristicMode::Bfs` stay cheap.
pub struct Steering<'w> {
    world: &'w GridWorld,
    mode: HeuristicMode,
    fields: HashMap<Cell, DistanceField>,
}

impl<'w> Steering<'w> {
    pub fn new(world: &'w GridWorld, mode: HeuristicMode) -> Self {
        Steering {
            world,
            mode,
            fields: HashMap::new(),
        }
    }

    pub fn world(&self) -> &'w GridWorld {
        self.world
    }

    /// The child of `cell` minimizing distance-to-`target`, ties broken by
    /// the fixed child order (stay first).
    pub fn heuristic_step(&mut self, cell: Cell, target: Cell) -> Cell {
        debug_assert!(self.world.is_free(cell) && self.world.is_free(target));
        match self.mode {
            HeuristicMode::Euclidean => {
                let mut best = cell;
                let mut best_key = u64::MAX;
                for child in &self.world.children(cell) {
                    let key = child.sq_dist(target);
                    if key < best_key {
                        best_key = key;
                        best = child;
                    }
                }
                best
            }
            HeuristicMode::Bfs => {
                let field = self
                    .fields
                    .entry(target)
                    .or_insert_with(|| bfs_distance_field(self.world, target));
                let mut best = cell;
                let mut best_key = u32::MAX;
                for child in &self.world.children(cell) {
                    let key = field.dist(child).unwrap_or(u32::MAX);
                    if key < best_key {
                        best_key = key;
                        best = child;
                    }
                }
                best
            }
        }
    }

    /// Walk from `s` toward `d`, one synchronized timestep at a time. Each
    /// step costs 1 per agent except agents parked on their own target
    /// component. Stops on arrival, on the first conflicting step (which is
    /// discarded), or once the accumulated cost exceeds `c_max`.
    pub fn connect(&mut self, s: &JointState, d: &JointState, c_max: Cost) -> Result<SteerResult> {
        let n = s.n_agents();
        let mut current = s.clone();
        let mut steps = vec![s.clone()];
        let mut cost: Cost = 0;
        while current != *d && cost <= c_max {
            let mut next_cells = Vec::with_capacity(n);
            let mut step_cost: Cost = 0;
            for (&c, &t) in current.cells().iter().zip(d.cells()) {
                let nc = if c == t { c } else { self.heuristic_step(c, t) };
                if !(c == t && nc == t) {
                    step_cost += 1;
                }
                next_cells.push(nc);
            }
            let next = JointState::new(next_cells);
            if !collision_free(&current, &next)? {
                break;
            }
            cost += step_cost;
            steps.push(next.clone());
            current = next;
        }
        let reached_target = current == *d;
        Ok(SteerResult {
            reached: current,
            path: JointPath::new(steps),
            cost,
            reached_target,
        })
    }
}

/// One heuristic step without a reusable context.
pub fn heuristic_step(world: &GridWorld, cell: Cell, target: Cell, mode: HeuristicMode) -> Cell {
    Steering::new(world, mode).heuristic_step(cell, target)
}

/// One greedy walk without a reusable context.
pub fn greedy_connect(
    world: &GridWorld,
    s: &JointState,
    d: &JointState,
    c_max: Cost,
    mode: HeuristicMode,
) -> Result<SteerResult> {
    Steering::new(world, mode).connect(s, d, c_max)
}
