//! Memory-bounded multi-agent RRT* planners on 4-connected grids.
//!
//! Agents move synchronously on a square grid (moves: stay, north, east,
//! south, west); a plan is a joint path that ends with every agent parked on
//! its goal, never puts two agents on one cell, and never swaps two agents
//! through each other. Four anytime planners share one tree machinery:
//!
//! * `marrt_star`: rapidly-exploring random tree over the joint space with
//!   rewiring, unbounded memory;
//! * `marrt_star_fn`: the same planner under a fixed node budget, recycling
//!   childless nodes to stay within it;
//! * `is_marrt_star`, `is_marrt_star_fn`: two-phase variants that first plan
//!   each agent alone, then bias joint sampling toward those guide paths.
//!
//! Costs count one unit per agent per timestep, except that an agent parked
//! on its own target adds nothing; a solution's cost is the sum of the
//! agents' final arrival times.
//!
//! Randomness: all draws come from ChaCha8 streams keyed by 64-bit seeds
//! (`seeds` module), so a given seed reproduces a run bit for bit, and batch
//! sub-seeds are derived with a documented SplitMix64 chain.

pub mod error;
pub mod greedy;
pub mod grid;
pub mod harness;
pub mod jointstate;
pub mod planner;
pub mod seeds;
pub mod tree;

pub use error::{Error, Result};
