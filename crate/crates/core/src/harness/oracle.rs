//! Exact reference costs by uniform-cost search over the joint space.
//!
//! States pair the agents' cells with a "finished" bitmask. An unfinished
//! agent pays one unit per timestep; it may declare itself finished while
//! standing on its goal, after which it stays there forever (still occupying
//! the cell). The minimal total payment over all plays equals the minimal
//! solution cost under the sum-of-final-arrivals model, so this search is an
//! independent optimum oracle for small instances.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use crate::error::{Error, Result};
use crate::grid::{Cell, Instance};
use crate::jointstate::{Cost, JointPath, JointState};

/// Default bound on stored states and expansions.
pub const DEFAULT_MAX_STATES: usize = 10_000_000;

/// The bitmask plus 16 bits per agent must fit one 128-bit key.
const MAX_ORACLE_AGENTS: usize = 7;

#[derive(Clone, Copy, Debug)]
pub struct OracleLimits {
    pub max_states: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_states: DEFAULT_MAX_STATES,
        }
    }
}

#[derive(Clone, Debug)]
pub enum OracleOutcome {
    Solved { cost: Cost, path: JointPath },
    /// The reachable joint space was exhausted without finishing every agent.
    Unsolvable,
    /// The instance is too large for the configured limits.
    LimitExceeded,
}

impl OracleOutcome {
    pub fn cost(&self) -> Option<Cost> {
        match self {
            OracleOutcome::Solved { cost, .. } => Some(*cost),
            _ => None,
        }
    }
}

fn encode(positions: &[u32], mask: u32, n: usize) -> u128 {
    let mut key = u128::from(mask);
    for (i, &p) in positions.iter().enumerate() {
        key |= u128::from(p) << (n + 16 * i);
    }
    key
}

fn decode_mask(key: u128, n: usize) -> u32 {
    (key & ((1 << n) - 1)) as u32
}

fn decode_positions(key: u128, n: usize) -> Vec<u32> {
    (0..n)
        .map(|i| ((key >> (n + 16 * i)) & 0xFFFF) as u32)
        .collect()
}

/// Minimal exact solution cost and an optimal path, or a report that the
/// instance is unsolvable or over the search limits.
pub fn oracle_joint_optimal(instance: &Instance, limits: OracleLimits) -> Result<OracleOutcome> {
    instance.validate()?;
    let world = &instance.world;
    let n = instance.n_agents();
    let size = u32::from(world.size());
    if n > MAX_ORACLE_AGENTS {
        return Ok(OracleOutcome::LimitExceeded);
    }
    let free = world.free_cells().len() as u128;
    let space = free.pow(n as u32).saturating_mul(1 << n);
    if space > limits.max_states as u128 {
        return Ok(OracleOutcome::LimitExceeded);
    }

    let idx_of = |c: Cell| u32::from(c.y) * size + u32::from(c.x);
    let cell_of = |i: u32| Cell::new((i % size) as u16, (i / size) as u16);
    let starts: Vec<u32> = instance.starts.iter().map(|&c| idx_of(c)).collect();
    let goals: Vec<u32> = instance.goals.iter().map(|&c| idx_of(c)).collect();
    let full_mask: u32 = (1 << n) - 1;

    let mut dist: HashMap<u128, u64> = HashMap::new();
    let mut prev: HashMap<u128, u128> = HashMap::new();
    let mut heap: BinaryHeap<Reverse<(u64, u128)>> = BinaryHeap::new();

    // An agent already standing on its goal may finish before any step, so
    // every subset of those agents seeds a zero-cost source.
    let at_goal: Vec<usize> = (0..n).filter(|&i| starts[i] == goals[i]).collect();
    for sub in 0u32..(1 << at_goal.len()) {
        let mut mask = 0u32;
        for (j, &agent) in at_goal.iter().enumerate() {
            if sub & (1 << j) != 0 {
                mask |= 1 << agent;
            }
        }
        let key = encode(&starts, mask, n);
        dist.insert(key, 0);
        heap.push(Reverse((0, key)));
    }

    let mut expansions = 0usize;
    while let Some(Reverse((d, key))) = heap.pop() {
        if dist.get(&key) != Some(&d) {
            continue;
        }
        let mask = decode_mask(key, n);
        if mask == full_mask {
            let cost = Cost::try_from(d)
                .map_err(|_| Error::InvalidInput("oracle cost exceeds the cost type".into()))?;
            return Ok(OracleOutcome::Solved {
                cost,
                path: reconstruct(key, &prev, n, &cell_of),
            });
        }
        expansions += 1;
        if expansions > limits.max_states || dist.len() > limits.max_states {
            return Ok(OracleOutcome::LimitExceeded);
        }

        let positions = decode_positions(key, n);
        let step_cost = (n as u32 - mask.count_ones()) as u64;
        // Per-agent move candidates: finished agents are pinned in place.
        let candidates: Vec<Vec<u32>> = (0..n)
            .map(|i| {
                if mask & (1 << i) != 0 {
                    vec![positions[i]]
                } else {
                    world
                        .children(cell_of(positions[i]))
                        .iter()
                        .map(|&c| idx_of(c))
                        .collect()
                }
            })
            .collect();

        let mut pick = vec![0usize; n];
        'moves: loop {
            let to: Vec<u32> = (0..n).map(|i| candidates[i][pick[i]]).collect();
            let mut legal = true;
            'pairs: for i in 0..n {
                for j in (i + 1)..n {
                    let vertex = to[i] == to[j];
                    let swap = to[i] == positions[j] && to[j] == positions[i];
                    if vertex || swap {
                        legal = false;
                        break 'pairs;
                    }
                }
            }
            if legal {
                let eligible: Vec<usize> = (0..n)
                    .filter(|&i| mask & (1 << i) == 0 && to[i] == goals[i])
                    .collect();
                for sub in 0u32..(1 << eligible.len()) {
                    let mut new_mask = mask;
                    for (j, &agent) in eligible.iter().enumerate() {
                        if sub & (1 << j) != 0 {
                            new_mask |= 1 << agent;
                        }
                    }
                    let next = encode(&to, new_mask, n);
                    let nd = d + step_cost;
                    if dist.get(&next).is_none_or(|&old| nd < old) {
                        dist.insert(next, nd);
                        prev.insert(next, key);
                        heap.push(Reverse((nd, next)));
                    }
                }
            }
            // Odometer over the joint move space.
            for i in 0..n {
                pick[i] += 1;
                if pick[i] < candidates[i].len() {
                    continue 'moves;
                }
                pick[i] = 0;
            }
            break;
        }
    }
    Ok(OracleOutcome::Unsolvable)
}

fn reconstruct(
    final_key: u128,
    prev: &HashMap<u128, u128>,
    n: usize,
    cell_of: &dyn Fn(u32) -> Cell,
) -> JointPath {
    let mut chain = vec![final_key];
    let mut cur = final_key;
    while let Some(&p) = prev.get(&cur) {
        chain.push(p);
        cur = p;
    }
    chain.reverse();
    let steps = chain
        .into_iter()
        .map(|key| {
            JointState::new(
                decode_positions(key, n)
                    .into_iter()
                    .map(cell_of)
                    .collect(),
            )
        })
        .collect();
    JointPath::new(steps)
}
