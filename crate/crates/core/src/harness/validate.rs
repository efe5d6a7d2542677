//! Independent checking of joint solutions against an instance.
//!
//! The checks here deliberately avoid the planner's own movement helpers:
//! adjacency, conflicts, and endpoint agreement are recomputed from raw
//! coordinates so that a planner bug cannot hide behind shared code.

use std::fmt;

use crate::grid::{Cell, Instance};
use crate::jointstate::JointPath;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    EmptyPath,
    ArityMismatch { step: usize, expected: usize, got: usize },
    WrongStart { agent: usize, expected: Cell, got: Cell },
    WrongGoal { agent: usize, expected: Cell, got: Cell },
    ObstacleHit { step: usize, agent: usize, cell: Cell },
    IllegalMove { step: usize, agent: usize, from: Cell, to: Cell },
    VertexConflict { step: usize, first: usize, second: usize, cell: Cell },
    SwapConflict { step: usize, first: usize, second: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyPath => write!(f, "path has no steps"),
            Violation::ArityMismatch { step, expected, got } => {
                write!(f, "step {step}: expected {expected} agents, got {got}")
            }
            Violation::WrongStart { agent, expected, got } => {
                write!(f, "agent {agent} starts at {got:?}, instance says {expected:?}")
            }
            Violation::WrongGoal { agent, expected, got } => {
                write!(f, "agent {agent} ends at {got:?}, instance says {expected:?}")
            }
            Violation::ObstacleHit { step, agent, cell } => {
                write!(f, "step {step}: agent {agent} occupies blocked cell {cell:?}")
            }
            Violation::IllegalMove { step, agent, from, to } => {
                write!(f, "step {step}: agent {agent} jumps {from:?} -> {to:?}")
            }
            Violation::VertexConflict { step, first, second, cell } => {
                write!(f, "step {step}: agents {first} and {second} share {cell:?}")
            }
            Violation::SwapConflict { step, first, second } => {
                write!(f, "step {step}: agents {first} and {second} swap cells")
            }
        }
    }
}

fn adjacent_or_stay(from: Cell, to: Cell) -> bool {
    let dx = u16::abs_diff(from.x, to.x);
    let dy = u16::abs_diff(from.y, to.y);
    dx + dy <= 1
}

/// Every violation in the path, in scan order; empty means valid.
pub fn validate_solution(instance: &Instance, path: &JointPath) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = instance.n_agents();
    if path.is_empty() {
        out.push(Violation::EmptyPath);
        return out;
    }
    for (step, state) in path.steps.iter().enumerate() {
        let cells = state.cells();
        if cells.len() != n {
            out.push(Violation::ArityMismatch {
                step,
                expected: n,
                got: cells.len(),
            });
            return out;
        }
        for (agent, &cell) in cells.iter().enumerate() {
            if !instance.world.is_free(cell) {
                out.push(Violation::ObstacleHit { step, agent, cell });
            }
        }
        for i in 0..cells.len() {
            for j in (i + 1)..cells.len() {
                if cells[i] == cells[j] {
                    out.push(Violation::VertexConflict {
                        step,
                        first: i,
                        second: j,
                        cell: cells[i],
                    });
                }
            }
        }
        if step > 0 {
            let before = path.steps[step - 1].cells();
            for agent in 0..n {
                if !adjacent_or_stay(before[agent], cells[agent]) {
                    out.push(Violation::IllegalMove {
                        step,
                        agent,
                        from: before[agent],
                        to: cells[agent],
                    });
                }
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    if cells[i] == before[j] && cells[j] == before[i] && before[i] != before[j] {
                        out.push(Violation::SwapConflict {
                            step,
                            first: i,
                            second: j,
                        });
                    }
                }
            }
        }
    }
    let first = path.first().unwrap().cells();
    let last = path.last().unwrap().cells();
    for agent in 0..n {
        if first[agent] != instance.starts[agent] {
            out.push(Violation::WrongStart {
                agent,
                expected: instance.starts[agent],
                got: first[agent],
            });
        }
        if last[agent] != instance.goals[agent] {
            out.push(Violation::WrongGoal {
                agent,
                expected: instance.goals[agent],
                got: last[agent],
            });
        }
    }
    out
}
