//! Joint configurations of all agents and synchronized joint paths.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::Cell;

/// Path and edge costs: timesteps summed over agents.
pub type Cost = u32;

/// One cell per agent, position `i` belonging to agent `i`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct JointState(Vec<Cell>);

impl JointState {
    pub fn new(cells: Vec<Cell>) -> Self {
        JointState(cells)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.0
    }

    pub fn n_agents(&self) -> usize {
        self.0.len()
    }

    fn check_arity(&self, other: &JointState) -> Result<()> {
        if self.0.len() == other.0.len() {
            Ok(())
        } else {
            Err(Error::ArityMismatch {
                left: self.0.len(),
                right: other.0.len(),
            })
        }
    }
}

impl fmt::Display for JointState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

impl Serialize for JointState {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for JointState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        Ok(JointState(Vec::<Cell>::deserialize(deserializer)?))
    }
}

/// Squared Euclidean distance in the 2n-dimensional joint space; exact.
pub fn joint_sq_dist(a: &JointState, b: &JointState) -> Result<u64> {
    a.check_arity(b)?;
    Ok(a.0
        .iter()
        .zip(&b.0)
        .map(|(p, q)| p.sq_dist(*q))
        .sum())
}

/// Euclidean distance in the 2n-dimensional joint space.
pub fn joint_distance(a: &JointState, b: &JointState) -> Result<f64> {
    Ok((joint_sq_dist(a, b)? as f64).sqrt())
}

/// Whether the synchronized transition `from → to` is free of vertex
/// conflicts (two agents ending on one cell) and swap conflicts (two agents
/// exchanging cells). Moving into a cell vacated this timestep is legal.
pub fn collision_free(from: &JointState, to: &JointState) -> Result<bool> {
    from.check_arity(to)?;
    let n = from.0.len();
    for i in 0..n {
        for j in (i + 1)..n {
            if to.0[i] == to.0[j] {
                return Ok(false);
            }
            if to.0[i] == from.0[j] && to.0[j] == from.0[i] {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// A synchronized sequence of joint states, one per timestep.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct JointPath {
    pub steps: Vec<JointState>,
}

impl JointPath {
    pub fn new(steps: Vec<JointState>) -> Self {
        JointPath { steps }
    }

    pub fn single(state: JointState) -> Self {
        JointPath {
            steps: vec![state],
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first(&self) -> Option<&JointState> {
        self.steps.first()
    }

    pub fn last(&self) -> Option<&JointState> {
        self.steps.last()
    }
}

impl Serialize for JointPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.steps.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for JointPath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        Ok(JointPath {
            steps: Vec::<JointState>::deserialize(deserializer)?,
        })
    }
}

pub const SOLUTION_FORMAT_VERSION: u32 = 1;

/// On-disk solution document: the joint steps, the cost under `path_cost`,
/// and the seed of the instance it solves.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionFile {
    pub steps: JointPath,
    pub cost: Cost,
    pub instance_seed: u64,
    pub format_version: u32,
}

impl SolutionFile {
    pub fn new(steps: JointPath, cost: Cost, instance_seed: u64) -> Self {
        SolutionFile {
            steps,
            cost,
            instance_seed,
            format_version: SOLUTION_FORMAT_VERSION,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("solution serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SolutionFile = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("solution file: {e}")))?;
        if doc.format_version != SOLUTION_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported solution format_version {}",
                doc.format_version
            )));
        }
        Ok(doc)
    }
}

/// Total cost of a joint path against `goals`: each agent contributes the
/// timestep of its final arrival at its goal. Waiting at the goal and later
/// leaving re-counts those waits; an agent that never settles on its goal
/// contributes the full path duration.
pub fn path_cost(path: &JointPath, goals: &JointState) -> Result<Cost> {
    let Some(first) = path.steps.first() else {
        return Err(Error::InvalidInput("path_cost on an empty path".into()));
    };
    first.check_arity(goals)?;
    for s in &path.steps {
        s.check_arity(goals)?;
    }
    let t_last = path.steps.len() - 1;
    let mut total: Cost = 0;
    for (i, &g) in goals.cells().iter().enumerate() {
        let settled = path
            .steps
            .iter()
            .rev()
            .take_while(|s| s.cells()[i] == g)
            .count();
        total += if settled == 0 {
            t_last as Cost
        } else {
            (t_last + 1 - settled) as Cost
        };
    }
    Ok(total)
}
