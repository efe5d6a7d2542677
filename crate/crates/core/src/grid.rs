//! Square 4-connected grid worlds and planning instances.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeTuple;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::seeds;

pub const INSTANCE_FORMAT_VERSION: u32 = 1;

/// Grid cell, addressed by 0-based column `x` and row `y` (row 0 at the top,
/// so "north" decreases `y`).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Cell {
    pub x: u16,
    pub y: u16,
}

impl Cell {
    pub const fn new(x: u16, y: u16) -> Self {
        Cell { x, y }
    }

    /// Squared Euclidean distance; exact in integers, so comparisons never
    /// suffer float ties.
    pub fn sq_dist(self, other: Cell) -> u64 {
        let dx = i64::from(self.x) - i64::from(other.x);
        let dy = i64::from(self.y) - i64::from(other.y);
        (dx * dx + dy * dy) as u64
    }

    pub fn chebyshev(self, other: Cell) -> u16 {
        let dx = self.x.abs_diff(other.x);
        let dy = self.y.abs_diff(other.y);
        dx.max(dy)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

// Cells serialize as `[x, y]` pairs in every file format.
impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut t = serializer.serialize_tuple(2)?;
        t.serialize_element(&self.x)?;
        t.serialize_element(&self.y)?;
        t.end()
    }
}

impl<'de> Deserialize<'de> for Cell {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct CellVisitor;
        impl<'de> Visitor<'de> for CellVisitor {
            type Value = Cell;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a [x, y] pair")
            }
            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<Cell, A::Error> {
                let x = seq
                    .next_element::<u16>()?
                    .ok_or_else(|| serde::de::Error::invalid_length(0, &self))?;
                let y = seq
                    .next_element::<u16>()?
                    .ok_or_else(|| serde::de::Error::invalid_length(1, &self))?;
                if seq.next_element::<u16>()?.is_some() {
                    return Err(serde::de::Error::invalid_length(3, &self));
                }
                Ok(Cell { x, y })
            }
        }
        deserializer.deserialize_tuple(2, CellVisitor)
    }
}

/// Legal one-step moves from a cell, in the fixed order
/// `[stay, north, east, south, west]` with illegal entries skipped.
#[derive(Clone, Copy, Debug)]
pub struct Children {
    cells: [Cell; 5],
    len: usize,
}

impl std::ops::Deref for Children {
    type Target = [Cell];
    fn deref(&self) -> &[Cell] {
        &self.cells[..self.len]
    }
}

impl<'a> IntoIterator for &'a Children {
    type Item = Cell;
    type IntoIter = std::iter::Copied<std::slice::Iter<'a, Cell>>;
    fn into_iter(self) -> Self::IntoIter {
        self.cells[..self.len].iter().copied()
    }
}

/// Square grid with static obstacles.
#[derive(Clone, Debug)]
pub struct GridWorld {
    size: u16,
    seed: u64,
    blocked: Vec<bool>,
    obstacles: Vec<Cell>,
    free: Vec<Cell>,
}

impl GridWorld {
    /// Build a world from an explicit obstacle list. Obstacles must be in
    /// bounds; duplicates collapse.
    pub fn new(size: u16, obstacles: &[Cell], seed: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidInput("grid size must be positive".into()));
        }
        let n = usize::from(size) * usize::from(size);
        let mut blocked = vec![false; n];
        for &c in obstacles {
            if c.x >= size || c.y >= size {
                return Err(Error::InvalidInput(format!(
                    "obstacle {c} out of bounds for size {size}"
                )));
            }
            blocked[usize::from(c.y) * usize::from(size) + usize::from(c.x)] = true;
        }
        let mut obs = Vec::new();
        let mut free = Vec::new();
        for y in 0..size {
            for x in 0..size {
                let c = Cell::new(x, y);
                if blocked[usize::from(y) * usize::from(size) + usize::from(x)] {
                    obs.push(c);
                } else {
                    free.push(c);
                }
            }
        }
        Ok(GridWorld {
            size,
            seed,
            blocked,
            obstacles: obs,
            free,
        })
    }

    pub fn size(&self) -> u16 {
        self.size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Obstacles in row-major order.
    pub fn obstacles(&self) -> &[Cell] {
        &self.obstacles
    }

    /// Free cells in row-major order.
    pub fn free_cells(&self) -> &[Cell] {
        &self.free
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x < self.size && c.y < self.size
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.blocked[self.idx(c)]
    }

    fn idx(&self, c: Cell) -> usize {
        usize::from(c.y) * usize::from(self.size) + usize::from(c.x)
    }

    /// The ≤ 5 legal moves from `cell` in the order
    /// `[stay, north, east, south, west]`.
    pub fn children(&self, cell: Cell) -> Children {
        let mut out = Children {
            cells: [cell; 5],
            len: 0,
        };
        let candidates = [
            Some(cell),
            cell.y.checked_sub(1).map(|y| Cell::new(cell.x, y)),
            Some(Cell::new(cell.x + 1, cell.y)),
            Some(Cell::new(cell.x, cell.y + 1)),
            cell.x.checked_sub(1).map(|x| Cell::new(x, cell.y)),
        ];
        for cand in candidates.into_iter().flatten() {
            if self.is_free(cand) {
                out.cells[out.len] = cand;
                out.len += 1;
            }
        }
        out
    }
}

/// Generate a world with `round(ratio · size²)` obstacles, drawn uniformly
/// without replacement from the seeded stream.
pub fn generate_world(size: u16, ratio: f64, seed: u64) -> Result<GridWorld> {
    if size == 0 {
        return Err(Error::InvalidInput("grid size must be positive".into()));
    }
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidInput(format!(
            "obstacle ratio must lie in [0, 1), got {ratio}"
        )));
    }
    let total = usize::from(size) * usize::from(size);
    let count = (ratio * total as f64).round() as usize;
    let mut rng = seeds::rng(seed);
    let mut blocked = vec![false; total];
    let mut placed = 0;
    while placed < count {
        let i = rng.random_range(0..total);
        if !blocked[i] {
            blocked[i] = true;
            placed += 1;
        }
    }
    let obstacles: Vec<Cell> = (0..total)
        .filter(|&i| blocked[i])
        .map(|i| Cell::new((i % usize::from(size)) as u16, (i / usize::from(size)) as u16))
        .collect();
    GridWorld::new(size, &obstacles, seed)
}

/// BFS distances over free cells toward a fixed goal.
#[derive(Clone, Debug)]
pub struct DistanceField {
    size: u16,
    dists: Vec<u32>,
}

const UNREACHED: u32 = u32::MAX;

impl DistanceField {
    /// Shortest 4-connected distance from `c` to the field's goal, or `None`
    /// if unreachable or blocked.
    pub fn dist(&self, c: Cell) -> Option<u32> {
        if c.x >= self.size || c.y >= self.size {
            return None;
        }
        let d = self.dists[usize::from(c.y) * usize::from(self.size) + usize::from(c.x)];
        (d != UNREACHED).then_some(d)
    }
}

/// Breadth-first distance field from every free cell to `goal`.
pub fn bfs_distance_field(world: &GridWorld, goal: Cell) -> DistanceField {
    assert!(world.is_free(goal), "bfs goal must be a free cell");
    let size = world.size();
    let mut dists = vec![UNREACHED; usize::from(size) * usize::from(size)];
    let mut queue = VecDeque::new();
    dists[world.idx(goal)] = 0;
    queue.push_back(goal);
    while let Some(c) = queue.pop_front() {
        let d = dists[world.idx(c)];
        for next in &world.children(c) {
            if next == c {
                continue;
            }
            let i = world.idx(next);
            if dists[i] == UNREACHED {
                dists[i] = d + 1;
                queue.push_back(next);
            }
        }
    }
    DistanceField { size, dists }
}

/// A multi-agent planning problem: a world plus per-agent starts and goals.
#[derive(Clone, Debug)]
pub struct Instance {
    pub world: GridWorld,
    pub starts: Vec<Cell>,
    pub goals: Vec<Cell>,
    pub seed: u64,
}

impl Instance {
    pub fn n_agents(&self) -> usize {
        self.starts.len()
    }

    /// Check the structural invariants: matching arity, free distinct starts,
    /// free distinct goals, and per-agent reachability ignoring other agents.
    pub fn validate(&self) -> Result<()> {
        if self.starts.len() != self.goals.len() {
            return Err(Error::ArityMismatch {
                left: self.starts.len(),
                right: self.goals.len(),
            });
        }
        if self.starts.is_empty() {
            return Err(Error::InvalidInput("instance has no agents".into()));
        }
        for (label, cells) in [("start", &self.starts), ("goal", &self.goals)] {
            for (i, &c) in cells.iter().enumerate() {
                if !self.world.is_free(c) {
                    return Err(Error::InvalidInput(format!(
                        "{label} {c} of agent {i} is not a free cell"
                    )));
                }
                if cells[..i].contains(&c) {
                    return Err(Error::InvalidInput(format!(
                        "duplicate {label} cell {c}"
                    )));
                }
            }
        }
        for (i, (&s, &g)) in self.starts.iter().zip(&self.goals).enumerate() {
            if bfs_distance_field(&self.world, g).dist(s).is_none() {
                return Err(Error::InfeasibleInstance(format!(
                    "goal {g} of agent {i} is unreachable from its start {s}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = InstanceFile {
            size: self.world.size(),
            obstacles: self.world.obstacles().to_vec(),
            starts: self.starts.clone(),
            goals: self.goals.clone(),
            seed: self.seed,
            format_version: INSTANCE_FORMAT_VERSION,
        };
        serde_json::to_string(&doc).expect("instance serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceFile = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("instance file: {e}")))?;
        if doc.format_version != INSTANCE_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported instance format_version {}",
                doc.format_version
            )));
        }
        let world = GridWorld::new(doc.size, &doc.obstacles, doc.seed)?;
        let instance = Instance {
            world,
            starts: doc.starts,
            goals: doc.goals,
            seed: doc.seed,
        };
        instance.validate()?;
        Ok(instance)
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    size: u16,
    obstacles: Vec<Cell>,
    starts: Vec<Cell>,
    goals: Vec<Cell>,
    seed: u64,
    format_version: u32,
}

/// Default cap on candidate draws in `generate_instance`.
pub const DEFAULT_MAX_DRAWS: usize = 10_000;

/// Draw a valid instance on `world`: distinct free starts, then distinct free
/// goals each reachable from its agent's start. Candidates violating a
/// constraint are redrawn; exceeding `max_draws` total draws is an error.
pub fn generate_instance(
    world: &GridWorld,
    n_agents: usize,
    seed: u64,
    max_draws: usize,
) -> Result<Instance> {
    if n_agents == 0 {
        return Err(Error::InvalidInput("agent count must be positive".into()));
    }
    let free = world.free_cells();
    if free.len() < 2 * n_agents {
        return Err(Error::InfeasibleInstance(format!(
            "{} free cells cannot host starts and goals for {n_agents} agents",
            free.len()
        )));
    }
    let mut rng = seeds::rng(seed);
    let mut draws = 0usize;
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, draws: &mut usize| -> Result<Cell> {
        if *draws >= max_draws {
            return Err(Error::InfeasibleInstance(format!(
                "no valid instance found within {max_draws} draws"
            )));
        }
        *draws += 1;
        Ok(free[rng.random_range(0..free.len())])
    };

    let mut starts: Vec<Cell> = Vec::with_capacity(n_agents);
    while starts.len() < n_agents {
        let c = draw(&mut rng, &mut draws)?;
        if !starts.contains(&c) {
            starts.push(c);
        }
    }
    let fields: Vec<DistanceField> = starts
        .iter()
        .map(|&s| bfs_distance_field(world, s))
        .collect();
    let mut goals: Vec<Cell> = Vec::with_capacity(n_agents);
    while goals.len() < n_agents {
        let c = draw(&mut rng, &mut draws)?;
        if !goals.contains(&c) && fields[goals.len()].dist(c).is_some() {
            goals.push(c);
        }
    }

    Ok(Instance {
        world: world.clone(),
        starts,
        goals,
        seed,
    })
}
