//! The four anytime planners over the shared tree machinery: uniform-sampled
//! MA-RRT* and MA-RRT*FN, and the informed isMA-RRT* / isMA-RRT*FN pair that
//! first plans each agent alone, then biases joint samples near those paths.
//!
//! Reported solution costs are always the cost-model price of the extracted
//! root-to-goal path, tracked as a running minimum; the tree internally
//! optimizes the sum of greedy edge costs, which can undercount waits that a
//! concatenated path later re-prices.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::greedy::{HeuristicMode, Steering};
use crate::grid::{Cell, GridWorld, Instance};
use crate::jointstate::{path_cost, Cost, JointPath, JointState};
use crate::seeds;
use crate::tree::{ExtendConfig, ExtendOutcome, RemovalOutcome, Tree};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Planner selector. The `fn` variants run under a hard node cap; the `is`
/// variants add the informed two-phase sampling scheme.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    MarrtStar,
    MarrtStarFn,
    IsMarrtStar,
    IsMarrtStarFn,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::MarrtStar,
        Algorithm::MarrtStarFn,
        Algorithm::IsMarrtStar,
        Algorithm::IsMarrtStarFn,
    ];

    /// Canonical snake_case name, as used in config files and records.
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MarrtStar => "marrt_star",
            Algorithm::MarrtStarFn => "marrt_star_fn",
            Algorithm::IsMarrtStar => "is_marrt_star",
            Algorithm::IsMarrtStarFn => "is_marrt_star_fn",
        }
    }

    /// Whether the joint tree runs under a node cap.
    pub fn capped(self) -> bool {
        matches!(self, Algorithm::MarrtStarFn | Algorithm::IsMarrtStarFn)
    }

    /// Whether planning starts with the per-agent guide-path phase.
    pub fn informed(self) -> bool {
        matches!(self, Algorithm::IsMarrtStar | Algorithm::IsMarrtStarFn)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    /// Accepts the short starred spellings (`marrt*fn`) and the snake_case
    /// names (`marrt_star_fn`), case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "marrt*" | "marrt_star" => Ok(Algorithm::MarrtStar),
            "marrt*fn" | "marrt_star_fn" => Ok(Algorithm::MarrtStarFn),
            "ismarrt*" | "is_marrt_star" => Ok(Algorithm::IsMarrtStar),
            "ismarrt*fn" | "is_marrt_star_fn" => Ok(Algorithm::IsMarrtStarFn),
            other => Err(Error::InvalidInput(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Stopping rule: a fixed iteration count (deterministic, reproducible) or a
/// wall-clock allowance (not reproducible; time fields are recorded).
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum Budget {
    Iterations(u64),
    Seconds(f64),
}

impl Budget {
    pub fn is_iterations(self) -> bool {
        matches!(self, Budget::Iterations(_))
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Budget::Iterations(n) => write!(f, "{n}it"),
            Budget::Seconds(s) => {
                if s == s.trunc() {
                    write!(f, "{}s", s as u64)
                } else {
                    write!(f, "{s}s")
                }
            }
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    /// `"5000it"` for iterations, `"5s"` or `"0.5s"` for seconds.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(n) = s.strip_suffix("it") {
            let n: u64 = n
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad iteration budget `{s}`")))?;
            return Ok(Budget::Iterations(n));
        }
        if let Some(v) = s.strip_suffix('s') {
            let v: f64 = v
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad time budget `{s}`")))?;
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidInput(format!("time budget `{s}` must be positive")));
            }
            return Ok(Budget::Seconds(v));
        }
        Err(Error::InvalidInput(format!(
            "budget `{s}` must end in `it` (iterations) or `s` (seconds)"
        )))
    }
}

impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_node_cap() -> Option<usize> {
    Some(200)
}

fn default_goal_bias() -> f64 {
    0.1
}

fn default_near_cap() -> Option<usize> {
    Some(32)
}

fn default_informed_bias() -> f64 {
    0.8
}

fn default_informed_radius() -> u16 {
    2
}

fn default_phase1_fraction() -> f64 {
    0.2
}

fn default_budget() -> Budget {
    Budget::Seconds(5.0)
}

fn default_format_version() -> u32 {
    CONFIG_FORMAT_VERSION
}

/// Full planner parameterization. Serializes as the config file format; every
/// field has a default, so files may set only what they override.
///
/// `None` for `c_max`, `gamma`, or `eta` means "derive from the instance":
/// `c_max = 2·n·size`, `gamma = 2·size·√n`, `eta = size`. `near_cap` bounds
/// how many near-set candidates each growth step evaluates (`None` = all of
/// them); the near set itself always follows the shrinking-radius rule.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    pub algorithm: Algorithm,
    #[serde(default = "default_node_cap")]
    pub node_cap: Option<usize>,
    #[serde(default = "default_goal_bias")]
    pub goal_bias: f64,
    #[serde(default)]
    pub c_max: Option<Cost>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_near_cap")]
    pub near_cap: Option<usize>,
    #[serde(default = "default_informed_bias")]
    pub informed_bias: f64,
    #[serde(default = "default_informed_radius")]
    pub informed_radius: u16,
    #[serde(default = "default_phase1_fraction")]
    pub phase1_fraction: f64,
    #[serde(default)]
    pub heuristic_mode: HeuristicMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub budget: Budget,
}

impl PlannerConfig {
    pub fn new(algorithm: Algorithm, seed: u64, budget: Budget) -> Self {
        PlannerConfig {
            format_version: CONFIG_FORMAT_VERSION,
            algorithm,
            node_cap: default_node_cap(),
            goal_bias: default_goal_bias(),
            c_max: None,
            gamma: None,
            eta: None,
            near_cap: default_near_cap(),
            informed_bias: default_informed_bias(),
            informed_radius: default_informed_radius(),
            phase1_fraction: default_phase1_fraction(),
            heuristic_mode: HeuristicMode::Euclidean,
            seed,
            budget,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported config format_version {}",
                self.format_version
            )));
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(Error::InvalidInput("goal_bias must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.informed_bias) {
            return Err(Error::InvalidInput("informed_bias must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.phase1_fraction) {
            return Err(Error::InvalidInput("phase1_fraction must lie in [0, 1)".into()));
        }
        if self.node_cap == Some(0) {
            return Err(Error::InvalidInput("node_cap must be positive".into()));
        }
        if self.algorithm.capped() && self.node_cap.is_none() {
            return Err(Error::InvalidInput(format!(
                "{} requires a node cap",
                self.algorithm
            )));
        }
        if self.near_cap == Some(0) {
            return Err(Error::InvalidInput("near_cap must be positive".into()));
        }
        if self.c_max == Some(0) {
            return Err(Error::InvalidInput("c_max must be positive".into()));
        }
        for (name, v) in [("gamma", self.gamma), ("eta", self.eta)] {
            if let Some(v) = v {
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::InvalidInput(format!("{name} must be positive")));
                }
            }
        }
        if let Budget::Seconds(s) = self.budget {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::InvalidInput("time budget must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn resolved_c_max(&self, n: usize, size: u16) -> Cost {
        self.c_max
            .unwrap_or(2 * n as Cost * Cost::from(size))
    }

    pub fn resolved_gamma(&self, n: usize, size: u16) -> f64 {
        self.gamma
            .unwrap_or(2.0 * f64::from(size) * (n as f64).sqrt())
    }

    pub fn resolved_eta(&self, size: u16) -> f64 {
        self.eta.unwrap_or(f64::from(size))
    }

    /// Node cap the joint tree runs under: the configured cap for the fixed-
    /// node variants, unbounded otherwise.
    pub fn cap_for_algorithm(&self) -> Option<usize> {
        if self.algorithm.capped() {
            self.node_cap
        } else {
            None
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PlannerConfig =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("config file: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Everything measured about one planner run. Under iteration budgets the
/// wall-clock fields stay `None` and `reproducible` is true: identical
/// (instance, config, seed) inputs yield byte-identical serialized records.
/// Traces hold change points: an entry per iteration at which the value
/// changed, starting at iteration 0.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: String,
    pub algorithm: Algorithm,
    pub grid_size: u16,
    pub n_agents: usize,
    pub seed: u64,
    pub budget: String,
    pub reproducible: bool,
    pub iterations_executed: u64,
    pub time_to_first_solution: Option<f64>,
    pub elapsed_seconds: Option<f64>,
    pub first_solution_iteration: Option<u64>,
    pub first_cost: Option<Cost>,
    pub best_cost: Option<Cost>,
    pub solution: Option<JointPath>,
    pub cost_trace: Vec<(u64, Cost)>,
    pub node_count_trace: Vec<(u64, usize)>,
    #[serde(default)]
    pub failed: bool,
    #[serde(default)]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn is_solved(&self) -> bool {
        self.first_cost.is_some()
    }
}

/// Per-iteration snapshot handed to observers.
#[derive(Clone, Copy, Debug)]
pub struct IterationEvent {
    pub iteration: u64,
    pub best_cost: Option<Cost>,
    pub node_count: usize,
}

pub trait Observer {
    fn on_iteration(&mut self, event: &IterationEvent);
}

/// The no-op observer.
impl Observer for () {
    fn on_iteration(&mut self, _event: &IterationEvent) {}
}

/// Goal-biased uniform sampling: the goal with probability `p`, otherwise a
/// uniformly random joint state over pairwise-distinct free cells.
pub fn sample(
    world: &GridWorld,
    n: usize,
    goal: &JointState,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Result<JointState> {
    if rng.random::<f64>() < p {
        return Ok(goal.clone());
    }
    uniform_joint(world, n, rng)
}

fn uniform_joint(world: &GridWorld, n: usize, rng: &mut ChaCha8Rng) -> Result<JointState> {
    let free = world.free_cells();
    if free.len() < n {
        return Err(Error::InfeasibleInstance(format!(
            "{n} agents need {n} free cells, world has {}",
            free.len()
        )));
    }
    let mut cells: Vec<Cell> = Vec::with_capacity(n);
    for _ in 0..n {
        loop {
            let c = free[rng.random_range(0..free.len())];
            if !cells.contains(&c) {
                cells.push(c);
                break;
            }
        }
    }
    Ok(JointState::new(cells))
}

/// Free cells within Chebyshev distance `radius` of `center`, in row-major
/// order.
fn box_cells(world: &GridWorld, center: Cell, radius: u16) -> Vec<Cell> {
    let r = i32::from(radius);
    let size = i32::from(world.size());
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let x = i32::from(center.x) + dx;
            let y = i32::from(center.y) + dy;
            if x < 0 || y < 0 || x >= size || y >= size {
                continue;
            }
            let c = Cell::new(x as u16, y as u16);
            if world.is_free(c) {
                out.push(c);
            }
        }
    }
    out
}

/// Informed sampling: the goal with probability `p`; else, with probability
/// `beta`, a joint state built per agent from a random waypoint on that
/// agent's guide path and a random free cell within Chebyshev `radius` of it
/// (at most 100 tries per agent before falling back to uniform); else uniform.
pub fn biased_sample(
    guide_paths: &[Vec<Cell>],
    beta: f64,
    radius: u16,
    world: &GridWorld,
    goal: &JointState,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Result<JointState> {
    let n = goal.n_agents();
    if guide_paths.len() != n {
        return Err(Error::ArityMismatch {
            left: guide_paths.len(),
            right: n,
        });
    }
    if rng.random::<f64>() < p {
        return Ok(goal.clone());
    }
    if rng.random::<f64>() >= beta {
        return uniform_joint(world, n, rng);
    }
    let free = world.free_cells();
    if free.len() < n {
        return Err(Error::InfeasibleInstance(format!(
            "{n} agents need {n} free cells, world has {}",
            free.len()
        )));
    }
    let mut cells: Vec<Cell> = Vec::with_capacity(n);
    for guide in guide_paths {
        if guide.is_empty() {
            return Err(Error::InvalidInput("empty guide path".into()));
        }
        let mut placed = false;
        for _ in 0..100 {
            let waypoint = guide[rng.random_range(0..guide.len())];
            let near = box_cells(world, waypoint, radius);
            if near.is_empty() {
                continue;
            }
            let c = near[rng.random_range(0..near.len())];
            if !cells.contains(&c) {
                cells.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            loop {
                let c = free[rng.random_range(0..free.len())];
                if !cells.contains(&c) {
                    cells.push(c);
                    break;
                }
            }
        }
    }
    Ok(JointState::new(cells))
}

/// One growth step plus the fixed-node accounting: if the step left a capped
/// tree over its budget and rewiring did not already delete a node, force one
/// removal, and undo the whole step when nothing was eligible.
fn grow_once(
    tree: &mut Tree,
    steering: &mut Steering<'_>,
    x_rand: &JointState,
    ext: &ExtendConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    tree.begin_step();
    if let ExtendOutcome::Extended { node, .. } = tree.extend(steering, x_rand, ext)? {
        if tree.cap().is_some_and(|m| tree.len() > m) {
            if let RemovalOutcome::Restored = tree.forced_removal(node, rng) {
                tree.restore();
            }
        }
    }
    Ok(())
}

/// Run bookkeeping: trace change points, first/best solution accounting, and
/// observer fan-out.
struct RunBook {
    record: RunRecord,
    goal: JointState,
    wall: bool,
    started: Instant,
    last_edge_best: Option<Cost>,
    last_node_count: Option<usize>,
}

impl RunBook {
    fn new(instance: &Instance, cfg: &PlannerConfig) -> Self {
        let goal = JointState::new(instance.goals.clone());
        RunBook {
            record: RunRecord {
                instance_id: format!("seed{:016x}", instance.seed),
                algorithm: cfg.algorithm,
                grid_size: instance.world.size(),
                n_agents: instance.n_agents(),
                seed: cfg.seed,
                budget: cfg.budget.to_string(),
                reproducible: cfg.budget.is_iterations(),
                iterations_executed: 0,
                time_to_first_solution: None,
                elapsed_seconds: None,
                first_solution_iteration: None,
                first_cost: None,
                best_cost: None,
                solution: None,
                cost_trace: Vec::new(),
                node_count_trace: Vec::new(),
                failed: false,
                error: None,
            },
            goal,
            wall: !cfg.budget.is_iterations(),
            started: Instant::now(),
            last_edge_best: None,
            last_node_count: None,
        }
    }

    /// Record the state after iteration `iteration` and notify the observer.
    fn note(
        &mut self,
        iteration: u64,
        tree: &Tree,
        observer: &mut dyn Observer,
    ) -> Result<()> {
        let edge_best = tree.best_goal_cost();
        if edge_best.is_some() && edge_best != self.last_edge_best {
            self.last_edge_best = edge_best;
            if let Some((_, _, path)) = tree.best_solution() {
                let cost = path_cost(&path, &self.goal)?;
                if self.record.best_cost.is_none_or(|b| cost < b) {
                    self.record.best_cost = Some(cost);
                    self.record.solution = Some(path);
                    self.record.cost_trace.push((iteration, cost));
                    if self.record.first_cost.is_none() {
                        self.record.first_cost = Some(cost);
                        self.record.first_solution_iteration = Some(iteration);
                        if self.wall {
                            self.record.time_to_first_solution =
                                Some(self.started.elapsed().as_secs_f64());
                        }
                    }
                }
            }
        }
        let node_count = tree.len();
        if self.last_node_count != Some(node_count) {
            self.last_node_count = Some(node_count);
            self.record.node_count_trace.push((iteration, node_count));
        }
        observer.on_iteration(&IterationEvent {
            iteration,
            best_cost: self.record.best_cost,
            node_count,
        });
        Ok(())
    }

    fn finish(mut self, iterations: u64) -> RunRecord {
        self.record.iterations_executed = iterations;
        if self.wall {
            self.record.elapsed_seconds = Some(self.started.elapsed().as_secs_f64());
        }
        self.record
    }
}

/// Plan `instance` under `cfg`, dispatching on the configured algorithm.
pub fn plan(
    instance: &Instance,
    cfg: &PlannerConfig,
    observer: &mut dyn Observer,
) -> Result<RunRecord> {
    plan_with_tree(instance, cfg, observer).map(|(record, _)| record)
}

/// As `plan`, additionally returning the final joint tree (the phase-2 tree
/// for the informed variants) for dumps and rendering.
pub fn plan_with_tree(
    instance: &Instance,
    cfg: &PlannerConfig,
    observer: &mut dyn Observer,
) -> Result<(RunRecord, Tree)> {
    cfg.validate()?;
    instance.validate()?;
    if cfg.algorithm.informed() {
        plan_informed_impl(instance, cfg, observer)
    } else {
        plan_uniform_impl(instance, cfg, observer)
    }
}

/// The informed two-phase planner, callable directly; normally reached via
/// `plan` with an `is_*` algorithm.
pub fn plan_informed(
    instance: &Instance,
    cfg: &PlannerConfig,
    observer: &mut dyn Observer,
) -> Result<RunRecord> {
    cfg.validate()?;
    instance.validate()?;
    plan_informed_impl(instance, cfg, observer).map(|(record, _)| record)
}

fn joint_tree(instance: &Instance, cfg: &PlannerConfig) -> Tree {
    let n = instance.n_agents();
    let size = instance.world.size();
    Tree::new(
        JointState::new(instance.starts.clone()),
        JointState::new(instance.goals.clone()),
        cfg.cap_for_algorithm(),
        cfg.resolved_gamma(n, size),
        cfg.resolved_eta(size),
    )
}

fn plan_uniform_impl(
    instance: &Instance,
    cfg: &PlannerConfig,
    observer: &mut dyn Observer,
) -> Result<(RunRecord, Tree)> {
    let n = instance.n_agents();
    let size = instance.world.size();
    let goal = JointState::new(instance.goals.clone());
    let mut tree = joint_tree(instance, cfg);
    let mut steering = Steering::new(&instance.world, cfg.heuristic_mode);
    let ext = ExtendConfig {
        c_max: cfg.resolved_c_max(n, size),
        near_cap: cfg.near_cap,
    };
    let mut rng = seeds::rng(cfg.seed);
    let mut book = RunBook::new(instance, cfg);
    book.note(0, &tree, observer)?;
    let mut iterations = 0u64;
    match cfg.budget {
        Budget::Iterations(total) => {
            while iterations < total {
                iterations += 1;
                let x = sample(&instance.world, n, &goal, cfg.goal_bias, &mut rng)?;
                grow_once(&mut tree, &mut steering, &x, &ext, &mut rng)?;
                book.note(iterations, &tree, observer)?;
            }
        }
        Budget::Seconds(s) => {
            let deadline = book.started + Duration::from_secs_f64(s);
            while Instant::now() < deadline {
                iterations += 1;
                let x = sample(&instance.world, n, &goal, cfg.goal_bias, &mut rng)?;
                grow_once(&mut tree, &mut steering, &x, &ext, &mut rng)?;
                book.note(iterations, &tree, observer)?;
            }
        }
    }
    Ok((book.finish(iterations), tree))
}

enum Limit {
    Iterations(u64),
    Deadline(Instant),
}

/// Single-agent G-RRT* growth loop. Returns the best start-to-goal cell path
/// found, if any, and the number of iterations consumed.
fn grrt_star(
    world: &GridWorld,
    s: Cell,
    d: Cell,
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
    limit: Limit,
    stop_on_first: bool,
) -> Result<(Option<Vec<Cell>>, u64)> {
    let size = world.size();
    let goal = JointState::new(vec![d]);
    let mut tree = Tree::new(
        JointState::new(vec![s]),
        goal.clone(),
        None,
        cfg.resolved_gamma(1, size),
        cfg.resolved_eta(size),
    );
    let mut steering = Steering::new(world, cfg.heuristic_mode);
    let ext = ExtendConfig {
        c_max: cfg.resolved_c_max(1, size),
        near_cap: cfg.near_cap,
    };
    let mut used = 0u64;
    loop {
        let expired = match limit {
            Limit::Iterations(total) => used >= total,
            Limit::Deadline(t) => Instant::now() >= t,
        };
        if expired || (stop_on_first && tree.best_goal_cost().is_some()) {
            break;
        }
        used += 1;
        let x = sample(world, 1, &goal, cfg.goal_bias, rng)?;
        grow_once(&mut tree, &mut steering, &x, &ext, rng)?;
    }
    let path = tree
        .best_solution()
        .map(|(_, _, p)| p.steps.iter().map(|st| st.cells()[0]).collect());
    Ok((path, used))
}

/// Plan a single agent from `s` to `d` with G-RRT* under `budget`, returning
/// the best cell path found or `None` (unreachable goals simply exhaust the
/// budget).
pub fn plan_single_agent_grrt_star(
    world: &GridWorld,
    s: Cell,
    d: Cell,
    cfg: &PlannerConfig,
    budget: Budget,
) -> Result<Option<Vec<Cell>>> {
    cfg.validate()?;
    if !world.is_free(s) || !world.is_free(d) {
        return Err(Error::InvalidInput(
            "start and goal must be free cells".into(),
        ));
    }
    let mut rng = seeds::rng(cfg.seed);
    let limit = match budget {
        Budget::Iterations(n) => Limit::Iterations(n),
        Budget::Seconds(secs) => Limit::Deadline(Instant::now() + Duration::from_secs_f64(secs)),
    };
    grrt_star(world, s, d, cfg, &mut rng, limit, false).map(|(path, _)| path)
}

fn plan_informed_impl(
    instance: &Instance,
    cfg: &PlannerConfig,
    observer: &mut dyn Observer,
) -> Result<(RunRecord, Tree)> {
    let n = instance.n_agents();
    let size = instance.world.size();
    let goal = JointState::new(instance.goals.clone());
    let mut tree = joint_tree(instance, cfg);
    let mut steering = Steering::new(&instance.world, cfg.heuristic_mode);
    let ext = ExtendConfig {
        c_max: cfg.resolved_c_max(n, size),
        near_cap: cfg.near_cap,
    };
    let mut rng = seeds::rng(cfg.seed);
    let mut book = RunBook::new(instance, cfg);
    book.note(0, &tree, observer)?;

    // Phase 1: a guide path per agent under an even split of the phase
    // budget, then retries for the stragglers against whatever remains.
    let mut guides: Vec<Option<Vec<Cell>>> = vec![None; n];
    let mut consumed = 0u64;
    match cfg.budget {
        Budget::Iterations(total) => {
            let slice = ((total as f64 * cfg.phase1_fraction) / n as f64).floor() as u64;
            for i in 0..n {
                let (path, used) = grrt_star(
                    &instance.world,
                    instance.starts[i],
                    instance.goals[i],
                    cfg,
                    &mut rng,
                    Limit::Iterations(slice),
                    false,
                )?;
                guides[i] = path;
                consumed += used;
            }
            for i in 0..n {
                if guides[i].is_none() {
                    let (path, used) = grrt_star(
                        &instance.world,
                        instance.starts[i],
                        instance.goals[i],
                        cfg,
                        &mut rng,
                        Limit::Iterations(total.saturating_sub(consumed)),
                        true,
                    )?;
                    guides[i] = path;
                    consumed += used;
                }
            }
        }
        Budget::Seconds(s) => {
            let total_deadline = book.started + Duration::from_secs_f64(s);
            let slice = Duration::from_secs_f64(s * cfg.phase1_fraction / n as f64);
            for i in 0..n {
                let deadline = (Instant::now() + slice).min(total_deadline);
                let (path, used) = grrt_star(
                    &instance.world,
                    instance.starts[i],
                    instance.goals[i],
                    cfg,
                    &mut rng,
                    Limit::Deadline(deadline),
                    false,
                )?;
                guides[i] = path;
                consumed += used;
            }
            for i in 0..n {
                if guides[i].is_none() {
                    let (path, used) = grrt_star(
                        &instance.world,
                        instance.starts[i],
                        instance.goals[i],
                        cfg,
                        &mut rng,
                        Limit::Deadline(total_deadline),
                        true,
                    )?;
                    guides[i] = path;
                    consumed += used;
                }
            }
        }
    }
    let guides: Vec<Vec<Cell>> = match guides.into_iter().collect::<Option<_>>() {
        Some(g) => g,
        None => return Ok((book.finish(consumed), tree)),
    };

    // Phase 2: grow the joint tree with path-biased sampling for the rest of
    // the budget. Iteration indices continue the phase-1 count.
    match cfg.budget {
        Budget::Iterations(total) => {
            while consumed < total {
                consumed += 1;
                let x = biased_sample(
                    &guides,
                    cfg.informed_bias,
                    cfg.informed_radius,
                    &instance.world,
                    &goal,
                    cfg.goal_bias,
                    &mut rng,
                )?;
                grow_once(&mut tree, &mut steering, &x, &ext, &mut rng)?;
                book.note(consumed, &tree, observer)?;
            }
        }
        Budget::Seconds(s) => {
            let deadline = book.started + Duration::from_secs_f64(s);
            while Instant::now() < deadline {
                consumed += 1;
                let x = biased_sample(
                    &guides,
                    cfg.informed_bias,
                    cfg.informed_radius,
                    &instance.world,
                    &goal,
                    cfg.goal_bias,
                    &mut rng,
                )?;
                grow_once(&mut tree, &mut steering, &x, &ext, &mut rng)?;
                book.note(consumed, &tree, observer)?;
            }
        }
    }
    Ok((book.finish(consumed), tree))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{generate_instance, generate_world, DEFAULT_MAX_DRAWS};

    fn cell(x: u16, y: u16) -> Cell {
        Cell::new(x, y)
    }

    fn iter_cfg(algorithm: Algorithm, seed: u64, iterations: u64) -> PlannerConfig {
        PlannerConfig::new(algorithm, seed, Budget::Iterations(iterations))
    }

    #[test]
    fn algorithm_spellings_parse() {
        assert_eq!("marrt*".parse::<Algorithm>().unwrap(), Algorithm::MarrtStar);
        assert_eq!("MARRT*FN".parse::<Algorithm>().unwrap(), Algorithm::MarrtStarFn);
        assert_eq!("ismarrt*".parse::<Algorithm>().unwrap(), Algorithm::IsMarrtStar);
        assert_eq!(
            "is_marrt_star_fn".parse::<Algorithm>().unwrap(),
            Algorithm::IsMarrtStarFn
        );
        assert!("rrt".parse::<Algorithm>().is_err());
        assert_eq!(
            serde_json::to_string(&Algorithm::IsMarrtStarFn).unwrap(),
            "\"is_marrt_star_fn\""
        );
    }

    #[test]
    fn budget_strings_round_trip() {
        for text in ["5000it", "0it", "5s", "0.5s"] {
            let b: Budget = text.parse().unwrap();
            assert_eq!(b.to_string(), text);
        }
        assert!("5".parse::<Budget>().is_err());
        assert!("-1s".parse::<Budget>().is_err());
        assert!("1.5it".parse::<Budget>().is_err());
        let b: Budget = serde_json::from_str("\"250it\"").unwrap();
        assert_eq!(b, Budget::Iterations(250));
        assert_eq!(serde_json::to_string(&b).unwrap(), "\"250it\"");
    }

    #[test]
    fn config_json_round_trips_and_validates() {
        let cfg = PlannerConfig::new(Algorithm::MarrtStarFn, 7, Budget::Iterations(100));
        let back = PlannerConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back.algorithm, Algorithm::MarrtStarFn);
        assert_eq!(back.node_cap, Some(200));
        assert_eq!(back.seed, 7);
        // Sparse files fall back to defaults.
        let sparse = PlannerConfig::from_json("{\"algorithm\": \"marrt_star\"}").unwrap();
        assert_eq!(sparse.goal_bias, 0.1);
        assert_eq!(sparse.near_cap, Some(32));
        assert_eq!(sparse.budget, Budget::Seconds(5.0));
        // Unknown keys and bad values are rejected.
        assert!(PlannerConfig::from_json("{\"algorithm\": \"marrt_star\", \"gaol_bias\": 1}").is_err());
        let mut bad = cfg.clone();
        bad.goal_bias = 1.5;
        assert!(bad.validate().is_err());
        let mut capless = cfg;
        capless.node_cap = None;
        assert!(capless.validate().is_err());
    }

    #[test]
    fn sample_with_full_bias_returns_goal() {
        let world = generate_world(10, 0.1, 3).unwrap();
        let goal = JointState::new(vec![world.free_cells()[0], world.free_cells()[5]]);
        let mut rng = seeds::rng(1);
        for _ in 0..50 {
            assert_eq!(sample(&world, 2, &goal, 1.0, &mut rng).unwrap(), goal);
        }
    }

    #[test]
    fn sample_uniform_is_distinct_free_and_roughly_uniform() {
        let world = generate_world(10, 0.1, 3).unwrap();
        let free = world.free_cells();
        let goal = JointState::new(vec![free[0], free[1]]);
        let mut rng = seeds::rng(2);
        let fixed = (free[3], free[7]);
        let mut hits = 0u32;
        let draws = 10_000;
        for _ in 0..draws {
            let s = sample(&world, 2, &goal, 0.0, &mut rng).unwrap();
            let cells = s.cells();
            assert_ne!(cells[0], cells[1]);
            assert!(world.is_free(cells[0]) && world.is_free(cells[1]));
            if (cells[0], cells[1]) == fixed {
                hits += 1;
            }
        }
        // Ordered pairs of distinct free cells; the fixed pair's count should
        // sit within 5 sigma of the binomial expectation.
        let pairs = (free.len() * (free.len() - 1)) as f64;
        let expect = f64::from(draws) / pairs;
        let sigma = (f64::from(draws) * (1.0 / pairs) * (1.0 - 1.0 / pairs)).sqrt();
        assert!(
            (f64::from(hits) - expect).abs() <= 5.0 * sigma,
            "fixed pair drawn {hits} times, expected {expect:.2} ± {:.2}",
            5.0 * sigma
        );
    }

    #[test]
    fn biased_sample_zero_radius_stays_on_guides() {
        let world = generate_world(10, 0.0, 0).unwrap();
        let guides = vec![
            vec![cell(0, 0), cell(1, 0), cell(2, 0)],
            vec![cell(0, 5), cell(1, 5), cell(2, 5)],
        ];
        let goal = JointState::new(vec![cell(2, 0), cell(2, 5)]);
        let mut rng = seeds::rng(4);
        for _ in 0..500 {
            let s = biased_sample(&guides, 1.0, 0, &world, &goal, 0.0, &mut rng).unwrap();
            for (c, guide) in s.cells().iter().zip(&guides) {
                assert!(guide.contains(c), "{c} strayed off its guide path");
            }
        }
    }

    #[test]
    fn biased_sample_respects_chebyshev_radius() {
        let world = generate_world(10, 0.1, 9).unwrap();
        let free = world.free_cells();
        let guides = vec![vec![free[0], free[1]], vec![free[10], free[11]]];
        let goal = JointState::new(vec![free[1], free[11]]);
        let mut rng = seeds::rng(5);
        for _ in 0..2000 {
            let s = biased_sample(&guides, 1.0, 2, &world, &goal, 0.0, &mut rng).unwrap();
            for (c, guide) in s.cells().iter().zip(&guides) {
                let within = guide.iter().any(|w| w.chebyshev(*c) <= 2);
                assert!(within, "{c} farther than Chebyshev 2 from its guide");
            }
        }
    }

    #[test]
    fn biased_sample_zero_beta_matches_uniform_stream() {
        let world = generate_world(8, 0.1, 6).unwrap();
        let free = world.free_cells();
        let guides = vec![vec![free[0]], vec![free[1]]];
        let goal = JointState::new(vec![free[0], free[1]]);
        let mut a = seeds::rng(11);
        let mut b = seeds::rng(11);
        for _ in 0..200 {
            let biased = biased_sample(&guides, 0.0, 2, &world, &goal, 0.0, &mut a).unwrap();
            // Burn the same two coins the biased sampler spends, then draw.
            let _ = b.random::<f64>();
            let _ = b.random::<f64>();
            let plain = uniform_joint(&world, 2, &mut b).unwrap();
            assert_eq!(biased, plain);
        }
    }

    #[test]
    fn plan_start_equals_goal_solves_at_iteration_zero() {
        let world = generate_world(6, 0.0, 0).unwrap();
        let instance = Instance {
            world,
            starts: vec![cell(2, 2)],
            goals: vec![cell(2, 2)],
            seed: 1,
        };
        let record = plan(&instance, &iter_cfg(Algorithm::MarrtStar, 3, 50), &mut ()).unwrap();
        assert_eq!(record.first_solution_iteration, Some(0));
        assert_eq!(record.first_cost, Some(0));
        assert_eq!(record.best_cost, Some(0));
        assert_eq!(record.cost_trace.first(), Some(&(0, 0)));
        assert_eq!(record.solution.as_ref().map(|p| p.len()), Some(1));
        assert!(record.time_to_first_solution.is_none());
        assert!(record.reproducible);
        assert_eq!(record.iterations_executed, 50);
    }

    #[test]
    fn plan_single_agent_converges_to_bfs_length() {
        let world = generate_world(10, 0.0, 0).unwrap();
        let mut exact = 0;
        for seed in 0..5 {
            let instance = Instance {
                world: world.clone(),
                starts: vec![cell(0, 0)],
                goals: vec![cell(9, 9)],
                seed,
            };
            let record = plan(
                &instance,
                &iter_cfg(Algorithm::MarrtStar, 100 + seed, 3000),
                &mut (),
            )
            .unwrap();
            let best = record.best_cost.expect("solved");
            assert!(best >= 18, "cost {best} beats the shortest path");
            if best == 18 {
                exact += 1;
            }
        }
        assert!(exact >= 4, "only {exact}/5 seeds converged to 18");
    }

    #[test]
    fn plan_fn_respects_node_cap() {
        struct MaxNodes(usize);
        impl Observer for MaxNodes {
            fn on_iteration(&mut self, event: &IterationEvent) {
                self.0 = self.0.max(event.node_count);
            }
        }
        let world = generate_world(6, 0.1, 2).unwrap();
        let instance = generate_instance(&world, 2, 5, DEFAULT_MAX_DRAWS).unwrap();
        let mut cfg = iter_cfg(Algorithm::MarrtStarFn, 9, 1500);
        cfg.node_cap = Some(25);
        let mut max_nodes = MaxNodes(0);
        let (record, tree) = plan_with_tree(&instance, &cfg, &mut max_nodes).unwrap();
        assert!(max_nodes.0 <= 25, "node count peaked at {}", max_nodes.0);
        assert!(record.node_count_trace.iter().all(|&(_, c)| c <= 25));
        tree.audit(&instance.world).unwrap();
    }

    #[test]
    fn plan_traces_are_monotone() {
        let world = generate_world(8, 0.1, 7).unwrap();
        let instance = generate_instance(&world, 2, 3, DEFAULT_MAX_DRAWS).unwrap();
        for algorithm in Algorithm::ALL {
            let record = plan(&instance, &iter_cfg(algorithm, 21, 2500), &mut ()).unwrap();
            let costs: Vec<Cost> = record.cost_trace.iter().map(|&(_, c)| c).collect();
            assert!(
                costs.windows(2).all(|w| w[1] <= w[0]),
                "{algorithm}: cost trace {costs:?} not non-increasing"
            );
            if !algorithm.capped() {
                let counts: Vec<usize> =
                    record.node_count_trace.iter().map(|&(_, c)| c).collect();
                assert!(counts.windows(2).all(|w| w[1] >= w[0]));
            }
        }
    }

    #[test]
    fn plan_is_deterministic_under_iteration_budgets() {
        let world = generate_world(8, 0.1, 4).unwrap();
        let instance = generate_instance(&world, 2, 8, DEFAULT_MAX_DRAWS).unwrap();
        for algorithm in [Algorithm::MarrtStar, Algorithm::IsMarrtStarFn] {
            let a = plan(&instance, &iter_cfg(algorithm, 33, 1200), &mut ()).unwrap();
            let b = plan(&instance, &iter_cfg(algorithm, 33, 1200), &mut ()).unwrap();
            assert_eq!(
                serde_json::to_string(&a).unwrap(),
                serde_json::to_string(&b).unwrap()
            );
        }
    }

    #[test]
    fn informed_planner_solves_and_records() {
        let world = generate_world(10, 0.1, 12).unwrap();
        let instance = generate_instance(&world, 2, 6, DEFAULT_MAX_DRAWS).unwrap();
        let record = plan(&instance, &iter_cfg(Algorithm::IsMarrtStarFn, 42, 4000), &mut ())
            .unwrap();
        assert!(record.is_solved(), "informed run failed to solve");
        assert_eq!(record.iterations_executed, 4000);
        let solution = record.solution.as_ref().unwrap();
        assert_eq!(solution.first().unwrap().cells(), instance.starts);
        assert_eq!(solution.last().unwrap().cells(), instance.goals);
    }

    #[test]
    fn grrt_star_handles_trivial_and_unreachable_goals() {
        let world = generate_world(6, 0.0, 0).unwrap();
        let cfg = iter_cfg(Algorithm::MarrtStar, 3, 100);
        let path = plan_single_agent_grrt_star(&world, cell(1, 1), cell(1, 1), &cfg, Budget::Iterations(10))
            .unwrap();
        assert_eq!(path, Some(vec![cell(1, 1)]));
        // Wall off (5, 5) completely.
        let walled = GridWorld::new(
            6,
            &[cell(4, 4), cell(5, 4), cell(4, 5)],
            0,
        )
        .unwrap();
        let path = plan_single_agent_grrt_star(&walled, cell(0, 0), cell(5, 5), &cfg, Budget::Iterations(300))
            .unwrap();
        assert!(path.is_none());
    }

    #[test]
    fn grrt_star_converges_on_open_ground() {
        let world = generate_world(10, 0.0, 0).unwrap();
        let cfg = iter_cfg(Algorithm::MarrtStar, 8, 100);
        let path = plan_single_agent_grrt_star(&world, cell(0, 0), cell(9, 9), &cfg, Budget::Iterations(2500))
            .unwrap()
            .expect("open grid is solvable");
        assert_eq!(path.first(), Some(&cell(0, 0)));
        assert_eq!(path.last(), Some(&cell(9, 9)));
        assert_eq!(path.len() - 1, 18, "path length {} is not optimal", path.len() - 1);
    }
}
