//! Experiment harness: instance sets, batch execution, and aggregate metrics.

pub mod oracle;
pub mod report;
pub mod svg;
pub mod validate;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greedy::HeuristicMode;
use crate::grid::{generate_instance, generate_world, Instance, DEFAULT_MAX_DRAWS};
use crate::jointstate::Cost;
use crate::planner::{plan, Algorithm, Budget, PlannerConfig, RunRecord};
use crate::seeds;

pub const EXPERIMENT_FORMAT_VERSION: u32 = 1;

fn default_format_version() -> u32 {
    EXPERIMENT_FORMAT_VERSION
}

fn default_obstacle_ratio() -> f64 {
    0.1
}

/// Declarative description of a benchmark batch: the cartesian product of
/// grid sizes, agent counts, and instance indices, run once per algorithm.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    pub grid_sizes: Vec<u16>,
    pub agent_counts: Vec<usize>,
    pub instances_per_cell: usize,
    #[serde(default = "default_obstacle_ratio")]
    pub obstacle_ratio: f64,
    pub budget: Budget,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub overrides: ConfigOverrides,
    pub master_seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != EXPERIMENT_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported experiment format_version {}",
                self.format_version
            )));
        }
        if self.grid_sizes.is_empty() || self.agent_counts.is_empty() || self.algorithms.is_empty()
        {
            return Err(Error::InvalidInput(
                "grid_sizes, agent_counts, and algorithms must be non-empty".into(),
            ));
        }
        if self.instances_per_cell == 0 {
            return Err(Error::InvalidInput("instances_per_cell must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.obstacle_ratio) {
            return Err(Error::InvalidInput(format!(
                "obstacle_ratio {} outside [0, 1)",
                self.obstacle_ratio
            )));
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                return Err(Error::InvalidInput(format!("algorithm {a} listed twice")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("experiment spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Optional planner parameter overrides applied on top of the defaults for
/// every run in a batch. Absent fields keep the defaults; a zero for one of
/// the bound-like fields (`node_cap`, `c_max`, `gamma`, `eta`, `near_cap`)
/// clears it back to "unbounded respectively derive from the instance".
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigOverrides {
    pub node_cap: Option<usize>,
    pub goal_bias: Option<f64>,
    pub c_max: Option<Cost>,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub near_cap: Option<usize>,
    pub informed_bias: Option<f64>,
    pub informed_radius: Option<u16>,
    pub phase1_fraction: Option<f64>,
    pub heuristic_mode: Option<HeuristicMode>,
}

impl ConfigOverrides {
    pub fn apply(&self, cfg: &mut PlannerConfig) {
        if let Some(v) = self.node_cap {
            cfg.node_cap = if v == 0 { None } else { Some(v) };
        }
        if let Some(v) = self.goal_bias {
            cfg.goal_bias = v;
        }
        if let Some(v) = self.c_max {
            cfg.c_max = if v == 0 { None } else { Some(v) };
        }
        if let Some(v) = self.gamma {
            cfg.gamma = if v == 0.0 { None } else { Some(v) };
        }
        if let Some(v) = self.eta {
            cfg.eta = if v == 0.0 { None } else { Some(v) };
        }
        if let Some(v) = self.near_cap {
            cfg.near_cap = if v == 0 { None } else { Some(v) };
        }
        if let Some(v) = self.informed_bias {
            cfg.informed_bias = v;
        }
        if let Some(v) = self.informed_radius {
            cfg.informed_radius = v;
        }
        if let Some(v) = self.phase1_fraction {
            cfg.phase1_fraction = v;
        }
        if let Some(v) = self.heuristic_mode {
            cfg.heuristic_mode = v;
        }
    }
}

#[derive(Clone, Debug)]
pub struct InstanceEntry {
    pub id: String,
    pub instance: Instance,
}

fn algorithm_ordinal(a: Algorithm) -> u64 {
    Algorithm::ALL.iter().position(|&x| x == a).expect("listed") as u64
}

/// Seed for one (instance, algorithm) run, derived so that every run in a
/// batch draws from an independent stream.
pub fn run_seed(instance_seed: u64, algorithm: Algorithm) -> u64 {
    seeds::derive(instance_seed, &[seeds::TAG_RUN, algorithm_ordinal(algorithm)])
}

/// Materialize an instance grid over sizes × agent counts × indices. Ids
/// follow `g{size:02}_a{agents:02}_i{index:03}`; worlds and placements derive
/// from the master seed alone, so equal inputs build equal sets.
pub fn build_instances(
    grid_sizes: &[u16],
    agent_counts: &[usize],
    instances_per_cell: usize,
    obstacle_ratio: f64,
    master_seed: u64,
) -> Result<Vec<InstanceEntry>> {
    let mut out = Vec::new();
    for &size in grid_sizes {
        for &n in agent_counts {
            for idx in 0..instances_per_cell {
                let world_seed = seeds::derive(
                    master_seed,
                    &[seeds::TAG_WORLD, u64::from(size), n as u64, idx as u64],
                );
                let world = generate_world(size, obstacle_ratio, world_seed)?;
                let instance_seed = seeds::derive(
                    master_seed,
                    &[seeds::TAG_INSTANCE, u64::from(size), n as u64, idx as u64],
                );
                let instance = generate_instance(&world, n, instance_seed, DEFAULT_MAX_DRAWS)?;
                out.push(InstanceEntry {
                    id: format!("g{size:02}_a{n:02}_i{idx:03}"),
                    instance,
                });
            }
        }
    }
    Ok(out)
}

/// [`build_instances`] for a validated experiment spec.
pub fn build_instance_set(spec: &ExperimentSpec) -> Result<Vec<InstanceEntry>> {
    spec.validate()?;
    build_instances(
        &spec.grid_sizes,
        &spec.agent_counts,
        spec.instances_per_cell,
        spec.obstacle_ratio,
        spec.master_seed,
    )
}

#[derive(Clone, Copy, Debug, Default)]
pub struct BatchOptions<'a> {
    pub workers: usize,
    /// When set, runs persist under `runs/`, instances under `instances/`,
    /// and the combined `records.jsonl` is rewritten at the end. Existing
    /// parseable run files are reused, so interrupted batches resume.
    pub out_dir: Option<&'a Path>,
}

struct Job<'a> {
    entry: &'a InstanceEntry,
    algorithm: Algorithm,
    cfg: PlannerConfig,
}

fn failed_record(job: &Job<'_>, message: String) -> RunRecord {
    RunRecord {
        instance_id: job.entry.id.clone(),
        algorithm: job.algorithm,
        grid_size: job.entry.instance.world.size(),
        n_agents: job.entry.instance.n_agents(),
        seed: job.cfg.seed,
        budget: job.cfg.budget.to_string(),
        reproducible: job.cfg.budget.is_iterations(),
        iterations_executed: 0,
        time_to_first_solution: None,
        elapsed_seconds: None,
        first_solution_iteration: None,
        first_cost: None,
        best_cost: None,
        solution: None,
        cost_trace: Vec::new(),
        node_count_trace: Vec::new(),
        failed: true,
        error: Some(message),
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "worker panicked".into()
    }
}

fn run_job(job: &Job<'_>, runs_dir: Option<&Path>) -> Result<RunRecord> {
    let run_path = runs_dir.map(|d| d.join(format!("{}__{}.json", job.entry.id, job.algorithm)));
    if let Some(path) = &run_path {
        if let Ok(text) = fs::read_to_string(path) {
            if let Ok(record) = serde_json::from_str::<RunRecord>(&text) {
                return Ok(record);
            }
        }
    }
    let outcome = catch_unwind(AssertUnwindSafe(|| plan(&job.entry.instance, &job.cfg, &mut ())));
    let record = match outcome {
        Ok(Ok(mut record)) => {
            record.instance_id = job.entry.id.clone();
            record
        }
        Ok(Err(e)) => failed_record(job, e.to_string()),
        Err(payload) => failed_record(job, panic_message(payload)),
    };
    if let Some(path) = &run_path {
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        fs::write(path, line)?;
    }
    Ok(record)
}

/// Run every (instance, algorithm) pair of the batch, instance-major, and
/// return the records in that order. A failing run becomes a failed record
/// rather than aborting the batch.
pub fn run_batch(
    spec: &ExperimentSpec,
    entries: &[InstanceEntry],
    options: &BatchOptions<'_>,
) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let runs_dir = match options.out_dir {
        Some(dir) => {
            let runs = dir.join("runs");
            fs::create_dir_all(&runs)?;
            let instances = dir.join("instances");
            fs::create_dir_all(&instances)?;
            for entry in entries {
                let path = instances.join(format!("{}.json", entry.id));
                if !path.exists() {
                    fs::write(path, entry.instance.to_json())?;
                }
            }
            Some(runs)
        }
        None => None,
    };

    let mut jobs = Vec::new();
    for entry in entries {
        for &algorithm in &spec.algorithms {
            let mut cfg =
                PlannerConfig::new(algorithm, run_seed(entry.instance.seed, algorithm), spec.budget);
            spec.overrides.apply(&mut cfg);
            cfg.validate()?;
            jobs.push(Job {
                entry,
                algorithm,
                cfg,
            });
        }
    }

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunRecord>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    let workers = options.workers.max(1).min(jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let outcome = run_job(&jobs[i], runs_dir.as_deref());
                *slots[i].lock().expect("slot lock") = Some(outcome);
            });
        }
    });

    let mut records = Vec::with_capacity(jobs.len());
    for slot in slots {
        records.push(slot.into_inner().expect("slot lock").expect("worker filled slot")?);
    }

    if let Some(dir) = options.out_dir {
        let mut combined = String::new();
        for record in &records {
            combined.push_str(&serde_json::to_string(record)?);
            combined.push('\n');
        }
        fs::write(dir.join("records.jsonl"), combined)?;
    }
    Ok(records)
}

/// Solved runs of one algorithm as `(rank, key)` points ordered by time to
/// first solution, falling back to the first-solution iteration when the run
/// was iteration-budgeted. The final rank over the algorithm's total run
/// count is its solve rate.
pub fn performance_curve(records: &[RunRecord], algorithm: Algorithm) -> Vec<(usize, f64)> {
    let mut keys: Vec<(f64, &str)> = records
        .iter()
        .filter(|r| r.algorithm == algorithm && r.is_solved())
        .map(|r| {
            let key = r
                .time_to_first_solution
                .unwrap_or_else(|| r.first_solution_iteration.unwrap_or(0) as f64);
            (key, r.instance_id.as_str())
        })
        .collect();
    keys.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.1.cmp(b.1))
    });
    keys.into_iter()
        .enumerate()
        .map(|(i, (key, _))| (i + 1, key))
        .collect()
}

/// Percentage by which `returned` exceeds `reference`. Zero references only
/// pair with zero returned costs; anything else is undefined.
pub fn suboptimality(returned: Cost, reference: Cost) -> Result<f64> {
    if reference == 0 {
        if returned == 0 {
            return Ok(0.0);
        }
        return Err(Error::InvalidInput(format!(
            "suboptimality of cost {returned} against a zero reference is undefined"
        )));
    }
    Ok((f64::from(returned) / f64::from(reference) - 1.0) * 100.0)
}
