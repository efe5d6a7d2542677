//! Command-line front end: instance generation, single runs, batches,
//! oracle references, and report emission.
//!
//! Exit codes: 0 success, 1 invalid input, 2 budget expired with no solution
//! (plan only), 3 internal error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use marrt::grid::Instance;
use marrt::harness::oracle::{oracle_joint_optimal, OracleLimits, OracleOutcome, DEFAULT_MAX_STATES};
use marrt::harness::report::{load_records_dir, write_reports, REPORT_MAX_STATES};
use marrt::harness::{build_instances, build_instance_set, run_batch, BatchOptions, ExperimentSpec};
use marrt::jointstate::{JointPath, SolutionFile, SOLUTION_FORMAT_VERSION};
use marrt::planner::{plan_with_tree, Algorithm, Budget, PlannerConfig};
use marrt::{Error, Result};

#[derive(Parser)]
#[command(name = "marrt", version, about = "Multi-agent RRT* planners and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance set into a directory.
    Gen {
        /// Grid side lengths, comma separated (e.g. 10,30).
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<u16>,
        /// Agent counts: a range like 1..10 or a comma list like 1,3,5.
        #[arg(long, value_parser = parse_agents)]
        agents: AgentCounts,
        /// Instances per (size, agents) cell.
        #[arg(long, default_value_t = 1)]
        per_cell: usize,
        #[arg(long, default_value_t = 0.1)]
        obstacle_ratio: f64,
        /// Master seed; every instance derives its own stream from it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one planner on one instance file.
    Plan {
        #[arg(long)]
        instance: PathBuf,
        /// Planner config file; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// marrt*, marrt*fn, ismarrt*, or ismarrt*fn.
        #[arg(long, value_parser = parse_algorithm)]
        algo: Option<Algorithm>,
        /// 5s for wall clock or 5000it for iterations.
        #[arg(long, value_parser = parse_budget)]
        budget: Option<Budget>,
        /// Node cap for the fixed-node variants; 0 clears it.
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long)]
        goal_bias: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the run record (one JSON line) here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the best solution in the solution file format here.
        #[arg(long)]
        solution_out: Option<PathBuf>,
        /// Write the final tree as JSON lines here.
        #[arg(long)]
        dump_tree: Option<PathBuf>,
    },
    /// Run an experiment spec: every (instance, algorithm) pair.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact joint-space optimum for one instance file.
    Oracle {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Search effort bound (stored states and expansions).
        #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
        max_states: usize,
    },
    /// Aggregate a records directory into CSV tables and SVG renderings.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Oracle effort per instance before falling back to the BFS bound.
        #[arg(long, default_value_t = REPORT_MAX_STATES)]
        oracle_limit: usize,
    },
}

#[derive(Clone, Debug)]
struct AgentCounts(Vec<usize>);

fn parse_agents(s: &str) -> std::result::Result<AgentCounts, String> {
    let parse_one = |t: &str| -> std::result::Result<usize, String> {
        let n: usize = t
            .trim()
            .parse()
            .map_err(|_| format!("bad agent count `{t}`"))?;
        if n == 0 {
            return Err("agent counts must be at least 1".into());
        }
        Ok(n)
    };
    let counts = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (parse_one(a)?, parse_one(b)?);
        if a > b {
            return Err(format!("empty agent range {a}..{b}"));
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(parse_one)
            .collect::<std::result::Result<Vec<_>, _>>()?
    };
    Ok(AgentCounts(counts))
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_budget(s: &str) -> std::result::Result<Budget, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))
}

#[derive(Serialize, Deserialize)]
struct OracleFile {
    outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    cost: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<JointPath>,
    instance_seed: u64,
    format_version: u32,
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Gen {
            sizes,
            agents,
            per_cell,
            obstacle_ratio,
            seed,
            out,
        } => {
            let entries = build_instances(&sizes, &agents.0, per_cell, obstacle_ratio, seed)?;
            fs::create_dir_all(&out)?;
            for entry in &entries {
                fs::write(out.join(format!("{}.json", entry.id)), entry.instance.to_json())?;
            }
            println!("wrote {} instances to {}", entries.len(), out.display());
            Ok(0)
        }
        Command::Plan {
            instance,
            config,
            algo,
            budget,
            cap,
            goal_bias,
            seed,
            out,
            solution_out,
            dump_tree,
        } => {
            let instance = Instance::from_json(&read_input(&instance)?)?;
            let mut cfg = match &config {
                Some(path) => PlannerConfig::from_json(&read_input(path)?)?,
                None => {
                    let algorithm = algo.ok_or_else(|| {
                        Error::InvalidInput("--algo is required when no --config is given".into())
                    })?;
                    PlannerConfig::new(algorithm, 0, Budget::Seconds(5.0))
                }
            };
            if let Some(a) = algo {
                cfg.algorithm = a;
            }
            if let Some(b) = budget {
                cfg.budget = b;
            }
            if let Some(c) = cap {
                cfg.node_cap = if c == 0 { None } else { Some(c) };
            }
            if let Some(g) = goal_bias {
                cfg.goal_bias = g;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let (record, tree) = plan_with_tree(&instance, &cfg, &mut ())?;
            if let Some(path) = &out {
                let mut line = serde_json::to_string(&record)?;
                line.push('\n');
                fs::write(path, line)?;
            }
            if let Some(path) = &dump_tree {
                fs::write(path, tree.dump_jsonl())?;
            }
            match (&record.solution, record.best_cost) {
                (Some(solution), Some(cost)) => {
                    if let Some(path) = &solution_out {
                        let doc = SolutionFile::new(solution.clone(), cost, instance.seed);
                        fs::write(path, doc.to_json())?;
                    }
                    println!(
                        "solved: cost {cost}, first solution at iteration {}",
                        record.first_solution_iteration.unwrap_or(0)
                    );
                    Ok(0)
                }
                _ => {
                    println!(
                        "no solution within budget {} ({} iterations executed)",
                        record.budget, record.iterations_executed
                    );
                    Ok(2)
                }
            }
        }
        Command::Bench { spec, workers, out } => {
            let spec = ExperimentSpec::from_json(&read_input(&spec)?)?;
            let entries = build_instance_set(&spec)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("spec.json"), spec.to_json())?;
            let options = BatchOptions {
                workers,
                out_dir: Some(&out),
            };
            let records = run_batch(&spec, &entries, &options)?;
            for algorithm in Algorithm::ALL {
                let total = records.iter().filter(|r| r.algorithm == algorithm).count();
                if total == 0 {
                    continue;
                }
                let solved = records
                    .iter()
                    .filter(|r| r.algorithm == algorithm && r.is_solved())
                    .count();
                println!("{algorithm}: {solved}/{total} solved");
            }
            println!("{} records -> {}", records.len(), out.display());
            Ok(0)
        }
        Command::Oracle {
            instance,
            out,
            max_states,
        } => {
            let instance = Instance::from_json(&read_input(&instance)?)?;
            let outcome = oracle_joint_optimal(&instance, OracleLimits { max_states })?;
            let doc = match &outcome {
                OracleOutcome::Solved { cost, path } => {
                    println!("solved: optimal cost {cost}");
                    OracleFile {
                        outcome: "solved".into(),
                        cost: Some(*cost),
                        steps: Some(path.clone()),
                        instance_seed: instance.seed,
                        format_version: SOLUTION_FORMAT_VERSION,
                    }
                }
                OracleOutcome::Unsolvable => {
                    println!("unsolvable");
                    OracleFile {
                        outcome: "unsolvable".into(),
                        cost: None,
                        steps: None,
                        instance_seed: instance.seed,
                        format_version: SOLUTION_FORMAT_VERSION,
                    }
                }
                OracleOutcome::LimitExceeded => {
                    println!("limit exceeded: instance too large for {max_states} states");
                    OracleFile {
                        outcome: "limit_exceeded".into(),
                        cost: None,
                        steps: None,
                        instance_seed: instance.seed,
                        format_version: SOLUTION_FORMAT_VERSION,
                    }
                }
            };
            if let Some(path) = &out {
                let mut text = serde_json::to_string(&doc)?;
                text.push('\n');
                fs::write(path, text)?;
            }
            Ok(0)
        }
        Command::Report {
            records,
            out,
            oracle_limit,
        } => {
            let inputs = load_records_dir(&records)?;
            write_reports(
                &inputs,
                OracleLimits {
                    max_states: oracle_limit,
                },
                &out,
            )?;
            println!(
                "report over {} records -> {}",
                inputs.records.len(),
                out.display()
            );
            Ok(0)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_)
        | Error::ArityMismatch { .. }
        | Error::InfeasibleInstance(_)
        | Error::Format(_) => 1,
        Error::Io(_) | Error::Json(_) => 3,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            std::process::exit(0);
        }
        Err(e) => {
            let _ = e.print();
            std::process::exit(1);
        }
    };
    match run(cli.command) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}
