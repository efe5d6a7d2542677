//! Aggregation of run records into CSV tables and SVG renderings.
//!
//! All CSV files carry a header row, comma separators, and LF line endings.
//! Under iteration budgets the inputs are deterministic, so reruns produce
//! byte-identical outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Instance;
use crate::harness::oracle::{oracle_joint_optimal, OracleLimits, OracleOutcome};
use crate::harness::svg;
use crate::harness::{performance_curve, suboptimality};
use crate::jointstate::{Cost, JointPath};
use crate::planner::{Algorithm, RunRecord};

/// Default oracle effort while reporting; instances over this fall back to
/// the per-agent shortest-path lower bound as their reference.
pub const REPORT_MAX_STATES: usize = 200_000;

/// Everything a report needs: the records plus whatever instances and tree
/// dumps were persisted next to them.
#[derive(Debug, Default)]
pub struct ReportInputs {
    pub records: Vec<RunRecord>,
    pub instances: BTreeMap<String, Instance>,
    pub trees: BTreeMap<String, Vec<JointPath>>,
}

/// Read a records directory as written by a batch run: `records.jsonl` (or,
/// failing that, `runs/*.json`), `instances/*.json`, and `trees/*.jsonl`.
pub fn load_records_dir(dir: &Path) -> Result<ReportInputs> {
    let mut inputs = ReportInputs::default();
    let combined = dir.join("records.jsonl");
    if combined.is_file() {
        for line in fs::read_to_string(&combined)?.lines() {
            if line.trim().is_empty() {
                continue;
            }
            inputs.records.push(
                serde_json::from_str(line).map_err(|e| Error::Format(format!("record: {e}")))?,
            );
        }
    } else {
        let runs = dir.join("runs");
        if runs.is_dir() {
            let mut paths: Vec<_> = fs::read_dir(&runs)?
                .collect::<std::io::Result<Vec<_>>>()?
                .into_iter()
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            for path in paths {
                inputs.records.push(
                    serde_json::from_str(&fs::read_to_string(&path)?)
                        .map_err(|e| Error::Format(format!("record {}: {e}", path.display())))?,
                );
            }
        }
    }
    if inputs.records.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no records found under {}",
            dir.display()
        )));
    }
    let instances = dir.join("instances");
    if instances.is_dir() {
        let mut paths: Vec<_> = fs::read_dir(&instances)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::InvalidInput(format!("bad instance file {}", path.display())))?
                .to_string();
            inputs
                .instances
                .insert(id, Instance::from_json(&fs::read_to_string(&path)?)?);
        }
    }
    let trees = dir.join("trees");
    if trees.is_dir() {
        let mut paths: Vec<_> = fs::read_dir(&trees)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let key = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::InvalidInput(format!("bad tree dump {}", path.display())))?
                .to_string();
            inputs
                .trees
                .insert(key, svg::tree_edges_from_dump(&fs::read_to_string(&path)?)?);
        }
    }
    Ok(inputs)
}

struct Reference {
    cost: Option<Cost>,
    kind: &'static str,
}

fn reference_for(instance: &Instance, limits: OracleLimits) -> Result<Reference> {
    match oracle_joint_optimal(instance, limits)? {
        OracleOutcome::Solved { cost, .. } => Ok(Reference {
            cost: Some(cost),
            kind: "oracle",
        }),
        OracleOutcome::Unsolvable => Ok(Reference {
            cost: None,
            kind: "unsolvable",
        }),
        OracleOutcome::LimitExceeded => {
            let mut total: Cost = 0;
            for (i, (&s, &g)) in instance.starts.iter().zip(&instance.goals).enumerate() {
                let d = crate::grid::bfs_distance_field(&instance.world, g)
                    .dist(s)
                    .ok_or_else(|| {
                        Error::InfeasibleInstance(format!("agent {i} cannot reach its goal"))
                    })?;
                total += d;
            }
            Ok(Reference {
                cost: Some(total),
                kind: "bfs_lower_bound",
            })
        }
    }
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::new();
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn sorted_records(records: &[RunRecord]) -> Vec<&RunRecord> {
    let ordinal = |a: Algorithm| Algorithm::ALL.iter().position(|&x| x == a).unwrap_or(0);
    let mut out: Vec<&RunRecord> = records.iter().collect();
    out.sort_by(|a, b| {
        ordinal(a.algorithm)
            .cmp(&ordinal(b.algorithm))
            .then_with(|| a.instance_id.cmp(&b.instance_id))
            .then_with(|| a.seed.cmp(&b.seed))
    });
    out
}

/// Write the four CSV tables and per-run SVG renderings under `out_dir`.
pub fn write_reports(
    inputs: &ReportInputs,
    oracle_limits: OracleLimits,
    out_dir: &Path,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let records = sorted_records(&inputs.records);

    let mut curve_rows = Vec::new();
    for algorithm in Algorithm::ALL {
        let total = inputs
            .records
            .iter()
            .filter(|r| r.algorithm == algorithm)
            .count();
        if total == 0 {
            continue;
        }
        for (rank, key) in performance_curve(&inputs.records, algorithm) {
            curve_rows.push(format!("{algorithm},{rank},{key},{total}"));
        }
    }
    write_csv(
        &out_dir.join("performance_curve.csv"),
        "algorithm,rank,first_solution_key,total_runs",
        &curve_rows,
    )?;

    let mut references: BTreeMap<&str, Reference> = BTreeMap::new();
    for (id, instance) in &inputs.instances {
        references.insert(id, reference_for(instance, oracle_limits)?);
    }
    let mut subopt_rows = Vec::new();
    for record in &records {
        let reference = references.get(record.instance_id.as_str());
        let (ref_cost, ref_kind) = match reference {
            Some(r) => (r.cost, r.kind),
            None => (None, "unknown"),
        };
        let pct = |cost: Option<Cost>| -> String {
            match (cost, ref_cost) {
                (Some(c), Some(r)) => match suboptimality(c, r) {
                    Ok(v) => format!("{v:.4}"),
                    Err(_) => String::new(),
                },
                _ => String::new(),
            }
        };
        subopt_rows.push(format!(
            "{},{},{},{},{},{},{},{}",
            record.algorithm,
            record.instance_id,
            opt(ref_cost),
            ref_kind,
            opt(record.first_cost),
            pct(record.first_cost),
            opt(record.best_cost),
            pct(record.best_cost),
        ));
    }
    write_csv(
        &out_dir.join("suboptimality.csv"),
        "algorithm,instance_id,reference_cost,reference_kind,first_cost,first_suboptimality_pct,best_cost,best_suboptimality_pct",
        &subopt_rows,
    )?;

    let mut cost_rows = Vec::new();
    let mut node_rows = Vec::new();
    for record in &records {
        for &(iteration, cost) in &record.cost_trace {
            cost_rows.push(format!(
                "{},{},{iteration},{cost}",
                record.algorithm, record.instance_id
            ));
        }
        for &(iteration, count) in &record.node_count_trace {
            node_rows.push(format!(
                "{},{},{iteration},{count}",
                record.algorithm, record.instance_id
            ));
        }
    }
    write_csv(
        &out_dir.join("cost_vs_iteration.csv"),
        "algorithm,instance_id,iteration,best_cost",
        &cost_rows,
    )?;
    write_csv(
        &out_dir.join("node_count_vs_iteration.csv"),
        "algorithm,instance_id,iteration,node_count",
        &node_rows,
    )?;

    let svg_dir = out_dir.join("svg");
    fs::create_dir_all(&svg_dir)?;
    for record in &records {
        let Some(instance) = inputs.instances.get(&record.instance_id) else {
            continue;
        };
        let key = format!("{}__{}", record.instance_id, record.algorithm);
        let edges = inputs.trees.get(&key).map(Vec::as_slice).unwrap_or(&[]);
        let rendering = svg::render_svg(instance, edges, record.solution.as_ref());
        fs::write(svg_dir.join(format!("{key}.svg")), rendering)?;
    }
    Ok(())
}
