//! End-to-end tests of the `marrt` binary: every subcommand, the documented
//! exit codes, and the determinism contract of the emitted files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

use marrt::grid::{generate_instance, generate_world, Cell, GridWorld, Instance, DEFAULT_MAX_DRAWS};
use marrt::harness::svg::tree_edges_from_dump;
use marrt::harness::validate::validate_solution;
use marrt::jointstate::{path_cost, JointState, SolutionFile};
use marrt::planner::RunRecord;

fn marrt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marrt"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn write_easy_instance(dir: &Path) -> (PathBuf, Instance) {
    let world = generate_world(8, 0.1, 42).unwrap();
    let instance = generate_instance(&world, 2, 7, DEFAULT_MAX_DRAWS).unwrap();
    let path = dir.join("instance.json");
    fs::write(&path, instance.to_json()).unwrap();
    (path, instance)
}

fn write_sealed_swap_instance(dir: &Path) -> PathBuf {
    let mut obstacles = Vec::new();
    for y in 0..3u16 {
        for x in 0..3u16 {
            if y != 1 || x > 1 {
                obstacles.push(Cell::new(x, y));
            }
        }
    }
    let world = GridWorld::new(3, &obstacles, 0).unwrap();
    let instance = Instance {
        world,
        starts: vec![Cell::new(0, 1), Cell::new(1, 1)],
        goals: vec![Cell::new(1, 1), Cell::new(0, 1)],
        seed: 5,
    };
    let path = dir.join("sealed.json");
    fs::write(&path, instance.to_json()).unwrap();
    path
}

fn sorted_dir(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

#[test]
fn gen_writes_a_deterministic_instance_set() {
    let tmp = TempDir::new().unwrap();
    for out in ["a", "b"] {
        let output = marrt(
            &[
                "gen", "--sizes", "8", "--agents", "1..2", "--per-cell", "2", "--seed", "7",
                "--out", out,
            ],
            tmp.path(),
        );
        assert!(output.status.success(), "{output:?}");
    }

    let names = sorted_dir(&tmp.path().join("a"));
    assert_eq!(
        names,
        [
            "g08_a01_i000.json",
            "g08_a01_i001.json",
            "g08_a02_i000.json",
            "g08_a02_i001.json",
        ]
    );
    for name in &names {
        let a = fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical gen runs");
        let instance = Instance::from_json(std::str::from_utf8(&a).unwrap()).unwrap();
        instance.validate().unwrap();
    }
}

#[test]
fn plan_emits_record_solution_and_tree_that_agree() {
    let tmp = TempDir::new().unwrap();
    let (instance_path, instance) = write_easy_instance(tmp.path());
    let output = marrt(
        &[
            "plan",
            "--instance",
            instance_path.to_str().unwrap(),
            "--algo",
            "marrt*fn",
            "--budget",
            "4000it",
            "--seed",
            "3",
            "--out",
            "record.json",
            "--solution-out",
            "solution.json",
            "--dump-tree",
            "tree.jsonl",
        ],
        tmp.path(),
    );
    assert!(output.status.success(), "{output:?}");
    assert!(stdout_of(&output).starts_with("solved: cost "));

    let record: RunRecord =
        serde_json::from_str(fs::read_to_string(tmp.path().join("record.json")).unwrap().trim())
            .unwrap();
    assert!(record.reproducible);
    assert!(record.elapsed_seconds.is_none());
    let best = record.best_cost.unwrap();

    let solution =
        SolutionFile::from_json(&fs::read_to_string(tmp.path().join("solution.json")).unwrap())
            .unwrap();
    assert_eq!(solution.cost, best);
    assert_eq!(solution.instance_seed, instance.seed);
    let goal = JointState::new(instance.goals.clone());
    assert_eq!(path_cost(&solution.steps, &goal).unwrap(), best);
    assert!(validate_solution(&instance, &solution.steps).is_empty());

    let dump = fs::read_to_string(tmp.path().join("tree.jsonl")).unwrap();
    let edges = tree_edges_from_dump(&dump).unwrap();
    assert!(!edges.is_empty());
}

#[test]
fn plan_reruns_byte_identically_under_iteration_budgets() {
    let tmp = TempDir::new().unwrap();
    let (instance_path, _) = write_easy_instance(tmp.path());
    for out in ["one.json", "two.json"] {
        let output = marrt(
            &[
                "plan",
                "--instance",
                instance_path.to_str().unwrap(),
                "--algo",
                "ismarrt*fn",
                "--budget",
                "800it",
                "--seed",
                "11",
                "--out",
                out,
            ],
            tmp.path(),
        );
        assert_eq!(output.status.code(), Some(0), "{output:?}");
    }
    let one = fs::read(tmp.path().join("one.json")).unwrap();
    let two = fs::read(tmp.path().join("two.json")).unwrap();
    assert_eq!(one, two);
}

#[test]
fn plan_exits_two_when_the_budget_expires_without_a_solution() {
    let tmp = TempDir::new().unwrap();
    let sealed = write_sealed_swap_instance(tmp.path());
    let output = marrt(
        &[
            "plan",
            "--instance",
            sealed.to_str().unwrap(),
            "--algo",
            "marrt*",
            "--budget",
            "300it",
            "--seed",
            "1",
        ],
        tmp.path(),
    );
    assert_eq!(output.status.code(), Some(2), "{output:?}");
    assert!(stdout_of(&output).starts_with("no solution within budget"));
}

#[test]
fn bad_inputs_exit_one() {
    let tmp = TempDir::new().unwrap();
    let missing = marrt(
        &["plan", "--instance", "nope.json", "--algo", "marrt*"],
        tmp.path(),
    );
    assert_eq!(missing.status.code(), Some(1), "{missing:?}");
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error:"));

    let (instance_path, _) = write_easy_instance(tmp.path());
    let bad_algo = marrt(
        &[
            "plan",
            "--instance",
            instance_path.to_str().unwrap(),
            "--algo",
            "dijkstra",
        ],
        tmp.path(),
    );
    assert_eq!(bad_algo.status.code(), Some(1), "{bad_algo:?}");

    let no_algo = marrt(
        &["plan", "--instance", instance_path.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(no_algo.status.code(), Some(1), "{no_algo:?}");

    let bad_agents = marrt(
        &[
            "gen", "--sizes", "8", "--agents", "3..1", "--out", "x",
        ],
        tmp.path(),
    );
    assert_eq!(bad_agents.status.code(), Some(1), "{bad_agents:?}");
}

#[test]
fn oracle_reports_the_optimum_and_bounds_the_planner() {
    let tmp = TempDir::new().unwrap();
    let (instance_path, _) = write_easy_instance(tmp.path());
    let oracle = marrt(
        &[
            "oracle",
            "--instance",
            instance_path.to_str().unwrap(),
            "--out",
            "oracle.json",
        ],
        tmp.path(),
    );
    assert_eq!(oracle.status.code(), Some(0), "{oracle:?}");
    assert!(stdout_of(&oracle).starts_with("solved: optimal cost "));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("oracle.json")).unwrap()).unwrap();
    assert_eq!(doc["outcome"], "solved");
    let optimum = doc["cost"].as_u64().unwrap();

    let plan = marrt(
        &[
            "plan",
            "--instance",
            instance_path.to_str().unwrap(),
            "--algo",
            "marrt*",
            "--budget",
            "4000it",
            "--seed",
            "3",
            "--out",
            "record.json",
        ],
        tmp.path(),
    );
    assert_eq!(plan.status.code(), Some(0), "{plan:?}");
    let record: RunRecord =
        serde_json::from_str(fs::read_to_string(tmp.path().join("record.json")).unwrap().trim())
            .unwrap();
    assert!(u64::from(record.best_cost.unwrap()) >= optimum);

    let sealed = write_sealed_swap_instance(tmp.path());
    let unsolvable = marrt(
        &["oracle", "--instance", sealed.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(unsolvable.status.code(), Some(0), "{unsolvable:?}");
    assert!(stdout_of(&unsolvable).starts_with("unsolvable"));
}

#[test]
fn bench_then_report_produces_tables_and_resumes_identically() {
    let tmp = TempDir::new().unwrap();
    let spec = r#"{
        "grid_sizes": [6],
        "agent_counts": [1, 2],
        "instances_per_cell": 1,
        "obstacle_ratio": 0.1,
        "budget": "400it",
        "algorithms": ["marrt_star", "marrt_star_fn", "is_marrt_star", "is_marrt_star_fn"],
        "master_seed": 5
    }"#;
    fs::write(tmp.path().join("spec.json"), spec).unwrap();
    let bench = marrt(
        &[
            "bench", "--spec", "spec.json", "--workers", "2", "--out", "bench",
        ],
        tmp.path(),
    );
    assert_eq!(bench.status.code(), Some(0), "{bench:?}");

    let bench_dir = tmp.path().join("bench");
    let records_path = bench_dir.join("records.jsonl");
    let first_records = fs::read(&records_path).unwrap();
    assert_eq!(first_records.iter().filter(|&&b| b == b'\n').count(), 8);
    assert_eq!(sorted_dir(&bench_dir.join("instances")).len(), 2);
    let run_files = sorted_dir(&bench_dir.join("runs"));
    assert_eq!(run_files.len(), 8);

    fs::remove_file(bench_dir.join("runs").join(&run_files[0])).unwrap();
    fs::remove_file(&records_path).unwrap();
    let resumed = marrt(
        &[
            "bench", "--spec", "spec.json", "--workers", "1", "--out", "bench",
        ],
        tmp.path(),
    );
    assert_eq!(resumed.status.code(), Some(0), "{resumed:?}");
    assert_eq!(fs::read(&records_path).unwrap(), first_records);

    let report = marrt(
        &["report", "--records", "bench", "--out", "report"],
        tmp.path(),
    );
    assert_eq!(report.status.code(), Some(0), "{report:?}");
    let report_dir = tmp.path().join("report");
    for (file, header) in [
        ("performance_curve.csv", "algorithm,rank,first_solution_key,total_runs"),
        (
            "suboptimality.csv",
            "algorithm,instance_id,reference_cost,reference_kind,first_cost,\
             first_suboptimality_pct,best_cost,best_suboptimality_pct",
        ),
        ("cost_vs_iteration.csv", "algorithm,instance_id,iteration,best_cost"),
        ("node_count_vs_iteration.csv", "algorithm,instance_id,iteration,node_count"),
    ] {
        let text = fs::read_to_string(report_dir.join(file)).unwrap();
        assert_eq!(text.lines().next().unwrap(), header, "{file} header");
    }
    let svgs = sorted_dir(&report_dir.join("svg"));
    assert_eq!(svgs.len(), 8);
    assert!(svgs.iter().all(|name| name.ends_with(".svg")));
}
