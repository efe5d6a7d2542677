//! Deterministic property suites shared by the standalone property-test
//! target and the acceptance gate.

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use marrt::greedy::{greedy_connect, HeuristicMode, Steering};
use marrt::grid::{generate_world, Cell};
use marrt::jointstate::{collision_free, joint_distance, JointState};
use marrt::planner::sample;
use marrt::seeds;
use marrt::tree::{ExtendConfig, ExtendOutcome, RemovalOutcome, Tree};

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn cell_strategy(side: u16) -> impl Strategy<Value = Cell> {
    (0..side, 0..side).prop_map(|(x, y)| Cell::new(x, y))
}

fn joint_strategy(side: u16, n: usize) -> impl Strategy<Value = JointState> {
    prop::collection::vec(cell_strategy(side), n).prop_map(JointState::new)
}

fn distinct_joint_strategy(side: u16, n: usize) -> impl Strategy<Value = JointState> {
    joint_strategy(side, n).prop_filter("cells must be pairwise distinct", |s| {
        let cells = s.cells();
        cells
            .iter()
            .enumerate()
            .all(|(i, c)| !cells[..i].contains(c))
    })
}

/// `joint_distance` is a metric: non-negative, zero exactly on equal states,
/// symmetric, and triangle-inequality consistent.
pub fn check_joint_distance_metric(cases: u32) {
    runner(cases)
        .run(
            &(1usize..=4).prop_flat_map(|n| {
                (
                    joint_strategy(40, n),
                    joint_strategy(40, n),
                    joint_strategy(40, n),
                )
            }),
            |(a, b, c)| {
                let dab = joint_distance(&a, &b).unwrap();
                let dba = joint_distance(&b, &a).unwrap();
                let dbc = joint_distance(&b, &c).unwrap();
                let dac = joint_distance(&a, &c).unwrap();
                let daa = joint_distance(&a, &a).unwrap();
                prop_assert!(dab >= 0.0);
                prop_assert_eq!(daa, 0.0);
                prop_assert_eq!(dab, dba);
                prop_assert_eq!(dab == 0.0, a == b);
                prop_assert!(dac <= dab + dbc + 1e-9);
                Ok(())
            },
        )
        .unwrap();

    let a = JointState::new(vec![Cell::new(0, 0), Cell::new(4, 4)]);
    let b = JointState::new(vec![Cell::new(0, 0)]);
    assert!(joint_distance(&a, &b).is_err());
}

/// For collision-valid joint states (pairwise-distinct cells on both sides)
/// the check is direction-symmetric; injected vertex and swap faults are
/// caught while pure follow chains pass.
pub fn check_collision_symmetry_and_faults(cases: u32) {
    runner(cases)
        .run(
            &(1usize..=4).prop_flat_map(|n| {
                (distinct_joint_strategy(6, n), distinct_joint_strategy(6, n))
            }),
            |(from, to)| {
                let forward = collision_free(&from, &to).unwrap();
                let backward = collision_free(&to, &from).unwrap();
                prop_assert_eq!(forward, backward);
                Ok(())
            },
        )
        .unwrap();

    let js = |cells: &[(u16, u16)]| {
        JointState::new(cells.iter().map(|&(x, y)| Cell::new(x, y)).collect())
    };
    assert!(!collision_free(&js(&[(0, 0), (1, 0)]), &js(&[(1, 0), (0, 0)])).unwrap());
    assert!(!collision_free(&js(&[(0, 0), (2, 0)]), &js(&[(1, 0), (1, 0)])).unwrap());
    assert!(collision_free(&js(&[(0, 0), (1, 0), (2, 0)]), &js(&[(1, 0), (2, 0), (3, 0)])).unwrap());
}

/// Ten thousand randomized grow/remove/restore operations against capped and
/// uncapped trees keep every structural audit green.
pub fn check_tree_audit_random_ops(total_ops: u64) {
    let worlds = 5u64;
    let ops_per_world = total_ops.div_ceil(worlds);
    for w in 0..worlds {
        let world = generate_world(6, 0.12, 100 + w).unwrap();
        let mut rng = seeds::rng(500 + w);
        let free = world.free_cells();
        let start = JointState::new(vec![free[0], free[1]]);
        let goal = JointState::new(vec![free[free.len() - 1], free[free.len() - 2]]);
        let cap = if w % 2 == 0 { Some(20) } else { None };
        let mut tree = Tree::new(start, goal.clone(), cap, 12.0, 6.0);
        let mut steering = Steering::new(&world, HeuristicMode::Euclidean);
        let cfg = ExtendConfig {
            c_max: 24,
            near_cap: Some(8),
        };
        for op in 0..ops_per_world {
            let x_rand = sample(&world, 2, &goal, 0.1, &mut rng).unwrap();
            tree.begin_step();
            if let ExtendOutcome::Extended { node, .. } =
                tree.extend(&mut steering, &x_rand, &cfg).unwrap()
            {
                if tree.cap().is_some_and(|m| tree.len() > m) {
                    if let RemovalOutcome::Restored = tree.forced_removal(node, &mut rng) {
                        tree.restore();
                    }
                }
            }
            if let Some(m) = tree.cap() {
                assert!(tree.len() <= m, "cap exceeded at op {op}");
            }
            if op % 500 == 0 {
                tree.audit(&world).expect("mid-run audit");
            }
        }
        tree.audit(&world).expect("final audit");
    }
}

/// A greedy walk under a smaller budget is a step-for-step prefix of the walk
/// under a larger budget, and no step ever increases an agent's distance to
/// its target.
pub fn check_greedy_prefix_monotonicity(cases: u32) {
    runner(cases)
        .run(
            &(0u64..1_000, 1u32..20, 1u32..30).prop_filter("budgets must differ", |(_, a, b)| {
                a < b
            }),
            |(world_seed, c_small, c_large)| {
                let world = generate_world(8, 0.15, world_seed).unwrap();
                let mut rng = seeds::rng(world_seed ^ 0x9e37);
                let goal = sample(&world, 2, &JointState::new(vec![]), 0.0, &mut rng);
                let goal = match goal {
                    Ok(g) => g,
                    Err(_) => return Ok(()),
                };
                let start = sample(&world, 2, &goal, 0.0, &mut rng).unwrap();
                let small = greedy_connect(&world, &start, &goal, c_small, HeuristicMode::Euclidean)
                    .unwrap();
                let large = greedy_connect(&world, &start, &goal, c_large, HeuristicMode::Euclidean)
                    .unwrap();
                prop_assert!(small.path.len() <= large.path.len() || small.reached_target);
                let overlap = small.path.len().min(large.path.len());
                for t in 0..overlap {
                    prop_assert_eq!(&small.path.steps[t], &large.path.steps[t]);
                }
                for t in 1..large.path.len() {
                    let prev = large.path.steps[t - 1].cells();
                    let next = large.path.steps[t].cells();
                    for (agent, &target) in goal.cells().iter().enumerate() {
                        prop_assert!(
                            next[agent].sq_dist(target) <= prev[agent].sq_dist(target),
                            "agent {} moved away from its target at step {}",
                            agent,
                            t
                        );
                    }
                }
                Ok(())
            },
        )
        .unwrap();
}

/// The suboptimality formula matches its definition, is zero exactly at the
/// reference, and rejects undefined zero-reference comparisons.
pub fn check_suboptimality_arithmetic(cases: u32) {
    runner(cases)
        .run(&(0u32..1_000_000, 1u32..1_000_000), |(returned, reference)| {
            let got = marrt::harness::suboptimality(returned, reference).unwrap();
            let expect = (f64::from(returned) / f64::from(reference) - 1.0) * 100.0;
            prop_assert!((got - expect).abs() < 1e-9);
            prop_assert_eq!(got >= 0.0, returned >= reference);
            prop_assert_eq!(got == 0.0, returned == reference);
            Ok(())
        })
        .unwrap();
    assert_eq!(marrt::harness::suboptimality(0, 0).unwrap(), 0.0);
    assert!(marrt::harness::suboptimality(3, 0).is_err());
}
