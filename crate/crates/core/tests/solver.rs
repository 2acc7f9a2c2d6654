mod common;

use std::time::Duration;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use swarm_infer::experiments::{generate_scenario, ScenarioConfig};
use swarm_infer::latency::{check_feasibility, total_latency, Placement};
use swarm_infer::model::{CnnModel, Template};
use swarm_infer::network::RateModel;
use swarm_infer::solver::{root_lower_bound, solve_bruteforce, solve_exact, SolveError, SolveStatus};

#[test]
fn exact_matches_bruteforce_on_micro_scenarios() {
    let mut feasible = 0;
    for seed in 1_000..1_100 {
        let s = micro_scenario(seed);
        let exact = solve_exact(&s, None).unwrap();
        let brute = solve_bruteforce(&s).unwrap();
        assert_eq!(exact.status, brute.status, "seed {seed}");
        if brute.is_infeasible() {
            assert!(exact.placements.is_empty());
            continue;
        }
        feasible += 1;
        assert!(exact.proven_optimal);
        let (a, b) = (exact.total().unwrap(), brute.total().unwrap());
        assert!((a - b).abs() <= TOL, "seed {seed}: exact {a} vs brute force {b}");
        assert!(check_feasibility(&exact.placements, &s).is_empty());
        assert!(check_feasibility(&brute.placements, &s).is_empty());
    }
    // The generator must exercise both outcomes.
    assert!(feasible > 50 && feasible < 100, "{feasible} feasible");
}

#[test]
fn layer_too_big_everywhere_is_infeasible() {
    let swarm = explicit_swarm(
        vec![node(1e6, 1_000, u64::MAX), node(1e6, 2_000, u64::MAX)],
        vec![vec![0.0, 1e6], vec![1e6, 0.0]],
        vec![vec![1e6, 1e6]],
    );
    let m = CnnModel::new("m", 10, vec![layer(1, 100, 1, 1), layer(2, 5_000, 1, 1)], &[]);
    let s = scenario_of(swarm, vec![m]);
    let exact = solve_exact(&s, None).unwrap();
    let brute = solve_bruteforce(&s).unwrap();
    assert_eq!(exact.status, SolveStatus::Infeasible);
    assert_eq!(brute.status, SolveStatus::Infeasible);
    assert!(exact.breakdown.is_none());
}

#[test]
fn jointly_infeasible_requests() {
    // Each request fits alone; both together exceed the only node's compute.
    let swarm = explicit_swarm(vec![node(1e6, u64::MAX, 100)], vec![vec![0.0]], vec![vec![1e6]]);
    let m = CnnModel::new("m", 10, vec![layer(1, 1, 60, 1)], &[]);
    let s = scenario_of(swarm, vec![m.clone(), m]);
    assert!(solve_exact(&s, None).unwrap().is_infeasible());
    assert!(solve_bruteforce(&s).unwrap().is_infeasible());
}

#[test]
fn single_node_has_one_placement() {
    let swarm = explicit_swarm(vec![node(3e6, u64::MAX, u64::MAX)], vec![vec![0.0]], vec![vec![2e6]]);
    let m = CnnModel::new("m", 1_000_000, layers(&[(3_000_000, 5), (6_000_000, 5), (3_000_000, 5)]), &[(3, 2)]);
    let s = scenario_of(swarm, vec![m]);
    let r = solve_exact(&s, None).unwrap();
    assert_eq!(r.placements, vec![Placement::collapsed(0, 3, 0)]);
    // 1e6/2e6 + 12e6/3e6
    assert!((r.total().unwrap() - 4.5).abs() < TOL);
    assert!(r.transmissions.is_empty());
}

#[test]
fn bruteforce_enumerates_every_assignment() {
    let swarm = explicit_swarm(
        vec![node(1e6, u64::MAX, u64::MAX), node(1e6, u64::MAX, u64::MAX)],
        vec![vec![0.0, 1e6], vec![1e6, 0.0]],
        vec![vec![1e6, 1e6]],
    );
    let m = CnnModel::new("m", 1, layers(&[(1, 1), (1, 1), (1, 1)]), &[]);
    let s = scenario_of(swarm, vec![m]);
    assert_eq!(s.search_space(), 8);
    assert_eq!(solve_bruteforce(&s).unwrap().nodes_explored, 8);
}

#[test]
fn oracle_refuses_large_instances() {
    let s = generate_scenario(&ScenarioConfig::default(), 10, 2, Template::Sequential, 5, 1).unwrap();
    assert!(matches!(solve_bruteforce(&s), Err(SolveError::TooLarge { .. })));
    let err = solve_bruteforce(&s).unwrap_err().to_string();
    assert!(err.contains("instance too large for oracle"), "{err}");
}

#[test]
fn ties_resolve_to_the_smallest_assignment() {
    // Two identical nodes with symmetric links: mirrored placements tie.
    let swarm = explicit_swarm(
        vec![node(1e6, u64::MAX, 3), node(1e6, u64::MAX, 3)],
        vec![vec![0.0, 1e6], vec![1e6, 0.0]],
        vec![vec![1e6, 1e6]],
    );
    let m = CnnModel::new("m", 10, layers(&[(2, 10), (2, 10)]), &[]);
    let s = scenario_of(swarm, vec![m]);
    let exact = solve_exact(&s, None).unwrap();
    let brute = solve_bruteforce(&s).unwrap();
    assert_eq!(exact.placements, vec![Placement::new(0, vec![0, 1])]);
    assert_eq!(exact.placements, brute.placements);
}

#[test]
fn time_limit_returns_unproven_incumbent() {
    // Tight budgets force layers apart, so the search cannot close quickly.
    let mut config = ScenarioConfig::default();
    config.budgets.compute_budget = 150_000_000;
    let s = generate_scenario(&config, 12, 8, Template::Residual, 8, 3).unwrap();
    let r = solve_exact(&s, Some(Duration::ZERO)).unwrap();
    assert_eq!(r.status, SolveStatus::TimeLimit);
    assert!(!r.proven_optimal);
    assert!(check_feasibility(&r.placements, &s).is_empty());
}

#[test]
fn reported_breakdown_is_the_objective_of_the_placement() {
    for seed in 0..30 {
        let s = micro_scenario(seed);
        let r = solve_exact(&s, None).unwrap();
        if let Some(b) = &r.breakdown {
            assert_eq!(b, &total_latency(&r.placements, &s).unwrap());
        }
    }
}

#[test]
fn five_node_five_request_instance_solves_to_optimality() {
    let s = generate_scenario(&ScenarioConfig::default(), 5, 5, Template::Sequential, 5, 1).unwrap();
    let r = solve_exact(&s, Some(Duration::from_secs(60))).unwrap();
    assert!(r.proven_optimal);
    assert!(check_feasibility(&r.placements, &s).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn root_bound_never_exceeds_optimum(seed in 0u64..100_000) {
        let s = micro_scenario(seed);
        let r = solve_exact(&s, None).unwrap();
        if let Some(total) = r.total() {
            prop_assert!(root_lower_bound(&s) <= total + TOL);
        }
    }

    #[test]
    fn extra_node_never_hurts(seed in 0u64..100_000) {
        let s = micro_scenario(seed);
        let before = solve_exact(&s, None).unwrap();
        let mut grown = s.clone();
        let extra = node(5e8, u64::MAX / 2, u64::MAX / 2);
        grown.swarm = s
            .swarm
            .with_extra_node(extra, &RateModel::Uniform { lo: 1e5, hi: 1e7 }, &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap();
        let after = solve_exact(&grown, None).unwrap();
        match (before.total(), after.total()) {
            (Some(b), Some(a)) => prop_assert!(a <= b + TOL),
            (Some(_), None) => prop_assert!(false, "growing the swarm lost feasibility"),
            _ => {}
        }
    }

    #[test]
    fn exact_placements_are_feasible(seed in 0u64..100_000) {
        let s = micro_scenario(seed);
        let r = solve_exact(&s, None).unwrap();
        prop_assert!(check_feasibility(&r.placements, &s).is_empty());
        prop_assert_eq!(r.placements.is_empty(), r.is_infeasible());
    }
}
