use proptest::prelude::*;

use swarm_infer::experiments::stats::spearman;
use swarm_infer::experiments::{
    find_min_uavs, find_rejection_threshold, generate_scenario, request_load, run_sweep,
    shared_data_point, summarize, write_rows_csv, LayerGenerator, ScenarioConfig, SolverKind,
    SweepKind, SweepSpec, ThresholdOutcome,
};
use swarm_infer::heuristic::HeuristicParams;
use swarm_infer::model::{layer_multiplications, LayerDims, Template};

fn default_params() -> HeuristicParams {
    HeuristicParams::new(0.7, 0.3).unwrap()
}

/// Every layer identical; one node's compute fits exactly `layers` of them.
fn fits_exactly(layers: u64) -> ScenarioConfig {
    let dims = LayerDims::conv(3, 16, 16, 14);
    let mut config = ScenarioConfig {
        layers: LayerGenerator::Uniform { dims },
        ..ScenarioConfig::default()
    };
    config.budgets.compute_budget = layers * layer_multiplications(&dims);
    config
}

#[test]
fn threshold_of_a_three_layer_node() {
    let t = find_rejection_threshold(&fits_exactly(3), 1, 1, Template::Sequential, 7, &default_params(), 64)
        .unwrap();
    assert_eq!(t, ThresholdOutcome::Depth(3));
}

#[test]
fn generous_budgets_have_no_threshold() {
    let mut config = ScenarioConfig::default();
    config.budgets.compute_budget = u64::MAX / 2;
    config.budgets.mem_budget = u64::MAX / 2;
    let t = find_rejection_threshold(&config, 1, 2, Template::Sequential, 1, &default_params(), 40).unwrap();
    assert_eq!(t, ThresholdOutcome::NoThresholdBelowCap(40));
    assert_eq!(t.to_string(), "no threshold below cap (40)");
}

#[test]
fn min_uavs_for_a_fixed_depth() {
    // Three nodes of three layers each hold one nine-layer request.
    let n = find_min_uavs(&fits_exactly(3), 1, 9, Template::Sequential, 1, &default_params(), 10).unwrap();
    assert_eq!(n, Some(3));
    let none = find_min_uavs(&fits_exactly(3), 1, 9, Template::Sequential, 1, &default_params(), 2).unwrap();
    assert_eq!(none, None);
}

#[test]
fn generation_is_deterministic_and_prefix_consistent() {
    let config = ScenarioConfig::default();
    let a = generate_scenario(&config, 5, 5, Template::Sequential, 5, 11).unwrap();
    let b = generate_scenario(&config, 5, 5, Template::Sequential, 5, 11).unwrap();
    assert_eq!(a, b);
    let more = generate_scenario(&config, 5, 8, Template::Sequential, 5, 11).unwrap();
    assert_eq!(more.swarm, a.swarm);
    assert_eq!(more.requests[..5], a.requests[..]);
    assert_eq!(more.models[..5], a.models[..]);
    let other = generate_scenario(&config, 5, 5, Template::Sequential, 5, 12).unwrap();
    assert_ne!(a, other);
}

#[test]
fn generation_reports_template_preconditions() {
    let config = ScenarioConfig::default();
    assert!(generate_scenario(&config, 5, 5, Template::Residual, 2, 1).is_err());
    assert!(generate_scenario(&config, 0, 5, Template::Sequential, 5, 1).is_err());
    let s = generate_scenario(&config, 30, 70, Template::Residual, 5, 1).unwrap();
    assert_eq!(s.swarm.len(), 30);
    assert_eq!(s.requests.len(), 70);
    assert!(s.validate().is_empty());
    let load = request_load(&s);
    assert_eq!(load.total(), 70);
    assert!(load.is_within(70));
}

#[test]
fn shared_data_edge_cases() {
    let config = ScenarioConfig::default();
    let p = default_params();
    let shallow = shared_data_point(&config, 5, 4, 1, 3, &p).unwrap();
    assert_eq!(shallow.sequential, shallow.residual);
    assert_eq!(shallow.crossing_shortcuts, 0);
    let empty = shared_data_point(&config, 5, 0, 6, 3, &p).unwrap();
    assert_eq!((empty.sequential, empty.residual), (0, 0));
}

#[test]
fn exact_latency_grows_with_requests_per_seed() {
    let mut spec = SweepSpec::new(SweepKind::Requests, vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![1, 2, 3]);
    spec.solvers = vec![SolverKind::Exact];
    let rows = run_sweep(&spec).unwrap();
    for seed in [1, 2, 3] {
        let totals: Vec<f64> = rows
            .iter()
            .filter(|r| r.seed == seed)
            .map(|r| {
                assert_eq!(r.status, "optimal");
                r.total.unwrap()
            })
            .collect();
        assert_eq!(totals.len(), 5);
        assert!(totals.windows(2).all(|w| w[0] <= w[1] + 1e-9), "seed {seed}: {totals:?}");
    }
}

#[test]
fn exact_never_above_heuristic_in_a_sweep() {
    let mut spec = SweepSpec::new(SweepKind::Layers, vec![2.0, 3.0, 4.0], vec![1, 2]);
    spec.fixed.n_requests = 3;
    spec.fixed.n_uavs = 4;
    spec.solvers = vec![SolverKind::Exact, SolverKind::Heuristic];
    let rows = run_sweep(&spec).unwrap();
    for pair in rows.chunks(2) {
        let (exact, heuristic) = (&pair[0], &pair[1]);
        assert_eq!((exact.solver.as_str(), heuristic.solver.as_str()), ("exact", "heuristic"));
        if heuristic.rejections == Some(0) {
            assert!(exact.total.unwrap() <= heuristic.total.unwrap() + 1e-9);
        }
    }
}

#[test]
fn alphabeta_table_has_one_row_per_pair() {
    let values = vec![0.3, 0.5, 0.7, 0.9];
    let spec = SweepSpec::new(SweepKind::Alphabeta, values.clone(), vec![1, 2, 3]);
    let rows = run_sweep(&spec).unwrap();
    let summary = summarize(SweepKind::Alphabeta, &rows);
    assert_eq!(summary.iter().map(|r| r.value).collect::<Vec<_>>(), values);
    assert!(summary.iter().all(|r| r.samples == 3 && r.mean.is_finite()));
}

#[test]
fn sweep_rows_are_ordered_and_reproducible() {
    let spec = SweepSpec::new(SweepKind::Uavs, vec![3.0, 6.0], vec![5, 1, 3]);
    let a = run_sweep(&spec).unwrap();
    let keys: Vec<(f64, u64)> = a.iter().map(|r| (r.value, r.seed)).collect();
    assert_eq!(keys, vec![(3.0, 5), (3.0, 1), (3.0, 3), (6.0, 5), (6.0, 1), (6.0, 3)]);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    write_rows_csv(&a, &mut x).unwrap();
    write_rows_csv(&run_sweep(&spec).unwrap(), &mut y).unwrap();
    assert_eq!(x, y);
}

#[test]
fn bad_specs_are_refused() {
    assert!(run_sweep(&SweepSpec::new(SweepKind::Requests, vec![], vec![1])).is_err());
    assert!(run_sweep(&SweepSpec::new(SweepKind::Requests, vec![1.0], vec![])).is_err());
}

#[test]
fn failed_points_become_row_status() {
    // Residual models need three layers; the sweep keeps going past depth 2.
    let mut spec = SweepSpec::new(SweepKind::Layers, vec![2.0, 3.0], vec![1]);
    spec.fixed.template = Template::Residual;
    let rows = run_sweep(&spec).unwrap();
    assert!(rows[0].status.starts_with("error"));
    assert_eq!(rows[1].status, "ok");
}

#[test]
fn spec_file_round_trip() {
    let json = r#"{"kind": "uavs", "values": [5, 10], "seeds": [1, 2],
                   "fixed": {"n_requests": 10, "depth": 10}}"#;
    let spec: SweepSpec = serde_json::from_str(json).unwrap();
    assert_eq!(spec.fixed.n_requests, 10);
    assert_eq!(spec.fixed.n_uavs, 5);
    assert_eq!(spec.solvers, vec![SolverKind::Heuristic]);
    assert!(serde_json::from_str::<SweepSpec>(r#"{"kind": "uavs", "values": [1], "seeds": [1], "colour": 1}"#).is_err());
}

#[test]
fn threshold_grows_with_swarm_on_average() {
    let mut spec = SweepSpec::new(SweepKind::RejectionThreshold, vec![2.0, 4.0, 8.0], (1..=5).collect());
    spec.fixed.n_requests = 4;
    let summary = summarize(SweepKind::RejectionThreshold, &run_sweep(&spec).unwrap());
    let x: Vec<f64> = summary.iter().map(|r| r.value).collect();
    let y: Vec<f64> = summary.iter().map(|r| r.mean).collect();
    assert!(spearman(&x, &y) > 0.9, "{y:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shared_data_residual_never_below_sequential(
        depth in 1usize..=12,
        requests in 0usize..=8,
        uavs in 1usize..=10,
        seed in any::<u64>(),
    ) {
        let row = shared_data_point(&ScenarioConfig::default(), uavs, requests, depth, seed, &default_params()).unwrap();
        prop_assert!(row.residual >= row.sequential);
        prop_assert_eq!(row.crossing_shortcuts > 0, row.residual > row.sequential);
    }

    #[test]
    fn load_counts_each_request_once(uavs in 1usize..=12, requests in 0usize..=30, seed in any::<u64>()) {
        let s = generate_scenario(&ScenarioConfig::default(), uavs, requests, Template::Sequential, 2, seed).unwrap();
        let load = request_load(&s);
        prop_assert_eq!(load.per_node.len(), uavs);
        prop_assert_eq!(load.total(), requests);
        prop_assert!(load.is_within(requests));
    }
}
