#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swarm_infer::latency::Placement;
use swarm_infer::model::{residual_shortcuts, CnnModel, LayerProfile};
use swarm_infer::network::{LinkMatrix, RateModel, Source, Swarm, UavNode};
use swarm_infer::scenario::{InferenceRequest, Scenario};

pub const TOL: f64 = 1e-9;

pub fn layer(index: usize, memory: u64, mults: u64, output: u64) -> LayerProfile {
    LayerProfile {
        index,
        memory_bytes: memory,
        multiplications: mults,
        output_bytes: output,
    }
}

/// Layers from `(mults, output_bytes)` pairs with a fixed small memory cost.
pub fn layers(spec: &[(u64, u64)]) -> Vec<LayerProfile> {
    spec.iter()
        .enumerate()
        .map(|(i, &(c, k))| layer(i + 1, 1_000, c, k))
        .collect()
}

pub fn node(mult_per_sec: f64, mem_budget: u64, compute_budget: u64) -> UavNode {
    UavNode {
        id: 0,
        mem_budget,
        compute_budget,
        mult_per_sec,
        position: [0.0, 0.0],
    }
}

/// Swarm with hand-written rates. `node_rates[i][k]` is i→k (diagonal
/// ignored), `source_rates[s][i]` is source s→node i.
pub fn explicit_swarm(
    nodes: Vec<UavNode>,
    node_rates: Vec<Vec<f64>>,
    source_rates: Vec<Vec<f64>>,
) -> Swarm {
    let sources = (0..source_rates.len())
        .map(|id| Source {
            id,
            position: [0.0, 0.0],
        })
        .collect();
    let model = RateModel::Explicit(LinkMatrix {
        node_rates,
        source_rates,
    });
    Swarm::assemble(nodes, sources, &model, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
}

/// One request per model, all from source 0 with the model's input size.
pub fn scenario_of(swarm: Swarm, models: Vec<CnnModel>) -> Scenario {
    let requests = models
        .iter()
        .enumerate()
        .map(|(r, m)| InferenceRequest {
            id: r,
            model: r,
            source: 0,
            input_bytes: m.input_bytes,
        })
        .collect();
    Scenario::new(swarm, models, requests)
}

/// Multiplies every link and source rate by `factor`.
pub fn scale_rates(scenario: &Scenario, factor: f64) -> Scenario {
    let mut s = scenario.clone();
    for row in s
        .swarm
        .links
        .node_rates
        .iter_mut()
        .chain(s.swarm.links.source_rates.iter_mut())
    {
        for r in row.iter_mut() {
            *r *= factor;
        }
    }
    s
}

/// Small random instance: 1..=4 nodes with uneven speeds, 1..=2 requests of
/// 1..=5 layers, residual shortcuts on about half of the models deep enough
/// to carry one, and budgets ranging from slack to infeasible.
pub fn micro_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_nodes = rng.gen_range(1..=4);
    let n_requests = rng.gen_range(1..=2);
    let mut models = Vec::new();
    for r in 0..n_requests {
        let depth = rng.gen_range(1..=5);
        let ls = (1..=depth)
            .map(|j| {
                layer(
                    j,
                    rng.gen_range(100_000..1_000_000),
                    rng.gen_range(1_000_000..50_000_000),
                    rng.gen_range(10_000..500_000),
                )
            })
            .collect();
        let shortcuts = if depth >= 3 && rng.gen_bool(0.5) {
            residual_shortcuts(depth)
        } else {
            Vec::new()
        };
        models.push(CnnModel::new(
            format!("micro-{r}"),
            rng.gen_range(50_000..300_000),
            ls,
            &shortcuts,
        ));
    }
    let total_mults: u64 = models.iter().map(|m| m.total_multiplications()).sum();
    let total_mem: u64 = models.iter().map(|m| m.total_memory_bytes()).sum();
    let slack = rng.gen_range(0.3..1.6) * 2.0 / n_nodes as f64;
    let nodes = (0..n_nodes)
        .map(|_| {
            node(
                rng.gen_range(2.0e8..8.0e8),
                ((total_mem as f64 * slack) as u64).max(1),
                ((total_mults as f64 * slack) as u64).max(1),
            )
        })
        .collect::<Vec<_>>();
    let node_rates = (0..n_nodes)
        .map(|i| {
            (0..n_nodes)
                .map(|k| if i == k { 0.0 } else { rng.gen_range(1.0e5..1.0e7) })
                .collect()
        })
        .collect();
    let n_sources = rng.gen_range(1..=2);
    let source_rates = (0..n_sources)
        .map(|_| (0..n_nodes).map(|_| rng.gen_range(1.0e5..1.0e7)).collect())
        .collect();
    let swarm = explicit_swarm(nodes, node_rates, source_rates);
    let requests = models
        .iter()
        .enumerate()
        .map(|(r, m)| InferenceRequest {
            id: r,
            model: r,
            source: rng.gen_range(0..n_sources),
            input_bytes: m.input_bytes,
        })
        .collect();
    Scenario::new(swarm, models, requests)
}

/// Uniformly random complete placement of every request.
pub fn random_placements(scenario: &Scenario, rng: &mut impl Rng) -> Vec<Placement> {
    let n = scenario.swarm.len();
    scenario
        .requests
        .iter()
        .map(|r| {
            let depth = scenario.models[r.model].depth();
            Placement::new(r.id, (0..depth).map(|_| rng.gen_range(0..n)).collect())
        })
        .collect()
}
