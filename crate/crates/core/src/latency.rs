//! Objective evaluation: source, processing and transmission time of a set of
//! placements, plus budget feasibility and shared-data accounting.
//!
//! Requests are additive. A layer that receives two inputs (its predecessor
//! and a shortcut) waits for the slower of the two transfers, which run in
//! parallel; transfers between layers on the same node take no time.

use std::collections::BTreeSet;
use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CnnModel, LayerProfile};
use crate::network::{NetworkError, Swarm};
use crate::scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatencyError {
    #[error("incomplete placement for request {request}: model has {expected} layers, {placed} placed")]
    IncompletePlacement {
        request: usize,
        expected: usize,
        placed: usize,
    },
    #[error("placement refers to unknown request {0}")]
    UnknownRequest(usize),
    #[error("request {0} refers to an unknown model")]
    UnknownModel(usize),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Node hosting each layer of one request: `nodes[j - 1]` runs layer `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Placement {
    pub request: usize,
    pub nodes: Vec<usize>,
}

impl Placement {
    pub fn new(request: usize, nodes: Vec<usize>) -> Self {
        Placement { request, nodes }
    }

    /// Every layer of the request on one node.
    pub fn collapsed(request: usize, depth: usize, node: usize) -> Self {
        Placement {
            request,
            nodes: vec![node; depth],
        }
    }

    pub fn node_of(&self, layer: usize) -> Option<usize> {
        layer.checked_sub(1).and_then(|i| self.nodes.get(i).copied())
    }

    /// Distinct nodes used, ascending.
    pub fn nodes_used(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// Output of layer `j - 1` feeding layer `j`.
    Pipeline,
    /// Shortcut output of layer `j - stride` feeding layer `j`.
    Residual,
}

/// One inter-node transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransmissionEdge {
    pub request: usize,
    pub target_layer: usize,
    pub kind: EdgeKind,
    pub from_node: usize,
    pub to_node: usize,
    pub stride: usize,
    pub payload_bytes: u64,
}

/// Transfers implied by a set of placements, sorted by request then target.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmissionPlan {
    pub edges: Vec<TransmissionEdge>,
}

impl TransmissionPlan {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub source_time: f64,
    pub processing_time_per_node: Vec<f64>,
    pub transmission_time: f64,
    pub total: f64,
}

impl LatencyBreakdown {
    pub fn zero(n_nodes: usize) -> Self {
        LatencyBreakdown {
            source_time: 0.0,
            processing_time_per_node: vec![0.0; n_nodes],
            transmission_time: 0.0,
            total: 0.0,
        }
    }

    pub fn processing_time(&self) -> f64 {
        self.processing_time_per_node.iter().sum()
    }
}

fn model_for<'a>(
    placement: &Placement,
    scenario: &'a Scenario,
) -> Result<&'a CnnModel, LatencyError> {
    if placement.request >= scenario.requests.len() {
        return Err(LatencyError::UnknownRequest(placement.request));
    }
    let model = scenario
        .model_of(placement.request)
        .ok_or(LatencyError::UnknownModel(placement.request))?;
    if model.depth() != placement.nodes.len() {
        return Err(LatencyError::IncompletePlacement {
            request: placement.request,
            expected: model.depth(),
            placed: placement.nodes.len(),
        });
    }
    Ok(model)
}

fn check_nodes(placement: &Placement, swarm: &Swarm) -> Result<(), LatencyError> {
    match placement.nodes.iter().find(|&&n| n >= swarm.len()) {
        Some(&n) => Err(NetworkError::UnknownNode(n).into()),
        None => Ok(()),
    }
}

/// Every transfer between distinct nodes: one pipeline edge per consecutive
/// layer pair split across nodes, one residual edge per split shortcut.
pub fn derive_transmissions(
    placements: &[Placement],
    scenario: &Scenario,
) -> Result<TransmissionPlan, LatencyError> {
    let mut edges = Vec::new();
    for p in placements {
        let model = model_for(p, scenario)?;
        for j in 2..=model.depth() {
            let (from, to) = (p.nodes[j - 2], p.nodes[j - 1]);
            if from != to {
                edges.push(TransmissionEdge {
                    request: p.request,
                    target_layer: j,
                    kind: EdgeKind::Pipeline,
                    from_node: from,
                    to_node: to,
                    stride: 1,
                    payload_bytes: model.layers[j - 2].output_bytes,
                });
            }
        }
        for e in &model.residual_edges {
            let (Some(src), Some(to)) = (e.source().and_then(|s| p.node_of(s)), p.node_of(e.target))
            else {
                continue;
            };
            if src != to {
                edges.push(TransmissionEdge {
                    request: p.request,
                    target_layer: e.target,
                    kind: EdgeKind::Residual,
                    from_node: src,
                    to_node: to,
                    stride: e.stride,
                    payload_bytes: e.payload_bytes,
                });
            }
        }
    }
    edges.sort();
    Ok(TransmissionPlan { edges })
}

/// Time to ship the request's image to the node running its first layer.
pub fn source_time(placement: &Placement, scenario: &Scenario) -> Result<f64, LatencyError> {
    let request = scenario
        .requests
        .get(placement.request)
        .ok_or(LatencyError::UnknownRequest(placement.request))?;
    let first = placement
        .node_of(1)
        .ok_or(LatencyError::IncompletePlacement {
            request: placement.request,
            expected: scenario.model_of(placement.request).map_or(1, |m| m.depth()),
            placed: 0,
        })?;
    if request.input_bytes == 0 {
        // Still validate the ids.
        scenario.swarm.source_rate(request.source, first)?;
        return Ok(0.0);
    }
    Ok(request.input_bytes as f64 / scenario.swarm.source_rate(request.source, first)?)
}

/// Per-node compute time: the sum of `c / e_i` over the layers node `i` runs.
pub fn processing_time(
    placements: &[Placement],
    scenario: &Scenario,
) -> Result<Vec<f64>, LatencyError> {
    let swarm = &scenario.swarm;
    let mut per_node = vec![0.0; swarm.len()];
    for p in placements {
        let model = model_for(p, scenario)?;
        check_nodes(p, swarm)?;
        for (layer, &node) in model.layers.iter().zip(&p.nodes) {
            per_node[node] += layer.multiplications as f64 / swarm.nodes[node].mult_per_sec;
        }
    }
    Ok(per_node)
}

/// Sum over (request, target layer) of the slowest transfer arriving there.
pub fn transmission_time(plan: &TransmissionPlan, swarm: &Swarm) -> Result<f64, LatencyError> {
    let mut total = 0.0;
    let mut edges = plan.edges.iter().peekable();
    while let Some(first) = edges.next() {
        let mut slowest = edge_time(first, swarm)?;
        while let Some(next) = edges.next_if(|e| {
            e.request == first.request && e.target_layer == first.target_layer
        }) {
            slowest = slowest.max(edge_time(next, swarm)?);
        }
        total += slowest;
    }
    Ok(total)
}

fn edge_time(edge: &TransmissionEdge, swarm: &Swarm) -> Result<f64, LatencyError> {
    Ok(edge.payload_bytes as f64 / swarm.link_rate(edge.from_node, edge.to_node)?)
}

pub fn total_latency(
    placements: &[Placement],
    scenario: &Scenario,
) -> Result<LatencyBreakdown, LatencyError> {
    let processing_time_per_node = processing_time(placements, scenario)?;
    let source_time = placements
        .iter()
        .map(|p| source_time(p, scenario))
        .sum::<Result<f64, _>>()?;
    let plan = derive_transmissions(placements, scenario)?;
    let transmission_time = transmission_time(&plan, &scenario.swarm)?;
    let total = source_time + processing_time_per_node.iter().sum::<f64>() + transmission_time;
    Ok(LatencyBreakdown {
        source_time,
        processing_time_per_node,
        transmission_time,
        total,
    })
}

/// Bytes crossing node boundaries, counting each request's image upload.
pub fn shared_data(plan: &TransmissionPlan, placements: &[Placement], scenario: &Scenario) -> u64 {
    let uploads: u64 = placements
        .iter()
        .filter_map(|p| scenario.requests.get(p.request))
        .map(|r| r.input_bytes)
        .sum();
    uploads + plan.edges.iter().map(|e| e.payload_bytes).sum::<u64>()
}

/// Memory and compute reserved on each node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResourceUsage {
    pub memory: Vec<u64>,
    pub compute: Vec<u64>,
}

impl ResourceUsage {
    pub fn new(n_nodes: usize) -> Self {
        ResourceUsage {
            memory: vec![0; n_nodes],
            compute: vec![0; n_nodes],
        }
    }

    /// Whether `layer` still fits on `node` (closed inequalities).
    pub fn fits(&self, swarm: &Swarm, node: usize, layer: &LayerProfile) -> bool {
        let budget = &swarm.nodes[node];
        self.memory[node]
            .checked_add(layer.memory_bytes)
            .is_some_and(|m| m <= budget.mem_budget)
            && self.compute[node]
                .checked_add(layer.multiplications)
                .is_some_and(|c| c <= budget.compute_budget)
    }

    pub fn reserve(&mut self, node: usize, layer: &LayerProfile) {
        self.memory[node] = self.memory[node].saturating_add(layer.memory_bytes);
        self.compute[node] = self.compute[node].saturating_add(layer.multiplications);
    }

    pub fn remaining_compute(&self, swarm: &Swarm, node: usize) -> u64 {
        swarm.nodes[node]
            .compute_budget
            .saturating_sub(self.compute[node])
    }

    /// Stable fingerprint of the reservation state.
    pub fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.hash(&mut h);
        h.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeasibilityViolation {
    Memory { node: usize, used: u64, budget: u64 },
    Compute { node: usize, used: u64, budget: u64 },
    /// A layer of the request is placed zero times, or a placement names
    /// layers the model does not have.
    LayerCount { request: usize, expected: usize, placed: usize },
    DuplicateRequest { request: usize },
    UnknownRequest { request: usize },
    UnknownNode { request: usize, layer: usize, node: usize },
}

impl fmt::Display for FeasibilityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeasibilityViolation::Memory { node, used, budget } => {
                write!(f, "node {node}: memory {used} exceeds budget {budget}")
            }
            FeasibilityViolation::Compute { node, used, budget } => {
                write!(f, "node {node}: compute {used} exceeds budget {budget}")
            }
            FeasibilityViolation::LayerCount {
                request,
                expected,
                placed,
            } => write!(f, "request {request}: {placed} of {expected} layers placed"),
            FeasibilityViolation::DuplicateRequest { request } => {
                write!(f, "request {request} placed more than once")
            }
            FeasibilityViolation::UnknownRequest { request } => {
                write!(f, "unknown request {request}")
            }
            FeasibilityViolation::UnknownNode {
                request,
                layer,
                node,
            } => write!(f, "request {request} layer {layer}: unknown node {node}"),
        }
    }
}

/// Budget usage summed over every placed request, plus structural checks.
pub fn check_feasibility(placements: &[Placement], scenario: &Scenario) -> Vec<FeasibilityViolation> {
    let swarm = &scenario.swarm;
    let mut out = Vec::new();
    let mut usage = ResourceUsage::new(swarm.len());
    let mut seen = BTreeSet::new();
    for p in placements {
        let Some(model) = scenario.model_of(p.request) else {
            out.push(FeasibilityViolation::UnknownRequest { request: p.request });
            continue;
        };
        if !seen.insert(p.request) {
            out.push(FeasibilityViolation::DuplicateRequest { request: p.request });
        }
        if p.nodes.len() != model.depth() {
            out.push(FeasibilityViolation::LayerCount {
                request: p.request,
                expected: model.depth(),
                placed: p.nodes.len(),
            });
        }
        for (layer, &node) in model.layers.iter().zip(&p.nodes) {
            if node >= swarm.len() {
                out.push(FeasibilityViolation::UnknownNode {
                    request: p.request,
                    layer: layer.index,
                    node,
                });
            } else {
                usage.reserve(node, layer);
            }
        }
    }
    for (i, node) in swarm.nodes.iter().enumerate() {
        if usage.memory[i] > node.mem_budget {
            out.push(FeasibilityViolation::Memory {
                node: i,
                used: usage.memory[i],
                budget: node.mem_budget,
            });
        }
        if usage.compute[i] > node.compute_budget {
            out.push(FeasibilityViolation::Compute {
                node: i,
                used: usage.compute[i],
                budget: node.compute_budget,
            });
        }
    }
    out
}
