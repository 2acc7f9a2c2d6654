//! DistInference: online greedy placement of arriving requests.
//!
//! Layers of a request are placed one at a time. Candidates are the nodes
//! whose remaining memory and compute still admit the layer; among them the
//! node with the lowest `nrm` score wins, where
//!
//! ```text
//! nrm(i) = alpha * t̂(i) + beta * r̂(i)
//! ```
//!
//! `t(i)` is the latency added by running the layer on `i` (inputs arriving
//! plus compute), `r(i)` is the reciprocal of `i`'s remaining compute budget,
//! and the hats denote min-max normalization over the candidate set. A request
//! with a layer no node can host is rejected as a whole and leaves no trace in
//! the reservations.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latency::{total_latency, LatencyBreakdown, LatencyError, Placement, ResourceUsage};
use crate::model::{validate_model, CnnModel};
use crate::scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeuristicError {
    #[error("alpha and beta must be non-negative and sum to 1, got ({alpha}, {beta})")]
    BadParams { alpha: f64, beta: f64 },
    #[error("no candidate node for layer {layer} of request {request}")]
    NoCandidates { request: usize, layer: usize },
    #[error("request {0} is not in the scenario or its model is invalid")]
    BadRequest(usize),
    #[error("arrival order is not a permutation of the scenario's requests")]
    BadArrivalOrder,
    #[error(transparent)]
    Latency(#[from] LatencyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicParams {
    /// Weight on the latency term.
    pub alpha: f64,
    /// Weight on the remaining-compute term.
    pub beta: f64,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        HeuristicParams {
            alpha: 0.7,
            beta: 0.3,
        }
    }
}

impl HeuristicParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, HeuristicError> {
        if alpha >= 0.0 && beta >= 0.0 && ((alpha + beta) - 1.0).abs() <= 1e-9 {
            Ok(HeuristicParams { alpha, beta })
        } else {
            Err(HeuristicError::BadParams { alpha, beta })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RejectionReason {
    NoFeasibleNode { layer: usize },
}

impl fmt::Display for RejectionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectionReason::NoFeasibleNode { layer } => {
                write!(f, "no node can host layer {layer}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignOutcome {
    pub request: usize,
    pub accepted: bool,
    pub placement: Option<Placement>,
    /// The request's own source, processing and transfer time; 0 if rejected.
    pub latency: f64,
    pub rejection: Option<RejectionReason>,
}

/// Live reservations while a request stream is being served.
#[derive(Debug, Clone)]
pub struct SwarmState<'a> {
    scenario: &'a Scenario,
    usage: ResourceUsage,
    accepted: Vec<Placement>,
    rejected: Vec<usize>,
}

impl<'a> SwarmState<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        SwarmState {
            scenario,
            usage: ResourceUsage::new(scenario.swarm.len()),
            accepted: Vec::new(),
            rejected: Vec::new(),
        }
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }

    pub fn usage(&self) -> &ResourceUsage {
        &self.usage
    }

    pub fn accepted(&self) -> &[Placement] {
        &self.accepted
    }

    pub fn rejected(&self) -> &[usize] {
        &self.rejected
    }

    fn model(&self, request: usize) -> Result<&'a CnnModel, HeuristicError> {
        self.scenario
            .model_of(request)
            .ok_or(HeuristicError::BadRequest(request))
    }
}

/// Memory and compute check against `usage` for layer `layer` (1-based).
pub fn condi1(
    state: &SwarmState<'_>,
    usage: &ResourceUsage,
    node: usize,
    request: usize,
    layer: usize,
) -> bool {
    state
        .scenario
        .model_of(request)
        .and_then(|m| m.layer(layer))
        .is_some_and(|l| usage.fits(&state.scenario.swarm, node, l))
}

/// Latency added by running `layer` on `node`, given the nodes already chosen
/// for the earlier layers of the request (`partial[j - 1]` hosts layer `j`).
pub fn incremental_time(
    scenario: &Scenario,
    request: usize,
    partial: &[usize],
    layer: usize,
    node: usize,
) -> Result<f64, HeuristicError> {
    let req = scenario
        .requests
        .get(request)
        .ok_or(HeuristicError::BadRequest(request))?;
    let model = scenario
        .model_of(request)
        .ok_or(HeuristicError::BadRequest(request))?;
    let profile = model.layer(layer).ok_or(HeuristicError::BadRequest(request))?;
    let swarm = &scenario.swarm;
    let mut arrival = 0.0f64;
    if layer == 1 {
        arrival = req.input_bytes as f64
            / swarm
                .source_rate(req.source, node)
                .map_err(LatencyError::from)?;
    } else {
        let mut inputs = vec![(layer - 1, model.layers[layer - 2].output_bytes)];
        if let Some(e) = model.shortcut_into(layer) {
            if let Some(src) = e.source() {
                inputs.push((src, e.payload_bytes));
            }
        }
        for (src_layer, bytes) in inputs {
            let from = partial[src_layer - 1];
            if from != node {
                let rate = swarm.link_rate(from, node).map_err(LatencyError::from)?;
                arrival = arrival.max(bytes as f64 / rate);
            }
        }
    }
    Ok(arrival + profile.multiplications as f64 / swarm.nodes[node].mult_per_sec)
}

fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect()
}

/// `nrm` score of each candidate, in the candidates' order. Lower is better.
pub fn nrm_scores(
    state: &SwarmState<'_>,
    usage: &ResourceUsage,
    candidates: &[usize],
    request: usize,
    partial: &[usize],
    layer: usize,
    params: &HeuristicParams,
) -> Result<Vec<f64>, HeuristicError> {
    if candidates.is_empty() {
        return Err(HeuristicError::NoCandidates { request, layer });
    }
    let times = candidates
        .iter()
        .map(|&i| incremental_time(state.scenario, request, partial, layer, i))
        .collect::<Result<Vec<_>, _>>()?;
    let inverse_residual: Vec<f64> = candidates
        .iter()
        .map(|&i| 1.0 / usage.remaining_compute(&state.scenario.swarm, i) as f64)
        .collect();
    Ok(min_max_normalize(&times)
        .into_iter()
        .zip(min_max_normalize(&inverse_residual))
        .map(|(t, r)| params.alpha * t + params.beta * r)
        .collect())
}

/// Places one request layer by layer, or rejects it and leaves `state`
/// untouched.
pub fn dist_inference(
    state: &mut SwarmState<'_>,
    request: usize,
    params: &HeuristicParams,
) -> Result<AssignOutcome, HeuristicError> {
    let model = state.model(request)?;
    if !validate_model(model).is_empty() {
        return Err(HeuristicError::BadRequest(request));
    }
    let swarm = &state.scenario.swarm;
    let mut scratch = state.usage.clone();
    let mut chosen = Vec::with_capacity(model.depth());
    for profile in &model.layers {
        let j = profile.index;
        let candidates: Vec<usize> = (0..swarm.len())
            .filter(|&i| condi1(state, &scratch, i, request, j))
            .collect();
        if candidates.is_empty() {
            state.rejected.push(request);
            return Ok(AssignOutcome {
                request,
                accepted: false,
                placement: None,
                latency: 0.0,
                rejection: Some(RejectionReason::NoFeasibleNode { layer: j }),
            });
        }
        let scores = nrm_scores(state, &scratch, &candidates, request, &chosen, j, params)?;
        let mut pick = 0;
        for (k, &s) in scores.iter().enumerate() {
            if s < scores[pick] {
                pick = k;
            }
        }
        let node = candidates[pick];
        scratch.reserve(node, profile);
        chosen.push(node);
    }
    let placement = Placement::new(request, chosen);
    let latency = total_latency(std::slice::from_ref(&placement), state.scenario)?.total;
    state.usage = scratch;
    state.accepted.push(placement.clone());
    Ok(AssignOutcome {
        request,
        accepted: true,
        placement: Some(placement),
        latency,
        rejection: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub outcomes: Vec<AssignOutcome>,
    /// Objective over every accepted placement.
    pub breakdown: LatencyBreakdown,
    pub rejections: usize,
    pub usage: ResourceUsage,
}

impl StreamReport {
    pub fn accepted_placements(&self) -> Vec<Placement> {
        self.outcomes
            .iter()
            .filter_map(|o| o.placement.clone())
            .collect()
    }
}

/// Serves requests in `arrival_order` (default: scenario order).
pub fn run_stream(
    scenario: &Scenario,
    params: &HeuristicParams,
    arrival_order: Option<&[usize]>,
) -> Result<StreamReport, HeuristicError> {
    let default_order: Vec<usize> = (0..scenario.requests.len()).collect();
    let order = arrival_order.unwrap_or(&default_order);
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != default_order {
        return Err(HeuristicError::BadArrivalOrder);
    }
    let mut state = SwarmState::new(scenario);
    let outcomes = order
        .iter()
        .map(|&r| dist_inference(&mut state, r, params))
        .collect::<Result<Vec<_>, _>>()?;
    let breakdown = total_latency(&state.accepted, scenario)?;
    Ok(StreamReport {
        rejections: state.rejected.len(),
        outcomes,
        breakdown,
        usage: state.usage,
    })
}

#[derive(Serialize)]
struct OutcomeRow<'a> {
    request: usize,
    accepted: bool,
    latency: f64,
    nodes: String,
    rejection_reason: &'a str,
}

/// One CSV row per request: id, accepted, latency, nodes used, rejection.
pub fn write_outcome_csv<W: Write>(outcomes: &[AssignOutcome], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for o in outcomes {
        let nodes = o
            .placement
            .as_ref()
            .map(|p| {
                p.nodes_used()
                    .iter()
                    .map(|n| n.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            })
            .unwrap_or_default();
        let reason = o.rejection.as_ref().map(|r| r.to_string()).unwrap_or_default();
        w.serialize(OutcomeRow {
            request: o.request,
            accepted: o.accepted,
            latency: o.latency,
            nodes,
            rejection_reason: &reason,
        })?;
    }
    w.flush()?;
    Ok(())
}
