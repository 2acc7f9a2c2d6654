//! Scenario generation and sweep harness for latency, rejection and
//! shared-data experiments.

mod generate;
pub mod plot;
pub mod stats;
mod sweep;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{
    generate_scenario, request_load, LayerGenerator, RequestLoad, ScenarioConfig,
    DEFAULT_INPUT_BYTES,
};
pub use sweep::{
    render_plot, run_sweep, summarize, write_rows_csv, write_summary_csv, SolverKind, SummaryRow,
    SweepFixed, SweepKind, SweepRow, SweepSpec,
};

use crate::heuristic::{run_stream, HeuristicError, HeuristicParams};
use crate::latency::{derive_transmissions, shared_data, EdgeKind, LatencyError};
use crate::model::{residual_shortcuts, ModelError, Template};
use crate::network::NetworkError;
use crate::solver::SolveError;

pub const DEFAULT_DEPTH_CAP: usize = 512;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Latency(#[from] LatencyError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
    #[error("bad sweep spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn shortcut_rule(template: Template) -> fn(usize) -> Vec<(usize, usize)> {
    match template {
        Template::Sequential => |_| Vec::new(),
        // Models shallower than one block simply carry no shortcut here.
        Template::Residual => residual_shortcuts,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ThresholdOutcome {
    /// Largest depth served without rejection (0 if even depth 1 rejects).
    Depth(usize),
    NoThresholdBelowCap(usize),
}

impl fmt::Display for ThresholdOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdOutcome::Depth(d) => write!(f, "{d}"),
            ThresholdOutcome::NoThresholdBelowCap(cap) => {
                write!(f, "no threshold below cap ({cap})")
            }
        }
    }
}

fn rejections_at(
    config: &ScenarioConfig,
    n_uavs: usize,
    n_requests: usize,
    template: Template,
    depth: usize,
    seed: u64,
    params: &HeuristicParams,
) -> Result<usize, ExperimentError> {
    let scenario = generate::generate_with_shortcuts(
        config,
        n_uavs,
        n_requests,
        depth,
        &template.to_string(),
        shortcut_rule(template),
        seed,
    )?;
    Ok(run_stream(&scenario, params, None)?.rejections)
}

/// Deepens the models from depth 1 until the heuristic first rejects a
/// request, returning the last depth with zero rejections.
#[allow(clippy::too_many_arguments)]
pub fn find_rejection_threshold(
    config: &ScenarioConfig,
    n_requests: usize,
    n_uavs: usize,
    template: Template,
    seed: u64,
    params: &HeuristicParams,
    cap: usize,
) -> Result<ThresholdOutcome, ExperimentError> {
    if n_requests == 0 || n_uavs == 0 {
        return Err(ExperimentError::BadSpec(
            "threshold search needs positive request and node counts".into(),
        ));
    }
    for depth in 1..=cap {
        if rejections_at(config, n_uavs, n_requests, template, depth, seed, params)? > 0 {
            return Ok(ThresholdOutcome::Depth(depth - 1));
        }
    }
    Ok(ThresholdOutcome::NoThresholdBelowCap(cap))
}

/// Smallest swarm that serves every request at the given depth, scanning
/// node counts upward from 1. `None` when `cap` nodes are not enough.
pub fn find_min_uavs(
    config: &ScenarioConfig,
    n_requests: usize,
    depth: usize,
    template: Template,
    seed: u64,
    params: &HeuristicParams,
    cap: usize,
) -> Result<Option<usize>, ExperimentError> {
    for n in 1..=cap {
        if rejections_at(config, n, n_requests, template, depth, seed, params)? == 0 {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedDataRow {
    pub depth: usize,
    pub requests: usize,
    pub seed: u64,
    pub sequential: u64,
    pub residual: u64,
    /// Shortcuts whose endpoints sit on different nodes.
    pub crossing_shortcuts: usize,
}

/// Shared data of one paired point. The heuristic places the residual
/// requests once; that placement is then charged under both topologies, so
/// the difference is exactly the shortcut traffic that crosses nodes.
#[allow(clippy::too_many_arguments)]
pub fn shared_data_point(
    config: &ScenarioConfig,
    n_uavs: usize,
    n_requests: usize,
    depth: usize,
    seed: u64,
    params: &HeuristicParams,
) -> Result<SharedDataRow, ExperimentError> {
    let variant = |template: Template| {
        generate::generate_with_shortcuts(
            config,
            n_uavs,
            n_requests,
            depth,
            &template.to_string(),
            shortcut_rule(template),
            seed,
        )
    };
    let residual = variant(Template::Residual)?;
    let sequential = variant(Template::Sequential)?;
    let placements = run_stream(&residual, params, None)?.accepted_placements();
    let residual_plan = derive_transmissions(&placements, &residual)?;
    let sequential_plan = derive_transmissions(&placements, &sequential)?;
    Ok(SharedDataRow {
        depth,
        requests: n_requests,
        seed,
        sequential: shared_data(&sequential_plan, &placements, &sequential),
        residual: shared_data(&residual_plan, &placements, &residual),
        crossing_shortcuts: residual_plan
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Residual)
            .count(),
    })
}

/// Paired shared-data table over every (depth, request count, seed).
pub fn compare_shared_data(
    config: &ScenarioConfig,
    n_uavs: usize,
    depths: &[usize],
    requests: &[usize],
    seeds: &[u64],
    params: &HeuristicParams,
) -> Result<Vec<SharedDataRow>, ExperimentError> {
    use rayon::prelude::*;
    let jobs: Vec<(usize, usize, u64)> = depths
        .iter()
        .flat_map(|&d| {
            requests
                .iter()
                .flat_map(move |&r| seeds.iter().map(move |&s| (d, r, s)))
        })
        .collect();
    jobs.par_iter()
        .map(|&(d, r, s)| shared_data_point(config, n_uavs, r, d, s, params))
        .collect()
}
