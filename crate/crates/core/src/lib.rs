//! Layer placement engine for CNN inference over a swarm of small compute
//! nodes.
//!
//! Each inference request runs a CNN whose layers are spread over the swarm,
//! one node per layer. The crate evaluates the end-to-end latency of any such
//! placement ([`latency`]), finds the optimum under per-node memory and
//! compute budgets ([`solver`]), serves requests online with the greedy
//! DistInference policy ([`heuristic`]) and sweeps generated scenarios to
//! compare them ([`experiments`]).

pub mod cli;
pub mod experiments;
pub mod heuristic;
pub mod latency;
pub mod model;
pub mod network;
pub mod scenario;
pub mod solver;

pub use heuristic::{dist_inference, run_stream, HeuristicParams, StreamReport, SwarmState};
pub use latency::{
    check_feasibility, derive_transmissions, total_latency, LatencyBreakdown, Placement,
    TransmissionPlan,
};
pub use model::{build_model_from_template, validate_model, CnnModel, Template};
pub use network::{build_swarm, RateModel, Swarm};
pub use scenario::{InferenceRequest, Scenario};
pub use solver::{solve_bruteforce, solve_exact, SolveResult, SolveStatus};
