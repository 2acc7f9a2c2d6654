//! Latency-optimal joint placement of every request under node budgets.
//!
//! [`solve_exact`] is a depth-first branch-and-bound over one node choice per
//! (request, layer), in arrival and layer order. Partial placements are
//! costed exactly as they grow (every edge into a layer comes from an earlier
//! layer) and pruned with a budget-free lower bound on what remains.
//! [`solve_bruteforce`] enumerates every assignment through the objective
//! evaluator and serves as its oracle.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latency::{
    check_feasibility, derive_transmissions, total_latency, LatencyBreakdown, LatencyError,
    Placement, ResourceUsage, TransmissionPlan,
};
use crate::scenario::{Scenario, ScenarioIssue};

pub const DEFAULT_TIME_LIMIT: Duration = Duration::from_secs(60);

/// Largest joint search space the brute-force oracle accepts.
pub const ORACLE_LIMIT: u64 = 10_000_000;

/// Totals closer than this are ties, resolved by the lexicographically
/// smallest assignment.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Windows above this many states fall back to the per-layer bound.
const MAX_DP_STATES: usize = 1 << 16;

const CLOCK_CHECK_INTERVAL: u64 = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid scenario: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidScenario(Vec<ScenarioIssue>),
    #[error("instance too large for oracle: {space} assignments exceed {limit}")]
    TooLarge { space: u64, limit: u64 },
    #[error(transparent)]
    Latency(#[from] LatencyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped by the time limit; placements hold the best incumbent, if any.
    TimeLimit,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub proven_optimal: bool,
    pub placements: Vec<Placement>,
    pub transmissions: TransmissionPlan,
    pub breakdown: Option<LatencyBreakdown>,
    pub nodes_explored: u64,
}

impl SolveResult {
    pub fn total(&self) -> Option<f64> {
        self.breakdown.as_ref().map(|b| b.total)
    }

    pub fn is_infeasible(&self) -> bool {
        self.status == SolveStatus::Infeasible
    }

    fn infeasible(nodes_explored: u64) -> Self {
        SolveResult {
            status: SolveStatus::Infeasible,
            proven_optimal: true,
            placements: Vec::new(),
            transmissions: TransmissionPlan::default(),
            breakdown: None,
            nodes_explored,
        }
    }

    fn from_assignment(
        scenario: &Scenario,
        assignment: &[usize],
        status: SolveStatus,
        nodes_explored: u64,
    ) -> Result<Self, SolveError> {
        let placements = split_assignment(scenario, assignment);
        let breakdown = total_latency(&placements, scenario)?;
        let transmissions = derive_transmissions(&placements, scenario)?;
        Ok(SolveResult {
            status,
            proven_optimal: status == SolveStatus::Optimal,
            placements,
            transmissions,
            breakdown: Some(breakdown),
            nodes_explored,
        })
    }
}

fn split_assignment(scenario: &Scenario, assignment: &[usize]) -> Vec<Placement> {
    let mut rest = assignment;
    scenario
        .requests
        .iter()
        .map(|r| {
            let depth = scenario.models[r.model].depth();
            let (head, tail) = rest.split_at(depth);
            rest = tail;
            Placement::new(r.id, head.to_vec())
        })
        .collect()
}

fn validated(scenario: &Scenario) -> Result<(), SolveError> {
    let issues = scenario.validate();
    if issues.is_empty() {
        Ok(())
    } else {
        Err(SolveError::InvalidScenario(issues))
    }
}

/// Σ over every layer of the fastest node's compute time: transfers and
/// budgets relaxed away.
pub fn root_lower_bound(scenario: &Scenario) -> f64 {
    scenario
        .requests
        .iter()
        .filter_map(|r| scenario.models.get(r.model))
        .flat_map(|m| &m.layers)
        .map(|l| {
            scenario
                .swarm
                .nodes
                .iter()
                .map(|n| l.multiplications as f64 / n.mult_per_sec)
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// One (request, layer) decision with its costs precomputed per node.
struct Var {
    memory: u64,
    compute: u64,
    processing: Vec<f64>,
    /// Image upload cost per node; only for a request's first layer.
    upload: Option<Vec<f64>>,
    /// `(var offset back, payload bytes)` for each input edge.
    inputs: Vec<(usize, f64)>,
}

/// Budget-free cost-to-go tables for one request.
struct Block {
    start: usize,
    depth: usize,
    window: usize,
    /// `tables[j]` indexed by the window code after `j` layers are placed.
    tables: Option<Vec<Vec<f64>>>,
    /// Σ min processing over layers `j+1..`, the fallback bound.
    suffix: Vec<f64>,
    /// Lower bound on the whole request's latency.
    relaxed: f64,
}

struct Problem<'a> {
    scenario: &'a Scenario,
    n: usize,
    rates: Vec<Vec<f64>>,
    vars: Vec<Var>,
    blocks: Vec<Block>,
    /// `block_of[v]` for each var.
    block_of: Vec<usize>,
    /// Σ relaxed bounds of blocks `b..`.
    relaxed_suffix: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(scenario: &'a Scenario) -> Self {
        let swarm = &scenario.swarm;
        let n = swarm.len();
        let rates = swarm.links.node_rates.clone();
        let mut vars = Vec::new();
        let mut blocks = Vec::new();
        let mut block_of = Vec::new();
        for (b, request) in scenario.requests.iter().enumerate() {
            let model = &scenario.models[request.model];
            let start = vars.len();
            for layer in &model.layers {
                let j = layer.index;
                let mut inputs = Vec::new();
                if j > 1 {
                    inputs.push((1, model.layers[j - 2].output_bytes as f64));
                }
                if let Some(e) = model.shortcut_into(j) {
                    inputs.push((e.stride, e.payload_bytes as f64));
                }
                let upload = (j == 1).then(|| {
                    swarm.links.source_rates[request.source]
                        .iter()
                        .map(|&rate| request.input_bytes as f64 / rate)
                        .collect()
                });
                vars.push(Var {
                    memory: layer.memory_bytes,
                    compute: layer.multiplications,
                    processing: swarm
                        .nodes
                        .iter()
                        .map(|node| layer.multiplications as f64 / node.mult_per_sec)
                        .collect(),
                    upload,
                    inputs,
                });
                block_of.push(b);
            }
            let window = model
                .residual_edges
                .iter()
                .map(|e| e.stride)
                .max()
                .unwrap_or(1)
                .max(1);
            blocks.push(Block {
                start,
                depth: model.depth(),
                window,
                tables: None,
                suffix: Vec::new(),
                relaxed: 0.0,
            });
        }
        let mut problem = Problem {
            scenario,
            n,
            rates,
            vars,
            blocks,
            block_of,
            relaxed_suffix: Vec::new(),
        };
        for b in 0..problem.blocks.len() {
            problem.fill_block(b);
        }
        let mut acc = 0.0;
        let mut suffix: Vec<f64> = problem
            .blocks
            .iter()
            .rev()
            .map(|blk| {
                acc += blk.relaxed;
                acc
            })
            .collect();
        suffix.reverse();
        suffix.push(0.0);
        problem.relaxed_suffix = suffix;
        problem
    }

    /// Exact incremental cost of putting var `v` on `node`, given where its
    /// input layers sit (`placed(offset)` is the node of var `v - offset`).
    fn step_cost(&self, v: usize, node: usize, placed: impl Fn(usize) -> usize) -> f64 {
        let var = &self.vars[v];
        let mut cost = var.processing[node];
        if let Some(upload) = &var.upload {
            cost += upload[node];
        }
        let mut slowest = 0.0f64;
        for &(back, payload) in &var.inputs {
            let from = placed(back);
            if from != node {
                slowest = slowest.max(payload / self.rates[from][node]);
            }
        }
        cost + slowest
    }

    fn fill_block(&mut self, b: usize) {
        let (start, depth, window) = {
            let blk = &self.blocks[b];
            (blk.start, blk.depth, blk.window)
        };
        let min_proc = |v: usize| {
            self.vars[v]
                .processing
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        };
        let mut suffix = vec![0.0; depth + 1];
        for j in (0..depth).rev() {
            suffix[j] = suffix[j + 1] + min_proc(start + j);
        }
        let min_upload = self.vars[start]
            .upload
            .as_ref()
            .map_or(0.0, |u| u.iter().copied().fold(f64::INFINITY, f64::min));

        let n = self.n;
        let states = n.checked_pow(window as u32).filter(|&s| s <= MAX_DP_STATES);
        let tables = states.map(|_| {
            // tables[j][code]: cheapest completion after j layers placed, where
            // code packs the last min(j, window) nodes, most recent first.
            let width = |j: usize| n.pow(j.min(window) as u32);
            let mut tables: Vec<Vec<f64>> = (0..=depth).map(|j| vec![0.0; width(j)]).collect();
            for j in (0..depth).rev() {
                let next_keep = width(j + 1) / n;
                for code in 0..width(j) {
                    let digit = |back: usize| (code / n.pow(back as u32 - 1)) % n;
                    let mut best = f64::INFINITY;
                    for x in 0..n {
                        let step = self.step_cost(start + j, x, digit);
                        let next = x + n * (code % next_keep);
                        best = best.min(step + tables[j + 1][next]);
                    }
                    tables[j][code] = best;
                }
            }
            tables
        });
        let relaxed = match &tables {
            Some(t) => t[0][0],
            None => min_upload + suffix[0],
        };
        let blk = &mut self.blocks[b];
        blk.suffix = suffix;
        blk.relaxed = relaxed;
        blk.tables = tables;
    }

    /// Lower bound on the cost of vars `v..` given the first `v` assigned.
    fn bound_from(&self, v: usize, assignment: &[usize]) -> f64 {
        if v == self.vars.len() {
            return 0.0;
        }
        let b = self.block_of[v];
        let blk = &self.blocks[b];
        let placed = v - blk.start;
        if placed == 0 {
            return self.relaxed_suffix[b];
        }
        let own = match &blk.tables {
            Some(t) => {
                let keep = placed.min(blk.window);
                let mut code = 0;
                for back in (1..=keep).rev() {
                    code = code * self.n + assignment[v - back];
                }
                t[placed][code]
            }
            None => blk.suffix[placed],
        };
        own + self.relaxed_suffix[b + 1]
    }

    fn any_layer_unplaceable(&self) -> bool {
        self.vars.iter().any(|var| {
                self.scenario
                    .swarm
                    .nodes
                    .iter()
                    .all(|node| var.memory > node.mem_budget || var.compute > node.compute_budget)
            })
    }
}

struct Search<'p, 'a> {
    problem: &'p Problem<'a>,
    usage: ResourceUsage,
    assignment: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
    explored: u64,
    deadline: Option<Instant>,
    timed_out: bool,
}

impl Search<'_, '_> {
    fn fits(&self, v: usize, node: usize) -> bool {
        let var = &self.problem.vars[v];
        let budget = &self.problem.scenario.swarm.nodes[node];
        self.usage.memory[node]
            .checked_add(var.memory)
            .is_some_and(|m| m <= budget.mem_budget)
            && self.usage.compute[node]
                .checked_add(var.compute)
                .is_some_and(|c| c <= budget.compute_budget)
    }

    fn prefix_vs_best(&self, len: usize) -> Ordering {
        match &self.best {
            Some((_, best)) => self.assignment[..len].cmp(&best[..len]),
            None => Ordering::Less,
        }
    }

    fn can_prune(&self, v: usize, bound: f64) -> bool {
        let Some((best, _)) = &self.best else {
            return false;
        };
        bound > best + TIE_TOLERANCE
            || (bound >= best - TIE_TOLERANCE && self.prefix_vs_best(v) == Ordering::Greater)
    }

    fn dfs(&mut self, v: usize, acc: f64) {
        self.explored += 1;
        if self.explored.is_multiple_of(CLOCK_CHECK_INTERVAL) {
            if let Some(deadline) = self.deadline {
                if Instant::now() >= deadline {
                    self.timed_out = true;
                }
            }
        }
        if self.timed_out {
            return;
        }
        let problem = self.problem;
        if v == problem.vars.len() {
            let better = match &self.best {
                None => true,
                Some((best, best_assign)) => {
                    acc < best - TIE_TOLERANCE
                        || (acc <= best + TIE_TOLERANCE && self.assignment < *best_assign)
                }
            };
            if better {
                self.best = Some((acc, self.assignment.clone()));
            }
            return;
        }
        let start = problem.blocks[problem.block_of[v]].start;
        let mut candidates: Vec<(f64, usize)> = (0..problem.n)
            .filter(|&node| self.fits(v, node))
            .map(|node| {
                let assignment = &self.assignment;
                let cost = problem.step_cost(v, node, |back| {
                    debug_assert!(v - back >= start);
                    assignment[v - back]
                });
                (cost, node)
            })
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let var = &problem.vars[v];
        for (cost, node) in candidates {
            self.assignment.push(node);
            let child = acc + cost;
            let bound = child + problem.bound_from(v + 1, &self.assignment);
            if !self.can_prune(v + 1, bound) {
                self.usage.memory[node] += var.memory;
                self.usage.compute[node] += var.compute;
                self.dfs(v + 1, child);
                self.usage.memory[node] -= var.memory;
                self.usage.compute[node] -= var.compute;
            }
            self.assignment.pop();
            if self.timed_out {
                return;
            }
        }
    }
}

/// Branch-and-bound over the joint placement. Stops at `time_limit` (if
/// given) with the best incumbent and `proven_optimal = false`.
pub fn solve_exact(
    scenario: &Scenario,
    time_limit: Option<Duration>,
) -> Result<SolveResult, SolveError> {
    validated(scenario)?;
    let problem = Problem::new(scenario);
    if problem.any_layer_unplaceable() {
        return Ok(SolveResult::infeasible(0));
    }
    let mut search = Search {
        problem: &problem,
        usage: ResourceUsage::new(problem.n),
        assignment: Vec::with_capacity(problem.vars.len()),
        best: None,
        explored: 0,
        deadline: time_limit.map(|t| Instant::now() + t),
        timed_out: false,
    };
    search.dfs(0, 0.0);
    let status = if search.timed_out {
        SolveStatus::TimeLimit
    } else {
        SolveStatus::Optimal
    };
    match search.best {
        Some((_, assignment)) => {
            SolveResult::from_assignment(scenario, &assignment, status, search.explored)
        }
        None if search.timed_out => Ok(SolveResult {
            status,
            proven_optimal: false,
            placements: Vec::new(),
            transmissions: TransmissionPlan::default(),
            breakdown: None,
            nodes_explored: search.explored,
        }),
        None => Ok(SolveResult::infeasible(search.explored)),
    }
}

/// Exhaustive enumeration in lexicographic order, through the feasibility
/// checker and the objective evaluator.
pub fn solve_bruteforce(scenario: &Scenario) -> Result<SolveResult, SolveError> {
    validated(scenario)?;
    let space = scenario.search_space();
    if space > ORACLE_LIMIT {
        return Err(SolveError::TooLarge {
            space,
            limit: ORACLE_LIMIT,
        });
    }
    let n = scenario.swarm.len();
    let total_vars: usize = scenario
        .requests
        .iter()
        .map(|r| scenario.models[r.model].depth())
        .sum();
    let mut assignment = vec![0usize; total_vars];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut explored = 0u64;
    loop {
        explored += 1;
        let placements = split_assignment(scenario, &assignment);
        if check_feasibility(&placements, scenario).is_empty() {
            let total = total_latency(&placements, scenario)?.total;
            if best.as_ref().is_none_or(|(b, _)| total < b - TIE_TOLERANCE) {
                best = Some((total, assignment.clone()));
            }
        }
        // Odometer step; the last var turns fastest.
        let mut pos = total_vars;
        loop {
            if pos == 0 {
                return match best {
                    Some((_, a)) => {
                        SolveResult::from_assignment(scenario, &a, SolveStatus::Optimal, explored)
                    }
                    None => Ok(SolveResult::infeasible(explored)),
                };
            }
            pos -= 1;
            assignment[pos] += 1;
            if assignment[pos] < n {
                break;
            }
            assignment[pos] = 0;
        }
    }
}
