use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plot::{line_chart, Series};
use super::stats::{mean, sample_std};
use super::{
    find_rejection_threshold, generate_scenario, shared_data_point, ExperimentError,
    ScenarioConfig, ThresholdOutcome, DEFAULT_DEPTH_CAP,
};
use crate::heuristic::{run_stream, HeuristicParams};
use crate::latency::{derive_transmissions, shared_data, LatencyBreakdown};
use crate::model::Template;
use crate::solver::{solve_exact, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Requests,
    Layers,
    Uavs,
    Alphabeta,
    RejectionThreshold,
    SharedData,
}

impl SweepKind {
    fn axis(&self) -> &'static str {
        match self {
            SweepKind::Requests => "requests",
            SweepKind::Layers | SweepKind::SharedData => "CNN layers",
            SweepKind::Uavs | SweepKind::RejectionThreshold => "UAVs",
            SweepKind::Alphabeta => "alpha (beta = 1 - alpha)",
        }
    }

    fn metric(&self) -> &'static str {
        match self {
            SweepKind::RejectionThreshold => "max layers without rejection",
            SweepKind::SharedData => "shared data (bytes)",
            _ => "latency (s)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Exact,
    Heuristic,
}

/// Parameters held constant while one axis is swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepFixed {
    pub n_uavs: usize,
    pub n_requests: usize,
    pub depth: usize,
    pub template: Template,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for SweepFixed {
    fn default() -> Self {
        SweepFixed {
            n_uavs: 5,
            n_requests: 5,
            depth: 5,
            template: Template::Sequential,
            alpha: 0.7,
            beta: 0.3,
        }
    }
}

fn default_solvers() -> Vec<SolverKind> {
    vec![SolverKind::Heuristic]
}

fn default_time_limit() -> f64 {
    60.0
}

fn default_depth_cap() -> usize {
    DEFAULT_DEPTH_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub kind: SweepKind,
    /// Swept values: node or request counts, depths, or alpha.
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub fixed: SweepFixed,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverKind>,
    #[serde(default)]
    pub config: ScenarioConfig,
    #[serde(default = "default_time_limit")]
    pub time_limit_secs: f64,
    #[serde(default = "default_depth_cap")]
    pub depth_cap: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl SweepSpec {
    pub fn new(kind: SweepKind, values: Vec<f64>, seeds: Vec<u64>) -> Self {
        SweepSpec {
            kind,
            values,
            seeds,
            fixed: SweepFixed::default(),
            solvers: default_solvers(),
            config: ScenarioConfig::default(),
            time_limit_secs: default_time_limit(),
            depth_cap: default_depth_cap(),
            output: None,
        }
    }

    fn check(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::BadSpec(m.to_string()));
        if self.values.is_empty() {
            return bad("swept range is empty");
        }
        if self.seeds.is_empty() {
            return bad("no seeds given");
        }
        if self.solvers.is_empty() {
            return bad("no solver selected");
        }
        if !(self.time_limit_secs.is_finite() && self.time_limit_secs > 0.0) {
            return bad("time limit must be positive");
        }
        let counts = !matches!(self.kind, SweepKind::Alphabeta);
        if counts && self.values.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
            return bad("swept counts must be non-negative integers");
        }
        Ok(())
    }
}

/// One (swept value, seed, solver) measurement. Columns that do not apply to
/// the sweep kind are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub solver: String,
    pub status: String,
    pub total: Option<f64>,
    pub source_time: Option<f64>,
    pub processing_time: Option<f64>,
    pub transmission_time: Option<f64>,
    pub rejections: Option<usize>,
    pub shared_data: Option<u64>,
    pub threshold: Option<usize>,
}

impl SweepRow {
    fn empty(value: f64, seed: u64, solver: &str, status: &str) -> Self {
        SweepRow {
            value,
            seed,
            solver: solver.to_string(),
            status: status.to_string(),
            total: None,
            source_time: None,
            processing_time: None,
            transmission_time: None,
            rejections: None,
            shared_data: None,
            threshold: None,
        }
    }

    fn with_breakdown(mut self, b: &LatencyBreakdown) -> Self {
        self.total = Some(b.total);
        self.source_time = Some(b.source_time);
        self.processing_time = Some(b.processing_time());
        self.transmission_time = Some(b.transmission_time);
        self
    }

    fn failed(value: f64, seed: u64, solver: &str, err: &ExperimentError) -> Self {
        Self::empty(value, seed, solver, &format!("error: {err}"))
    }

    /// The quantity plotted for this row's sweep kind.
    fn metric(&self, kind: SweepKind) -> Option<f64> {
        match kind {
            SweepKind::RejectionThreshold => self.threshold.map(|t| t as f64),
            SweepKind::SharedData => self.shared_data.map(|s| s as f64),
            _ => self.total,
        }
    }
}

fn point_rows(spec: &SweepSpec, value: f64, seed: u64) -> Vec<SweepRow> {
    let f = &spec.fixed;
    let count = value as usize;
    let (mut n_uavs, mut n_requests, mut depth) = (f.n_uavs, f.n_requests, f.depth);
    let (mut alpha, mut beta) = (f.alpha, f.beta);
    match spec.kind {
        SweepKind::Requests => n_requests = count,
        SweepKind::Layers | SweepKind::SharedData => depth = count,
        SweepKind::Uavs | SweepKind::RejectionThreshold => n_uavs = count,
        SweepKind::Alphabeta => {
            alpha = value;
            beta = 1.0 - value;
        }
    }
    let params = match HeuristicParams::new(alpha, beta) {
        Ok(p) => p,
        Err(e) => return vec![SweepRow::failed(value, seed, "heuristic", &e.into())],
    };

    match spec.kind {
        SweepKind::RejectionThreshold => {
            let label = "heuristic";
            match find_rejection_threshold(
                &spec.config,
                n_requests,
                n_uavs,
                f.template,
                seed,
                &params,
                spec.depth_cap,
            ) {
                Ok(ThresholdOutcome::Depth(d)) => {
                    let mut row = SweepRow::empty(value, seed, label, "ok");
                    row.threshold = Some(d);
                    vec![row]
                }
                Ok(ThresholdOutcome::NoThresholdBelowCap(_)) => {
                    vec![SweepRow::empty(value, seed, label, "no threshold below cap")]
                }
                Err(e) => vec![SweepRow::failed(value, seed, label, &e)],
            }
        }
        SweepKind::SharedData => {
            match shared_data_point(&spec.config, n_uavs, n_requests, depth, seed, &params) {
                Ok(p) => {
                    let mut seq = SweepRow::empty(value, seed, "sequential", "ok");
                    seq.shared_data = Some(p.sequential);
                    let mut res = SweepRow::empty(value, seed, "residual", "ok");
                    res.shared_data = Some(p.residual);
                    vec![seq, res]
                }
                Err(e) => vec![SweepRow::failed(value, seed, "heuristic", &e)],
            }
        }
        _ => {
            let scenario = match generate_scenario(
                &spec.config,
                n_uavs,
                n_requests,
                f.template,
                depth,
                seed,
            ) {
                Ok(s) => s,
                Err(e) => {
                    return spec
                        .solvers
                        .iter()
                        .map(|s| SweepRow::failed(value, seed, solver_label(*s), &e))
                        .collect()
                }
            };
            spec.solvers
                .iter()
                .map(|&solver| {
                    let label = solver_label(solver);
                    let run = || -> Result<SweepRow, ExperimentError> {
                        match solver {
                            SolverKind::Exact => {
                                let limit = Duration::from_secs_f64(spec.time_limit_secs);
                                let r = solve_exact(&scenario, Some(limit))?;
                                let status = match r.status {
                                    SolveStatus::Optimal => "optimal",
                                    SolveStatus::TimeLimit => "time_limit",
                                    SolveStatus::Infeasible => "infeasible",
                                };
                                let mut row = SweepRow::empty(value, seed, label, status);
                                if let Some(b) = &r.breakdown {
                                    row = row.with_breakdown(b);
                                    row.rejections = Some(0);
                                    row.shared_data =
                                        Some(shared_data(&r.transmissions, &r.placements, &scenario));
                                }
                                Ok(row)
                            }
                            SolverKind::Heuristic => {
                                let report = run_stream(&scenario, &params, None)?;
                                let placements = report.accepted_placements();
                                let plan = derive_transmissions(&placements, &scenario)?;
                                let mut row = SweepRow::empty(value, seed, label, "ok")
                                    .with_breakdown(&report.breakdown);
                                row.rejections = Some(report.rejections);
                                row.shared_data = Some(shared_data(&plan, &placements, &scenario));
                                Ok(row)
                            }
                        }
                    };
                    run().unwrap_or_else(|e| SweepRow::failed(value, seed, label, &e))
                })
                .collect()
        }
    }
}

fn solver_label(solver: SolverKind) -> &'static str {
    match solver {
        SolverKind::Exact => "exact",
        SolverKind::Heuristic => "heuristic",
    }
}

/// Runs every (value, seed) point, in parallel. Rows come back ordered by
/// swept value, then seed, then solver, whatever the completion order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, ExperimentError> {
    spec.check()?;
    let jobs: Vec<(f64, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.seeds.iter().map(move |&s| (v, s)))
        .collect();
    Ok(jobs
        .par_iter()
        .flat_map_iter(|&(v, s)| point_rows(spec, v, s))
        .collect())
}

/// Mean and sample deviation over seeds for each (value, solver).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub value: f64,
    pub solver: String,
    pub samples: usize,
    pub mean: f64,
    pub std: f64,
    pub mean_rejections: Option<f64>,
}

pub fn summarize(kind: SweepKind, rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, u64), (f64, Vec<&SweepRow>)> = BTreeMap::new();
    let mut order = Vec::new();
    for r in rows {
        let key = (r.solver.clone(), r.value.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_insert((r.value, Vec::new())).1.push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let (value, members) = &groups[&key];
            let metric: Vec<f64> = members.iter().filter_map(|r| r.metric(kind)).collect();
            let rejections: Vec<f64> = members
                .iter()
                .filter_map(|r| r.rejections.map(|x| x as f64))
                .collect();
            SummaryRow {
                value: *value,
                solver: key.0.clone(),
                samples: metric.len(),
                mean: mean(&metric),
                std: sample_std(&metric),
                mean_rejections: (!rejections.is_empty()).then(|| mean(&rejections)),
            }
        })
        .collect()
}

pub fn write_rows_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Line chart of the summary means, one series per solver.
pub fn render_plot(kind: SweepKind, summary: &[SummaryRow]) -> String {
    let mut series: Vec<Series> = Vec::new();
    for row in summary {
        let idx = match series.iter().position(|s| s.label == row.solver) {
            Some(i) => i,
            None => {
                series.push(Series {
                    label: row.solver.clone(),
                    points: Vec::new(),
                });
                series.len() - 1
            }
        };
        series[idx].points.push((row.value, row.mean));
    }
    let title = format!("{} vs {}", kind.metric(), kind.axis());
    line_chart(&title, kind.axis(), kind.metric(), &series)
}
