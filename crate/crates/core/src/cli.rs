//! `swarm-infer` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 when a run fails or its
//! result is infeasible.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::experiments::{
    compare_shared_data, find_min_uavs, find_rejection_threshold, generate_scenario,
    render_plot, run_sweep, summarize, write_rows_csv, write_summary_csv, ScenarioConfig,
    SweepSpec, DEFAULT_DEPTH_CAP,
};
use crate::heuristic::{run_stream, write_outcome_csv, HeuristicParams};
use crate::model::{validate_model, CnnModel, Template};
use crate::network::Swarm;
use crate::scenario::Scenario;
use crate::solver::solve_exact;

pub const SEED_ENV: &str = "SWARM_INFER_SEED";
const DEFAULT_SEED: u64 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "swarm-infer", version, about = "CNN layer placement over a swarm of compute nodes")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Latency-optimal placement by branch-and-bound.
    Solve {
        #[command(flatten)]
        input: ScenarioArgs,
        /// Seconds before the search returns its best incumbent.
        #[arg(long, default_value_t = 60.0)]
        time_limit: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Online DistInference placement of the request stream.
    Heuristic {
        #[command(flatten)]
        input: ScenarioArgs,
        #[command(flatten)]
        weights: WeightArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Runs a sweep described by a JSON spec.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        /// Used when the spec lists no seeds.
        #[arg(long, env = SEED_ENV)]
        seed: Option<u64>,
        /// Also write an SVG chart next to the CSV.
        #[arg(long)]
        plot: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Largest model depth served without rejections.
    Threshold {
        #[arg(long, default_value_t = 10)]
        requests: usize,
        #[arg(long, default_value_t = 30)]
        uavs: usize,
        #[arg(long, default_value = "sequential")]
        template: Template,
        #[arg(long, env = SEED_ENV)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_DEPTH_CAP)]
        cap: usize,
        /// Scan node counts at fixed `--depth` instead: the smallest swarm
        /// that accepts every request.
        #[arg(long)]
        min_uavs: bool,
        #[arg(long, default_value_t = 10)]
        depth: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        weights: WeightArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Shared data of residual vs sequential models under the heuristic.
    SharedData {
        /// Inclusive range `lo-hi` or comma list.
        #[arg(long, default_value = "3-20")]
        depths: String,
        #[arg(long, default_value = "1-20")]
        requests: String,
        /// Seeds as a range or list; defaults to the resolved `--seed`.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, env = SEED_ENV)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 30)]
        uavs: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        weights: WeightArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Checks a model, swarm or scenario file.
    Validate {
        #[arg(long, conflicts_with_all = ["swarm", "scenario"])]
        model: Option<PathBuf>,
        #[arg(long, conflicts_with = "scenario")]
        swarm: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario JSON; when absent one is generated from the flags below.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub uavs: usize,
    #[arg(long, default_value_t = 5)]
    pub requests: usize,
    #[arg(long, default_value_t = 5)]
    pub depth: usize,
    #[arg(long, default_value = "sequential")]
    pub template: Template,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Generator settings (budgets, area, rates, layer shapes) as JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the generated scenario here.
    #[arg(long)]
    pub save_scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    #[arg(long, default_value_t = 0.7)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.3)]
    pub beta: f64,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(config) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILED
        }
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    eprintln!("seed: {seed}");
    seed
}

/// Reads and parses a JSON file, naming the file and the offending field on
/// failure.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let field = if field == "." { "<root>".to_string() } else { field };
        anyhow!("{}: field `{}`: {}", path.display(), field, e.inner())
    })
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig> {
    path.map_or_else(|| Ok(ScenarioConfig::default()), read_json)
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario> {
    let scenario = match &args.scenario {
        Some(path) => {
            let scenario: Scenario = read_json(path)?;
            if args.seed.is_some() {
                resolve_seed(args.seed);
            }
            scenario
        }
        None => {
            let seed = resolve_seed(args.seed);
            let config = load_config(args.config.as_deref())?;
            generate_scenario(&config, args.uavs, args.requests, args.template, args.depth, seed)?
        }
    };
    let issues = scenario.validate();
    if !issues.is_empty() {
        let list: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
        bail!("invalid scenario: {}", list.join("; "));
    }
    if let Some(path) = &args.save_scenario {
        emit(Some(path), &to_json(&scenario)?)?;
    }
    Ok(scenario)
}

fn params(w: &WeightArgs) -> Result<HeuristicParams> {
    Ok(HeuristicParams::new(w.alpha, w.beta)?)
}

/// Parses `lo-hi` (inclusive) or `a,b,c`.
fn parse_range(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once('-') {
        let (lo, hi): (u64, u64) = (lo.trim().parse()?, hi.trim().parse()?);
        if lo > hi {
            bail!("empty range `{text}`");
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().with_context(|| format!("bad number in `{text}`")))
        .collect()
}

fn run(config: RunConfig) -> Result<i32> {
    match config.command {
        Command::Solve {
            input,
            time_limit,
            output,
        } => {
            if !(time_limit.is_finite() && time_limit > 0.0) {
                eprintln!("error: --time-limit must be positive");
                return Ok(EXIT_USAGE);
            }
            let scenario = load_scenario(&input)?;
            let result = solve_exact(&scenario, Some(Duration::from_secs_f64(time_limit)))?;
            emit(output.out.as_deref(), &to_json(&result)?)?;
            if result.is_infeasible() {
                eprintln!("infeasible: some layer fits no node within the budgets");
                return Ok(EXIT_FAILED);
            }
            if !result.proven_optimal {
                eprintln!("time limit reached; result not proven optimal");
            }
            Ok(EXIT_OK)
        }
        Command::Heuristic {
            input,
            weights,
            output,
        } => {
            let params = params(&weights)?;
            let scenario = load_scenario(&input)?;
            let report = run_stream(&scenario, &params, None)?;
            let bytes = match output.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_outcome_csv(&report.outcomes, &mut buf)?;
                    buf
                }
                Format::Json => to_json(&report)?,
            };
            emit(output.out.as_deref(), &bytes)?;
            eprintln!(
                "total latency {:.6} s, {} rejected",
                report.breakdown.total, report.rejections
            );
            Ok(EXIT_OK)
        }
        Command::Sweep {
            spec,
            seed,
            plot,
            output,
        } => {
            let mut sweep: SweepSpec = read_json(&spec)?;
            if sweep.seeds.is_empty() {
                sweep.seeds = vec![resolve_seed(seed)];
            } else {
                eprintln!(
                    "seeds: {}",
                    sweep.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
                );
            }
            let rows = run_sweep(&sweep)?;
            let summary = summarize(sweep.kind, &rows);
            let out = output.out.clone().or_else(|| sweep.output.clone());
            let bytes = match output.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_rows_csv(&rows, &mut buf)?;
                    buf
                }
                Format::Json => to_json(&rows)?,
            };
            emit(out.as_deref(), &bytes)?;
            if let Some(out) = &out {
                let mut buf = Vec::new();
                write_summary_csv(&summary, &mut buf)?;
                emit(Some(&out.with_extension("summary.csv")), &buf)?;
            }
            if plot {
                let svg = render_plot(sweep.kind, &summary);
                let path = out
                    .as_ref()
                    .map(|p| p.with_extension("svg"))
                    .unwrap_or_else(|| PathBuf::from("sweep.svg"));
                emit(Some(&path), svg.as_bytes())?;
            }
            let failed = rows.iter().filter(|r| r.status.starts_with("error")).count();
            if failed > 0 {
                eprintln!("{failed} sweep points failed; see the status column");
            }
            Ok(EXIT_OK)
        }
        Command::Threshold {
            requests,
            uavs,
            template,
            seed,
            cap,
            min_uavs,
            depth,
            config,
            weights,
            output,
        } => {
            let seed = resolve_seed(seed);
            let params = params(&weights)?;
            let config = load_config(config.as_deref())?;
            let value = if min_uavs {
                let found = find_min_uavs(&config, requests, depth, template, seed, &params, cap)?;
                serde_json::json!({
                    "requests": requests, "depth": depth, "template": template,
                    "seed": seed, "min_uavs": found,
                })
            } else {
                let outcome =
                    find_rejection_threshold(&config, requests, uavs, template, seed, &params, cap)?;
                eprintln!("threshold: {outcome}");
                serde_json::json!({
                    "requests": requests, "uavs": uavs, "template": template,
                    "seed": seed, "threshold": outcome,
                })
            };
            emit(output.out.as_deref(), &to_json(&value)?)?;
            Ok(EXIT_OK)
        }
        Command::SharedData {
            depths,
            requests,
            seeds,
            seed,
            uavs,
            config,
            weights,
            output,
        } => {
            let depths: Vec<usize> = parse_range(&depths)?.into_iter().map(|d| d as usize).collect();
            let requests: Vec<usize> =
                parse_range(&requests)?.into_iter().map(|r| r as usize).collect();
            let seeds = match seeds {
                Some(s) => parse_range(&s)?,
                None => vec![resolve_seed(seed)],
            };
            let params = params(&weights)?;
            let config = load_config(config.as_deref())?;
            let rows = compare_shared_data(&config, uavs, &depths, &requests, &seeds, &params)?;
            let bytes = match output.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    for r in &rows {
                        w.serialize(r)?;
                    }
                    w.into_inner().map_err(|e| anyhow!("{e}"))?
                }
                Format::Json => to_json(&rows)?,
            };
            emit(output.out.as_deref(), &bytes)?;
            Ok(EXIT_OK)
        }
        Command::Validate {
            model,
            swarm,
            scenario,
        } => {
            let problems: Vec<String> = if let Some(path) = model {
                let m: CnnModel = read_json(&path)?;
                validate_model(&m).iter().map(|v| v.to_string()).collect()
            } else if let Some(path) = swarm {
                let _: Swarm = read_json(&path)?;
                Vec::new()
            } else if let Some(path) = scenario {
                let s: Scenario = read_json(&path)?;
                s.validate().iter().map(|v| v.to_string()).collect()
            } else {
                eprintln!("error: give one of --model, --swarm or --scenario");
                return Ok(EXIT_USAGE);
            };
            if problems.is_empty() {
                println!("ok");
                Ok(EXIT_OK)
            } else {
                for p in &problems {
                    println!("{p}");
                }
                Ok(EXIT_FAILED)
            }
        }
    }
}
