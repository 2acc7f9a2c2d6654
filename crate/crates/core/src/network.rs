//! Swarm of compute nodes: budgets, positions and link rates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Multiplications per second of a Raspberry Pi 3B+ class node.
pub const RPI_MULT_PER_SEC: f64 = 560e6;
pub const DEFAULT_MEM_BUDGET: u64 = 250_000_000;
pub const DEFAULT_COMPUTE_BUDGET: u64 = 1_000_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("swarm needs at least one node")]
    NoNodes,
    #[error("swarm needs at least one source")]
    NoSources,
    #[error("area size must be positive and finite, got {0}")]
    BadArea(f64),
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("unknown source {0}")]
    UnknownSource(usize),
    #[error("no link from node {0} to itself")]
    SelfLink(usize),
    #[error("node {0} has a non-positive budget or compute rate")]
    BadBudget(usize),
    #[error("invalid rate model: {0}")]
    BadRateModel(String),
    #[error("link matrix {what} has wrong shape: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("rate {rate} on link {from}->{to} is not a positive finite number")]
    BadRate { from: usize, to: usize, rate: f64 },
}

/// Resources of one node; identical for every node built by [`build_swarm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    pub mem_budget: u64,
    pub compute_budget: u64,
    pub mult_per_sec: f64,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            mem_budget: DEFAULT_MEM_BUDGET,
            compute_budget: DEFAULT_COMPUTE_BUDGET,
            mult_per_sec: RPI_MULT_PER_SEC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavNode {
    pub id: usize,
    /// Bytes of weights the node can hold.
    pub mem_budget: u64,
    /// Multiplications the node accepts over a scenario.
    pub compute_budget: u64,
    pub mult_per_sec: f64,
    /// Metres.
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub id: usize,
    pub position: [f64; 2],
}

/// Rates in bytes per second. `node_rates[i][k]` is the rate from node `i` to
/// node `k` (diagonal unused); `source_rates[s][i]` from source `s` to node `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMatrix {
    pub node_rates: Vec<Vec<f64>>,
    pub source_rates: Vec<Vec<f64>>,
}

/// Clamped inverse-distance rate: `clamp(ref_rate * ref_distance / d, min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceRates {
    pub ref_rate: f64,
    pub ref_distance: f64,
    pub min_rate: f64,
    pub max_rate: f64,
}

impl Default for DistanceRates {
    fn default() -> Self {
        // 10 Mbit/s at 100 m, clamped to [1, 100] Mbit/s.
        DistanceRates {
            ref_rate: 1.25e6,
            ref_distance: 100.0,
            min_rate: 1.25e5,
            max_rate: 1.25e7,
        }
    }
}

impl DistanceRates {
    pub fn rate(&self, distance: f64) -> f64 {
        let raw = if distance > 0.0 {
            self.ref_rate * self.ref_distance / distance
        } else {
            f64::INFINITY
        };
        raw.clamp(self.min_rate, self.max_rate)
    }

    fn check(&self) -> Result<(), NetworkError> {
        let ok = [self.ref_rate, self.ref_distance, self.min_rate, self.max_rate]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
            && self.min_rate <= self.max_rate;
        if ok {
            Ok(())
        } else {
            Err(NetworkError::BadRateModel(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateModel {
    Explicit(LinkMatrix),
    /// Independent draw per ordered pair from `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    Distance(DistanceRates),
}

impl Default for RateModel {
    fn default() -> Self {
        RateModel::Distance(DistanceRates::default())
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl RateModel {
    fn links<R: Rng>(
        &self,
        nodes: &[UavNode],
        sources: &[Source],
        rng: &mut R,
    ) -> Result<LinkMatrix, NetworkError> {
        let n = nodes.len();
        let links = match self {
            RateModel::Explicit(m) => m.clone(),
            RateModel::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && *lo > 0.0 && lo <= hi) {
                    return Err(NetworkError::BadRateModel(format!(
                        "uniform range [{lo}, {hi}]"
                    )));
                }
                let draw = |rng: &mut R| if lo == hi { *lo } else { rng.gen_range(*lo..=*hi) };
                let node_rates = (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|k| if i == k { 0.0 } else { draw(rng) })
                            .collect()
                    })
                    .collect();
                let source_rates = sources
                    .iter()
                    .map(|_| (0..n).map(|_| draw(rng)).collect())
                    .collect();
                LinkMatrix {
                    node_rates,
                    source_rates,
                }
            }
            RateModel::Distance(d) => {
                d.check()?;
                let node_rates = nodes
                    .iter()
                    .map(|a| {
                        nodes
                            .iter()
                            .map(|b| {
                                if a.id == b.id {
                                    0.0
                                } else {
                                    d.rate(distance(a.position, b.position))
                                }
                            })
                            .collect()
                    })
                    .collect();
                let source_rates = sources
                    .iter()
                    .map(|s| {
                        nodes
                            .iter()
                            .map(|b| d.rate(distance(s.position, b.position)))
                            .collect()
                    })
                    .collect();
                LinkMatrix {
                    node_rates,
                    source_rates,
                }
            }
        };
        Ok(links)
    }
}

/// Immutable swarm description. Serialized with its full link matrix; a file
/// may omit `links` and give a `rate_model` (default: distance) instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SwarmFile")]
pub struct Swarm {
    pub nodes: Vec<UavNode>,
    pub sources: Vec<Source>,
    pub links: LinkMatrix,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SwarmFile {
    nodes: Vec<UavNode>,
    #[serde(default)]
    sources: Vec<Source>,
    #[serde(default)]
    links: Option<LinkMatrix>,
    #[serde(default)]
    rate_model: Option<RateModel>,
    #[serde(default)]
    seed: u64,
}

impl TryFrom<SwarmFile> for Swarm {
    type Error = NetworkError;

    fn try_from(file: SwarmFile) -> Result<Self, Self::Error> {
        let model = match file.links {
            Some(links) => RateModel::Explicit(links),
            None => file.rate_model.unwrap_or_default(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(file.seed);
        Swarm::assemble(file.nodes, file.sources, &model, &mut rng)
    }
}

impl Swarm {
    /// Computes links for the given nodes and sources and checks every
    /// invariant. Node and source ids are reassigned to their positions.
    pub fn assemble<R: Rng>(
        mut nodes: Vec<UavNode>,
        mut sources: Vec<Source>,
        rate_model: &RateModel,
        rng: &mut R,
    ) -> Result<Swarm, NetworkError> {
        if nodes.is_empty() {
            return Err(NetworkError::NoNodes);
        }
        if sources.is_empty() {
            return Err(NetworkError::NoSources);
        }
        for (i, node) in nodes.iter_mut().enumerate() {
            node.id = i;
            if node.mem_budget == 0
                || node.compute_budget == 0
                || !(node.mult_per_sec.is_finite() && node.mult_per_sec > 0.0)
            {
                return Err(NetworkError::BadBudget(i));
            }
        }
        for (s, source) in sources.iter_mut().enumerate() {
            source.id = s;
        }
        let links = rate_model.links(&nodes, &sources, rng)?;
        let swarm = Swarm {
            nodes,
            sources,
            links,
        };
        swarm.check_links()?;
        Ok(swarm)
    }

    fn check_links(&self) -> Result<(), NetworkError> {
        let n = self.nodes.len();
        let shape = |what, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(NetworkError::Shape {
                    what,
                    expected,
                    got,
                })
            }
        };
        shape("node_rates", n, self.links.node_rates.len())?;
        shape("source_rates", self.sources.len(), self.links.source_rates.len())?;
        for (i, row) in self.links.node_rates.iter().enumerate() {
            shape("node_rates row", n, row.len())?;
            for (k, &rate) in row.iter().enumerate() {
                if i != k && !(rate.is_finite() && rate > 0.0) {
                    return Err(NetworkError::BadRate { from: i, to: k, rate });
                }
            }
        }
        for (s, row) in self.links.source_rates.iter().enumerate() {
            shape("source_rates row", n, row.len())?;
            for (i, &rate) in row.iter().enumerate() {
                if !(rate.is_finite() && rate > 0.0) {
                    return Err(NetworkError::BadRate { from: s, to: i, rate });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn link_rate(&self, from: usize, to: usize) -> Result<f64, NetworkError> {
        let n = self.nodes.len();
        if from >= n {
            return Err(NetworkError::UnknownNode(from));
        }
        if to >= n {
            return Err(NetworkError::UnknownNode(to));
        }
        if from == to {
            return Err(NetworkError::SelfLink(from));
        }
        Ok(self.links.node_rates[from][to])
    }

    pub fn source_rate(&self, source: usize, node: usize) -> Result<f64, NetworkError> {
        if node >= self.nodes.len() {
            return Err(NetworkError::UnknownNode(node));
        }
        self.links
            .source_rates
            .get(source)
            .map(|row| row[node])
            .ok_or(NetworkError::UnknownSource(source))
    }

    /// Same swarm with one extra node appended; existing rates are kept and
    /// the new node's links come from `rate_model`.
    pub fn with_extra_node<R: Rng>(
        &self,
        node: UavNode,
        rate_model: &RateModel,
        rng: &mut R,
    ) -> Result<Swarm, NetworkError> {
        let mut nodes = self.nodes.clone();
        nodes.push(node);
        let mut grown = Swarm::assemble(nodes, self.sources.clone(), rate_model, rng)?;
        let n = self.nodes.len();
        for i in 0..n {
            grown.links.node_rates[i][..n].copy_from_slice(&self.links.node_rates[i]);
        }
        for (s, row) in self.links.source_rates.iter().enumerate() {
            grown.links.source_rates[s][..n].copy_from_slice(row);
        }
        Ok(grown)
    }
}

fn draw_nodes<R: Rng>(n: usize, budgets: &Budgets, area: f64, rng: &mut R) -> Vec<UavNode> {
    (0..n)
        .map(|id| UavNode {
            id,
            mem_budget: budgets.mem_budget,
            compute_budget: budgets.compute_budget,
            mult_per_sec: budgets.mult_per_sec,
            position: [rng.gen_range(0.0..area), rng.gen_range(0.0..area)],
        })
        .collect()
}

fn check_area(area: f64) -> Result<(), NetworkError> {
    if area.is_finite() && area > 0.0 {
        Ok(())
    } else {
        Err(NetworkError::BadArea(area))
    }
}

/// Nodes and sources drawn uniformly in an `area_size` square.
pub fn build_swarm(
    n_nodes: usize,
    n_sources: usize,
    budgets: &Budgets,
    area_size: f64,
    rate_model: &RateModel,
    seed: u64,
) -> Result<Swarm, NetworkError> {
    if n_nodes == 0 {
        return Err(NetworkError::NoNodes);
    }
    check_area(area_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = draw_nodes(n_nodes, budgets, area_size, &mut rng);
    let sources = (0..n_sources)
        .map(|id| Source {
            id,
            position: [rng.gen_range(0.0..area_size), rng.gen_range(0.0..area_size)],
        })
        .collect();
    Swarm::assemble(nodes, sources, rate_model, &mut rng)
}

/// Like [`build_swarm`], but every node carries its own camera: source `i`
/// sits at node `i`'s position.
pub fn build_swarm_with_onboard_sources(
    n_nodes: usize,
    budgets: &Budgets,
    area_size: f64,
    rate_model: &RateModel,
    seed: u64,
) -> Result<Swarm, NetworkError> {
    if n_nodes == 0 {
        return Err(NetworkError::NoNodes);
    }
    check_area(area_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = draw_nodes(n_nodes, budgets, area_size, &mut rng);
    let sources = nodes
        .iter()
        .map(|n| Source {
            id: n.id,
            position: n.position,
        })
        .collect();
    Swarm::assemble(nodes, sources, rate_model, &mut rng)
}
