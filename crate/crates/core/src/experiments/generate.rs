use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::model::{
    build_model_from_template, layer_profile, residual_shortcuts, CnnModel, LayerDims, Template,
    WidthProfile,
};
use crate::network::{build_swarm_with_onboard_sources, Budgets, RateModel};
use crate::scenario::{InferenceRequest, Scenario};

/// 224x224 RGB image at one byte per channel.
pub const DEFAULT_INPUT_BYTES: u64 = 224 * 224 * 3;

const REQUEST_STREAM_SALT: u64 = 0x005e_ed0f_1a7e_5a17;

/// How layer shapes are drawn for generated models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerGenerator {
    /// Every layer of every request has this shape.
    Uniform { dims: LayerDims },
    /// Each layer picks a kernel, an output channel count and an output map
    /// size from the given sets; input channels follow the previous layer
    /// (3 for the first).
    Random {
        kernels: Vec<u64>,
        channels: Vec<u64>,
        maps: Vec<u64>,
    },
}

impl Default for LayerGenerator {
    fn default() -> Self {
        LayerGenerator::Random {
            kernels: vec![3],
            channels: vec![32, 64, 128],
            maps: vec![14, 28],
        }
    }
}

impl LayerGenerator {
    fn draw<R: Rng>(&self, depth: usize, rng: &mut R) -> Result<Vec<LayerDims>, ExperimentError> {
        match self {
            LayerGenerator::Uniform { dims } => Ok(vec![*dims; depth]),
            LayerGenerator::Random {
                kernels,
                channels,
                maps,
            } => {
                if kernels.is_empty() || channels.is_empty() || maps.is_empty() {
                    return Err(ExperimentError::BadSpec(
                        "random layer generator needs non-empty kernel, channel and map sets".into(),
                    ));
                }
                let mut in_channels = 3;
                Ok((0..depth)
                    .map(|_| {
                        let kernel = *kernels.choose(rng).unwrap();
                        let out = *channels.choose(rng).unwrap();
                        let map = *maps.choose(rng).unwrap();
                        let dims = LayerDims::conv(kernel, in_channels, out, map);
                        in_channels = out;
                        dims
                    })
                    .collect())
            }
        }
    }
}

/// Everything about a generated scenario that is not a sweep axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub budgets: Budgets,
    /// Side of the square deployment area, metres.
    pub area_size: f64,
    pub rate_model: RateModel,
    pub layers: LayerGenerator,
    pub input_bytes: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            budgets: Budgets::default(),
            area_size: 1000.0,
            rate_model: RateModel::default(),
            layers: LayerGenerator::default(),
            input_bytes: DEFAULT_INPUT_BYTES,
        }
    }
}

/// Per-node request counts `R_i`, each within `0..=R`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestLoad {
    pub per_node: Vec<usize>,
}

impl RequestLoad {
    pub fn from_origins(n_nodes: usize, origins: &[usize]) -> Self {
        let mut per_node = vec![0; n_nodes];
        for &o in origins {
            per_node[o] += 1;
        }
        RequestLoad { per_node }
    }

    pub fn total(&self) -> usize {
        self.per_node.iter().sum()
    }

    pub fn is_within(&self, bound: usize) -> bool {
        self.per_node.iter().all(|&r| r <= bound)
    }
}

/// Request `r` draws its origin node and layer shapes from its own stream,
/// so a scenario with more requests or deeper models extends a smaller one
/// generated from the same seed.
fn request_rng(seed: u64, request: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ REQUEST_STREAM_SALT);
    rng.set_stream(request as u64 + 1);
    rng
}

/// Builds a scenario whose models get their shortcuts from `shortcuts(depth)`.
pub(crate) fn generate_with_shortcuts(
    config: &ScenarioConfig,
    n_uavs: usize,
    n_requests: usize,
    depth: usize,
    name: &str,
    shortcuts: impl Fn(usize) -> Vec<(usize, usize)>,
    seed: u64,
) -> Result<Scenario, ExperimentError> {
    let swarm = build_swarm_with_onboard_sources(
        n_uavs,
        &config.budgets,
        config.area_size,
        &config.rate_model,
        seed,
    )?;
    let mut models = Vec::with_capacity(n_requests);
    let mut requests = Vec::with_capacity(n_requests);
    for r in 0..n_requests {
        let mut rng = request_rng(seed, r);
        let origin = rng.gen_range(0..n_uavs);
        let dims = config.layers.draw(depth, &mut rng)?;
        let layers = dims
            .iter()
            .enumerate()
            .map(|(i, d)| layer_profile(i + 1, d))
            .collect();
        let model = CnnModel::new(
            format!("{name}-{depth}-r{r}"),
            config.input_bytes,
            layers,
            &shortcuts(depth),
        );
        models.push(model);
        requests.push(InferenceRequest {
            id: r,
            model: r,
            source: origin,
            input_bytes: config.input_bytes,
        });
    }
    Ok(Scenario::new(swarm, models, requests))
}

/// Swarm of `n_uavs` with on-board cameras, and `n_requests` requests each
/// carrying its own model of the given template and depth.
pub fn generate_scenario(
    config: &ScenarioConfig,
    n_uavs: usize,
    n_requests: usize,
    template: Template,
    depth: usize,
    seed: u64,
) -> Result<Scenario, ExperimentError> {
    // Surface the template's own preconditions.
    build_model_from_template(
        template,
        depth,
        &WidthProfile::Uniform(LayerDims::conv(1, 1, 1, 1)),
        1,
    )?;
    if n_uavs == 0 {
        return Err(ExperimentError::BadSpec("n_uavs must be positive".into()));
    }
    let shortcuts: fn(usize) -> Vec<(usize, usize)> = match template {
        Template::Sequential => |_| Vec::new(),
        Template::Residual => residual_shortcuts,
    };
    generate_with_shortcuts(
        config,
        n_uavs,
        n_requests,
        depth,
        &template.to_string(),
        shortcuts,
        seed,
    )
}

/// Origins of the scenario's requests as per-node counts.
pub fn request_load(scenario: &Scenario) -> RequestLoad {
    let origins: Vec<usize> = scenario.requests.iter().map(|r| r.source).collect();
    RequestLoad::from_origins(scenario.swarm.len(), &origins)
}
