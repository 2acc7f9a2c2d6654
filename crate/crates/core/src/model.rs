//! CNN layer graphs and their per-layer cost profiles.
//!
//! A model is an ordered list of layers, each carrying the three numbers the
//! placement problem cares about: parameter memory, multiplication count and
//! the size of the activation handed to the next consumer. Residual models add
//! shortcut edges that carry an earlier layer's output forward.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bytes per parameter when nothing else is specified (single precision).
pub const DEFAULT_DTYPE_BYTES: u64 = 4;

/// Stride of the shortcut edges emitted by the residual template.
pub const RESIDUAL_STRIDE: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("model depth must be at least 1, got {0}")]
    ZeroDepth(usize),
    #[error("residual template needs depth >= 3 to hold a shortcut, got {0}")]
    ResidualTooShallow(usize),
    #[error("width profile has {got} layer shapes but depth is {depth}")]
    WidthMismatch { depth: usize, got: usize },
    #[error("layer dimensions must all be >= 1")]
    ZeroDimension,
    #[error("unknown model template `{0}` (expected `sequential` or `residual`)")]
    UnknownTemplate(String),
}

/// Cost profile of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerProfile {
    /// 1-based position in the model.
    pub index: usize,
    pub memory_bytes: u64,
    pub multiplications: u64,
    pub output_bytes: u64,
}

/// Shortcut from layer `target - stride` into layer `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualEdge {
    pub target: usize,
    pub stride: usize,
    /// Output size of the source layer, carried over the shortcut.
    pub payload_bytes: u64,
}

impl ResidualEdge {
    /// Source layer index, or `None` when the stride reaches before layer 1.
    pub fn source(&self) -> Option<usize> {
        self.target.checked_sub(self.stride).filter(|&s| s >= 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ModelFile", into = "ModelFile")]
pub struct CnnModel {
    pub name: String,
    /// Size of the captured image fed to layer 1.
    pub input_bytes: u64,
    pub layers: Vec<LayerProfile>,
    pub residual_edges: Vec<ResidualEdge>,
}

impl CnnModel {
    /// Builds a model from raw layer costs and `(target, stride)` shortcut
    /// pairs. Payloads are taken from the source layers; an edge whose source
    /// does not exist gets a zero payload and is reported by [`validate_model`].
    pub fn new(
        name: impl Into<String>,
        input_bytes: u64,
        layers: Vec<LayerProfile>,
        shortcuts: &[(usize, usize)],
    ) -> Self {
        let mut model = CnnModel {
            name: name.into(),
            input_bytes,
            layers,
            residual_edges: Vec::new(),
        };
        model.residual_edges = shortcuts
            .iter()
            .map(|&(target, stride)| ResidualEdge {
                target,
                stride,
                payload_bytes: 0,
            })
            .map(|mut edge| {
                edge.payload_bytes = edge
                    .source()
                    .and_then(|s| model.layer(s))
                    .map_or(0, |l| l.output_bytes);
                edge
            })
            .collect();
        model
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Layer by 1-based index.
    pub fn layer(&self, index: usize) -> Option<&LayerProfile> {
        index.checked_sub(1).and_then(|i| self.layers.get(i))
    }

    /// The shortcut terminating at `target`, if any.
    pub fn shortcut_into(&self, target: usize) -> Option<&ResidualEdge> {
        self.residual_edges.iter().find(|e| e.target == target)
    }

    /// θ indicator: whether a shortcut of the given stride ends at `target`.
    pub fn theta(&self, target: usize, stride: usize) -> bool {
        self.residual_edges
            .iter()
            .any(|e| e.target == target && e.stride == stride)
    }

    pub fn is_residual(&self) -> bool {
        !self.residual_edges.is_empty()
    }

    /// Same layers with the shortcut set replaced.
    pub fn with_shortcuts(&self, shortcuts: &[(usize, usize)]) -> CnnModel {
        CnnModel::new(self.name.clone(), self.input_bytes, self.layers.clone(), shortcuts)
    }

    pub fn total_multiplications(&self) -> u64 {
        self.layers.iter().map(|l| l.multiplications).sum()
    }

    pub fn total_memory_bytes(&self) -> u64 {
        self.layers.iter().map(|l| l.memory_bytes).sum()
    }
}

/// On-disk model schema. Shortcut payloads are implied by the source layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    name: String,
    input_bytes: u64,
    layers: Vec<LayerFile>,
    #[serde(default)]
    residual_edges: Vec<EdgeFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    memory_bytes: u64,
    multiplications: u64,
    output_bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeFile {
    target: usize,
    stride: usize,
}

impl From<ModelFile> for CnnModel {
    fn from(file: ModelFile) -> Self {
        let layers = file
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| LayerProfile {
                index: i + 1,
                memory_bytes: l.memory_bytes,
                multiplications: l.multiplications,
                output_bytes: l.output_bytes,
            })
            .collect();
        let shortcuts: Vec<_> = file
            .residual_edges
            .iter()
            .map(|e| (e.target, e.stride))
            .collect();
        CnnModel::new(file.name, file.input_bytes, layers, &shortcuts)
    }
}

impl From<CnnModel> for ModelFile {
    fn from(model: CnnModel) -> Self {
        ModelFile {
            name: model.name,
            input_bytes: model.input_bytes,
            layers: model
                .layers
                .iter()
                .map(|l| LayerFile {
                    memory_bytes: l.memory_bytes,
                    multiplications: l.multiplications,
                    output_bytes: l.output_bytes,
                })
                .collect(),
            residual_edges: model
                .residual_edges
                .iter()
                .map(|e| EdgeFile {
                    target: e.target,
                    stride: e.stride,
                })
                .collect(),
        }
    }
}

/// Shape of a convolutional (or dense) layer, the input to the cost formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDims {
    pub kernel_h: u64,
    pub kernel_w: u64,
    pub in_channels: u64,
    pub out_channels: u64,
    pub out_h: u64,
    pub out_w: u64,
    pub dtype_bytes: u64,
}

impl LayerDims {
    pub fn conv(kernel: u64, in_channels: u64, out_channels: u64, out_map: u64) -> Self {
        LayerDims {
            kernel_h: kernel,
            kernel_w: kernel,
            in_channels,
            out_channels,
            out_h: out_map,
            out_w: out_map,
            dtype_bytes: DEFAULT_DTYPE_BYTES,
        }
    }

    /// Fully connected layer: a 1x1 kernel over a 1x1 map.
    pub fn dense(inputs: u64, outputs: u64) -> Self {
        Self::conv(1, inputs, outputs, 1)
    }

    pub fn with_dtype(mut self, dtype_bytes: u64) -> Self {
        self.dtype_bytes = dtype_bytes;
        self
    }

    pub fn is_valid(&self) -> bool {
        [
            self.kernel_h,
            self.kernel_w,
            self.in_channels,
            self.out_channels,
            self.out_h,
            self.out_w,
            self.dtype_bytes,
        ]
        .iter()
        .all(|&d| d >= 1)
    }
}

/// Weight storage: one weight per kernel tap per input/output channel pair.
pub fn layer_memory_bytes(dims: &LayerDims) -> u64 {
    dims.kernel_h * dims.kernel_w * dims.in_channels * dims.out_channels * dims.dtype_bytes
}

/// Scalar multiplications to produce the full output map.
pub fn layer_multiplications(dims: &LayerDims) -> u64 {
    dims.out_h * dims.out_w * dims.kernel_h * dims.kernel_w * dims.in_channels * dims.out_channels
}

/// Size of the activation volume leaving the layer.
pub fn layer_output_bytes(dims: &LayerDims) -> u64 {
    dims.out_h * dims.out_w * dims.out_channels * dims.dtype_bytes
}

pub fn layer_profile(index: usize, dims: &LayerDims) -> LayerProfile {
    LayerProfile {
        index,
        memory_bytes: layer_memory_bytes(dims),
        multiplications: layer_multiplications(dims),
        output_bytes: layer_output_bytes(dims),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Template {
    Sequential,
    Residual,
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Template::Sequential => "sequential",
            Template::Residual => "residual",
        })
    }
}

impl FromStr for Template {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(Template::Sequential),
            "residual" => Ok(Template::Residual),
            other => Err(ModelError::UnknownTemplate(other.to_string())),
        }
    }
}

/// Per-layer shapes used when instantiating a template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthProfile {
    /// Every layer has the same shape.
    Uniform(LayerDims),
    /// One shape per layer, in order.
    Explicit(Vec<LayerDims>),
}

impl WidthProfile {
    fn dims(&self, depth: usize) -> Result<Vec<LayerDims>, ModelError> {
        let dims = match self {
            WidthProfile::Uniform(d) => vec![*d; depth],
            WidthProfile::Explicit(v) if v.len() == depth => v.clone(),
            WidthProfile::Explicit(v) => {
                return Err(ModelError::WidthMismatch {
                    depth,
                    got: v.len(),
                })
            }
        };
        if dims.iter().all(LayerDims::is_valid) {
            Ok(dims)
        } else {
            Err(ModelError::ZeroDimension)
        }
    }
}

/// `(target, stride)` pairs of the residual tiling: a stride-2 shortcut into
/// every odd layer from 3 on. Empty for models too shallow to hold one.
pub fn residual_shortcuts(depth: usize) -> Vec<(usize, usize)> {
    (RESIDUAL_STRIDE + 1..=depth)
        .step_by(RESIDUAL_STRIDE)
        .map(|t| (t, RESIDUAL_STRIDE))
        .collect()
}

pub fn build_model_from_template(
    template: Template,
    depth: usize,
    width: &WidthProfile,
    input_bytes: u64,
) -> Result<CnnModel, ModelError> {
    if depth < 1 {
        return Err(ModelError::ZeroDepth(depth));
    }
    if template == Template::Residual && depth < RESIDUAL_STRIDE + 1 {
        return Err(ModelError::ResidualTooShallow(depth));
    }
    let layers = width
        .dims(depth)?
        .iter()
        .enumerate()
        .map(|(i, d)| layer_profile(i + 1, d))
        .collect();
    let shortcuts = match template {
        Template::Sequential => Vec::new(),
        Template::Residual => residual_shortcuts(depth),
    };
    Ok(CnnModel::new(
        format!("{template}-{depth}"),
        input_bytes,
        layers,
        &shortcuts,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelViolation {
    NoLayers,
    LayerIndex { position: usize, index: usize },
    ZeroMultiplications { layer: usize },
    ZeroOutput { layer: usize },
    ZeroStride { target: usize },
    SourceBeforeFirstLayer { target: usize, stride: usize },
    TargetOutOfRange { target: usize, depth: usize },
    DuplicateTarget { target: usize },
    PayloadMismatch { target: usize, expected: u64, found: u64 },
}

impl fmt::Display for ModelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelViolation::NoLayers => write!(f, "model has no layers"),
            ModelViolation::LayerIndex { position, index } => {
                write!(f, "layer at position {position} is labelled {index}")
            }
            ModelViolation::ZeroMultiplications { layer } => {
                write!(f, "layer {layer} has zero multiplications")
            }
            ModelViolation::ZeroOutput { layer } => write!(f, "layer {layer} has zero output bytes"),
            ModelViolation::ZeroStride { target } => {
                write!(f, "shortcut into layer {target} has stride 0")
            }
            ModelViolation::SourceBeforeFirstLayer { target, stride } => write!(
                f,
                "edge source before layer 1 (target {target}, stride {stride})"
            ),
            ModelViolation::TargetOutOfRange { target, depth } => {
                write!(f, "shortcut target {target} beyond model depth {depth}")
            }
            ModelViolation::DuplicateTarget { target } => {
                write!(f, "duplicate shortcut target {target}")
            }
            ModelViolation::PayloadMismatch {
                target,
                expected,
                found,
            } => write!(
                f,
                "payload mismatch on shortcut into {target}: source outputs {expected} bytes, edge carries {found}"
            ),
        }
    }
}

/// Every invariant breach in `model`; empty when the model is well formed.
pub fn validate_model(model: &CnnModel) -> Vec<ModelViolation> {
    let mut out = Vec::new();
    if model.layers.is_empty() {
        out.push(ModelViolation::NoLayers);
    }
    for (pos, layer) in model.layers.iter().enumerate() {
        if layer.index != pos + 1 {
            out.push(ModelViolation::LayerIndex {
                position: pos + 1,
                index: layer.index,
            });
        }
        if layer.multiplications == 0 {
            out.push(ModelViolation::ZeroMultiplications { layer: pos + 1 });
        }
        if layer.output_bytes == 0 {
            out.push(ModelViolation::ZeroOutput { layer: pos + 1 });
        }
    }

    let depth = model.depth();
    let mut seen = BTreeSet::new();
    for edge in &model.residual_edges {
        if !seen.insert(edge.target) {
            out.push(ModelViolation::DuplicateTarget {
                target: edge.target,
            });
        }
        if edge.target > depth {
            out.push(ModelViolation::TargetOutOfRange {
                target: edge.target,
                depth,
            });
        }
        if edge.stride == 0 {
            out.push(ModelViolation::ZeroStride {
                target: edge.target,
            });
            continue;
        }
        match edge.source().and_then(|s| model.layer(s)) {
            None => out.push(ModelViolation::SourceBeforeFirstLayer {
                target: edge.target,
                stride: edge.stride,
            }),
            Some(src) if src.output_bytes != edge.payload_bytes => {
                out.push(ModelViolation::PayloadMismatch {
                    target: edge.target,
                    expected: src.output_bytes,
                    found: edge.payload_bytes,
                })
            }
            Some(_) => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims(kh: u64, kw: u64, cin: u64, cout: u64, oh: u64, ow: u64, dt: u64) -> LayerDims {
        LayerDims {
            kernel_h: kh,
            kernel_w: kw,
            in_channels: cin,
            out_channels: cout,
            out_h: oh,
            out_w: ow,
            dtype_bytes: dt,
        }
    }

    #[test]
    fn memory_examples() {
        assert_eq!(layer_memory_bytes(&dims(3, 3, 1, 1, 1, 1, 4)), 36);
        assert_eq!(layer_memory_bytes(&dims(1, 1, 1, 1, 1, 1, 1)), 1);
        assert_eq!(layer_memory_bytes(&dims(3, 3, 64, 128, 1, 1, 4)), 294_912);
    }

    #[test]
    fn multiplication_examples() {
        assert_eq!(layer_multiplications(&dims(1, 1, 1, 1, 1, 1, 4)), 1);
        assert_eq!(layer_multiplications(&dims(3, 3, 1, 1, 2, 2, 4)), 36);
        assert_eq!(
            layer_multiplications(&dims(3, 3, 64, 128, 56, 56, 4)),
            231_211_008
        );
    }

    #[test]
    fn dense_layer_uses_neuron_counts() {
        let d = LayerDims::dense(512, 10);
        assert_eq!(layer_memory_bytes(&d), 512 * 10 * 4);
        assert_eq!(layer_multiplications(&d), 5120);
        assert_eq!(layer_output_bytes(&d), 40);
    }

    fn width() -> WidthProfile {
        WidthProfile::Uniform(LayerDims::conv(3, 16, 16, 28))
    }

    #[test]
    fn sequential_template() {
        let m = build_model_from_template(Template::Sequential, 5, &width(), 1000).unwrap();
        assert_eq!(m.depth(), 5);
        assert!(m.residual_edges.is_empty());
        assert!(validate_model(&m).is_empty());
    }

    #[test]
    fn residual_template_targets() {
        let m = build_model_from_template(Template::Residual, 5, &width(), 1000).unwrap();
        let targets: Vec<_> = m.residual_edges.iter().map(|e| (e.target, e.stride)).collect();
        assert_eq!(targets, vec![(3, 2), (5, 2)]);
        assert!(m.theta(3, 2));
        assert!(!m.theta(4, 2));
        assert!(validate_model(&m).is_empty());
    }

    #[test]
    fn template_preconditions() {
        assert_eq!(
            build_model_from_template(Template::Sequential, 0, &width(), 1),
            Err(ModelError::ZeroDepth(0))
        );
        assert_eq!(
            build_model_from_template(Template::Residual, 2, &width(), 1),
            Err(ModelError::ResidualTooShallow(2))
        );
        let bad = WidthProfile::Explicit(vec![LayerDims::conv(3, 1, 1, 1)]);
        assert!(matches!(
            build_model_from_template(Template::Sequential, 2, &bad, 1),
            Err(ModelError::WidthMismatch { depth: 2, got: 1 })
        ));
        let zero = WidthProfile::Uniform(LayerDims::conv(0, 1, 1, 1));
        assert_eq!(
            build_model_from_template(Template::Sequential, 2, &zero, 1),
            Err(ModelError::ZeroDimension)
        );
    }

    #[test]
    fn stride_equal_to_target_is_flagged() {
        let m = build_model_from_template(Template::Sequential, 5, &width(), 1)
            .unwrap()
            .with_shortcuts(&[(3, 3)]);
        let v = validate_model(&m);
        assert_eq!(
            v,
            vec![ModelViolation::SourceBeforeFirstLayer {
                target: 3,
                stride: 3
            }]
        );
        assert!(v[0].to_string().contains("edge source before layer 1"));
    }

    #[test]
    fn payload_mismatch_is_flagged() {
        let mut m = build_model_from_template(Template::Residual, 5, &width(), 1).unwrap();
        m.residual_edges[0].payload_bytes += 1;
        let v = validate_model(&m);
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("payload mismatch"));
    }

    #[test]
    fn duplicate_and_out_of_range_targets() {
        let m = build_model_from_template(Template::Sequential, 4, &width(), 1)
            .unwrap()
            .with_shortcuts(&[(3, 1), (3, 2), (9, 2)]);
        let v = validate_model(&m);
        assert!(v.contains(&ModelViolation::DuplicateTarget { target: 3 }));
        assert!(v.contains(&ModelViolation::TargetOutOfRange { target: 9, depth: 4 }));
    }

    #[test]
    fn file_schema_fills_payloads() {
        let json = r#"{"name":"tiny","input_bytes":12,
            "layers":[{"memory_bytes":1,"multiplications":2,"output_bytes":30},
                      {"memory_bytes":1,"multiplications":2,"output_bytes":40},
                      {"memory_bytes":1,"multiplications":2,"output_bytes":50}],
            "residual_edges":[{"target":3,"stride":2}]}"#;
        let m: CnnModel = serde_json::from_str(json).unwrap();
        assert_eq!(m.residual_edges[0].payload_bytes, 30);
        assert_eq!(m.layer(2).unwrap().index, 2);
        let back = serde_json::to_value(&m).unwrap();
        assert_eq!(back["residual_edges"], serde_json::json!([{"target":3,"stride":2}]));
    }

    #[test]
    fn file_schema_rejects_unknown_fields() {
        let json = r#"{"name":"x","input_bytes":1,"layers":[],"bogus":1}"#;
        assert!(serde_json::from_str::<CnnModel>(json).is_err());
    }

    fn arb_dims() -> impl Strategy<Value = LayerDims> {
        (1u64..6, 1u64..6, 1u64..64, 1u64..64, 1u64..32, 1u64..32, 1u64..8)
            .prop_map(|(a, b, c, d, e, f, g)| dims(a, b, c, d, e, f, g))
    }

    proptest! {
        #[test]
        fn costs_are_monotone(d in arb_dims(), field in 0usize..7) {
            let mut bigger = d;
            match field {
                0 => bigger.kernel_h += 1,
                1 => bigger.kernel_w += 1,
                2 => bigger.in_channels += 1,
                3 => bigger.out_channels += 1,
                4 => bigger.out_h += 1,
                5 => bigger.out_w += 1,
                _ => bigger.dtype_bytes += 1,
            }
            prop_assert!(layer_memory_bytes(&bigger) >= layer_memory_bytes(&d));
            prop_assert!(layer_multiplications(&bigger) >= layer_multiplications(&d));
        }

        #[test]
        fn templates_validate_and_share_profiles(
            shapes in proptest::collection::vec(arb_dims(), 3..24),
            input in 1u64..1_000_000,
        ) {
            let depth = shapes.len();
            let w = WidthProfile::Explicit(shapes);
            let seq = build_model_from_template(Template::Sequential, depth, &w, input).unwrap();
            let res = build_model_from_template(Template::Residual, depth, &w, input).unwrap();
            prop_assert!(validate_model(&seq).is_empty());
            prop_assert!(validate_model(&res).is_empty());
            prop_assert_eq!(&seq.layers, &res.layers);
            prop_assert_eq!(res.residual_edges.len(), (depth - 1) / 2);
        }
    }
}
