//! A swarm plus the inference requests it has to serve.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{validate_model, CnnModel, ModelViolation};
use crate::network::Swarm;

/// One classification job. `model` indexes [`Scenario::models`] and `source`
/// indexes the swarm's sources. Ids equal the request's position, which is
/// also its arrival order unless a stream says otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceRequest {
    pub id: usize,
    pub model: usize,
    pub source: usize,
    /// Captured image size shipped from the source to the node running layer 1.
    pub input_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ScenarioFile")]
pub struct Scenario {
    pub swarm: Swarm,
    pub models: Vec<CnnModel>,
    pub requests: Vec<InferenceRequest>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    swarm: Swarm,
    models: Vec<CnnModel>,
    requests: Vec<RequestFile>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestFile {
    #[serde(default)]
    #[allow(dead_code)]
    id: Option<usize>,
    model: usize,
    source: usize,
    #[serde(default)]
    input_bytes: Option<u64>,
}

impl From<ScenarioFile> for Scenario {
    fn from(file: ScenarioFile) -> Self {
        let requests = file
            .requests
            .iter()
            .enumerate()
            .map(|(id, r)| InferenceRequest {
                id,
                model: r.model,
                source: r.source,
                input_bytes: r
                    .input_bytes
                    .or_else(|| file.models.get(r.model).map(|m| m.input_bytes))
                    .unwrap_or(0),
            })
            .collect();
        Scenario {
            swarm: file.swarm,
            models: file.models,
            requests,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioIssue {
    InvalidModel { model: usize, violation: ModelViolation },
    UnknownModel { request: usize, model: usize },
    UnknownSource { request: usize, source: usize },
}

impl fmt::Display for ScenarioIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioIssue::InvalidModel { model, violation } => {
                write!(f, "model {model}: {violation}")
            }
            ScenarioIssue::UnknownModel { request, model } => {
                write!(f, "request {request} references unknown model {model}")
            }
            ScenarioIssue::UnknownSource { request, source } => {
                write!(f, "request {request} references unknown source {source}")
            }
        }
    }
}

impl Scenario {
    /// Builds a scenario, renumbering request ids to their positions.
    pub fn new(swarm: Swarm, models: Vec<CnnModel>, mut requests: Vec<InferenceRequest>) -> Self {
        for (id, r) in requests.iter_mut().enumerate() {
            r.id = id;
        }
        Scenario {
            swarm,
            models,
            requests,
        }
    }

    pub fn model_of(&self, request: usize) -> Option<&CnnModel> {
        self.requests
            .get(request)
            .and_then(|r| self.models.get(r.model))
    }

    pub fn validate(&self) -> Vec<ScenarioIssue> {
        let mut issues: Vec<_> = self
            .models
            .iter()
            .enumerate()
            .flat_map(|(i, m)| {
                validate_model(m)
                    .into_iter()
                    .map(move |violation| ScenarioIssue::InvalidModel {
                        model: i,
                        violation,
                    })
            })
            .collect();
        for r in &self.requests {
            if r.model >= self.models.len() {
                issues.push(ScenarioIssue::UnknownModel {
                    request: r.id,
                    model: r.model,
                });
            }
            if r.source >= self.swarm.sources.len() {
                issues.push(ScenarioIssue::UnknownSource {
                    request: r.id,
                    source: r.source,
                });
            }
        }
        issues
    }

    /// The first `n` requests (and every model), for nested sweeps.
    pub fn truncated(&self, n: usize) -> Scenario {
        Scenario {
            swarm: self.swarm.clone(),
            models: self.models.clone(),
            requests: self.requests.iter().take(n).cloned().collect(),
        }
    }

    /// Number of joint assignments: the product of `N^M_r` over requests,
    /// saturating at `u64::MAX`.
    pub fn search_space(&self) -> u64 {
        let n = self.swarm.len() as u64;
        self.requests
            .iter()
            .map(|r| self.models.get(r.model).map_or(0, |m| m.depth()))
            .try_fold(1u64, |acc, depth| {
                n.checked_pow(depth as u32).and_then(|p| acc.checked_mul(p))
            })
            .unwrap_or(u64::MAX)
    }
}
