//! Model tiers and the uniform completion interface over them.
//!
//! Every tier is served by something implementing [`Backend`]: an
//! OpenAI-style HTTP chat-completion client, a local command that reads the
//! prompt on stdin, or a replay store keyed by `(task, tier, trial)`.

mod extract;
mod http;
mod process;
mod prompt;
mod replay;
mod retry;

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::extract_code;
pub use http::{HttpBackend, HttpConfig, ReqwestTransport, Transport, TransportError, TransportResponse};
pub use process::{ProcessBackend, ProcessConfig};
pub use prompt::{render_prompt, PromptProfile, DEFAULT_SYSTEM_PROMPT};
pub use replay::{replay_key, RecordingBackend, ReplayBackend, ReplayEntry, ReplayStore};
pub use retry::RetryPolicy;

pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("authentication rejected (HTTP {status}): {message}")]
    Auth { status: u16, message: String },
    #[error("permanent failure (HTTP {status}): {message}")]
    Permanent { status: u16, message: String },
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("retry budget exhausted after {attempts} attempts: {last}")]
    RetryExhausted { attempts: u32, last: String },
    #[error("malformed response body: {0}")]
    Malformed(String),
    #[error("unrecorded interaction {0:?}")]
    Unrecorded(String),
    #[error("no backend configured for tier {0:?}")]
    UnknownTier(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("local process failed: {0}")]
    Process(String),
}

impl BackendError {
    /// Whether the failure may succeed on retry.
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub task_id: String,
    pub tier_id: String,
    pub trial_index: u32,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub raw_text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub finish_reason: Option<String>,
    /// Number of retries spent before this response.
    #[serde(default)]
    pub retries: u32,
}

pub trait Backend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(req)
    }
}

/// Connection settings for one tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Http(HttpConfig),
    Process(ProcessConfig),
    Replay { store: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTier {
    pub tier_id: String,
    pub tier_index: usize,
    pub unit_cost: f64,
    #[serde(default)]
    pub prompt_profile: PromptProfile,
    pub backend: BackendConfig,
}

/// Tiers ordered by capability, `tier_index` 1..=K.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TierSet {
    tiers: Vec<ModelTier>,
}

impl TierSet {
    /// Sorts by `tier_index` and checks the ladder. Every problem is reported.
    pub fn new(mut tiers: Vec<ModelTier>) -> Result<Self, Vec<String>> {
        tiers.sort_by_key(|t| t.tier_index);
        let mut problems = Vec::new();
        if tiers.is_empty() {
            problems.push("tier set is empty".to_string());
        }
        let mut ids = HashSet::new();
        for (pos, tier) in tiers.iter().enumerate() {
            if !ids.insert(tier.tier_id.as_str()) {
                problems.push(format!("duplicate tier_id {:?}", tier.tier_id));
            }
            if tier.tier_index != pos + 1 {
                problems.push(format!(
                    "tier {:?} has tier_index {}, expected {} (indices must be 1..K without gaps)",
                    tier.tier_id,
                    tier.tier_index,
                    pos + 1
                ));
            }
            if !tier.unit_cost.is_finite() || tier.unit_cost < 0.0 {
                problems.push(format!(
                    "tier {:?} has invalid unit_cost {}",
                    tier.tier_id, tier.unit_cost
                ));
            }
            if pos > 0 && tier.unit_cost <= tiers[pos - 1].unit_cost {
                problems.push(format!(
                    "unit_cost must strictly increase with tier_index: {:?} ({}) after {:?} ({})",
                    tier.tier_id,
                    tier.unit_cost,
                    tiers[pos - 1].tier_id,
                    tiers[pos - 1].unit_cost
                ));
            }
            if let Err(e) = tier.prompt_profile.validate() {
                problems.push(format!("tier {:?}: {e}", tier.tier_id));
            }
        }
        if problems.is_empty() {
            Ok(TierSet { tiers })
        } else {
            Err(problems)
        }
    }

    pub fn tiers(&self) -> &[ModelTier] {
        &self.tiers
    }

    pub fn len(&self) -> usize {
        self.tiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiers.is_empty()
    }

    pub fn get(&self, tier_id: &str) -> Option<&ModelTier> {
        self.tiers.iter().find(|t| t.tier_id == tier_id)
    }

    /// Zero-based position of the tier in capability order.
    pub fn position(&self, tier_id: &str) -> Option<usize> {
        self.tiers.iter().position(|t| t.tier_id == tier_id)
    }

    pub fn unit_costs(&self) -> Vec<f64> {
        self.tiers.iter().map(|t| t.unit_cost).collect()
    }

    pub fn largest(&self) -> &ModelTier {
        self.tiers.last().expect("tier set is never empty")
    }
}

impl<'de> Deserialize<'de> for TierSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let tiers = Vec::<ModelTier>::deserialize(d)?;
        TierSet::new(tiers).map_err(|p| serde::de::Error::custom(p.join("; ")))
    }
}

pub fn build_backend(config: &BackendConfig) -> Result<Arc<dyn Backend>, BackendError> {
    Ok(match config {
        BackendConfig::Http(cfg) => Arc::new(HttpBackend::from_config(cfg.clone())?),
        BackendConfig::Process(cfg) => Arc::new(ProcessBackend::new(cfg.clone())),
        BackendConfig::Replay { store } => {
            let loaded = ReplayStore::load(store).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
            Arc::new(ReplayBackend::new(loaded))
        }
    })
}

/// Backend lookup by tier id.
#[derive(Clone, Default)]
pub struct Backends {
    by_tier: BTreeMap<String, Arc<dyn Backend>>,
}

impl Backends {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, tier_id: impl Into<String>, backend: Arc<dyn Backend>) {
        self.by_tier.insert(tier_id.into(), backend);
    }

    /// Uses one backend for every tier in the set.
    pub fn uniform(tiers: &TierSet, backend: Arc<dyn Backend>) -> Self {
        let mut out = Self::new();
        for t in tiers.tiers() {
            out.insert(t.tier_id.clone(), Arc::clone(&backend));
        }
        out
    }

    /// Builds live backends from each tier's configuration. Tiers naming the
    /// same replay store share one loaded copy.
    pub fn from_config(tiers: &TierSet) -> Result<Self, BackendError> {
        let mut out = Self::new();
        let mut stores: BTreeMap<PathBuf, Arc<dyn Backend>> = BTreeMap::new();
        for t in tiers.tiers() {
            let backend = match &t.backend {
                BackendConfig::Replay { store } => match stores.get(store) {
                    Some(b) => Arc::clone(b),
                    None => {
                        let b = build_backend(&t.backend)?;
                        stores.insert(store.clone(), Arc::clone(&b));
                        b
                    }
                },
                other => build_backend(other)?,
            };
            out.insert(t.tier_id.clone(), backend);
        }
        Ok(out)
    }

    pub fn get(&self, tier_id: &str) -> Result<&Arc<dyn Backend>, BackendError> {
        self.by_tier
            .get(tier_id)
            .ok_or_else(|| BackendError::UnknownTier(tier_id.to_string()))
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        req.validate()?;
        self.get(&req.tier_id)?.complete(req)
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn tier(id: &str, index: usize, cost: f64) -> ModelTier {
        ModelTier {
            tier_id: id.to_string(),
            tier_index: index,
            unit_cost: cost,
            prompt_profile: PromptProfile::default(),
            backend: BackendConfig::Replay {
                store: PathBuf::from("unused.json"),
            },
        }
    }

    pub fn three_tiers() -> TierSet {
        TierSet::new(vec![
            tier("small", 1, 1.0),
            tier("medium", 2, 10.0),
            tier("large", 3, 100.0),
        ])
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn tier_set_sorts_and_validates() {
        let set = TierSet::new(vec![
            tier("large", 3, 100.0),
            tier("small", 1, 1.0),
            tier("medium", 2, 10.0),
        ])
        .unwrap();
        let ids: Vec<_> = set.tiers().iter().map(|t| t.tier_id.as_str()).collect();
        assert_eq!(ids, ["small", "medium", "large"]);
        assert_eq!(set.unit_costs(), vec![1.0, 10.0, 100.0]);
        assert_eq!(set.largest().tier_id, "large");
        assert_eq!(set.position("medium"), Some(1));
    }

    #[test]
    fn tier_set_reports_every_problem() {
        let problems = TierSet::new(vec![tier("a", 1, 5.0), tier("a", 2, 5.0), tier("c", 4, -1.0)]).unwrap_err();
        assert!(problems.iter().any(|p| p.contains("duplicate tier_id")));
        assert!(problems.iter().any(|p| p.contains("without gaps")));
        assert!(problems.iter().any(|p| p.contains("strictly increase")));
        assert!(problems.iter().any(|p| p.contains("invalid unit_cost")));
    }

    #[test]
    fn negative_temperature_rejected() {
        let backends = Backends::new();
        let req = CompletionRequest {
            task_id: "t".into(),
            tier_id: "small".into(),
            trial_index: 1,
            prompt: "p".into(),
            temperature: -0.5,
            max_tokens: 10,
        };
        assert!(matches!(backends.complete(&req), Err(BackendError::InvalidRequest(_))));
    }

    #[test]
    fn tier_set_from_json() {
        let json = r#"[
            {"tier_id": "small", "tier_index": 1, "unit_cost": 1,
             "prompt_profile": {"system_prompt": "", "include_signature": true, "reduced": true},
             "backend": {"kind": "process", "command": ["cat"]}},
            {"tier_id": "large", "tier_index": 2, "unit_cost": 100,
             "backend": {"kind": "http", "base_url": "http://localhost:1", "model": "m"}}
        ]"#;
        let set: TierSet = serde_json::from_str(json).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.tiers()[0].prompt_profile.reduced);
        let bad =
            r#"[{"tier_id": "x", "tier_index": 2, "unit_cost": 1, "backend": {"kind": "replay", "store": "s.json"}}]"#;
        assert!(serde_json::from_str::<TierSet>(bad).is_err());
    }
}
