//! Predict-then-dispatch routing. Each task goes to exactly one tier, chosen
//! from its predicted level; there is no escalation on failure.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    extract_code, render_prompt, BackendError, Backends, CompletionRequest, TierSet, DEFAULT_MAX_TOKENS,
    DEFAULT_TEMPERATURE,
};
use crate::classifier::{Classifier, ClassifierError};
use crate::corpus::{Corpus, Task};
use crate::labeling::Scheme;
use crate::verifier::{Verdict, Verifier, VerifyError, VerifyRequest, DEFAULT_TIMEOUT_MS};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy is for scheme {policy} but the classifier uses {classifier}")]
    SchemeMismatch { policy: Scheme, classifier: Scheme },
    #[error("invalid routing policy: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Error)]
pub enum RouteError {
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("task {task_id:?} predicted level {level} has no route")]
    Unrouted { task_id: String, level: u8 },
    #[error("backend failed for task {task_id:?} on tier {tier_id:?}: {source}")]
    Backend {
        task_id: String,
        tier_id: String,
        #[source]
        source: BackendError,
    },
    #[error("verifier failed for task {task_id:?}: {source}")]
    Verify {
        task_id: String,
        #[source]
        source: VerifyError,
    },
}

#[derive(Debug, Error)]
#[error("{} of {total} task(s) failed to route; first: {}", failures.len(), failures[0].1)]
pub struct BatchError {
    pub total: usize,
    pub failures: Vec<(String, RouteError)>,
}

/// Serialized form of a policy; level keys are strings so the table survives
/// TOML and JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub scheme: Scheme,
    pub routes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoutingPolicy {
    scheme: Scheme,
    routes: BTreeMap<u8, String>,
}

impl RoutingPolicy {
    /// Levels 1-2 to the first tier, 3-4 to the second, 5 to the third.
    pub fn default_five_level(tiers: &TierSet) -> Result<Self, PolicyError> {
        let ids = tier_ids(tiers);
        let pick = |i: usize| ids.get(i).cloned().unwrap_or_default();
        let routes = [(1, 0), (2, 0), (3, 1), (4, 1), (5, 2)]
            .into_iter()
            .map(|(l, t)| (l, pick(t)))
            .collect();
        Self::new(Scheme::FiveLevel, routes, tiers)
    }

    /// Class `c` goes to tier `c + 1`.
    pub fn default_single_trial(tiers: &TierSet) -> Result<Self, PolicyError> {
        let ids = tier_ids(tiers);
        let routes = (0..3u8)
            .map(|c| (c, ids.get(c as usize).cloned().unwrap_or_default()))
            .collect();
        Self::new(Scheme::SingleTrial, routes, tiers)
    }

    pub fn default_for(scheme: Scheme, tiers: &TierSet) -> Result<Self, PolicyError> {
        match scheme {
            Scheme::FiveLevel => Self::default_five_level(tiers),
            Scheme::SingleTrial => Self::default_single_trial(tiers),
        }
    }

    /// Every level of the scheme must map to a known tier, and nothing else.
    pub fn new(scheme: Scheme, routes: BTreeMap<u8, String>, tiers: &TierSet) -> Result<Self, PolicyError> {
        let mut problems = Vec::new();
        for level in scheme.levels() {
            match routes.get(&level) {
                None => problems.push(format!("level {level} has no tier")),
                Some(t) if tiers.get(t).is_none() => problems.push(format!("level {level} maps to unknown tier {t:?}")),
                Some(_) => {}
            }
        }
        for level in routes.keys().filter(|l| !scheme.contains(**l)) {
            problems.push(format!("level {level} is not part of scheme {scheme}"));
        }
        if problems.is_empty() {
            Ok(RoutingPolicy { scheme, routes })
        } else {
            Err(PolicyError::Invalid(problems))
        }
    }

    pub fn from_spec(spec: &PolicySpec, tiers: &TierSet) -> Result<Self, PolicyError> {
        let mut routes = BTreeMap::new();
        let mut problems = Vec::new();
        for (k, v) in &spec.routes {
            match k.trim().parse::<u8>() {
                Ok(l) => {
                    routes.insert(l, v.clone());
                }
                Err(_) => problems.push(format!("route key {k:?} is not a level")),
            }
        }
        match Self::new(spec.scheme, routes, tiers) {
            Err(PolicyError::Invalid(more)) => problems.extend(more),
            Err(e) => return Err(e),
            Ok(p) if problems.is_empty() => return Ok(p),
            Ok(_) => {}
        }
        Err(PolicyError::Invalid(problems))
    }

    pub fn to_spec(&self) -> PolicySpec {
        PolicySpec {
            scheme: self.scheme,
            routes: self.routes.iter().map(|(l, t)| (l.to_string(), t.clone())).collect(),
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn tier_for(&self, level: u8) -> Option<&str> {
        self.routes.get(&level).map(String::as_str)
    }
}

fn tier_ids(tiers: &TierSet) -> Vec<String> {
    tiers.tiers().iter().map(|t| t.tier_id.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRecord {
    pub task_id: String,
    pub predicted_level: u8,
    pub tier_id: String,
    /// `None` when routing ran without a verifier.
    pub verdict: Option<Verdict>,
    pub cost_units: f64,
    /// As reported by the backend.
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteOptions {
    pub temperature: f64,
    pub max_tokens: u32,
    pub verify_timeout_ms: u64,
    pub concurrency: usize,
}

impl Default for RouteOptions {
    fn default() -> Self {
        RouteOptions {
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            verify_timeout_ms: DEFAULT_TIMEOUT_MS,
            concurrency: 4,
        }
    }
}

pub struct Router<'a> {
    pub policy: &'a RoutingPolicy,
    pub tiers: &'a TierSet,
    pub backends: &'a Backends,
    pub classifier: &'a dyn Classifier,
    pub verifier: Option<&'a dyn Verifier>,
    pub options: RouteOptions,
}

impl Router<'_> {
    pub fn check(&self) -> Result<(), PolicyError> {
        let classifier = self.classifier.scheme();
        if classifier != self.policy.scheme {
            return Err(PolicyError::SchemeMismatch {
                policy: self.policy.scheme,
                classifier,
            });
        }
        Ok(())
    }

    /// One classification, one backend call, at most one verification.
    pub fn route(&self, task: &Task) -> Result<RouteRecord, RouteError> {
        let prediction = self.classifier.predict(&task.task_id, &task.prompt)?;
        let level = prediction.predicted_level;
        let unrouted = || RouteError::Unrouted {
            task_id: task.task_id.clone(),
            level,
        };
        let tier_id = self.policy.tier_for(level).ok_or_else(unrouted)?;
        let tier = self.tiers.get(tier_id).ok_or_else(unrouted)?;

        let req = CompletionRequest {
            task_id: task.task_id.clone(),
            tier_id: tier.tier_id.clone(),
            trial_index: 1,
            prompt: render_prompt(task, &tier.prompt_profile),
            temperature: self.options.temperature,
            max_tokens: self.options.max_tokens,
        };
        let resp = self.backends.complete(&req).map_err(|source| RouteError::Backend {
            task_id: task.task_id.clone(),
            tier_id: tier.tier_id.clone(),
            source,
        })?;

        let verdict = match self.verifier {
            None => None,
            Some(v) => Some(
                v.verify(&VerifyRequest {
                    task_id: task.task_id.clone(),
                    candidate_code: extract_code(&resp.raw_text),
                    assertions: task.assertions.clone(),
                    timeout_ms: self.options.verify_timeout_ms,
                })
                .map_err(|source| RouteError::Verify {
                    task_id: task.task_id.clone(),
                    source,
                })?,
            ),
        };
        Ok(RouteRecord {
            task_id: task.task_id.clone(),
            predicted_level: level,
            tier_id: tier.tier_id.clone(),
            verdict,
            cost_units: tier.unit_cost,
            latency_ms: resp.latency_ms,
        })
    }

    /// Routes every task in corpus order. Failures are collected rather than
    /// stopping the batch.
    pub fn route_batch(&self, corpus: &Corpus) -> Result<Vec<RouteRecord>, BatchError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.options.concurrency.max(1))
            .build()
            .expect("thread pool");
        let results: Vec<Result<RouteRecord, RouteError>> =
            pool.install(|| corpus.tasks().par_iter().map(|t| self.route(t)).collect());
        let mut records = Vec::with_capacity(results.len());
        let mut failures = Vec::new();
        for (task, r) in corpus.tasks().iter().zip(results) {
            match r {
                Ok(rec) => records.push(rec),
                Err(e) => failures.push((task.task_id.clone(), e)),
            }
        }
        if failures.is_empty() {
            Ok(records)
        } else {
            Err(BatchError {
                total: corpus.len(),
                failures,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSummary {
    pub n: usize,
    pub tier_ids: Vec<String>,
    pub dispatch_counts: Vec<u64>,
    pub dispatch_fractions: Vec<f64>,
    pub total_cost_units: f64,
}

pub fn summarize(records: &[RouteRecord], tiers: &TierSet) -> RouteSummary {
    let ids = tier_ids(tiers);
    let mut counts = vec![0u64; ids.len()];
    for r in records {
        if let Some(i) = tiers.position(&r.tier_id) {
            counts[i] += 1;
        }
    }
    let n = records.len();
    RouteSummary {
        n,
        dispatch_fractions: counts
            .iter()
            .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
            .collect(),
        tier_ids: ids,
        dispatch_counts: counts,
        total_cost_units: records.iter().map(|r| r.cost_units).sum(),
    }
}
