//! M-trial success-profile collection over every (task, tier) pair.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{SuccessProfile, TrialOutcome};
use crate::backends::{
    extract_code, render_prompt, Backends, CompletionRequest, ModelTier, TierSet, DEFAULT_MAX_TOKENS,
    DEFAULT_TEMPERATURE,
};
use crate::corpus::{Corpus, Task};
use crate::verifier::{Verdict, VerdictKind, Verifier, VerifyError, VerifyRequest, DEFAULT_TIMEOUT_MS};

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("trial count M must be >= 1")]
    NoTrials,
    #[error("no backend configured for tier {0:?}")]
    MissingBackend(String),
    #[error("verifier failed on {task_id}/{tier_id}/{trial_index}: {source}")]
    Verify {
        task_id: String,
        tier_id: String,
        trial_index: u32,
        #[source]
        source: VerifyError,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectOptions {
    pub trials: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    pub verify_timeout_ms: u64,
    pub concurrency: usize,
}

impl Default for CollectOptions {
    fn default() -> Self {
        CollectOptions {
            trials: 5,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            verify_timeout_ms: DEFAULT_TIMEOUT_MS,
            concurrency: 4,
        }
    }
}

/// A (task, tier) pair whose profile could not be completed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncompleteProfile {
    pub task_id: String,
    pub tier_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    /// Every trial in (task, tier, trial) order.
    pub outcomes: Vec<TrialOutcome>,
    /// Complete profiles in corpus order.
    pub profiles: Vec<SuccessProfile>,
    pub incomplete: Vec<IncompleteProfile>,
}

impl Collection {
    pub fn profile_map(&self) -> BTreeMap<String, SuccessProfile> {
        self.profiles.iter().map(|p| (p.task_id.clone(), p.clone())).collect()
    }
}

/// Issues exactly `M` completions per (task, tier), verifies each extracted
/// candidate and counts passes.
///
/// A backend failure after retries marks that task's profile incomplete;
/// verifier infrastructure failures abort the run.
pub fn collect_profiles(
    corpus: &Corpus,
    tiers: &TierSet,
    backends: &Backends,
    verifier: &dyn Verifier,
    opts: &CollectOptions,
) -> Result<Collection, CollectError> {
    if opts.trials == 0 {
        return Err(CollectError::NoTrials);
    }
    for t in tiers.tiers() {
        backends
            .get(&t.tier_id)
            .map_err(|_| CollectError::MissingBackend(t.tier_id.clone()))?;
    }

    let jobs: Vec<(&Task, &ModelTier, u32)> = corpus
        .tasks()
        .iter()
        .flat_map(|task| {
            tiers
                .tiers()
                .iter()
                .flat_map(move |tier| (1..=opts.trials).map(move |trial| (task, tier, trial)))
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.concurrency.max(1))
        .build()
        .map_err(|e| CollectError::Pool(e.to_string()))?;
    let outcomes = pool.install(|| {
        jobs.par_iter()
            .map(|&(task, tier, trial)| run_trial(task, tier, trial, backends, verifier, opts))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let task_ids: Vec<&str> = corpus.tasks().iter().map(|t| t.task_id.as_str()).collect();
    let tier_ids: Vec<&str> = tiers.tiers().iter().map(|t| t.tier_id.as_str()).collect();
    let (profiles, incomplete) = profiles_from_outcomes(&task_ids, &tier_ids, opts.trials, &outcomes);
    for inc in &incomplete {
        tracing::warn!(task = %inc.task_id, tier = %inc.tier_id, reason = %inc.reason, "incomplete profile");
    }
    Ok(Collection {
        outcomes,
        profiles,
        incomplete,
    })
}

fn run_trial(
    task: &Task,
    tier: &ModelTier,
    trial_index: u32,
    backends: &Backends,
    verifier: &dyn Verifier,
    opts: &CollectOptions,
) -> Result<TrialOutcome, CollectError> {
    let req = CompletionRequest {
        task_id: task.task_id.clone(),
        tier_id: tier.tier_id.clone(),
        trial_index,
        prompt: render_prompt(task, &tier.prompt_profile),
        temperature: opts.temperature,
        max_tokens: opts.max_tokens,
    };
    let resp = match backends.complete(&req) {
        Ok(r) => r,
        Err(e) => {
            return Ok(TrialOutcome {
                task_id: task.task_id.clone(),
                tier_id: tier.tier_id.clone(),
                trial_index,
                verdict: Verdict::new(VerdictKind::Error, format!("backend: {e}"), 0),
                raw_output: String::new(),
                extracted_code: String::new(),
                completion_tokens: 0,
                backend_error: Some(e.to_string()),
            })
        }
    };
    let code = extract_code(&resp.raw_text);
    let verdict = verifier
        .verify(&VerifyRequest {
            task_id: task.task_id.clone(),
            candidate_code: code.clone(),
            assertions: task.assertions.clone(),
            timeout_ms: opts.verify_timeout_ms,
        })
        .map_err(|source| CollectError::Verify {
            task_id: task.task_id.clone(),
            tier_id: tier.tier_id.clone(),
            trial_index,
            source,
        })?;
    Ok(TrialOutcome {
        task_id: task.task_id.clone(),
        tier_id: tier.tier_id.clone(),
        trial_index,
        verdict,
        raw_output: resp.raw_text,
        extracted_code: code,
        completion_tokens: resp.completion_tokens,
        backend_error: None,
    })
}

/// Re-derives profiles from stored outcomes: `X_k` is the number of pass
/// verdicts among the `M` trials of tier `k`. Pairs with backend failures,
/// missing trials or duplicate trial indices are reported as incomplete and
/// their task gets no profile.
pub fn profiles_from_outcomes(
    task_ids: &[&str],
    tier_ids: &[&str],
    trials: u32,
    outcomes: &[TrialOutcome],
) -> (Vec<SuccessProfile>, Vec<IncompleteProfile>) {
    let mut by_pair: HashMap<(&str, &str), Vec<&TrialOutcome>> = HashMap::new();
    for o in outcomes {
        by_pair
            .entry((o.task_id.as_str(), o.tier_id.as_str()))
            .or_default()
            .push(o);
    }

    let mut profiles = Vec::new();
    let mut incomplete = Vec::new();
    for &task_id in task_ids {
        let mut counts = Vec::with_capacity(tier_ids.len());
        let mut complete = true;
        for &tier_id in tier_ids {
            let trials_seen = by_pair.get(&(task_id, tier_id)).map(Vec::as_slice).unwrap_or(&[]);
            let reason = pair_problem(trials_seen, trials);
            if let Some(reason) = reason {
                complete = false;
                incomplete.push(IncompleteProfile {
                    task_id: task_id.to_string(),
                    tier_id: tier_id.to_string(),
                    reason,
                });
                continue;
            }
            counts.push(trials_seen.iter().filter(|o| o.verdict.is_pass()).count() as u32);
        }
        if complete {
            profiles.push(SuccessProfile {
                task_id: task_id.to_string(),
                counts,
                m: trials,
            });
        }
    }
    (profiles, incomplete)
}

fn pair_problem(outcomes: &[&TrialOutcome], trials: u32) -> Option<String> {
    if let Some(o) = outcomes.iter().find(|o| o.backend_error.is_some()) {
        return Some(format!(
            "backend failure on trial {}: {}",
            o.trial_index,
            o.backend_error.as_deref().unwrap_or_default()
        ));
    }
    let indices: HashSet<u32> = outcomes.iter().map(|o| o.trial_index).collect();
    if indices.len() != outcomes.len() {
        return Some("duplicate trial_index".to_string());
    }
    if indices != (1..=trials).collect::<HashSet<_>>() {
        return Some(format!(
            "expected trials 1..={trials}, found {} outcomes",
            outcomes.len()
        ));
    }
    None
}
