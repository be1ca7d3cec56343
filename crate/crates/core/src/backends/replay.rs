//! Deterministic replay of recorded completions.
//!
//! The store is a JSON object mapping `"task_id/tier_id/trial_index"` to
//! `{raw_text, prompt_tokens, completion_tokens}`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CompletionRequest, CompletionResponse};
use crate::io::{self, IoError};

pub fn replay_key(task_id: &str, tier_id: &str, trial_index: u32) -> String {
    format!("{task_id}/{tier_id}/{trial_index}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub raw_text: String,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplayStore {
    entries: BTreeMap<String, ReplayEntry>,
}

impl ReplayStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, task_id: &str, tier_id: &str, trial_index: u32, entry: ReplayEntry) {
        self.entries.insert(replay_key(task_id, tier_id, trial_index), entry);
    }

    pub fn get(&self, key: &str) -> Option<&ReplayEntry> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        io::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        io::write_json(path, self)
    }
}

/// Serves completions from a [`ReplayStore`]; missing keys are errors.
pub struct ReplayBackend {
    store: RwLock<ReplayStore>,
}

impl ReplayBackend {
    pub fn new(store: ReplayStore) -> Self {
        ReplayBackend {
            store: RwLock::new(store),
        }
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let key = replay_key(&req.task_id, &req.tier_id, req.trial_index);
        let store = self.store.read().expect("replay store lock poisoned");
        let entry = store.get(&key).ok_or(BackendError::Unrecorded(key))?;
        Ok(CompletionResponse {
            raw_text: entry.raw_text.clone(),
            prompt_tokens: entry.prompt_tokens,
            completion_tokens: entry.completion_tokens,
            latency_ms: 0,
            finish_reason: Some("stop".to_string()),
            retries: 0,
        })
    }
}

/// Passes requests through to `inner` and records successful replies.
pub struct RecordingBackend<B> {
    inner: B,
    recorded: Mutex<ReplayStore>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            recorded: Mutex::new(ReplayStore::new()),
        }
    }

    pub fn snapshot(&self) -> ReplayStore {
        self.recorded.lock().expect("recording lock poisoned").clone()
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let resp = self.inner.complete(req)?;
        self.recorded.lock().expect("recording lock poisoned").insert(
            &req.task_id,
            &req.tier_id,
            req.trial_index,
            ReplayEntry {
                raw_text: resp.raw_text.clone(),
                prompt_tokens: resp.prompt_tokens,
                completion_tokens: resp.completion_tokens,
            },
        );
        Ok(resp)
    }
}
