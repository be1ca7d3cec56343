//! Complexity predictors and their evaluation.
//!
//! A classifier is anything that turns a task into a predicted level. Two
//! adapters ship here: one that prompts a (fine-tuned) model through any
//! [`Backend`] and reads the first in-range digit of a one-token reply, and
//! one that replays predictions from a file.

mod eval;
mod export;

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{Backend, BackendError, CompletionRequest};
use crate::io::{self, IoError};
use crate::labeling::Scheme;

pub use eval::{evaluate, ConfusionMatrix, EvalError, EvalReport};
pub use export::{export_finetune, parse_finetune, ExportError, FineTuneExample, PROMPT_SEPARATOR};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("cannot parse a {scheme} level from output {output:?} for task {task_id:?}")]
    Unparseable {
        task_id: String,
        output: String,
        scheme: Scheme,
    },
    #[error("no recorded prediction for task {0:?}")]
    Unrecorded(String),
    #[error("classifier backend failed for task {task_id:?}: {source}")]
    Backend {
        task_id: String,
        #[source]
        source: BackendError,
    },
    #[error("recorded level {level} for task {task_id:?} is outside scheme {scheme}")]
    LevelOutOfRange { task_id: String, level: u8, scheme: Scheme },
    #[error("duplicate recorded prediction for task {0:?}")]
    Duplicate(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub task_id: String,
    pub predicted_level: u8,
    pub raw_model_output: String,
    pub source: String,
}

pub trait Classifier: Send + Sync {
    fn scheme(&self) -> Scheme;
    fn predict(&self, task_id: &str, prompt: &str) -> Result<Prediction, ClassifierError>;
}

/// First digit in `output` that lies within the scheme's level range.
pub fn parse_level(output: &str, scheme: Scheme) -> Option<u8> {
    output
        .chars()
        .filter_map(|c| c.to_digit(10))
        .map(|d| d as u8)
        .find(|&d| scheme.contains(d))
}

/// Prompts a model with the task text and the fine-tune separator and asks
/// for a single token.
pub struct PromptClassifier {
    backend: Arc<dyn Backend>,
    model_id: String,
    scheme: Scheme,
    instruction: Option<String>,
    temperature: f64,
}

impl PromptClassifier {
    pub fn new(backend: Arc<dyn Backend>, model_id: impl Into<String>, scheme: Scheme) -> Self {
        PromptClassifier {
            backend,
            model_id: model_id.into(),
            scheme,
            instruction: None,
            temperature: 0.0,
        }
    }

    /// Prepends an instruction, for prompting a model that was not fine-tuned.
    pub fn with_instruction(mut self, instruction: impl Into<String>) -> Self {
        self.instruction = Some(instruction.into());
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn render(&self, prompt: &str) -> String {
        let body = format!("{prompt}{PROMPT_SEPARATOR}");
        match &self.instruction {
            Some(i) => format!("{}\n\n{}", i.trim(), body),
            None => body,
        }
    }
}

impl Classifier for PromptClassifier {
    fn scheme(&self) -> Scheme {
        self.scheme
    }

    fn predict(&self, task_id: &str, prompt: &str) -> Result<Prediction, ClassifierError> {
        let req = CompletionRequest {
            task_id: task_id.to_string(),
            tier_id: self.model_id.clone(),
            trial_index: 1,
            prompt: self.render(prompt),
            temperature: self.temperature,
            max_tokens: 1,
        };
        let resp = self.backend.complete(&req).map_err(|source| ClassifierError::Backend {
            task_id: task_id.to_string(),
            source,
        })?;
        let level = parse_level(&resp.raw_text, self.scheme).ok_or_else(|| ClassifierError::Unparseable {
            task_id: task_id.to_string(),
            output: resp.raw_text.clone(),
            scheme: self.scheme,
        })?;
        Ok(Prediction {
            task_id: task_id.to_string(),
            predicted_level: level,
            raw_model_output: resp.raw_text,
            source: format!("prompt:{}", self.model_id),
        })
    }
}

/// Recorded prediction row: `{task_id, level}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedPrediction {
    pub task_id: String,
    pub level: u8,
}

pub struct ReplayClassifier {
    scheme: Scheme,
    levels: HashMap<String, u8>,
}

impl ReplayClassifier {
    pub fn new(scheme: Scheme, rows: impl IntoIterator<Item = RecordedPrediction>) -> Result<Self, ClassifierError> {
        let mut levels = HashMap::new();
        for row in rows {
            if !scheme.contains(row.level) {
                return Err(ClassifierError::LevelOutOfRange {
                    task_id: row.task_id,
                    level: row.level,
                    scheme,
                });
            }
            if levels.insert(row.task_id.clone(), row.level).is_some() {
                return Err(ClassifierError::Duplicate(row.task_id));
            }
        }
        Ok(ReplayClassifier { scheme, levels })
    }

    pub fn load(path: &Path, scheme: Scheme) -> Result<Self, ClassifierError> {
        let rows: Vec<RecordedPrediction> = io::read_jsonl(path)?;
        Self::new(scheme, rows)
    }
}

impl Classifier for ReplayClassifier {
    fn scheme(&self) -> Scheme {
        self.scheme
    }

    fn predict(&self, task_id: &str, _prompt: &str) -> Result<Prediction, ClassifierError> {
        let level = *self
            .levels
            .get(task_id)
            .ok_or_else(|| ClassifierError::Unrecorded(task_id.to_string()))?;
        Ok(Prediction {
            task_id: task_id.to_string(),
            predicted_level: level,
            raw_model_output: level.to_string(),
            source: "replay".to_string(),
        })
    }
}
