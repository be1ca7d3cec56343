use serde::{Deserialize, Serialize};

use crate::corpus::Task;

pub const DEFAULT_SYSTEM_PROMPT: &str = "Respond with only the code implementing the described function, \
using the exact function name and arguments given. No explanations.";

/// How a task is phrased for one tier.
///
/// A reduced profile drops the instruction block and sends only the task
/// description plus the function format; small models tend to do better with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptProfile {
    #[serde(default = "default_system_prompt")]
    pub system_prompt: String,
    #[serde(default = "default_true")]
    pub include_signature: bool,
    #[serde(default)]
    pub reduced: bool,
}

fn default_system_prompt() -> String {
    DEFAULT_SYSTEM_PROMPT.to_string()
}

fn default_true() -> bool {
    true
}

impl Default for PromptProfile {
    fn default() -> Self {
        PromptProfile {
            system_prompt: default_system_prompt(),
            include_signature: true,
            reduced: false,
        }
    }
}

impl PromptProfile {
    pub fn reduced() -> Self {
        PromptProfile {
            system_prompt: String::new(),
            include_signature: true,
            reduced: true,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.reduced && self.system_prompt.trim().is_empty() {
            return Err("system_prompt must be non-empty for a full prompt profile".to_string());
        }
        Ok(())
    }
}

/// Renders the prompt text sent to a tier. Assertion bodies are never included.
pub fn render_prompt(task: &Task, profile: &PromptProfile) -> String {
    let hint = task.signature_hint.as_deref().filter(|_| profile.include_signature);
    let text = task.prompt.trim();
    if profile.reduced {
        match hint {
            Some(h) => format!("{text}\nFunction format: {h}"),
            None => text.to_string(),
        }
    } else {
        let mut out = format!("{}\n\n{}", profile.system_prompt.trim(), text);
        if let Some(h) = hint {
            out.push_str(&format!(
                "\n\nThe function must be defined so that it can be called as: {h}"
            ));
        }
        out
    }
}
