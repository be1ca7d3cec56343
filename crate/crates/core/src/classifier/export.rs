//! Completion-style fine-tune export: `{prompt, completion}` per line.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{LabeledRecord, Scheme};

/// Appended to every prompt so the model learns where the task text ends.
pub const PROMPT_SEPARATOR: &str = "\n\n###\n\n";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExportError {
    #[error("task {task_id:?} has level {level}, outside scheme {scheme}")]
    BadLevel { task_id: String, level: u8, scheme: Scheme },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneExample {
    pub prompt: String,
    pub completion: String,
}

impl FineTuneExample {
    /// The level carried by a well-formed completion (`" "` + one digit).
    pub fn level(&self, scheme: Scheme) -> Option<u8> {
        let digits = self.completion.strip_prefix(' ')?;
        let mut chars = digits.chars();
        let d = chars.next()?.to_digit(10)? as u8;
        (chars.next().is_none() && scheme.contains(d)).then_some(d)
    }
}

/// One example per record, in input order.
pub fn export_finetune(records: &[LabeledRecord]) -> Result<Vec<FineTuneExample>, ExportError> {
    records
        .iter()
        .map(|r| {
            if !r.scheme_id.contains(r.level) {
                return Err(ExportError::BadLevel {
                    task_id: r.task_id.clone(),
                    level: r.level,
                    scheme: r.scheme_id,
                });
            }
            Ok(FineTuneExample {
                prompt: format!("{}{}", r.prompt, PROMPT_SEPARATOR),
                completion: format!(" {}", r.level),
            })
        })
        .collect()
}

pub fn parse_finetune(text: &str) -> Result<Vec<FineTuneExample>, ExportError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ExportError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::to_jsonl;

    fn rec(id: &str, level: u8) -> LabeledRecord {
        LabeledRecord {
            task_id: id.into(),
            prompt: "Write a function to sort a list.".into(),
            counts: vec![0, 5, 0],
            m: 5,
            level,
            scheme_id: Scheme::FiveLevel,
        }
    }

    #[test]
    fn format_rule() {
        let out = export_finetune(&[rec("a", 2)]).unwrap();
        assert_eq!(out[0].completion, " 2");
        assert_eq!(out[0].prompt, "Write a function to sort a list.\n\n###\n\n");
        assert_eq!(out[0].level(Scheme::FiveLevel), Some(2));
        assert_eq!(
            to_jsonl(&out).unwrap(),
            "{\"prompt\":\"Write a function to sort a list.\\n\\n###\\n\\n\",\"completion\":\" 2\"}\n"
        );
    }

    #[test]
    fn bad_level_is_hard_error() {
        assert!(matches!(
            export_finetune(&[rec("a", 2), rec("b", 9)]),
            Err(ExportError::BadLevel { level: 9, .. })
        ));
    }

    #[test]
    fn deterministic_and_parseable() {
        let recs: Vec<_> = (0..10).map(|i| rec(&format!("t{i}"), (i % 5 + 1) as u8)).collect();
        let a = to_jsonl(&export_finetune(&recs).unwrap()).unwrap();
        let b = to_jsonl(&export_finetune(&recs).unwrap()).unwrap();
        assert_eq!(a, b);
        let back = parse_finetune(&a).unwrap();
        assert_eq!(back, export_finetune(&recs).unwrap());
        assert!(matches!(
            parse_finetune("{\"prompt\": 1}"),
            Err(ExportError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn completion_token_validation() {
        let ex = |c: &str| FineTuneExample {
            prompt: String::new(),
            completion: c.into(),
        };
        assert_eq!(ex(" 12").level(Scheme::FiveLevel), None);
        assert_eq!(ex("2").level(Scheme::FiveLevel), None);
        assert_eq!(ex(" 0").level(Scheme::SingleTrial), Some(0));
    }
}
