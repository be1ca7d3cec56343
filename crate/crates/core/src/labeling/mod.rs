//! Success profiles and complexity labels.

mod collect;
mod dataset;
mod mapping;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::verifier::Verdict;

pub use collect::{
    collect_profiles, profiles_from_outcomes, CollectError, CollectOptions, Collection, IncompleteProfile,
};
pub use dataset::{label_dataset, DatasetError, LabeledDataset};
pub use mapping::{all_profiles, MappingEntry, MappingError, MappingSpec, MappingTable};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("profile for {task_id:?} has {found:?} (tiers, trials) but the table expects {expected:?}")]
    ShapeMismatch {
        task_id: String,
        expected: (usize, u32),
        found: (usize, u32),
    },
    #[error("single-trial labeling needs M = 1, profile for {task_id:?} has M = {m}")]
    NotSingleTrial { task_id: String, m: u32 },
    #[error("single-trial labeling supports at most 3 tiers, profile for {0:?} has more")]
    TooManyTiers(String),
    #[error("count {count} exceeds M = {m}")]
    CountOutOfRange { count: u32, m: u32 },
    #[error("level {level} outside scheme {scheme}")]
    LevelOutOfRange { level: u8, scheme: &'static str },
}

/// Per-task success counts `X_1..X_K` out of `M` trials.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessProfile {
    pub task_id: String,
    pub counts: Vec<u32>,
    #[serde(rename = "M")]
    pub m: u32,
}

impl SuccessProfile {
    pub fn new(task_id: impl Into<String>, counts: Vec<u32>, m: u32) -> Result<Self, LabelError> {
        if let Some(&count) = counts.iter().find(|&&c| c > m) {
            return Err(LabelError::CountOutOfRange { count, m });
        }
        Ok(SuccessProfile {
            task_id: task_id.into(),
            counts,
            m,
        })
    }

    pub fn all_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Levels 1..=5 from M-trial profiles and a mapping table.
    FiveLevel,
    /// Classes 0..=2 from one trial per tier.
    SingleTrial,
}

impl Scheme {
    pub fn id(self) -> &'static str {
        match self {
            Scheme::FiveLevel => "five_level",
            Scheme::SingleTrial => "single_trial",
        }
    }

    pub fn levels(self) -> std::ops::RangeInclusive<u8> {
        match self {
            Scheme::FiveLevel => 1..=5,
            Scheme::SingleTrial => 0..=2,
        }
    }

    pub fn contains(self, level: u8) -> bool {
        self.levels().contains(&level)
    }

    pub fn min_level(self) -> u8 {
        *self.levels().start()
    }

    pub fn level_count(self) -> usize {
        self.levels().count()
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "five_level" | "five-level" => Ok(Scheme::FiveLevel),
            "single_trial" | "single-trial" => Ok(Scheme::SingleTrial),
            other => Err(format!(
                "unknown scheme {other:?} (expected five_level or single_trial)"
            )),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityLabel {
    pub level: u8,
    pub scheme: Scheme,
}

impl ComplexityLabel {
    pub fn new(level: u8, scheme: Scheme) -> Result<Self, LabelError> {
        if !scheme.contains(level) {
            return Err(LabelError::LevelOutOfRange {
                level,
                scheme: scheme.id(),
            });
        }
        Ok(ComplexityLabel { level, scheme })
    }
}

pub fn label(profile: &SuccessProfile, table: &MappingTable) -> Result<ComplexityLabel, LabelError> {
    table.label(profile)
}

/// One-trial scheme: the class is the index of the first tier that succeeded.
/// Profiles where no tier succeeded are dropped (`Ok(None)`).
pub fn label_single_trial(profile: &SuccessProfile) -> Result<Option<ComplexityLabel>, LabelError> {
    if profile.m != 1 {
        return Err(LabelError::NotSingleTrial {
            task_id: profile.task_id.clone(),
            m: profile.m,
        });
    }
    if profile.counts.len() > Scheme::SingleTrial.level_count() {
        return Err(LabelError::TooManyTiers(profile.task_id.clone()));
    }
    Ok(profile.counts.iter().position(|&c| c >= 1).map(|k| ComplexityLabel {
        level: k as u8,
        scheme: Scheme::SingleTrial,
    }))
}

/// One stored trial, the audit-log record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub task_id: String,
    pub tier_id: String,
    pub trial_index: u32,
    pub verdict: Verdict,
    pub raw_output: String,
    pub extracted_code: String,
    pub completion_tokens: u64,
    /// Set when the backend failed permanently; such trials carry no verdict
    /// evidence and make the task's profile incomplete.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<String>,
}

/// Labeled dataset row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub task_id: String,
    pub prompt: String,
    pub counts: Vec<u32>,
    #[serde(rename = "M")]
    pub m: u32,
    pub level: u8,
    pub scheme_id: Scheme,
}
