//! Cleaning plus labeling of a whole corpus.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{label_single_trial, LabelError, LabeledRecord, MappingTable, Scheme, SuccessProfile};
use crate::corpus::{Corpus, CorpusError, RemovalReport};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("task {task_id:?}: {source}")]
    Label {
        task_id: String,
        #[source]
        source: LabelError,
    },
    #[error("duplicate profile for task {0:?}")]
    DuplicateProfile(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDataset {
    /// Corpus order.
    pub records: Vec<LabeledRecord>,
    pub cleaning: RemovalReport,
    /// Corpus tasks with no profile, e.g. after an incomplete collection.
    pub unprofiled: Vec<String>,
}

/// Cleans `corpus` against `profiles`, then labels what remains. The mapping
/// table is only consulted for the five-level scheme.
pub fn label_dataset(
    corpus: &Corpus,
    profiles: &[SuccessProfile],
    scheme: Scheme,
    table: &MappingTable,
) -> Result<LabeledDataset, DatasetError> {
    let mut by_task = BTreeMap::new();
    for p in profiles {
        if by_task.insert(p.task_id.clone(), p.clone()).is_some() {
            return Err(DatasetError::DuplicateProfile(p.task_id.clone()));
        }
    }
    let profiled: HashSet<&str> = by_task.keys().map(String::as_str).collect();
    let unprofiled = corpus
        .tasks()
        .iter()
        .filter(|t| !profiled.contains(t.task_id.as_str()))
        .map(|t| t.task_id.clone())
        .collect();
    let (cleaned, cleaning) = corpus.retain_ids(&profiled).clean(&by_task)?;

    let mut records = Vec::with_capacity(cleaned.len());
    for task in cleaned.tasks() {
        let profile = &by_task[&task.task_id];
        let wrap = |source| DatasetError::Label {
            task_id: task.task_id.clone(),
            source,
        };
        let label = match scheme {
            Scheme::FiveLevel => table.label(profile).map_err(wrap)?,
            // Cleaning already dropped the all-zero profiles.
            Scheme::SingleTrial => label_single_trial(profile)
                .map_err(wrap)?
                .expect("cleaned profile has a success"),
        };
        records.push(LabeledRecord {
            task_id: task.task_id.clone(),
            prompt: task.prompt.clone(),
            counts: profile.counts.clone(),
            m: profile.m,
            level: label.level,
            scheme_id: scheme,
        });
    }
    Ok(LabeledDataset {
        records,
        cleaning,
        unprofiled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Task;

    fn corpus(ids: &[&str]) -> Corpus {
        let tasks = ids
            .iter()
            .map(|id| Task::new(*id, format!("Task {id}."), None, vec!["assert f()".into()]).unwrap())
            .collect();
        Corpus::new("test", tasks).unwrap()
    }

    fn p(id: &str, counts: &[u32], m: u32) -> SuccessProfile {
        SuccessProfile::new(id, counts.to_vec(), m).unwrap()
    }

    #[test]
    fn five_level_with_cleaning() {
        let c = corpus(&["a", "b", "z", "missing"]);
        let profiles = [p("a", &[5, 5, 5], 5), p("b", &[0, 0, 4], 5), p("z", &[0, 0, 0], 5)];
        let d = label_dataset(&c, &profiles, Scheme::FiveLevel, &MappingTable::default_five_trial()).unwrap();
        let got: Vec<_> = d.records.iter().map(|r| (r.task_id.as_str(), r.level)).collect();
        assert_eq!(got, [("a", 1), ("b", 4)]);
        assert_eq!(d.cleaning.removed, ["z"]);
        assert_eq!(d.unprofiled, ["missing"]);
        assert_eq!(d.records[0].prompt, "Task a.");
    }

    #[test]
    fn single_trial() {
        let c = corpus(&["a", "b", "z"]);
        let profiles = [p("a", &[0, 1, 1], 1), p("b", &[0, 0, 1], 1), p("z", &[0, 0, 0], 1)];
        let d = label_dataset(&c, &profiles, Scheme::SingleTrial, &MappingTable::default_five_trial()).unwrap();
        let got: Vec<_> = d.records.iter().map(|r| r.level).collect();
        assert_eq!(got, [1, 2]);
        assert_eq!(d.cleaning.removed, ["z"]);
    }

    #[test]
    fn shape_errors_name_the_task() {
        let c = corpus(&["a"]);
        let err = label_dataset(
            &c,
            &[p("a", &[1, 1], 5)],
            Scheme::FiveLevel,
            &MappingTable::default_five_trial(),
        );
        assert!(matches!(err, Err(DatasetError::Label { task_id, .. }) if task_id == "a"));
        let dup = label_dataset(
            &c,
            &[p("a", &[1, 1, 1], 5), p("a", &[1, 1, 1], 5)],
            Scheme::FiveLevel,
            &MappingTable::default_five_trial(),
        );
        assert!(matches!(dup, Err(DatasetError::DuplicateProfile(_))));
    }
}
