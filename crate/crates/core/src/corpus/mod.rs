//! Task corpora in the MBPP line-delimited record format.
//!
//! One JSON object per line with keys `task_id`, `text`, `code` and
//! `test_list`. Numeric task ids (as shipped in the public dataset) are
//! accepted and stored as strings.

mod signature;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};
use crate::labeling::SuccessProfile;

pub use signature::extract_signature;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus is empty")]
    Empty,
    #[error("duplicate task_id {task_id:?} on lines {first_line} and {second_line}")]
    DuplicateId {
        task_id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("no success profile for task {0:?}")]
    MissingProfile(String),
    #[error("train_fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("unsupported schema_version {0}")]
    SchemaVersion(u32),
    #[error("invalid task {task_id:?}: {reason}")]
    InvalidTask { task_id: String, reason: String },
    #[error("read failed on line {line}: {source}")]
    Read {
        line: usize,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub prompt: String,
    pub reference_code: Option<String>,
    pub assertions: Vec<String>,
    pub signature_hint: Option<String>,
}

impl Task {
    /// Builds a task, deriving the signature hint from the first assertion.
    pub fn new(
        task_id: impl Into<String>,
        prompt: impl Into<String>,
        reference_code: Option<String>,
        assertions: Vec<String>,
    ) -> Result<Self, CorpusError> {
        let task = Task {
            task_id: task_id.into(),
            prompt: prompt.into(),
            signature_hint: assertions.first().and_then(|a| extract_signature(a)),
            reference_code,
            assertions,
        };
        task.validate()?;
        Ok(task)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let reason = if self.task_id.is_empty() {
            "empty task_id"
        } else if self.prompt.trim().is_empty() {
            "empty prompt"
        } else if self.assertions.is_empty() {
            "empty test_list"
        } else {
            return Ok(());
        };
        Err(CorpusError::InvalidTask {
            task_id: self.task_id.clone(),
            reason: reason.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub source_name: String,
    pub schema_version: u32,
    tasks: Vec<Task>,
}

/// A line that was skipped during ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalReport {
    pub removed: Vec<String>,
    pub reason: String,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawId {
    Int(i64),
    Str(String),
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    task_id: RawId,
    text: String,
    #[serde(default)]
    code: Option<String>,
    test_list: Vec<String>,
    #[serde(default)]
    schema_version: Option<u32>,
}

#[derive(Serialize)]
struct SavedRecord<'a> {
    task_id: &'a str,
    text: &'a str,
    code: &'a Option<String>,
    test_list: &'a [String],
    schema_version: u32,
}

impl Corpus {
    pub fn new(source_name: impl Into<String>, tasks: Vec<Task>) -> Result<Self, CorpusError> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, task) in tasks.iter().enumerate() {
            task.validate()?;
            if let Some(first) = seen.insert(task.task_id.as_str(), i + 1) {
                return Err(CorpusError::DuplicateId {
                    task_id: task.task_id.clone(),
                    first_line: first,
                    second_line: i + 1,
                });
            }
        }
        Ok(Corpus {
            source_name: source_name.into(),
            schema_version: SCHEMA_VERSION,
            tasks,
        })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, task_id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    /// Reads line-delimited records. Malformed records are skipped and
    /// reported; duplicate ids and empty input are hard errors.
    pub fn ingest<R: BufRead>(
        source_name: impl Into<String>,
        reader: R,
    ) -> Result<(Corpus, IngestReport), CorpusError> {
        let mut tasks = Vec::new();
        let mut report = IngestReport::default();
        let mut lines_by_id: HashMap<String, usize> = HashMap::new();
        let mut saw_content = false;

        for (line_no, line) in io::numbered_lines(reader) {
            let line = line.map_err(|source| CorpusError::Read { line: line_no, source })?;
            if line.trim().is_empty() {
                continue;
            }
            saw_content = true;
            let raw: RawRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    tracing::warn!(line = line_no, error = %e, "malformed record");
                    report.rejected.push(Rejection {
                        line: line_no,
                        reason: format!("malformed record: {e}"),
                    });
                    continue;
                }
            };
            if let Some(v) = raw.schema_version {
                if v != SCHEMA_VERSION {
                    return Err(CorpusError::SchemaVersion(v));
                }
            }
            let task_id = match raw.task_id {
                RawId::Int(n) => n.to_string(),
                RawId::Str(s) => s,
            };
            let task = match Task::new(task_id.clone(), raw.text, raw.code, raw.test_list) {
                Ok(t) => t,
                Err(e) => {
                    tracing::warn!(line = line_no, error = %e, "rejected record");
                    report.rejected.push(Rejection {
                        line: line_no,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            if let Some(&first_line) = lines_by_id.get(&task_id) {
                return Err(CorpusError::DuplicateId {
                    task_id,
                    first_line,
                    second_line: line_no,
                });
            }
            lines_by_id.insert(task_id, line_no);
            tasks.push(task);
        }

        if !saw_content {
            return Err(CorpusError::Empty);
        }
        report.accepted = tasks.len();
        let corpus = Corpus {
            source_name: source_name.into(),
            schema_version: SCHEMA_VERSION,
            tasks,
        };
        Ok((corpus, report))
    }

    pub fn load(path: &Path) -> Result<(Corpus, IngestReport), CorpusError> {
        let text = io::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Corpus::ingest(name, text.as_bytes())
    }

    /// Canonical line-delimited form.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.tasks {
            let rec = SavedRecord {
                task_id: &t.task_id,
                text: &t.prompt,
                code: &t.reference_code,
                test_list: &t.assertions,
                schema_version: self.schema_version,
            };
            out.push_str(&serde_json::to_string(&rec).expect("string fields always serialize"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        io::write_atomic(path, self.to_jsonl().as_bytes())?;
        Ok(())
    }

    /// Drops every task whose success counts are all zero.
    pub fn clean(&self, profiles: &BTreeMap<String, SuccessProfile>) -> Result<(Corpus, RemovalReport), CorpusError> {
        let mut kept = Vec::with_capacity(self.tasks.len());
        let mut removed = Vec::new();
        for task in &self.tasks {
            let profile = profiles
                .get(&task.task_id)
                .ok_or_else(|| CorpusError::MissingProfile(task.task_id.clone()))?;
            if profile.all_zero() {
                removed.push(task.task_id.clone());
            } else {
                kept.push(task.clone());
            }
        }
        let corpus = Corpus {
            source_name: self.source_name.clone(),
            schema_version: self.schema_version,
            tasks: kept,
        };
        Ok((
            corpus,
            RemovalReport {
                removed,
                reason: "all_zero_profile".to_string(),
            },
        ))
    }

    pub fn split(&self, spec: &SplitSpec) -> Result<(Corpus, Corpus), CorpusError> {
        if self.tasks.is_empty() {
            return Err(CorpusError::Empty);
        }
        let (train, test) = spec.partition(&self.tasks)?;
        let side = |tasks| Corpus {
            source_name: self.source_name.clone(),
            schema_version: self.schema_version,
            tasks,
        };
        Ok((side(train), side(test)))
    }

    /// Restricts the corpus to the given ids, keeping corpus order.
    pub fn retain_ids(&self, ids: &HashSet<&str>) -> Corpus {
        Corpus {
            source_name: self.source_name.clone(),
            schema_version: self.schema_version,
            tasks: self
                .tasks
                .iter()
                .filter(|t| ids.contains(t.task_id.as_str()))
                .cloned()
                .collect(),
        }
    }
}

/// Deterministic train/test partition parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn train_size(&self, n: usize) -> Result<usize, CorpusError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CorpusError::BadFraction(self.train_fraction));
        }
        Ok(((self.train_fraction * n as f64).round() as usize).min(n))
    }

    /// Shuffles indices with ChaCha8 seeded from `seed`, takes the first
    /// `train_size` as train. Both sides keep their original relative order.
    pub fn partition<T: Clone>(&self, items: &[T]) -> Result<(Vec<T>, Vec<T>), CorpusError> {
        let n_train = self.train_size(items.len())?;
        let mut order: Vec<usize> = (0..items.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        order.shuffle(&mut rng);
        let mut in_train = vec![false; items.len()];
        for &i in &order[..n_train] {
            in_train[i] = true;
        }
        let (mut train, mut test) = (Vec::with_capacity(n_train), Vec::new());
        for (item, &flag) in items.iter().zip(&in_train) {
            if flag {
                train.push(item.clone());
            } else {
                test.push(item.clone());
            }
        }
        Ok((train, test))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, tests: &str) -> String {
        format!(
            r#"{{"task_id": {id}, "text": "Write a function for this task.", "code": "def f(): pass", "test_list": {tests}}}"#
        )
    }

    fn synthetic(n: usize) -> Corpus {
        let tasks = (0..n)
            .map(|i| {
                Task::new(
                    format!("t{i}"),
                    format!("Write a function number {i}."),
                    None,
                    vec![format!("assert f{i}(1) == 1")],
                )
                .unwrap()
            })
            .collect();
        Corpus::new("synthetic", tasks).unwrap()
    }

    #[test]
    fn ingest_three_valid_records() {
        let input = [
            record("1", r#"["assert f(1) == 1"]"#),
            record("2", r#"["assert f(2) == 2"]"#),
            record("\"x3\"", r#"["assert g(3) == 3"]"#),
        ]
        .join("\n");
        let (corpus, report) = Corpus::ingest("mem", input.as_bytes()).unwrap();
        assert_eq!(corpus.len(), 3);
        assert!(report.rejected.is_empty());
        assert_eq!(corpus.tasks()[0].task_id, "1");
        assert_eq!(corpus.tasks()[2].task_id, "x3");
        assert_eq!(corpus.tasks()[2].signature_hint.as_deref(), Some("g(int)"));
    }

    #[test]
    fn empty_test_list_is_rejected_with_line_number() {
        let input = [
            record("1", r#"["assert f(1) == 1"]"#),
            record("2", "[]"),
            "not json".to_string(),
            record("4", r#"["assert f(4) == 4"]"#),
        ]
        .join("\n");
        let (corpus, report) = Corpus::ingest("mem", input.as_bytes()).unwrap();
        assert_eq!(corpus.len(), 2);
        let lines: Vec<usize> = report.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![2, 3]);
        assert!(report.rejected[0].reason.contains("empty test_list"));
    }

    #[test]
    fn empty_input_and_duplicates_are_hard_errors() {
        assert!(matches!(
            Corpus::ingest("mem", "\n\n".as_bytes()),
            Err(CorpusError::Empty)
        ));
        let input = [
            record("7", r#"["assert f(1) == 1"]"#),
            record("8", r#"["assert f(1) == 1"]"#),
            record("7", r#"["assert f(1) == 1"]"#),
        ]
        .join("\n");
        match Corpus::ingest("mem", input.as_bytes()) {
            Err(CorpusError::DuplicateId {
                task_id,
                first_line,
                second_line,
            }) => {
                assert_eq!(task_id, "7");
                assert_eq!((first_line, second_line), (1, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn real_mbpp_row_two_hint() {
        let row = r#"{"text": "Write a function to find the similar elements from the given two tuple lists.", "code": "def similar_elements(test_tup1, test_tup2):\r\n  res = tuple(set(test_tup1) & set(test_tup2))\r\n  return (res) ", "task_id": 2, "test_setup_code": "", "test_list": ["assert similar_elements((3, 4, 5, 6),(5, 7, 4, 10)) == (4, 5)", "assert similar_elements((1, 2, 3, 4),(5, 4, 3, 7)) == (3, 4)", "assert similar_elements((11, 12, 14, 13),(17, 15, 14, 13)) == (13, 14)"], "challenge_test_list": []}"#;
        let (corpus, _) = Corpus::ingest("mbpp", row.as_bytes()).unwrap();
        assert_eq!(
            corpus.tasks()[0].signature_hint.as_deref(),
            Some("similar_elements(tuple, tuple)")
        );
    }

    #[test]
    fn clean_drops_only_all_zero_profiles() {
        let corpus = synthetic(5);
        let counts = [[0, 0, 0], [0, 0, 1], [5, 5, 5], [0, 0, 0], [1, 0, 0]];
        let profiles: BTreeMap<_, _> = corpus
            .tasks()
            .iter()
            .zip(counts)
            .map(|(t, c)| {
                (
                    t.task_id.clone(),
                    SuccessProfile::new(t.task_id.clone(), c.to_vec(), 5).unwrap(),
                )
            })
            .collect();
        let (cleaned, report) = corpus.clean(&profiles).unwrap();
        assert_eq!(cleaned.len(), 3);
        assert_eq!(report.removed, vec!["t0", "t3"]);
        assert_eq!(report.reason, "all_zero_profile");
        assert!(cleaned.get("t1").is_some());

        let (again, report2) = cleaned.clean(&profiles).unwrap();
        assert_eq!(again, cleaned);
        assert!(report2.removed.is_empty());

        let mut partial = profiles.clone();
        partial.remove("t2");
        assert!(matches!(corpus.clean(&partial), Err(CorpusError::MissingProfile(id)) if id == "t2"));
    }

    #[test]
    fn split_sizes_and_errors() {
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 42,
        };
        let (train, test) = synthetic(180).split(&spec).unwrap();
        assert_eq!((train.len(), test.len()), (144, 36));
        let (train, test) = synthetic(1).split(&spec).unwrap();
        assert_eq!((train.len(), test.len()), (1, 0));
        for bad in [0.0, 1.0, -0.1, f64::NAN] {
            let s = SplitSpec {
                train_fraction: bad,
                seed: 1,
            };
            assert!(matches!(synthetic(3).split(&s), Err(CorpusError::BadFraction(_))));
        }
        assert!(matches!(
            Corpus::new("e", vec![]).unwrap().split(&spec),
            Err(CorpusError::Empty)
        ));
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let c = synthetic(50);
        let a = c
            .split(&SplitSpec {
                train_fraction: 0.7,
                seed: 9,
            })
            .unwrap();
        let b = c
            .split(&SplitSpec {
                train_fraction: 0.7,
                seed: 9,
            })
            .unwrap();
        assert_eq!(a, b);
        let other = c
            .split(&SplitSpec {
                train_fraction: 0.7,
                seed: 10,
            })
            .unwrap();
        assert_ne!(a.0, other.0);
    }
}
