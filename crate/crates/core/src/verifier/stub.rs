use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{code_hash, Verdict, VerdictKind, Verifier, VerifyError, VerifyRequest};
use crate::io::{self, IoError};

/// One scripted row. Either `code` or `code_hash` identifies the candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubEntry {
    pub task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_hash: Option<String>,
    #[serde(flatten)]
    pub verdict: Verdict,
}

/// Table-driven verifier keyed by `(task_id, sha256(code))`.
#[derive(Debug, Clone, Default)]
pub struct StubVerifier {
    table: HashMap<(String, String), Verdict>,
}

impl StubVerifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn script(&mut self, task_id: &str, code: &str, verdict: Verdict) {
        self.table.insert((task_id.to_string(), code_hash(code)), verdict);
    }

    pub fn script_hash(&mut self, task_id: &str, hash: &str, verdict: Verdict) {
        self.table.insert((task_id.to_string(), hash.to_string()), verdict);
    }

    pub fn from_entries(entries: impl IntoIterator<Item = StubEntry>) -> Result<Self, String> {
        let mut out = Self::new();
        for e in entries {
            match (&e.code, &e.code_hash) {
                (Some(code), _) => out.script(&e.task_id, code, e.verdict),
                (None, Some(hash)) => out.script_hash(&e.task_id, hash, e.verdict),
                (None, None) => return Err(format!("stub entry for {:?} has neither code nor code_hash", e.task_id)),
            }
        }
        Ok(out)
    }

    /// Loads line-delimited [`StubEntry`] rows.
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let entries: Vec<StubEntry> = io::read_jsonl(path)?;
        Self::from_entries(entries).map_err(|message| IoError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message,
        })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn lookup(&self, req: &VerifyRequest) -> Verdict {
        self.table
            .get(&(req.task_id.clone(), code_hash(&req.candidate_code)))
            .cloned()
            .unwrap_or_else(|| Verdict::new(VerdictKind::Error, "unscripted", 0))
    }
}

impl Verifier for StubVerifier {
    fn verify(&self, req: &VerifyRequest) -> Result<Verdict, VerifyError> {
        req.validate()?;
        Ok(self.lookup(req))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(task: &str, code: &str) -> VerifyRequest {
        VerifyRequest {
            task_id: task.into(),
            candidate_code: code.into(),
            assertions: vec!["assert f() == 1".into()],
            timeout_ms: 1000,
        }
    }

    #[test]
    fn scripted_and_unscripted() {
        let mut stub = StubVerifier::new();
        stub.script("t1", "def f(): return 1", Verdict::pass());
        assert_eq!(
            stub.verify(&req("t1", "def f(): return 1")).unwrap().kind,
            VerdictKind::Pass
        );
        let v = stub.verify(&req("t1", "def f(): return 2")).unwrap();
        assert_eq!((v.kind, v.detail.as_str()), (VerdictKind::Error, "unscripted"));
        let v = stub.verify(&req("t2", "def f(): return 1")).unwrap();
        assert_eq!(v.detail, "unscripted");
        assert_eq!(
            stub.verify(&req("t1", "def f(): return 1")).unwrap(),
            stub.verify(&req("t1", "def f(): return 1")).unwrap()
        );
    }

    #[test]
    fn entries_from_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stub.jsonl");
        let hash = code_hash("y");
        std::fs::write(
            &path,
            format!(
                "{{\"task_id\":\"a\",\"code\":\"x\",\"kind\":\"fail\",\"detail\":\"assert f() == 1\"}}\n\
                 {{\"task_id\":\"b\",\"code_hash\":\"{hash}\",\"kind\":\"pass\"}}\n"
            ),
        )
        .unwrap();
        let stub = StubVerifier::load(&path).unwrap();
        assert_eq!(stub.len(), 2);
        assert_eq!(stub.verify(&req("a", "x")).unwrap().kind, VerdictKind::Fail);
        assert_eq!(stub.verify(&req("b", "y")).unwrap().kind, VerdictKind::Pass);
    }

    #[test]
    fn rejects_requests_without_assertions() {
        let stub = StubVerifier::new();
        let mut r = req("t", "c");
        r.assertions.clear();
        assert!(stub.verify(&r).is_err());
    }
}
