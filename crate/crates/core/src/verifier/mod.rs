//! Verification contract: candidate code plus assertions yields one verdict.

mod runner;
mod stub;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use runner::{RunnerCommand, RunnerHandle, RunnerPool, DEFAULT_GRACE_MS};
pub use stub::{StubEntry, StubVerifier};

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictKind {
    Pass,
    Fail,
    Error,
    Timeout,
}

impl VerdictKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictKind::Pass => "pass",
            VerdictKind::Fail => "fail",
            VerdictKind::Error => "error",
            VerdictKind::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    #[serde(default)]
    pub detail: String,
    #[serde(default)]
    pub duration_ms: u64,
}

impl Verdict {
    pub fn new(kind: VerdictKind, detail: impl Into<String>, duration_ms: u64) -> Self {
        Verdict {
            kind,
            detail: detail.into(),
            duration_ms,
        }
    }

    pub fn pass() -> Self {
        Self::new(VerdictKind::Pass, "", 0)
    }

    pub fn is_pass(&self) -> bool {
        self.kind == VerdictKind::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyRequest {
    pub task_id: String,
    pub candidate_code: String,
    pub assertions: Vec<String>,
    pub timeout_ms: u64,
}

impl VerifyRequest {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if self.assertions.is_empty() {
            return Err(VerifyError::InvalidRequest("assertions must be non-empty".into()));
        }
        if self.timeout_ms == 0 {
            return Err(VerifyError::InvalidRequest("timeout_ms must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("runner spawn failed: {0}")]
    Spawn(String),
    #[error("invalid verify request: {0}")]
    InvalidRequest(String),
}

/// Anything that can judge candidate code. Implementations are shared across
/// collector threads.
pub trait Verifier: Send + Sync {
    fn verify(&self, req: &VerifyRequest) -> Result<Verdict, VerifyError>;
}

/// Hex SHA-256 of candidate code, the key used by scripted verdict tables.
pub fn code_hash(code: &str) -> String {
    hex::encode(Sha256::digest(code.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_wire_names() {
        let v = Verdict::new(VerdictKind::Timeout, "deadline", 2100);
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            r#"{"kind":"timeout","detail":"deadline","duration_ms":2100}"#
        );
        let parsed: Verdict = serde_json::from_str(r#"{"kind":"fail","detail":"assert f(1) == 2"}"#).unwrap();
        assert_eq!(parsed.kind, VerdictKind::Fail);
        assert!(serde_json::from_str::<Verdict>(r#"{"kind":"maybe"}"#).is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            code_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
