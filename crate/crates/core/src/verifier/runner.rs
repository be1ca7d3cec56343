//! Supervision of external assertion runners.
//!
//! A runner is a long-lived process speaking newline-delimited JSON on
//! stdin/stdout. It announces itself with `{"ready": true, "protocol": 1}`,
//! then answers each request frame `{"id", "code", "assertions", "timeout_ms"}`
//! with `{"id", "kind", "detail", "duration_ms"}`. The supervisor enforces the
//! deadline (`timeout_ms` plus a grace period) by killing and respawning the
//! runner, and does the same on any malformed or mismatched frame.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Verdict, VerdictKind, Verifier, VerifyError, VerifyRequest};

pub const DEFAULT_GRACE_MS: u64 = 500;
pub const PROTOCOL_VERSION: u64 = 1;
const STARTUP_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunnerCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl RunnerCommand {
    pub fn new(program: impl Into<String>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        RunnerCommand {
            program: program.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Process {
    fn spawn(cmd: &RunnerCommand) -> Result<Self, VerifyError> {
        let mut child = Command::new(&cmd.program)
            .args(&cmd.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| VerifyError::Spawn(format!("{}: {e}", cmd.program)))?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut proc = Process {
            child,
            stdin,
            lines: rx,
        };
        match proc.lines.recv_timeout(STARTUP_TIMEOUT) {
            Ok(Ok(line)) => {
                let frame: Value = serde_json::from_str(&line).unwrap_or(Value::Null);
                let ready = frame.get("ready") == Some(&Value::Bool(true));
                let protocol = frame.get("protocol").and_then(Value::as_u64);
                if !ready || protocol != Some(PROTOCOL_VERSION) {
                    proc.kill();
                    return Err(VerifyError::Spawn(format!("bad ready frame: {line}")));
                }
                Ok(proc)
            }
            _ => {
                proc.kill();
                Err(VerifyError::Spawn("runner did not send a ready frame".to_string()))
            }
        }
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Deserialize)]
struct ResponseFrame {
    id: Value,
    kind: VerdictKind,
    #[serde(default)]
    detail: String,
    #[serde(default)]
    duration_ms: u64,
}

/// One runner process, serving one request at a time.
pub struct RunnerHandle {
    command: RunnerCommand,
    grace: Duration,
    process: Option<Process>,
    next_id: u64,
    restarts: u32,
}

impl RunnerHandle {
    pub fn spawn(command: RunnerCommand) -> Result<Self, VerifyError> {
        Self::with_grace(command, Duration::from_millis(DEFAULT_GRACE_MS))
    }

    pub fn with_grace(command: RunnerCommand, grace: Duration) -> Result<Self, VerifyError> {
        let process = Process::spawn(&command)?;
        Ok(RunnerHandle {
            command,
            grace,
            process: Some(process),
            next_id: 1,
            restarts: 0,
        })
    }

    /// How many times the runner has been killed and respawned.
    pub fn restarts(&self) -> u32 {
        self.restarts
    }

    fn restart(&mut self) -> Result<(), VerifyError> {
        if let Some(mut p) = self.process.take() {
            p.kill();
        }
        self.restarts += 1;
        self.process = Some(Process::spawn(&self.command)?);
        Ok(())
    }

    /// Restarts the runner, then yields `verdict`.
    fn recover(&mut self, verdict: Verdict) -> Result<Verdict, VerifyError> {
        tracing::warn!(kind = verdict.kind.as_str(), detail = %verdict.detail, "restarting runner");
        self.restart()?;
        Ok(verdict)
    }

    pub fn verify(&mut self, req: &VerifyRequest) -> Result<Verdict, VerifyError> {
        req.validate()?;
        if self.process.is_none() {
            self.restart()?;
        }
        let id = self.next_id;
        self.next_id += 1;
        let frame = json!({
            "id": id,
            "code": req.candidate_code,
            "assertions": req.assertions,
            "timeout_ms": req.timeout_ms,
        });
        let started = Instant::now();
        let proc = self.process.as_mut().expect("process present");
        let write = writeln!(proc.stdin, "{frame}").and_then(|_| proc.stdin.flush());
        if let Err(e) = write {
            return self.recover(Verdict::new(VerdictKind::Error, format!("runner unavailable: {e}"), 0));
        }

        let deadline = Duration::from_millis(req.timeout_ms) + self.grace;
        let elapsed_ms = |s: Instant| s.elapsed().as_millis() as u64;
        let received = proc.lines.recv_timeout(deadline);
        match received {
            Ok(Ok(line)) => match serde_json::from_str::<ResponseFrame>(&line) {
                Ok(resp) if resp.id == json!(id) => Ok(Verdict::new(resp.kind, resp.detail, resp.duration_ms)),
                Ok(resp) => self.recover(Verdict::new(
                    VerdictKind::Error,
                    format!(
                        "protocol violation: response id {} does not match request id {id}",
                        resp.id
                    ),
                    elapsed_ms(started),
                )),
                Err(e) => self.recover(Verdict::new(
                    VerdictKind::Error,
                    format!("protocol violation: malformed frame ({e})"),
                    elapsed_ms(started),
                )),
            },
            Ok(Err(e)) => self.recover(Verdict::new(
                VerdictKind::Error,
                format!("protocol violation: unreadable frame ({e})"),
                elapsed_ms(started),
            )),
            Err(RecvTimeoutError::Disconnected) => self.recover(Verdict::new(
                VerdictKind::Error,
                "runner exited without answering",
                elapsed_ms(started),
            )),
            Err(RecvTimeoutError::Timeout) => self.recover(Verdict::new(
                VerdictKind::Timeout,
                format!("exceeded {} ms", req.timeout_ms),
                elapsed_ms(started),
            )),
        }
    }
}

impl Drop for RunnerHandle {
    fn drop(&mut self) {
        if let Some(mut p) = self.process.take() {
            p.kill();
        }
    }
}

struct PoolState {
    idle: Vec<RunnerHandle>,
    live: usize,
}

/// A bounded pool of runner processes, spawned lazily.
pub struct RunnerPool {
    command: RunnerCommand,
    grace: Duration,
    size: usize,
    state: Mutex<PoolState>,
    returned: Condvar,
}

impl RunnerPool {
    pub fn new(command: RunnerCommand, size: usize) -> Self {
        RunnerPool {
            command,
            grace: Duration::from_millis(DEFAULT_GRACE_MS),
            size: size.max(1),
            state: Mutex::new(PoolState {
                idle: Vec::new(),
                live: 0,
            }),
            returned: Condvar::new(),
        }
    }

    pub fn with_grace(mut self, grace: Duration) -> Self {
        self.grace = grace;
        self
    }

    fn checkout(&self) -> Result<RunnerHandle, VerifyError> {
        let mut state = self.state.lock().expect("runner pool poisoned");
        loop {
            if let Some(h) = state.idle.pop() {
                return Ok(h);
            }
            if state.live < self.size {
                state.live += 1;
                drop(state);
                return RunnerHandle::with_grace(self.command.clone(), self.grace).inspect_err(|_| {
                    self.state.lock().expect("runner pool poisoned").live -= 1;
                    self.returned.notify_one();
                });
            }
            state = self.returned.wait(state).expect("runner pool poisoned");
        }
    }
}

impl Verifier for RunnerPool {
    fn verify(&self, req: &VerifyRequest) -> Result<Verdict, VerifyError> {
        req.validate()?;
        let mut handle = self.checkout()?;
        let result = handle.verify(req);
        let mut state = self.state.lock().expect("runner pool poisoned");
        if handle.process.is_some() {
            state.idle.push(handle);
        } else {
            state.live -= 1;
        }
        drop(state);
        self.returned.notify_one();
        result
    }
}
