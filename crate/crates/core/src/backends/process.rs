//! Adapter for a locally run model behind a command line.
//!
//! The command receives the rendered prompt on stdin and writes the reply to
//! stdout. Token counts are whitespace-delimited word counts, which is only an
//! approximation for local models that do not report usage.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CompletionRequest, CompletionResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessConfig {
    /// Program followed by its arguments. `{temperature}` and `{max_tokens}`
    /// in arguments are substituted per request.
    pub command: Vec<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    120_000
}

pub struct ProcessBackend {
    config: ProcessConfig,
}

impl ProcessBackend {
    pub fn new(config: ProcessConfig) -> Self {
        ProcessBackend { config }
    }
}

impl Backend for ProcessBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        req.validate()?;
        let (program, args) = self
            .config
            .command
            .split_first()
            .ok_or_else(|| BackendError::InvalidRequest("empty process command".to_string()))?;
        let args: Vec<String> = args
            .iter()
            .map(|a| {
                a.replace("{temperature}", &req.temperature.to_string())
                    .replace("{max_tokens}", &req.max_tokens.to_string())
            })
            .collect();

        let started = Instant::now();
        let mut child = Command::new(program)
            .args(&args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| BackendError::Process(format!("spawn {program}: {e}")))?;

        let mut stdin = child.stdin.take().expect("stdin piped");
        let prompt = req.prompt.clone();
        let writer = thread::spawn(move || stdin.write_all(prompt.as_bytes()));

        let mut stdout = child.stdout.take().expect("stdout piped");
        let mut stderr = child.stderr.take().expect("stderr piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut out = Vec::new();
            let mut err = Vec::new();
            let r = stdout.read_to_end(&mut out).and_then(|_| stderr.read_to_end(&mut err));
            let _ = tx.send(r.map(|_| (out, err)));
        });

        let timeout = Duration::from_millis(self.config.timeout_ms);
        let (out, err) = match rx.recv_timeout(timeout) {
            Ok(Ok(pair)) => pair,
            Ok(Err(e)) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(BackendError::Process(format!("reading output: {e}")));
            }
            Err(_) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(BackendError::Transient(format!(
                    "local model timed out after {} ms",
                    self.config.timeout_ms
                )));
            }
        };
        let _ = writer.join();
        let status = child.wait().map_err(|e| BackendError::Process(format!("wait: {e}")))?;
        if !status.success() {
            return Err(BackendError::Process(format!(
                "exit status {status}: {}",
                String::from_utf8_lossy(&err).trim()
            )));
        }
        let raw_text = String::from_utf8_lossy(&out).into_owned();
        Ok(CompletionResponse {
            prompt_tokens: req.prompt.split_whitespace().count() as u64,
            completion_tokens: raw_text.split_whitespace().count() as u64,
            raw_text,
            latency_ms: started.elapsed().as_millis() as u64,
            finish_reason: Some("stop".to_string()),
            retries: 0,
        })
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    fn request(prompt: &str) -> CompletionRequest {
        CompletionRequest {
            task_id: "t".into(),
            tier_id: "local".into(),
            trial_index: 1,
            prompt: prompt.into(),
            temperature: 0.5,
            max_tokens: 64,
        }
    }

    fn sh(script: &str, timeout_ms: u64) -> ProcessBackend {
        ProcessBackend::new(ProcessConfig {
            command: vec![
                "sh".into(),
                "-c".into(),
                script.into(),
                "sh".into(),
                "{temperature}".into(),
                "{max_tokens}".into(),
            ],
            timeout_ms,
        })
    }

    #[test]
    fn prompt_on_stdin_reply_on_stdout() {
        let resp = sh("cat; printf ' %s %s' \"$1\" \"$2\"", 5000)
            .complete(&request("def f(): pass"))
            .unwrap();
        assert_eq!(resp.raw_text, "def f(): pass 0.5 64");
        assert_eq!(resp.prompt_tokens, 3);
        assert_eq!(resp.completion_tokens, 5);
    }

    #[test]
    fn nonzero_exit_and_timeout() {
        let err = sh("echo broken >&2; exit 3", 5000).complete(&request("x")).unwrap_err();
        assert!(
            matches!(&err, BackendError::Process(m) if m.contains("broken")),
            "{err}"
        );
        let started = Instant::now();
        let err = sh("sleep 10", 200).complete(&request("x")).unwrap_err();
        assert!(err.is_transient());
        assert!(started.elapsed() < Duration::from_secs(5));
    }
}
