use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use tierwise::verifier::{RunnerCommand, RunnerHandle, RunnerPool, VerdictKind, Verifier, VerifyError, VerifyRequest};

fn have_python() -> bool {
    Command::new("python3")
        .arg("--version")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn mini_runner() -> RunnerCommand {
    let script = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini_runner.py");
    RunnerCommand::new("python3", [script.to_string_lossy().into_owned()])
}

fn sh(script: &str) -> RunnerCommand {
    RunnerCommand::new("sh", ["-c", script])
}

fn req(code: &str, assertions: &[&str], timeout_ms: u64) -> VerifyRequest {
    VerifyRequest {
        task_id: "t".into(),
        candidate_code: code.into(),
        assertions: assertions.iter().map(|s| s.to_string()).collect(),
        timeout_ms,
    }
}

const ADD: &str = "def add(a, b):\n    return a + b\n";

#[test]
fn verdict_kinds_and_timeout_recovery() {
    if !have_python() {
        eprintln!("python3 not found, skipping");
        return;
    }
    let mut h = RunnerHandle::spawn(mini_runner()).unwrap();

    let v = h.verify(&req(ADD, &["assert add(1, 2) == 3"], 2000)).unwrap();
    assert_eq!(v.kind, VerdictKind::Pass, "{v:?}");

    let v = h.verify(&req(ADD, &["assert add(1, 2) == 4"], 2000)).unwrap();
    assert_eq!(v.kind, VerdictKind::Fail);
    assert_eq!(v.detail, "assert add(1, 2) == 4");

    let v = h.verify(&req(ADD, &["assert sub(1, 2) == -1"], 2000)).unwrap();
    assert_eq!(v.kind, VerdictKind::Error);
    assert!(v.detail.starts_with("NameError"), "{}", v.detail);

    // Namespace is fresh per frame: `add` from earlier frames is gone.
    let v = h.verify(&req("x = 1", &["assert add(1, 1) == 2"], 2000)).unwrap();
    assert_eq!(v.kind, VerdictKind::Error);
    assert_eq!(h.restarts(), 0);

    let started = Instant::now();
    let v = h
        .verify(&req("while True:\n    pass\n", &["assert True"], 1500))
        .unwrap();
    let waited = started.elapsed();
    assert_eq!(v.kind, VerdictKind::Timeout);
    assert!(waited >= Duration::from_millis(1500), "{waited:?}");
    assert!(waited < Duration::from_millis(1500 + 500 + 1500), "{waited:?}");
    assert_eq!(h.restarts(), 1);

    let v = h.verify(&req(ADD, &["assert add(2, 2) == 4"], 2000)).unwrap();
    assert_eq!(v.kind, VerdictKind::Pass);
}

#[test]
fn garbage_frame_restarts_runner() {
    // The first process answers with garbage and leaves a marker; processes
    // started after it behave.
    let dir = tempfile::tempdir().unwrap();
    let marker = dir.path().join("seen");
    let script = r#"
echo '{"ready":true,"protocol":1}'
if [ ! -e "$0" ]; then
  touch "$0"
  read line
  echo 'this is not json'
fi
while read line; do
  id=$(printf '%s' "$line" | sed 's/.*"id":\([0-9]*\).*/\1/')
  echo "{\"id\":$id,\"kind\":\"pass\",\"detail\":\"\",\"duration_ms\":0}"
done
"#;
    let cmd = RunnerCommand::new("sh", ["-c", script, marker.to_str().unwrap()]);
    let mut h = RunnerHandle::spawn(cmd).unwrap();
    let v = h.verify(&req("x", &["assert x"], 1000)).unwrap();
    assert_eq!(v.kind, VerdictKind::Error);
    assert!(v.detail.contains("malformed"), "{}", v.detail);
    assert_eq!(h.restarts(), 1);

    let v = h.verify(&req("x", &["assert x"], 1000)).unwrap();
    assert_eq!(v.kind, VerdictKind::Pass);
    assert_eq!(h.restarts(), 1);
}

#[test]
fn well_behaved_sh_runner_answers_each_frame() {
    let script = r#"
echo '{"ready":true,"protocol":1}'
while read line; do
  id=$(printf '%s' "$line" | sed 's/.*"id":\([0-9]*\).*/\1/')
  echo "{\"id\":$id,\"kind\":\"fail\",\"detail\":\"scripted\",\"duration_ms\":3}"
done
"#;
    let mut h = RunnerHandle::spawn(sh(script)).unwrap();
    for _ in 0..3 {
        let v = h.verify(&req("x", &["assert x"], 1000)).unwrap();
        assert_eq!(
            (v.kind, v.detail.as_str(), v.duration_ms),
            (VerdictKind::Fail, "scripted", 3)
        );
    }
    assert_eq!(h.restarts(), 0);
}

#[test]
fn mismatched_id_and_exit_are_errors() {
    let wrong_id = r#"
echo '{"ready":true,"protocol":1}'
while read line; do echo '{"id":999,"kind":"pass","detail":"","duration_ms":0}'; done
"#;
    let mut h = RunnerHandle::spawn(sh(wrong_id)).unwrap();
    let v = h.verify(&req("x", &["assert x"], 1000)).unwrap();
    assert_eq!(v.kind, VerdictKind::Error);
    assert!(v.detail.contains("does not match"), "{}", v.detail);

    let exits = "echo '{\"ready\":true,\"protocol\":1}'; read line; exit 3";
    let mut h = RunnerHandle::spawn(sh(exits)).unwrap();
    let v = h.verify(&req("x", &["assert x"], 1000)).unwrap();
    assert_eq!(v.kind, VerdictKind::Error);
    assert_eq!(h.restarts(), 1);
}

#[test]
fn handshake_failures_are_spawn_errors() {
    assert!(matches!(
        RunnerHandle::spawn(sh("echo '{\"ready\":true,\"protocol\":2}'")),
        Err(VerifyError::Spawn(_))
    ));
    assert!(matches!(RunnerHandle::spawn(sh("exit 0")), Err(VerifyError::Spawn(_))));
    assert!(matches!(
        RunnerHandle::spawn(RunnerCommand::new("/nonexistent/runner", Vec::<String>::new())),
        Err(VerifyError::Spawn(_))
    ));
}

#[test]
fn pool_serves_concurrent_requests() {
    if !have_python() {
        eprintln!("python3 not found, skipping");
        return;
    }
    let pool = RunnerPool::new(mini_runner(), 2);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..6)
            .map(|i| {
                let pool = &pool;
                s.spawn(move || {
                    let assertion = format!("assert add({i}, 1) == {}", i + 1);
                    pool.verify(&req(ADD, &[&assertion], 5000)).unwrap()
                })
            })
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap().kind, VerdictKind::Pass);
        }
    });
    assert!(matches!(
        pool.verify(&req(ADD, &[], 1000)),
        Err(VerifyError::InvalidRequest(_))
    ));
}
