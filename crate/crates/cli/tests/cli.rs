use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use harmony_core::assets;

const BIN: &str = env!("CARGO_BIN_EXE_harmony");

fn harmony(args: &[&str], stdin: &str, cwd: &Path) -> Output {
    let mut child = Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env_remove("HARMONY_DATA_DIR")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn fixture(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    format!("scripted:{}", dir.join(name).display())
}

#[test]
fn eval_report_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let backend = fixture(dir.path(), "h.json", assets::HARMONY_FIXTURE);
    let out = harmony(&["eval", "--backend", &backend, "--report", "r.txt"], "", dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(std::fs::read_to_string(dir.path().join("r.txt")).unwrap(), stdout);
    assert!(stdout.contains("cases: 25"));
    assert!(stdout.contains("0.08            0.00            0.92"));
}

#[test]
fn bad_inputs_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let backend = fixture(dir.path(), "h.json", assets::HARMONY_FIXTURE);
    std::fs::write(dir.path().join("bad.json"), "{\"cases\": [").unwrap();
    for args in [
        vec!["eval", "--backend", "scripted:missing.json"],
        vec!["eval", "--backend", "carrier-pigeon:x"],
        vec!["eval", "--backend", &backend, "--corpus", "bad.json"],
        vec!["eval", "--backend", &backend, "--home", "missing-home.json"],
        vec!["eval", "--backend", &backend, "--mode", "sideways"],
    ] {
        let out = harmony(&args, "", dir.path());
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!out.stderr.is_empty(), "{args:?} printed nothing");
    }
}

#[test]
fn repl_commands_and_in_memory_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let backend = fixture(dir.path(), "s.json", assets::SESSION_FIXTURE);
    let script = "/help\n/rules\n/bogus\n/sensor en_motion nope\n/sensor no_such true\n/scenario Nope\nTurn on the light for me\n/quit\nnever read\n";
    let out = harmony(&["repl", "--backend", &backend], script, dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("/sensor ID VALUE"));
    assert!(stdout.contains("no rules"));
    assert!(stdout.contains("unknown command /bogus"));
    assert!(stdout.contains("bad value"));
    assert!(stdout.contains("error:"));
    assert!(stdout.contains("unknown scenario \"Nope\""));
    assert!(stdout.contains("[c1] "));
    assert!(stdout.contains("  -> "));
    // Without a data dir nothing is written.
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1);
}

#[test]
fn repl_continues_an_existing_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    let backend = fixture(dir.path(), "s.json", assets::SESSION_FIXTURE);
    let data = dir.path().join("data");
    let data = data.to_str().unwrap();
    let first = harmony(&["repl", "--backend", &backend, "--data-dir", data], assets::SESSION_SCRIPT, dir.path());
    assert!(first.status.success());
    let log = std::fs::read_to_string(dir.path().join("data/logs/interactions.jsonl")).unwrap();
    let second = harmony(&["repl", "--backend", &backend, "--data-dir", data], "/rules\n/scenario Morning Routine\n", dir.path());
    let stdout = String::from_utf8(second.stdout).unwrap();
    assert!(stdout.starts_with("rule 1: when"), "{stdout}");
    let grown = std::fs::read_to_string(dir.path().join("data/logs/interactions.jsonl")).unwrap();
    assert!(grown.starts_with(&log));
    let last: serde_json::Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    let next: serde_json::Value = serde_json::from_str(grown[log.len()..].lines().next().unwrap()).unwrap();
    assert!(next["clock"].as_u64() > last["clock"].as_u64());
    assert_ne!(next["conversation_id"], last["conversation_id"]);
}
