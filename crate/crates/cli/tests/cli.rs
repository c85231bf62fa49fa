use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use cotguard_gateway::mock::{sse_events, MockUpstream};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cotguard"));
    for var in [
        "COTGUARD_CONFIG",
        "COTGUARD_TAU",
        "COTGUARD_VERIFIER",
        "COTGUARD_SEED",
        "COTGUARD_LOG_LEVEL",
    ] {
        c.env_remove(var);
    }
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const MARKED: &str = r#"{"id":"m1","source":"fixture","problem":"What is 2 + 3?","context":null,"chain_text":"We add 2 and 3.\n\nThat gives 6. ⟦ERR:2b⟧\n\nSo the answer is 6.","label":{"position":1,"type":"2b"}}"#;
const CLEAN: &str = r#"{"id":"c1","source":"fixture","problem":"What is 2 + 3?","context":null,"chain_text":"We add 2 and 3.\n\nThat gives 5.","label":{"position":null,"type":null}}"#;

#[test]
fn segment_file_and_stdin_agree() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "t.txt", "A\n\nB");
    let from_file = run(&["segment", &path]);
    assert_eq!(code(&from_file), 0);
    assert_eq!(String::from_utf8_lossy(&from_file.stdout), "[0]\nA\n\n[1]\nB\n\n");

    let mut child = bin()
        .arg("segment")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"A\n\nB").unwrap();
    let from_stdin = child.wait_with_output().unwrap();
    assert_eq!(from_stdin.stdout, from_file.stdout);
}

#[test]
fn segment_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "empty.txt", "");
    let out = run(&["segment", &path]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
}

#[test]
fn segment_unreadable_input() {
    assert_eq!(code(&run(&["segment", "/nonexistent/file.txt"])), 4);
}

#[test]
fn replay_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let marked = write(dir.path(), "m.json", MARKED);
    let out = run(&["replay", &marked]);
    assert_eq!(code(&out), 10);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["first_unsafe_type"], "2b");
    assert_eq!(report["termination"], "Interrupted");

    let clean = write(dir.path(), "c.json", CLEAN);
    assert_eq!(code(&run(&["replay", &clean])), 0);
}

#[test]
fn replay_budget_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write(dir.path(), "c.json", CLEAN);
    let cfg = write(dir.path(), "cfg.toml", "[policy]\nmax_steps = 1\n");
    let out = run(&["--config", &cfg, "replay", &clean]);
    assert_eq!(code(&out), 11);
}

#[test]
fn tau_flag_overrides_env_and_file() {
    let dir = tempfile::tempdir().unwrap();
    let marked = write(dir.path(), "m.json", MARKED);
    // The oracle's confidence is 1.0: tau above it can never trigger.
    let cfg = write(
        dir.path(),
        "cfg.toml",
        "[policy]\ntau = 0.5\n[verifier.oracle]\ndefault_confidence = 0.8\n",
    );
    assert_eq!(code(&run(&["--config", &cfg, "replay", &marked])), 10);
    let env = bin()
        .args(["--config", &cfg, "replay", &marked])
        .env("COTGUARD_TAU", "0.9")
        .output()
        .unwrap();
    assert_eq!(code(&env), 0);
    let flag = bin()
        .args(["--config", &cfg, "--tau", "0.8", "replay", &marked])
        .env("COTGUARD_TAU", "0.9")
        .output()
        .unwrap();
    assert_eq!(code(&flag), 10);
}

#[test]
fn config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write(dir.path(), "c.json", CLEAN);
    let out = run(&["--config", "/nonexistent/cfg.toml", "replay", &clean]);
    assert_eq!(code(&out), 3);
    let bad = write(dir.path(), "bad.toml", "[policy]\ntau = 2.0\n");
    let out = run(&["--config", &bad, "replay", &clean]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau"));
    assert_eq!(code(&run(&["--tau=1.5", "replay", &clean])), 3);
}

#[test]
fn bad_chain_record() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "x.json",
        r#"{"id":"x","source":"s","problem":"p","context":null,"chain_text":"a","label":{"position":4,"type":"2b"}}"#,
    );
    assert_eq!(code(&run(&["replay", &bad])), 4);
    let garbage = write(dir.path(), "g.json", "not json");
    assert_eq!(code(&run(&["replay", &garbage])), 4);
}

#[test]
fn gen_then_bench_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("badchain.jsonl");
    let out = run(&[
        "gen",
        "badchain",
        "--seed",
        "7",
        "--n",
        "100",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 100);

    let out = run(&["bench", path.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&out), 0);
    let metrics: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["position_accuracy"], 1.0);
    assert_eq!(metrics["type_accuracy"], 1.0);
    assert_eq!(metrics["n_chains"], 100);

    let table = run(&["bench", path.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&table.stdout).contains("100.00"));
}

#[test]
fn gen_is_deterministic() {
    let a = run(&["gen", "overthink", "--seed", "3", "--n", "20"]);
    let b = run(&["gen", "overthink", "--seed", "3", "--n", "20"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(code(&run(&["gen", "nope"])), 2);
}

#[test]
fn bench_missing_dataset() {
    assert_eq!(code(&run(&["bench", "/nonexistent/d.jsonl"])), 3);
    assert_eq!(code(&run(&["bench"])), 2);
}

#[test]
fn usage_error() {
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["--verifier", "magic", "segment"])), 2);
}

struct Killer(std::process::Child);

impl Drop for Killer {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn serve_with_oracle_interrupts_marked_stream() {
    let text = (0..60)
        .map(|i| {
            if i == 2 {
                "Off we go ⟦ERR:3b⟧".to_string()
            } else {
                format!("Step {i}.")
            }
        })
        .collect::<Vec<_>>()
        .join("\n\n");
    let events = sse_events(&text, 8);
    let upstream = MockUpstream::spawn(events.clone(), Duration::from_millis(2))
        .await
        .unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let listen = format!("127.0.0.1:{port}");
    let _child = Killer(
        bin()
            .args([
                "--verifier",
                "oracle",
                "serve",
                "--listen",
                &listen,
                "--upstream",
                &upstream.url,
            ])
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let client = reqwest::Client::new();
    let mut up = false;
    for _ in 0..200 {
        if client.get(format!("http://{listen}/healthz")).send().await.is_ok() {
            up = true;
            break;
        }
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
    assert!(up, "gateway did not start");
    let body = r#"{"model":"m","stream":true,"messages":[{"role":"user","content":"go"}]}"#;
    let resp = client
        .post(format!("http://{listen}/v1/chat/completions"))
        .header("content-type", "application/json")
        .body(body)
        .send()
        .await
        .unwrap();
    let bytes = resp.bytes().await.unwrap();
    let text = String::from_utf8_lossy(&bytes);
    let at = text.find("event: reasoning_interrupt").expect("interrupt event");
    let full: Vec<u8> = events.iter().flat_map(|b| b.to_vec()).collect();
    assert_eq!(&bytes[..at], &full[..at]);
    assert!(text[at..].contains("\"3b\""));
}
