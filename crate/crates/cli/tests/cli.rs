use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> String {
    format!("{}/../core/tests/fixtures/{rel}", env!("CARGO_MANIFEST_DIR"))
}

fn markpoint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_markpoint")).args(args).output().unwrap()
}

fn run_dir(out: &Output) -> PathBuf {
    PathBuf::from(String::from_utf8_lossy(&out.stdout).lines().last().unwrap().trim())
}

fn run_oracle(script: &str, out: &Path) -> Output {
    markpoint(&[
        "run",
        "--scene",
        &fixture("scenes/sweep.json"),
        "--task",
        "Put the glasses into the glasses case and sweep the trash to the right with the broom",
        "--vlm",
        "oracle",
        "--oracle",
        &fixture(&format!("oracles/{script}.json")),
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn run_succeeds_and_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_oracle("sweep", tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    assert!(dir.starts_with(tmp.path()));
    for f in ["manifest.json", "transcript.json", "episode.json", "subtask_1/marked.png", "subtask_2/actions.jsonl"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let replayed = markpoint(&["replay", dir.to_str().unwrap()]);
    assert_eq!(replayed.status.code(), Some(0));

    let ds = tmp.path().join("dataset");
    let exported = markpoint(&["export-dataset", dir.to_str().unwrap(), "--out", ds.to_str().unwrap()]);
    assert_eq!(exported.status.code(), Some(0));
    assert!(ds.join("episodes.jsonl").is_file() && ds.join("manifest.json").is_file());
}

#[test]
fn failure_kinds_have_their_own_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_oracle("sweep_reasoning_failure", tmp.path()).status.code(), Some(3));
    assert_eq!(run_oracle("sweep_execution_failure", tmp.path()).status.code(), Some(4));
}

#[test]
fn annotate_writes_image_and_marks() {
    let tmp = tempfile::tempdir().unwrap();
    let out = markpoint(&[
        "annotate",
        "--scene",
        &fixture("scenes/sweep.json"),
        "--objects",
        "broom,trash",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("marked.png").is_file());
    let ms: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("markset.json")).unwrap()).unwrap();
    let labels: Vec<&str> = ms["candidates"].as_array().unwrap().iter().map(|c| c["label"].as_str().unwrap()).collect();
    assert!(labels.contains(&"P8") && labels.contains(&"Q8"));
}

#[test]
fn usage_config_and_io_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(markpoint(&["run", "--bogus"]).status.code(), Some(2));
    let scene = fixture("scenes/sweep.json");
    let no_script = markpoint(&["run", "--scene", &scene, "--vlm", "oracle"]);
    assert_eq!(no_script.status.code(), Some(2));
    let no_flag = markpoint(&[
        "ablate", "--scene", &scene, "--vlm", "oracle", "--oracle", &fixture("oracles/sweep.json"),
        "--out", tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(no_flag.status.code(), Some(2));
    let missing = markpoint(&[
        "run", "--scene", "/definitely/not/here.json", "--vlm", "oracle", "--oracle", &fixture("oracles/sweep.json"),
        "--out", tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(5));
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0, "no run directory for a failed start");
}

#[test]
fn wire_errors_never_print_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("vlm.json");
    std::fs::write(
        &cfg,
        r#"{"endpoint": "http://127.0.0.1:9/v1/chat/completions", "api_key_env": "MARKPOINT_TEST_KEY", "retries": 0, "timeout_secs": 2}"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_markpoint"))
        .env("MARKPOINT_TEST_KEY", "sk-secret-value-123")
        .args([
            "-vv", "run", "--scene", &fixture("scenes/sweep.json"), "--vlm", "wire", "--vlm-config",
            cfg.to_str().unwrap(), "--out", tmp.path().join("runs").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_ne!(out.status.code(), Some(0));
    let all = format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    assert!(!all.contains("sk-secret-value-123"));
}
