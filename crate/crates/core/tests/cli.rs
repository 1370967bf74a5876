//! End-to-end runs of the command-line binary.

use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faas-observe"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn run_writes_three_artifact_sets() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&cli(&["run", "--variant", "all", "--requests", "2", "--records", "5", "--out", "o"], dir.path()));
    assert_eq!(out.lines().count(), 4);
    for v in ["none", "developer_driven", "platform_supported"] {
        assert!(dir.path().join(format!("o/traces-{v}.json")).exists());
        assert!(dir.path().join(format!("o/evidence-{v}.jsonl")).exists());
    }
    let report: serde_json::Value = serde_json::from_slice(&read(dir.path().join("o/report.json"))).unwrap();
    assert_eq!(report["invocations_per_request"], 13);
    assert_eq!(report["variants"].as_array().unwrap().len(), 3);
}

#[test]
fn zero_sampling_exports_empty_traces() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&cli(&["run", "--sampling", "0", "--variant", "platform_supported", "--requests", "3", "--records", "4", "--out", "o"], dir.path()));
    assert_eq!(read(dir.path().join("o/traces-platform_supported.json")), b"[]");
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        stdout(&cli(&["run", "--seed", "7", "--requests", "2", "--records", "6", "--out", out], dir.path()));
    }
    for file in ["report.json", "report.md", "traces-developer_driven.json", "evidence-platform_supported.jsonl"] {
        assert_eq!(read(dir.path().join("a").join(file)), read(dir.path().join("b").join(file)), "{file}");
    }
}

#[test]
fn tables_for_openwhisk_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&cli(&["tables", "--profile", "openwhisk_like"], dir.path()));
    assert!(out.contains("| openwhisk_like | F1 | error | error | true | true |"), "{out}");
    assert!(out.contains("| openwhisk_like | F4 | success | success | false | - |"));
    assert!(!out.contains("aws_like"));
}

#[test]
fn tables_for_aws_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&cli(&["tables", "--profile", "aws_like"], dir.path()));
    assert!(out.contains("| aws_like | F1 | success | error | false | true |"), "{out}");
}

#[test]
fn tables_filtered_by_developer_mode() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&cli(&["tables", "--variant", "developer_driven", "--format", "json"], dir.path()));
    let tables: serde_json::Value = serde_json::from_str(&out).unwrap();
    let text = tables.to_string();
    assert!(text.contains("Developer-driven"));
    assert!(!text.contains("X-Ray"));
    let md = stdout(&cli(&["tables", "--variant", "developer_driven"], dir.path()));
    let f3 = md.lines().find(|l| l.starts_with("| F3 |")).unwrap();
    assert_eq!(f3, "| F3 | true | false | false |");
}

#[test]
fn classify_emits_matrix_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&cli(&["classify", "--profile", "aws_like", "--variant", "none"], dir.path()));
    let cells: Vec<serde_json::Value> = serde_json::from_str(&out).unwrap();
    assert_eq!(cells.len(), 4 * 3);
}

#[test]
fn export_traces_writes_zipkin_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&cli(&["export-traces", "--variant", "platform_supported", "--requests", "1", "--records", "2", "--out", "t"], dir.path()));
    assert_eq!(out.lines().count(), 1);
    let spans: Vec<serde_json::Value> = serde_json::from_slice(&read(dir.path().join("t/traces-platform_supported.json"))).unwrap();
    assert!(!spans.is_empty());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("exp.toml"),
        "seed = 1\nvariants = [\"none\"]\n[workload]\nrecords = 2\nrequests = 1\n[faults]\nspecs = [{ scenario = \"F1\", target = \"insert_products\", probability = 1.0 }]\n",
    )
    .unwrap();
    stdout(&cli(&["run", "--config", "exp.toml", "--records", "3", "--out", "o"], dir.path()));
    let report: serde_json::Value = serde_json::from_slice(&read(dir.path().join("o/report.json"))).unwrap();
    assert_eq!(report["workload"]["records"], 3);
    assert_eq!(report["seed"], 1);
    assert_eq!(report["variants"][0]["faults"]["F1"], 1);
}

#[test]
fn errors_are_one_line_and_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "seed = \"x\"\n").unwrap();
    std::fs::write(dir.path().join("ghost.toml"), "[faults]\nspecs = [{ scenario = \"F1\", target = \"ghost\", probability = 0.5 }]\n").unwrap();
    let cases: [(&[&str], &str); 5] = [
        (&["run", "--sampling", "1.5"], "error: usage: "),
        (&["run", "--variant", "xray"], "error: usage: "),
        (&["run", "--config", "missing.toml"], "error: io: "),
        (&["run", "--config", "bad.toml"], "error: config: "),
        (&["run", "--config", "ghost.toml"], "error: validation: "),
    ];
    for (args, prefix) in cases {
        let o = cli(args, dir.path());
        assert!(!o.status.success(), "{args:?}");
        let err = String::from_utf8(o.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with(prefix), "{args:?}: {err}");
    }
}
