use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn problem(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../problems/{name}"))
}

fn restoration(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_restoration"))
        .args(args)
        .env_remove("RESTORATION_MAX_STATES")
        .output()
        .unwrap()
}

fn json(output: &Output) -> Value {
    serde_json::from_slice(&output.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}{}", String::from_utf8_lossy(&output.stdout), String::from_utf8_lossy(&output.stderr))
    })
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_prints_config_and_result() {
    let out = restoration(&["solve", path(&problem("six_bus_midway.json")), "--flags", "-"]);
    assert!(out.status.success());
    let doc = json(&out);
    assert_eq!(doc["config"]["command"], "solve");
    assert_eq!(doc["config"]["flags"], "-");
    assert_eq!(doc["result"]["initial_commands"], serde_json::json!(["2", "C"]));
    assert_eq!(doc["result"]["states"], 4);
}

#[test]
fn invalid_documents_exit_with_status_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"buses": [{"id": 1, "pf": 0.5}, {"id": 2, "pf": 1.5}], "branches": [[1, 2]],
            "sources": [1], "teams": [{"start": 1}], "travel": {"divisor": 1.0}}"#,
    )
    .unwrap();
    let out = restoration(&["solve", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside [0, 1]"));

    let out = restoration(&["solve", path(&problem("six_bus.json")), "--flags", "SPX"]);
    assert_eq!(out.status.code(), Some(2));
    let out = restoration(&["solve", path(&problem("six_bus.json")), "--horizon", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn state_cap_exits_with_status_3() {
    let out = restoration(&["solve", path(&problem("nine_bus.json")), "--max-states", "1000"]);
    assert_eq!(out.status.code(), Some(3));
    let out = Command::new(env!("CARGO_BIN_EXE_restoration"))
        .args(["solve", path(&problem("nine_bus.json"))])
        .env("RESTORATION_MAX_STATES", "1000")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn benchmark_writes_one_row_per_subset() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("bench.csv");
    let out = restoration(&[
        "benchmark",
        path(&problem("six_bus.json")),
        "--repeats",
        "2",
        "--output",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let headers = reader.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 15);
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    assert!(rows.iter().all(|r| &r[col("value_matches")] == "true"));
    let horizons: Vec<&str> = rows.iter().map(|r| &r[col("horizon")]).collect();
    assert!(horizons.iter().all(|h| *h == horizons[0]));
    assert_eq!(&rows[0][col("flags")], "-");
    assert_eq!(&rows[14][col("flags")], "S+P+O+W");
}

#[test]
fn benchmark_accepts_a_subset_list() {
    let out = restoration(&["benchmark", path(&problem("six_bus.json")), "--subsets", "P,O", "--repeats", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let flags: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(flags, ["P", "O"]);
}

#[test]
fn study_reports_monotone_team_variants() {
    let out = restoration(&[
        "study",
        path(&problem("six_bus.json")),
        "--kind",
        "teams",
        "--variants",
        path(&problem("studies/six_bus_teams.json")),
    ]);
    assert!(out.status.success());
    let doc = json(&out);
    let result = &doc["result"];
    assert_eq!(result["variants"].as_array().unwrap().len(), 3);
    assert!(result["monotonicity"].as_array().unwrap().iter().all(|n| n["holds"] == true));
    assert_eq!(doc["config"]["problem"], "six-bus");
}

#[test]
fn partition_uses_document_groups() {
    let out = restoration(&["partition", path(&problem("two_districts.json")), "--horizon", "64"]);
    assert!(out.status.success());
    let report = &json(&out)["result"];
    assert_eq!(report["groups"].as_array().unwrap().len(), 2);
    assert_eq!(report["severed_branches"], serde_json::json!([]));

    let dir = tempfile::tempdir().unwrap();
    let groups = dir.path().join("groups.json");
    std::fs::write(
        &groups,
        r#"[{"name": "west", "buses": [1, 2, 3], "teams": [1]},
            {"name": "east", "buses": [4, 5, 6, 7, 8], "teams": [5]}]"#,
    )
    .unwrap();
    let out = restoration(&["partition", path(&problem("two_districts.json")), "--groups", groups.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(json(&out)["result"]["severed_branches"], serde_json::json!([[2, 4]]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));

    std::fs::write(&groups, r#"[{"name": "all", "buses": [1, 2, 3], "teams": [1]}]"#).unwrap();
    let out = restoration(&["partition", path(&problem("two_districts.json")), "--groups", groups.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn export_writes_model_and_policy() {
    let dir = tempfile::tempdir().unwrap();
    let mdp_path = dir.path().join("mdp.json");
    let out = restoration(&[
        "export",
        path(&problem("six_bus.json")),
        "--what",
        "mdp",
        "--flags",
        "SPOW",
        "-o",
        mdp_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&mdp_path).unwrap()).unwrap();
    assert_eq!(doc["result"]["states"].as_array().unwrap().len(), 25);

    let out = restoration(&["export", path(&problem("six_bus.json")), "--what", "policy"]);
    assert!(out.status.success());
    let policy = json(&out);
    assert_eq!(policy["result"]["states"].as_array().unwrap().len(), 25);
}

#[test]
fn verify_passes_on_small_instances() {
    let out = restoration(&["verify", "--seeds", "20", "--max-buses", "5"]);
    assert!(out.status.success());
    let report = &json(&out)["result"];
    assert_eq!(report["comparisons"], 300);
    assert_eq!(report["mismatches"], serde_json::json!([]));
}
