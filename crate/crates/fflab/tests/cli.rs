//! End-to-end runs of the `fflab` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fflab::io::read_edge_list;
use fflab_core::graph::{generate, TopologySpec};
use serde_json::Value;

fn fflab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fflab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(args: &[&str]) -> Value {
    let out = fflab(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/two_firefighters.json")
}

#[test]
fn bounds_tree_budget_is_two() {
    let r = report(&[
        "bounds",
        "--topology",
        "tree",
        "--d",
        "3",
        "--p",
        "1",
        "--i0",
        "1",
        "--theta",
        "inf",
    ]);
    assert_eq!(r["command"], "bounds");
    assert_eq!(r["results"]["b_upper"], 2.0);
    assert_eq!(r["results"]["b_lower"], 2.0);
}

#[test]
fn simulate_two_firefighters_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let policy = format!("scripted:{}", fixture().display());
    let out = dir.path().to_str().unwrap();
    let r = report(&[
        "simulate",
        "--generator",
        "grid:2:32",
        "--p",
        "1",
        "--b",
        "2",
        "--policy",
        &policy,
        "--i0",
        "center",
        "--out",
        out,
    ]);
    assert_eq!(r["results"]["first_run"]["final_infected"], 18);
    assert_eq!(r["results"]["first_run"]["steps"], 8);
    for file in ["report.json", "trajectory.csv", "runs.csv"] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
    let saved: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(saved["schema_version"], 1);
    assert_eq!(saved["results"], r["results"]);
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,infected,vaccinated,budget"));
    assert_eq!(csv.lines().count(), 1 + 9);
}

#[test]
fn gen_graph_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.edges");
    report(&[
        "gen-graph",
        "--generator",
        "er:100:0.1:7",
        "--out",
        path.to_str().unwrap(),
    ]);
    let loaded = read_edge_list(&path).unwrap();
    let expected = generate(&TopologySpec::ErdosRenyi {
        n: 100,
        s: 0.1,
        seed: 7,
    })
    .unwrap();
    assert_eq!(loaded.node_count(), expected.node_count());
    assert_eq!(
        loaded.edges().collect::<Vec<_>>(),
        expected.edges().collect::<Vec<_>>()
    );
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| fflab(args).status.code();
    assert_eq!(
        code(&[
            "bounds",
            "--topology",
            "tree",
            "--d",
            "3",
            "--p",
            "0.5",
            "--i0",
            "1"
        ]),
        Some(0)
    );
    assert_eq!(
        code(&[
            "bounds",
            "--topology",
            "tree",
            "--d",
            "3",
            "--p",
            "2",
            "--i0",
            "1"
        ]),
        Some(2)
    );
    assert_eq!(code(&["bounds", "--no-such-flag"]), Some(2));
    assert_eq!(code(&["no-such-command"]), Some(2));
    assert_eq!(
        code(&[
            "simulate",
            "--graph",
            "/nonexistent/g.edges",
            "--p",
            "0.5",
            "--b",
            "1",
            "--i0",
            "0"
        ]),
        Some(2)
    );
    // 25 nodes exceed the default oracle cap: a runtime failure.
    assert_eq!(
        code(&[
            "oracle",
            "--generator",
            "grid:2:5",
            "--p",
            "0.5",
            "--b",
            "1",
            "--i0",
            "center"
        ]),
        Some(1)
    );
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    std::fs::write(
        &config,
        r#"{"bounds": {"topology": "tree", "d": 3, "p": 0.5, "i0": 1}}"#,
    )
    .unwrap();
    let cfg = config.to_str().unwrap();
    let from_file = report(&["bounds", "--config", cfg]);
    assert_eq!(from_file["config"]["p"], 0.5);
    let overridden = report(&["bounds", "--config", cfg, "--p", "1"]);
    assert_eq!(overridden["config"]["p"], 1.0);
    assert_eq!(overridden["config"]["d"], 3);
    assert_eq!(overridden["results"]["b_upper"], 2.0);

    std::fs::write(
        &config,
        r#"{"topology": "tree", "d": 3, "p": 1, "i0": 1, "bogus": 1}"#,
    )
    .unwrap();
    assert_eq!(fflab(&["bounds", "--config", cfg]).status.code(), Some(2));
}

#[test]
fn same_seed_reproduces_stochastic_output() {
    let args = [
        "simulate",
        "--generator",
        "er:60:0.08:3",
        "--p",
        "0.4",
        "--b",
        "1",
        "--policy",
        "random",
        "--i0",
        "random:3",
        "--runs",
        "50",
        "--seed",
        "9",
    ];
    let (a, b) = (report(&args), report(&args));
    assert_eq!(a["results"], b["results"]);
    assert_eq!(a["config"], b["config"]);

    // The config echo alone reproduces the run.
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("echo.json");
    std::fs::write(&config, a["config"].to_string()).unwrap();
    let c = report(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(a["results"], c["results"]);
}

#[test]
fn budget_compare_emits_series_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let r = report(&[
        "budget-compare",
        "--generator",
        "ba:150:2:4",
        "--p",
        "0.1",
        "--policy",
        "cut",
        "--lb-type",
        "both",
        "--trajectories",
        "30",
        "--samples",
        "2",
        "--runs",
        "2",
        "--i0-size",
        "5",
        "--seed",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let summary = &r["results"]["summary"];
    assert!(summary["b_global"].as_f64().unwrap() >= 0.0);
    assert_eq!(summary["adaptive"].as_array().unwrap().len(), 2);
    let series = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert_eq!(
        series.lines().next(),
        Some("sample,run,strategy,t,infected,budget")
    );
    assert!(dir.path().join("report.json").exists());
}
