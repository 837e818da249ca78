//! End-to-end checks of the command-line binary: determinism, exit codes,
//! file contracts, and round-trips between commands.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bang::graph::{GraphJson, MixedGraph};

fn bang(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bang"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_graph(path: &Path) -> MixedGraph {
    let json: GraphJson = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    MixedGraph::from_json(&json).unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let status = bang(&[
            "simulate",
            "--named",
            "example",
            "--family",
            "t13",
            "--n",
            "500",
            "--seed",
            "99",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(status.status.success());
    }
    assert_eq!(
        fs::read(a.join("data.csv")).unwrap(),
        fs::read(b.join("data.csv")).unwrap(),
        "same seed must give byte-identical data"
    );
}

#[test]
fn simulate_then_discover_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let disc = dir.path().join("disc");
    assert!(bang(&[
        "simulate", "--named", "collider", "--family", "gamma", "--n", "60000", "--seed", "5",
        "--out", sim.to_str().unwrap(),
    ])
    .status
    .success());
    let out = bang(&[
        "discover",
        sim.join("data.csv").to_str().unwrap(),
        "--k",
        "3",
        "--alpha",
        "0.001",
        "--symmetric",
        "--out",
        disc.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // every emitted graph re-reads as a valid mixed graph
    let est = read_graph(&disc.join("graph.json"));
    assert!(est.validate().is_empty());
    let dot = fs::read_to_string(disc.join("graph.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
    assert!(disc.join("audit.jsonl").exists());
    assert!(disc.join("config.json").exists());
    // three vertices, as in the input data
    assert_eq!(est.p(), 3);
}

#[test]
fn discover_rejects_bad_input_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ragged.csv");
    fs::write(&csv, "y0,y1\n1.0,2.0\n3.0\n").unwrap();
    let out = bang(&["discover", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let missing = dir.path().join("nope.csv");
    let out = bang(&["discover", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let text = dir.path().join("text.csv");
    fs::write(&text, "y0,y1\n1.0,abc\n2.0,3.0\n").unwrap();
    let out = bang(&["discover", text.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn discover_rejects_degenerate_data_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // constant column
    let csv = dir.path().join("const.csv");
    let mut text = String::from("y0,y1\n");
    for i in 0..50 {
        text.push_str(&format!("{}.5,7.0\n", i));
    }
    fs::write(&csv, text).unwrap();
    let out = bang(&["discover", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    // too few rows
    let small = dir.path().join("small.csv");
    fs::write(&small, "y0,y1,y2\n1.0,2.0,3.0\n2.0,1.0,0.5\n").unwrap();
    let out = bang(&["discover", small.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn oracle_suite_rejects_lognormal_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = bang(&[
        "oracle-suite",
        "--preset",
        "sparse",
        "--family",
        "lognormal",
        "--reps",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr).to_lowercase();
    assert!(msg.contains("lognormal"), "unhelpful error: {msg}");
}

#[test]
fn benchmark_zero_reps_emits_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = bang(&[
        "benchmark", "--preset", "sparse", "--reps", "0", "--n-grid", "1000", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("setting,replicate,n,"));
}

#[test]
fn benchmark_results_are_worker_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let (one, four) = (dir.path().join("w1"), dir.path().join("w4"));
    for (out, workers) in [(&one, "1"), (&four, "4")] {
        let result = bang(&[
            "benchmark",
            "--p",
            "4",
            "--d",
            "3",
            "--b",
            "1",
            "--reps",
            "6",
            "--n-grid",
            "800",
            "--workers",
            workers,
            "--seed",
            "13",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success());
    }
    // compare everything except the timing column
    let strip = |path: &Path| -> Vec<String> {
        fs::read_to_string(path.join("results.csv"))
            .unwrap()
            .lines()
            .map(|line| line.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(strip(&one), strip(&four), "replicate streams must not depend on the worker count");
}

#[test]
fn benchmark_summary_recomputes_from_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = bang(&[
        "benchmark", "--p", "4", "--d", "2", "--b", "1", "--reps", "8", "--n-grid", "600,1200",
        "--seed", "3", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let mut reader = csv::Reader::from_path(dir.path().join("results.csv")).unwrap();
    let records: Vec<bang::cli::BenchmarkRecord> =
        reader.deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(records.len(), 16);
    for rec in &records {
        assert!(rec.pairwise_correct <= rec.pairwise_total);
        assert_eq!(rec.pairwise_total, 4 * 3 / 2);
    }
    let recomputed = bang::cli::summarize(&records);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    let emitted: Vec<bang::cli::NSummary> =
        serde_json::from_value(summary["per_n"].clone()).unwrap();
    assert_eq!(recomputed, emitted);
}

#[test]
fn one_indexed_graphs_roundtrip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = bang(&[
        "simulate", "--named", "example", "--n", "10", "--one-indexed", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let json: GraphJson =
        serde_json::from_str(&fs::read_to_string(dir.path().join("truth.json")).unwrap()).unwrap();
    assert!(json.one_indexed);
    // smallest vertex label in the file is 1
    let min = json
        .directed
        .iter()
        .chain(json.bidirected.iter())
        .flat_map(|&[u, v]| [u, v])
        .min()
        .unwrap();
    assert_eq!(min, 1);
    assert_eq!(read_graph(&dir.path().join("truth.json")), bang::graph::example_bap());
}

#[test]
fn shuffle_labels_emits_a_valid_permuted_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = bang(&[
        "simulate", "--named", "pruning", "--n", "10", "--shuffle-labels", "--seed", "4",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let truth = read_graph(&dir.path().join("truth.json"));
    assert!(truth.validate().is_empty());
    assert_eq!(truth.num_directed(), 4);
    assert_eq!(truth.num_bidirected(), 0);
}

#[test]
fn simulate_rejects_invalid_graph_file_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    // a bow: both a directed and a bidirected edge on the same pair
    fs::write(
        &bad,
        r#"{"p": 2, "directed": [[0, 1]], "bidirected": [[0, 1]], "one_indexed": false}"#,
    )
    .unwrap();
    let out = bang(&[
        "simulate", "--graph", bad.to_str().unwrap(), "--n", "10", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_suite_reports_perfect_recovery_on_fixed_graph() {
    let dir = tempfile::tempdir().unwrap();
    let out = bang(&[
        "oracle-suite", "--fixed-graph", "example", "--reps", "25", "--max-degree", "3",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["recovery_rate"], 1.0);
    assert!(report["max_test_count"].as_u64().unwrap() > 0);
    assert_eq!(report["max_degree"], 3);
}
