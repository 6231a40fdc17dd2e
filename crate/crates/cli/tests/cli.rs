use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn provlabel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_provlabel")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_reports_cycles_of_the_running_example() {
    let out = provlabel(&["analyze", "--grammar", s(&fixture("running.json"))]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["recursion_class"], "strictly_linear");
    assert_eq!(v["safe"], true);
    assert_eq!(v["cycles"], serde_json::json!([[[2, 2], [4, 2]], [[6, 2]]]));
    assert_eq!(v["lambda_star"]["S"], serde_json::json!([[1, 1, 0], [0, 1, 1]]));
}

#[test]
fn unsafe_grammar_exits_three_with_a_witness() {
    let out = provlabel(&["analyze", "--grammar", s(&fixture("unsafe_choice.json"))]);
    assert_eq!(out.status.code(), Some(3));
    let v = json(&out);
    assert_eq!(v["safe"], false);
    assert_eq!(v["witness"]["production"], 2);
}

#[test]
fn labeling_a_linear_but_not_strict_grammar_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = provlabel(&[
        "label-view",
        "--grammar",
        s(&fixture("self_loops.json")),
        "--out",
        s(&dir.path().join("v.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not strictly linear"));
}

#[test]
fn bad_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"modules\": []").unwrap();
    assert_eq!(provlabel(&["analyze", "--grammar", s(&bad)]).status.code(), Some(2));
    assert_eq!(provlabel(&["validate", "--grammar", s(&dir.path().join("missing.json"))]).status.code(), Some(2));
}

#[test]
fn validate_accepts_every_fixture_grammar() {
    for f in ["white_grey.json", "running.json", "unsafe_choice.json", "self_loops.json"] {
        let out = provlabel(&["validate", "--grammar", s(&fixture(f))]);
        assert_eq!(out.status.code(), Some(0), "{f}");
        assert_eq!(json(&out)["valid"], true);
    }
}

#[test]
fn label_then_query_agrees_with_oracle_check() {
    let dir = tempfile::tempdir().unwrap();
    let g = fixture("white_grey.json");
    let log = fixture("white_grey_run.jsonl");
    let labels = dir.path().join("r.labels");
    let out = provlabel(&["label-run", "--grammar", s(&g), "--log", s(&log), "--out", s(&labels)]);
    assert_eq!(out.status.code(), Some(0));
    for (view, expected) in [("white_grey_view_white.json", 1), ("white_grey_view_grey.json", 0)] {
        for variant in ["default", "space", "query"] {
            let vl = dir.path().join(format!("{variant}.vlabel"));
            let out = provlabel(&[
                "label-view",
                "--grammar",
                s(&g),
                "--view",
                s(&fixture(view)),
                "--variant",
                variant,
                "--out",
                s(&vl),
            ]);
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
            // Item 2 enters the second start input; item 3 leaves the first output.
            let out = provlabel(&["query", "--grammar", s(&g), "--run", s(&labels), "--view", s(&vl), "--from", "d2", "--to", "d3"]);
            assert_eq!(out.status.code(), Some(expected), "{view} {variant}");
            assert_eq!(json(&out)["reachable"], expected == 0);
        }
        let out = provlabel(&["oracle-check", "--grammar", s(&g), "--log", s(&log), "--view", s(&fixture(view))]);
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(json(&out)["mismatches"], serde_json::json!([]));
    }
}

#[test]
fn query_on_hidden_item_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let g = fixture("white_grey.json");
    let labels = dir.path().join("r.labels");
    let vl = dir.path().join("v.vlabel");
    provlabel(&["label-run", "--grammar", s(&g), "--log", s(&fixture("white_grey_run.jsonl")), "--out", s(&labels)]);
    provlabel(&["label-view", "--grammar", s(&g), "--view", s(&fixture("white_grey_view_grey.json")), "--out", s(&vl)]);
    // Item 5 is the edge inside the start production, hidden when S is not expandable.
    let out = provlabel(&["query", "--grammar", s(&g), "--run", s(&labels), "--view", s(&vl), "--from", "d5", "--to", "d3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = provlabel(&["query", "--grammar", s(&g), "--run", s(&labels), "--view", s(&vl), "--from", "d99", "--to", "d3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generated_files_round_trip_through_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    let out = provlabel(&["generate", "--out-dir", s(&gen), "--seed", "5", "--items", "600", "--view-size", "5", "--grey"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let again = dir.path().join("again");
    provlabel(&["generate", "--out-dir", s(&again), "--seed", "5", "--items", "600", "--view-size", "5", "--grey"]);
    for f in ["grammar.json", "view.json", "run.jsonl"] {
        assert_eq!(std::fs::read(gen.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
    let g = gen.join("grammar.json");
    let out = provlabel(&["derive", "--grammar", s(&g), "--log", s(&gen.join("run.jsonl"))]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["items"].as_u64().unwrap() > 0);
    let out = provlabel(&[
        "oracle-check",
        "--grammar",
        s(&g),
        "--log",
        s(&gen.join("run.jsonl")),
        "--view",
        s(&gen.join("view.json")),
        "--pairs",
        "2000",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["pairs_checked"], 6000);
    assert_eq!(json(&out)["mismatches"], serde_json::json!([]));
}

#[test]
fn derive_writes_a_replayable_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("run.jsonl");
    let g = fixture("running.json");
    let out = provlabel(&["derive", "--grammar", s(&g), "--items", "300", "--seed", "3", "--out", s(&log)]);
    assert_eq!(out.status.code(), Some(0));
    let first = json(&out);
    let out = provlabel(&["derive", "--grammar", s(&g), "--log", s(&log)]);
    assert_eq!(json(&out), first);
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn bench_smoke_writes_every_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_provlabel"))
        .env("PROVLABEL_THREADS", "2")
        .args([
            "bench",
            "--out-dir",
            s(dir.path()),
            "--sizes",
            "1000",
            "--reps",
            "1",
            "--queries",
            "2000",
            "--sweep-depths",
            "2",
            "--sweep-degrees",
            "3",
            "--sweep-items",
            "500",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let header = "nesting_depth,module_degree,view_size,n,rep,seed,variant,metric,value";
    for f in ["label_length.csv", "label_time.csv", "view_label_size.csv", "query_time.csv", "factor_sweep.csv"] {
        let rows = read_csv(&dir.path().join(f));
        assert_eq!(rows[0].join(","), header, "{f}");
        assert!(rows.len() > 1, "{f}");
    }
    assert_eq!(read_csv(&dir.path().join("label_length.csv")).len(), 3);
    // Three metrics per variant.
    assert_eq!(read_csv(&dir.path().join("query_time.csv")).len(), 1 + 9);
}

#[test]
fn bench_is_reproducible_apart_from_timings() {
    let run = |dir: &Path| {
        let out = provlabel(&[
            "bench",
            "--out-dir",
            s(dir),
            "--sizes",
            "1000,2000",
            "--reps",
            "3",
            "--queries",
            "1000",
            "--sweep-depths",
            "1,2,3,4",
            "--sweep-degrees",
            "--sweep-items",
            "2000",
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(a.path());
    run(b.path());
    for f in ["label_length.csv", "factor_sweep.csv"] {
        assert_eq!(read_csv(&a.path().join(f)), read_csv(&b.path().join(f)), "{f}");
    }
    // Mean label length grows with nesting depth.
    let rows = read_csv(&a.path().join("factor_sweep.csv"));
    let mut by_depth = std::collections::BTreeMap::<usize, Vec<f64>>::new();
    for r in rows.iter().skip(1).filter(|r| r[7] == "avg_label_bits") {
        by_depth.entry(r[0].parse().unwrap()).or_default().push(r[8].parse().unwrap());
    }
    let means: Vec<f64> = by_depth.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    assert_eq!(means.len(), 4);
    assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
}
