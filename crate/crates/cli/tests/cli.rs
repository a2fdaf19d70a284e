use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use brood::bge::{BgeScore, DataSet};
use brood::graph::{Dag, SearchSpace};
use brood::tables::TableSet;
use tempfile::TempDir;

fn brood(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brood"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = brood(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["synth", "--out", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
    dir.to_path_buf()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn default_synth_writes_two_hundred_by_twenty() {
    let tmp = TempDir::new().unwrap();
    let dir = synth(tmp.path(), &[]);
    let csv = fs::read_to_string(dir.join("data.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 201);
    assert!(lines.iter().all(|l| l.split(',').count() == 20));
    for f in ["truth.json", "weights.csv", "spec-echo.json"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    let spec = json(&dir.join("spec-echo.json"));
    assert_eq!(spec["graph"]["model"], "er");
    assert_eq!(spec["n"], 200);
}

#[test]
fn synth_is_byte_stable_under_a_seed() {
    let tmp = TempDir::new().unwrap();
    let a = synth(
        &tmp.path().join("a"),
        &["--seed", "11", "--graph", "hsbm", "--errors", "mixture"],
    );
    let b = synth(
        &tmp.path().join("b"),
        &["--seed", "11", "--graph", "hsbm", "--errors", "mixture"],
    );
    let c = synth(
        &tmp.path().join("c"),
        &["--seed", "12", "--graph", "hsbm", "--errors", "mixture"],
    );
    for f in ["data.csv", "truth.json", "weights.csv", "spec-echo.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        fs::read(a.join("data.csv")).unwrap(),
        fs::read(c.join("data.csv")).unwrap()
    );
}

#[test]
fn infer_is_reproducible_and_reports_counters() {
    let tmp = TempDir::new().unwrap();
    let data = synth(
        &tmp.path().join("s"),
        &["--p", "8", "--n", "80", "--seed", "2"],
    )
    .join("data.csv");
    let run = |name: &str| {
        let out = tmp.path().join(name);
        ok(&[
            "infer",
            "--data",
            s(&data),
            "--out",
            s(&out),
            "--steps",
            "400",
            "--warmup",
            "40",
            "--seed",
            "5",
            "--chains",
            "2",
        ]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in [
        "trace-0.jsonl",
        "trace-1.jsonl",
        "config-echo.json",
        "initial-space.json",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        fs::read(a.join("trace-0.jsonl")).unwrap(),
        fs::read(a.join("trace-1.jsonl")).unwrap()
    );
    let summary = json(&a.join("summary.json"));
    let chains = summary["chains"].as_array().unwrap();
    assert_eq!(chains.len(), 2);
    for c in chains {
        let proposed = c["q0_proposed"].as_u64().unwrap() + c["q1_proposed"].as_u64().unwrap();
        assert_eq!(proposed, 440);
        assert_eq!(c["kept"], 400);
    }
    let echo = json(&a.join("config-echo.json"));
    assert_eq!(echo["config"]["ell"], 0.1);
    assert_eq!(echo["config"]["c_star"], 1.0);
    assert_eq!(echo["config"]["cap"], 12);
}

#[test]
fn fixed_space_run_never_moves_the_space() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp.path().join("s"), &["--p", "6", "--n", "60"]).join("data.csv");
    let out = tmp.path().join("i");
    ok(&[
        "infer",
        "--data",
        s(&data),
        "--out",
        s(&out),
        "--ell",
        "0",
        "--steps",
        "300",
        "--warmup",
        "10",
    ]);
    let summary = json(&out.join("summary.json"));
    let c = &summary["chains"][0];
    assert_eq!(c["q1_proposed"], 0);
    assert_eq!(c["births"], 0);
    assert_eq!(c["final_space_edges"], summary["initial_space_edges"]);
    let h0 = SearchSpace::from_json(&fs::read_to_string(out.join("initial-space.json")).unwrap())
        .unwrap();
    for line in fs::read_to_string(out.join("trace.jsonl")).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let h = SearchSpace::from_json(&v["space"].to_string()).unwrap();
        assert_eq!(h.edges(), h0.edges());
    }
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp.path().join("s"), &["--p", "5", "--n", "50"]).join("data.csv");
    let cfg = tmp.path().join("run.toml");
    let out = tmp.path().join("i");
    fs::write(
        &cfg,
        format!(
            "seed = 9\nout = {:?}\ndata = {:?}\n[chain]\nell = 0.3\nsteps = 120\nwarmup = 20\nthin = 4\n",
            s(&out),
            s(&data)
        ),
    )
    .unwrap();
    ok(&["infer", "--config", s(&cfg), "--ell", "0.2"]);
    let echo = json(&out.join("config-echo.json"));
    assert_eq!(echo["config"]["ell"], 0.2);
    assert_eq!(echo["config"]["steps"], 120);
    assert_eq!(echo["config"]["seed"], 9);
    assert_eq!(
        fs::read_to_string(out.join("trace.jsonl"))
            .unwrap()
            .lines()
            .count(),
        30
    );
}

#[test]
fn validation_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let data = synth(
        &tmp.path().join("s"),
        &["--p", "6", "--n", "60", "--seed", "4"],
    )
    .join("data.csv");
    let space = tmp.path().join("space.json");
    fs::write(&space, r#"{"p":6,"edges":[[1,0],[2,0],[3,0]]}"#).unwrap();
    let init = format!("file:{}", s(&space));
    let out = brood(&[
        "infer",
        "--data",
        s(&data),
        "--init",
        &init,
        "--cap",
        "2",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("raise --cap"));
    for args in [
        vec!["infer", "--data", "missing.csv"],
        vec!["infer", "--data", s(&data), "--cstar", "0"],
        vec!["infer", "--data", s(&data), "--init", "ges"],
        vec!["oracle", "--data", s(&data)],
        vec!["synth", "--p", "0"],
    ] {
        let mut a = args.clone();
        a.extend(["--out", s(tmp.path())]);
        assert_eq!(brood(&a).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn runtime_errors_exit_with_three() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = brood(&["synth", "--p", "3", "--out", s(&blocker.join("sub"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn oracle_report_respects_the_bounds() {
    let tmp = TempDir::new().unwrap();
    let data = synth(
        &tmp.path().join("s"),
        &["--p", "3", "--n", "40", "--seed", "8"],
    )
    .join("data.csv");
    let space = tmp.path().join("space.json");
    fs::write(&space, r#"{"p":3,"edges":[[0,1],[1,2]]}"#).unwrap();
    let out = tmp.path().join("o");
    let init = format!("file:{}", s(&space));
    ok(&[
        "oracle",
        "--data",
        s(&data),
        "--init",
        &init,
        "--kernel",
        "--out",
        s(&out),
    ]);
    let doc = json(&out.join("oracle.json"));
    let r = &doc["report"];
    let (eps, tv) = (r["epsilon"].as_f64().unwrap(), r["tv"].as_f64().unwrap());
    let (lo, hi) = (r["lower"].as_f64().unwrap(), r["upper"].as_f64().unwrap());
    assert!(eps > 0.0);
    let c = r["c_const"].as_f64().unwrap();
    assert!((-1e-12..=1.0 + 1e-12).contains(&c));
    assert!(lo <= tv + 1e-12 && tv <= hi + 1e-12, "{lo} {tv} {hi}");
    let k = &doc["kernel"];
    assert_eq!(k["states"], 384);
    let total: f64 = k["spaces"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["stationary"].as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn perfect_trace_scores_one() {
    let tmp = TempDir::new().unwrap();
    let truth = Dag::from_edges(4, &[(0, 1), (1, 2), (0, 3)]).unwrap();
    let truth_path = tmp.path().join("truth.json");
    fs::write(&truth_path, truth.to_json()).unwrap();
    let space = SearchSpace::complete(4, None).unwrap();
    let sample = serde_json::json!({
        "step": 0,
        "space": serde_json::from_str::<serde_json::Value>(&space.to_json()).unwrap(),
        "order": [0, 1, 2, 3],
        "dag": serde_json::from_str::<serde_json::Value>(&truth.to_json()).unwrap(),
        "kernel": "Q0",
        "accepted": true,
        "log_score": -1.0,
    });
    let trace = tmp.path().join("trace.jsonl");
    fs::write(&trace, format!("{sample}\n{sample}\n")).unwrap();
    let out = tmp.path().join("e");
    for mode in ["directed", "skeleton"] {
        let o = ok(&[
            "eval",
            "--trace",
            s(&trace),
            "--truth",
            s(&truth_path),
            "--mode",
            mode,
            "--out",
            s(&out),
        ]);
        let row = String::from_utf8(o.stdout).unwrap();
        let cells: Vec<&str> = row.trim().split(',').collect();
        assert_eq!(cells[..6], ["2", mode, "1", "1", "1", "0"]);
    }
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("samples,mode,roc_auc,pr_auc,pr_plus,pr_minus,runtime_seconds\n"));
}

#[test]
fn eval_pools_traces_from_infer() {
    let tmp = TempDir::new().unwrap();
    let sdir = synth(
        &tmp.path().join("s"),
        &["--p", "6", "--n", "120", "--seed", "3"],
    );
    let out = tmp.path().join("i");
    ok(&[
        "infer",
        "--data",
        s(&sdir.join("data.csv")),
        "--out",
        s(&out),
        "--steps",
        "300",
        "--warmup",
        "30",
        "--chains",
        "2",
    ]);
    let e = tmp.path().join("e");
    let o = ok(&[
        "eval",
        "--trace",
        s(&out.join("trace-0.jsonl")),
        s(&out.join("trace-1.jsonl")),
        "--truth",
        s(&sdir.join("truth.json")),
        "--summary",
        s(&out.join("summary.json")),
        "--out",
        s(&e),
    ]);
    let row = String::from_utf8(o.stdout).unwrap();
    let cells: Vec<&str> = row.trim().split(',').collect();
    assert_eq!(cells[0], "600");
    let auc: f64 = cells[2].parse().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(cells[6].parse::<f64>().unwrap() > 0.0);
    let probs = fs::read_to_string(e.join("edge_probs.csv")).unwrap();
    assert_eq!(probs.lines().count(), 6);
}

#[test]
fn tables_dump_round_trips() {
    let tmp = TempDir::new().unwrap();
    let sdir = synth(
        &tmp.path().join("s"),
        &["--p", "6", "--n", "60", "--seed", "6"],
    );
    let out = tmp.path().join("t");
    ok(&[
        "tables",
        "--data",
        s(&sdir.join("data.csv")),
        "--cap",
        "3",
        "--out",
        s(&out),
    ]);
    let space =
        SearchSpace::from_json(&fs::read_to_string(out.join("space.json")).unwrap()).unwrap();
    let loaded = TableSet::from_json(
        &space,
        &fs::read_to_string(out.join("tables.json")).unwrap(),
    )
    .unwrap();
    let d = DataSet::from_csv(fs::File::open(sdir.join("data.csv")).unwrap(), true).unwrap();
    let fresh = TableSet::build(&space, &BgeScore::from_data(&d).unwrap()).unwrap();
    assert!(loaded.max_deviation(&fresh) <= 1e-12);
    assert!((0..6).all(|i| space.allowed(i).len() <= 3));
}
