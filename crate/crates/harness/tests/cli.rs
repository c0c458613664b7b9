use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_selectcond"));
    c.env_remove("SELECTCOND_SEED");
    c
}

fn run_with_stdin(args: &[&str], stdin: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn write_config(dir: &Path, doc: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, doc).unwrap();
    path.to_string_lossy().into_owned()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

const SMALL: &str = r#"{"scenario": "winners-compare", "seed": 4,
    "params": {"theta": [0, 0.5, 1], "level": 0.9, "n_reps": 40}}"#;

#[test]
fn simulate_writes_tables_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["--out", out_dir.to_str().unwrap(), "simulate", &cfg])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&out);
    assert_eq!(summary["n_reps"], 40);
    for f in [
        "winners-compare-full-vector.csv",
        "winners-compare-conditional-on-losers.csv",
        "winners-compare-summary.json",
    ] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(out_dir.join("winners-compare-full-vector.csv")).unwrap();
    assert!(csv.starts_with("rep,estimate,lo,hi,covered,length,pvalue,flags\n"));
    assert_eq!(csv.lines().count(), 41);
}

#[test]
fn seed_flag_overrides_environment_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let read = |args: &[&str], env: Option<&str>, sub: &str| {
        let out_dir = dir.path().join(sub);
        let mut c = bin();
        if let Some(s) = env {
            c.env("SELECTCOND_SEED", s);
        }
        let out = c
            .args(["--out", out_dir.to_str().unwrap()])
            .args(args)
            .args(["simulate", &cfg])
            .output()
            .unwrap();
        assert!(out.status.success());
        json(&out)["seed"].as_u64().unwrap()
    };
    assert_eq!(read(&[], None, "a"), 4);
    assert_eq!(read(&[], Some("11"), "b"), 11);
    assert_eq!(read(&["--seed", "12"], Some("11"), "c"), 12);
}

#[test]
fn output_is_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (jobs, out_dir) in [("1", &a), ("3", &b)] {
        let out = bin()
            .args(["--jobs", jobs, "--out", out_dir.to_str().unwrap(), "simulate", &cfg])
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    for f in [
        "winners-compare-full-vector.csv",
        "winners-compare-conditional-on-losers.csv",
    ] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cases = [
        r#"{"scenario": "winners-compare", "params": {"theta": [0, 1], "level": 0.9, "n_reps": 5, "thta": 1}}"#,
        r#"{"scenario": "winners-compare", "params": {"theta": [0, 1], "level": 1.5, "n_reps": 5}}"#,
        r#"{"scenario": "no-such-scenario", "params": {}}"#,
        r#"{"scenario": "location-coverage", "params": {"family": "cauchy", "n": 3, "theta": 0, "alpha": 0.1, "level": 0.9, "n_reps": 5}}"#,
        "not json",
    ];
    for doc in cases {
        let cfg = write_config(dir.path(), doc);
        let out = bin()
            .args(["--out", out_dir.to_str().unwrap(), "simulate", &cfg])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(1), "{doc}");
    }
    let out = bin().args(["simulate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["--jobs", "many", "simulate", "x.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn check_ancillarity_passes_and_reports_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args([
            "--out",
            out_dir.to_str().unwrap(),
            "check-ancillarity",
            "--audits",
            "50",
            "--counterexample",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&out);
    assert_eq!(s["audit"]["g_preserved"], 50);
    assert_eq!(s["counterexample"]["outcome"], "broken");
    assert!(s["counterexample"]["witness"].is_array());
    assert!(out_dir.join("ancillarity-audit-summary.json").exists());
}

#[test]
fn infer_winners_from_stdin() {
    let out = run_with_stdin(&["--level", "0.8", "infer", "winners"], "y\n2.1, 0.3\n-0.4 1.0\n");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    let (lo, hi) = (r["ci"]["lower"].as_f64(), r["ci"]["upper"].as_f64().unwrap());
    assert!(hi > 1.0);
    if let Some(lo) = lo {
        assert!(lo < hi);
    }
    assert_eq!(r["model_kind"].as_str().map(|s| s.contains("losers")), Some(true));
}

#[test]
fn infer_subcommands_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("y.csv");
    std::fs::write(&data, "1.9\n2.4\n1.2\n2.8\n1.6\n").unwrap();
    let input = data.to_str().unwrap();
    let loc = bin()
        .args([
            "infer", "location", "--family", "logistic", "--alpha", "0.1", "--input", input,
        ])
        .output()
        .unwrap();
    assert!(loc.status.success(), "{}", String::from_utf8_lossy(&loc.stderr));
    assert!(json(&loc)["pvalue"].as_f64().unwrap() <= 0.1);

    let mean = bin()
        .args(["infer", "mean", "--threshold", "0.5", "--input", input])
        .output()
        .unwrap();
    assert!(mean.status.success());
    assert!(json(&mean)["estimate"].as_f64().is_some());

    let ts = bin()
        .args([
            "infer",
            "two-stage",
            "--n1",
            "2",
            "--threshold",
            "1.0",
            "--prior-support",
            "2,4",
            "--input",
            input,
        ])
        .output()
        .unwrap();
    assert!(ts.status.success(), "{}", String::from_utf8_lossy(&ts.stderr));
    let v = json(&ts);
    assert!(v["conditional"]["ci"]["upper"].as_f64().is_some());
    assert!(v["unconditional"].is_object());

    let design = dir.path().join("x.csv");
    std::fs::write(&design, "1 0.2\n0.3 1\n-0.5 0.4\n0.1 -0.7\n0.2 0.2\n").unwrap();
    let scr = bin()
        .args([
            "infer",
            "screening",
            "--design",
            design.to_str().unwrap(),
            "--threshold",
            "1",
            "--input",
            input,
        ])
        .output()
        .unwrap();
    assert!(scr.status.success(), "{}", String::from_utf8_lossy(&scr.stderr));
    assert!(json(&scr).as_array().is_some_and(|a| !a.is_empty()));
}

#[test]
fn infer_rejects_data_outside_the_selection_event() {
    // the sample mean 0.1 is below the selection threshold
    let out = run_with_stdin(&["infer", "mean", "--threshold", "1.0"], "0.1\n0.1\n");
    assert_eq!(out.status.code(), Some(1));
    let out = run_with_stdin(&["infer", "winners"], "1.0\nabc\n");
    assert_eq!(out.status.code(), Some(1));
}
