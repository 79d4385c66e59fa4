use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_seizure-sim"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

/// A short four-channel recording with a planted rhythm on channel 0.
fn short_recording(dir: &Path) -> PathBuf {
    let cfg = write_config(
        dir,
        "short.json",
        r#"{"synth": {"duration_s": 300, "schedule": [
            {"start_s": 0, "end_s": 60, "state": "interictal"},
            {"start_s": 60, "end_s": 120, "state": "ictal"},
            {"start_s": 120, "end_s": 180, "state": "interictal"},
            {"start_s": 180, "end_s": 240, "state": "ictal"},
            {"start_s": 240, "end_s": 300, "state": "interictal"}]}}"#,
    );
    let out = run(
        dir,
        &[
            "synth",
            "--seed",
            "3",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "rec",
            "--no-timestamp",
        ],
    );
    assert!(out.status.success());
    dir.join("rec/recording.csv")
}

#[test]
fn synth_is_deterministic_and_manifested() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a", "b"] {
        let o = run(
            d,
            &[
                "synth",
                "--seed",
                "5",
                "--duration-s",
                "30",
                "--out",
                out,
                "--no-timestamp",
            ],
        );
        assert!(o.status.success());
    }
    for f in [
        "recording.csv",
        "recording.labels.json",
        "manifest.json",
        "config.json",
    ] {
        assert_eq!(
            std::fs::read(d.join("a").join(f)).unwrap(),
            std::fs::read(d.join("b").join(f)).unwrap(),
            "{f} differs"
        );
    }
    let m = json(d.join("a/manifest.json"));
    assert_eq!(m["command"], "synth");
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    let paths: Vec<&str> = m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["path"].as_str().unwrap())
        .collect();
    assert!(paths.contains(&"recording.csv"));
    assert!(m.get("created_unix_s").is_none());

    let o = run(
        d,
        &["synth", "--seed", "5", "--duration-s", "30", "--out", "c"],
    );
    assert!(o.status.success());
    assert!(json(d.join("c/manifest.json"))["created_unix_s"].is_u64());
}

#[test]
fn synth_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let empty = write_config(
        d,
        "empty.json",
        r#"{"seed": 1, "synth": {"duration_s": 10, "schedule": []}}"#,
    );
    let o = run(
        d,
        &["synth", "--config", empty.to_str().unwrap(), "--out", "e"],
    );
    assert!(o.status.success());
    assert_eq!(
        json(d.join("e/recording.labels.json")),
        Value::Array(vec![])
    );

    let bad = write_config(
        d,
        "bad.json",
        r#"{"seed": 1, "synth": {"channel_count": 0}}"#,
    );
    let o = run(
        d,
        &["synth", "--config", bad.to_str().unwrap(), "--out", "x"],
    );
    assert_eq!(o.status.code(), Some(1));

    let o = run(d, &["synth", "--out", "y"]);
    assert_eq!(o.status.code(), Some(1), "a seed is required");
    let o = run(d, &["synth", "--seed", "1", "--bogus-flag"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_detects_the_planted_member() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(
        d,
        &["synth", "--seed", "2", "--out", "rec", "--no-timestamp"],
    );
    assert!(o.status.success());
    let o = run(
        d,
        &[
            "eval",
            "rec/recording.csv",
            "--combo",
            "energy_mean:ch0",
            "--out",
            "ev",
            "--no-timestamp",
        ],
    );
    assert!(o.status.success());
    let report = json(d.join("ev/report.json"));
    assert!(report["j_statistic"].as_f64().unwrap() >= 0.9, "{report}");
    let csv = std::fs::read_to_string(d.join("ev/folds.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "feature,channel,fold,J,tp,fp,tn,fn"
    );
}

fn keys(v: &Value) -> Vec<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

#[test]
fn backend_flag_changes_only_the_backend_field() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let rec = short_recording(d);
    let r = rec.to_str().unwrap();
    let base = [
        "eval",
        r,
        "--combo",
        "energy_mean:0,line_length:1",
        "--seed",
        "4",
        "--no-timestamp",
    ];
    assert!(run(
        d,
        &[&base[..], &["--out", "x", "--backend", "exact"]].concat()
    )
    .status
    .success());
    assert!(run(
        d,
        &[&base[..], &["--out", "s", "--backend", "stochastic"]].concat()
    )
    .status
    .success());
    let x = json(d.join("x/report.json"));
    let s = json(d.join("s/report.json"));
    assert_eq!(keys(&x), keys(&s));
    assert_eq!(x["backend"], "exact");
    assert_eq!(s["backend"], "stochastic");
    assert_eq!(keys(&x["confusion"]), keys(&s["confusion"]));
}

#[test]
fn sweep_writes_heatmap_and_is_independent_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let rec = short_recording(d);
    let r = rec.to_str().unwrap();
    let o = run(
        d,
        &["eval", r, "--out", "one", "--jobs", "1", "--no-timestamp"],
    );
    assert!(o.status.success());
    let o = run(
        d,
        &["eval", r, "--out", "many", "--jobs", "3", "--no-timestamp"],
    );
    assert!(o.status.success());
    for f in ["report.json", "folds.csv", "heatmap.csv", "manifest.json"] {
        assert_eq!(
            std::fs::read(d.join("one").join(f)).unwrap(),
            std::fs::read(d.join("many").join(f)).unwrap(),
            "{f} depends on the thread count"
        );
    }
    let heat = std::fs::read_to_string(d.join("one/heatmap.csv")).unwrap();
    assert_eq!(heat.lines().count(), 7);
    assert_eq!(
        json(d.join("one/report.json"))["reports"]
            .as_array()
            .unwrap()
            .len(),
        24
    );
}

#[test]
fn eval_error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let rec = short_recording(d);
    std::fs::copy(&rec, d.join("unlabeled.csv")).unwrap();
    let o = run(d, &["eval", "unlabeled.csv", "--out", "u"]);
    assert_eq!(o.status.code(), Some(1), "missing labels");

    let o = run(d, &["eval", "nowhere.csv", "--out", "n"]);
    assert_eq!(o.status.code(), Some(1), "missing file");

    let starve = write_config(d, "starve.json", r#"{"eval": {"min_bin_count": 500}}"#);
    let o = run(
        d,
        &[
            "eval",
            rec.to_str().unwrap(),
            "--combo",
            "mean:0",
            "--config",
            starve.to_str().unwrap(),
            "--out",
            "s",
        ],
    );
    assert_eq!(o.status.code(), Some(2), "insufficient training data");

    let o = run(
        d,
        &[
            "eval",
            rec.to_str().unwrap(),
            "--combo",
            "mean:9",
            "--out",
            "c",
        ],
    );
    assert_eq!(o.status.code(), Some(1), "unknown channel");

    let o = run(
        d,
        &[
            "eval",
            rec.to_str().unwrap(),
            "--backend",
            "stochastic",
            "--out",
            "b",
        ],
    );
    assert_eq!(o.status.code(), Some(1), "stochastic eval needs a seed");
}

#[test]
fn optimize_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let rec = short_recording(d);
    let r = rec.to_str().unwrap();
    let args = |out: &'static str| {
        vec![
            "optimize",
            r,
            "--seed",
            "8",
            "--features",
            "mean,energy_mean",
            "--combo-size",
            "3",
            "--generations",
            "5",
            "--out",
            out,
            "--no-timestamp",
        ]
    };
    assert!(run(d, &args("a")).status.success());
    assert!(run(d, &args("b")).status.success());
    let log_a = std::fs::read(d.join("a/search_log.jsonl")).unwrap();
    assert_eq!(log_a, std::fs::read(d.join("b/search_log.jsonl")).unwrap());
    let first: Value =
        serde_json::from_str(String::from_utf8(log_a).unwrap().lines().next().unwrap()).unwrap();
    assert!(first["members"].is_array() && first["J"].is_f64() && first["generation"].is_u64());
    let best = json(d.join("a/best.json"));
    assert_eq!(best["combo"].as_array().unwrap().len(), 3);
    assert_eq!(best["stochastic"]["backend"], "stochastic");
    assert_eq!(json(d.join("a/pairs.json")).as_array().unwrap().len(), 28);

    let o = run(
        d,
        &[
            "optimize",
            r,
            "--seed",
            "8",
            "--features",
            "mean",
            "--channels",
            "0",
            "--out",
            "c",
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(1),
        "combo size larger than the candidate set"
    );
    let o = run(d, &["optimize", r, "--out", "s"]);
    assert_eq!(o.status.code(), Some(1), "optimize needs a seed");
}

#[test]
fn power_reports_standard_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(d, &["power", "--out", "p"]);
    assert!(o.status.success());
    let reports = json(d.join("p/power.json"));
    let total = reports[0]["total_w"].as_f64().unwrap();
    assert!((total - 6.19e-6).abs() <= 0.01e-6, "{total}");
    assert!(reports[0]["battery_years"].as_f64().unwrap() > 14.0);
    assert!(reports[1]["battery_years"].as_f64().unwrap() > 10.0);
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("high_activity"));

    let o = run(d, &["power", "--lut-levels", "8", "--out", "p8"]);
    assert!(o.status.success());
    let t8 = json(d.join("p8/power.json"))[0]["total_w"]
        .as_f64()
        .unwrap();
    assert!((t8 - 4.217e-6).abs() <= 0.01e-6, "{t8}");

    let custom = write_config(
        d,
        "s.json",
        r#"{"scenarios": [{"name": "solo", "pairs": 1, "stimulation": {"current": 0.006, "pulse_width": 0.00016, "pulse_rate": 200, "duration": 0.1, "events_per_day": 0}}]}"#,
    );
    let o = run(
        d,
        &[
            "power",
            "--config",
            custom.to_str().unwrap(),
            "--out",
            "solo",
        ],
    );
    assert!(o.status.success());
    let years = json(d.join("solo/power.json"))[0]["battery_years"]
        .as_f64()
        .unwrap();
    assert!((years - 60.8).abs() < 0.2, "{years}");

    let broken = write_config(d, "broken.json", r#"{"scenarios": [{"pairz": 1}]}"#);
    let o = run(
        d,
        &["power", "--config", broken.to_str().unwrap(), "--out", "b"],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ingest_applies_the_tcp_montage() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(
        d,
        &[
            "synth",
            "--seed",
            "1",
            "--preset",
            "ten-twenty",
            "--duration-s",
            "130",
            "--edf",
            "--out",
            "raw",
        ],
    );
    assert!(o.status.success());
    let o = run(
        d,
        &[
            "ingest",
            "raw/recording.edf",
            "--montage",
            "tcp",
            "--out",
            "tcp",
        ],
    );
    assert!(o.status.success());
    let summary = json(d.join("tcp/summary.json"));
    assert_eq!(summary["channels"].as_array().unwrap().len(), 22);
    assert_eq!(summary["channels"][0], "FP1-F7");
    assert_eq!(summary["meets_inclusion"], false);
    let o = run(
        d,
        &[
            "ingest",
            "raw/recording.csv",
            "--require-inclusion",
            "--out",
            "inc",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = run(
        d,
        &[
            "ingest",
            "raw/recording.csv",
            "--min-labeled-s",
            "5",
            "--require-inclusion",
            "--out",
            "ok",
        ],
    );
    assert!(o.status.success());
}

#[test]
fn features_tabulates_windows_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let rec = short_recording(d);
    let o = run(
        d,
        &[
            "features",
            rec.to_str().unwrap(),
            "--features",
            "energy_mean,hjorth_mobility",
            "--channels",
            "ch0",
            "--traces",
            "--out",
            "f",
        ],
    );
    assert!(o.status.success());
    let table = std::fs::read_to_string(d.join("f/features.csv")).unwrap();
    assert_eq!(
        table.lines().next().unwrap(),
        "start_s,end_s,state,energy_mean:0,hjorth_mobility:0"
    );
    assert_eq!(table.lines().count(), 61);
    let trace = std::fs::read_to_string(d.join("f/trace_energy_mean_0.csv")).unwrap();
    assert_eq!(trace.lines().count(), 300_001);
}
