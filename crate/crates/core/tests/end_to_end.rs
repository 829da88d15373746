use std::fs;
use std::path::Path;
use std::process::Command;

use retrain_core::cli::{execute, RunConfig};

const TINY: &str = r#"
seed = 3
workers = 2
output_dir = "out"
frequency = "daily"
horizon = 5
test_len = 15
retrain_set = [1, 5, 15]
baseline = 5

[data.synthetic]
series = 6
length = 90
seed = 5

[filters]
min_obs = 50

[features]
lags = [1, 7]
calendar = ["day-of-week"]

[[models]]
name = "snaive"
kind = "seasonal-naive"

[[models]]
name = "linear"
kind = "pooled-linear"

[[models]]
name = "gbt"
kind = "gbt"
params = { trees = 10 }

[ensembles]
criteria = ["accuracy"]
sizes = [2, 3]

[cost]
rate_per_hour = 3.5
target_series = 1000.0
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn retrain(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_retrain")).args(args).output().unwrap()
}

/// The error summary is the final stderr line; log lines may precede it.
fn last_json_line(stderr: &[u8]) -> serde_json::Value {
    let text = String::from_utf8_lossy(stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn forecast_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir.join("forecasts"))
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn full_artifact_set_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    let run_a = retrain(&["run", cfg.to_str().unwrap(), "--out", out_a.to_str().unwrap()]);
    assert!(run_a.status.success(), "{}", String::from_utf8_lossy(&run_a.stderr));
    for f in [
        "metrics.csv",
        "relative_metrics.csv",
        "costs.csv",
        "leaderboard.csv",
        "ensembles.csv",
        "plot_data.csv",
        "effective_config.toml",
        "failures.json",
        "summary.json",
        "stats/friedman.csv",
        "stats/cd_diagram.csv",
        "ct/linear_r5.json",
        "forecasts/Ens2A_r15.csv",
    ] {
        assert!(out_a.join(f).is_file(), "missing {f}");
    }
    // 3 models + 2 ensembles, 3 windows each
    assert_eq!(forecast_files(&out_a).len(), 15);

    // rerun from the effective config with a different worker count
    let effective = out_a.join("effective_config.toml");
    let run_b = Command::new(env!("CARGO_BIN_EXE_retrain"))
        .env("RETRAIN_WORKERS", "1")
        .args(["run", effective.to_str().unwrap(), "--out", out_b.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(run_b.status.success(), "{}", String::from_utf8_lossy(&run_b.stderr));
    assert_eq!(forecast_files(&out_a), forecast_files(&out_b));

    let relative = fs::read_to_string(out_a.join("relative_metrics.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(relative.as_bytes());
    let mut baseline_rows = 0;
    for row in rdr.records() {
        let row = row.unwrap();
        if &row[2] == "5" {
            assert_eq!(row[4].parse::<f64>().unwrap(), 1.0);
            baseline_rows += 1;
        }
    }
    assert_eq!(baseline_rows, 5 * 3);
}

#[test]
fn zero_retrain_window_exits_2_naming_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &TINY.replace("[1, 5, 15]", "[0, 5, 15]"));
    let out = retrain(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = last_json_line(&out.stderr);
    assert_eq!(err["kind"], "config");
    assert!(err["field"].as_str().unwrap().starts_with("retrain_set"));
}

#[test]
fn all_scenarios_failing_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY
        .replace("lags = [1, 7]", "lags = [1, 1]")
        .replace("calendar = [\"day-of-week\"]", "")
        .replace("[[models]]\nname = \"snaive\"\nkind = \"seasonal-naive\"\n\n", "")
        .replace(
            "[[models]]\nname = \"gbt\"\nkind = \"gbt\"\nparams = { trees = 10 }\n",
            "",
        )
        .replace("sizes = [2, 3]", "sizes = []\ncriteria = []")
        .replace("criteria = [\"accuracy\"]\n", "");
    let cfg = write_config(tmp.path(), &text);
    let out = retrain(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let err: serde_json::Value = last_json_line(&out.stderr);
    assert_eq!(err["kind"], "all-scenarios-failed");
    assert!(tmp.path().join("out/error.json").is_file());
}

#[test]
fn single_method_single_window() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY
        .replace("retrain_set = [1, 5, 15]", "retrain_set = [5]")
        .replace("criteria = [\"accuracy\"]", "criteria = []");
    let mut cfg = RunConfig::from_toml(&text).unwrap();
    cfg.models.truncate(1);
    cfg.ensembles.sizes.clear();
    cfg.output_dir = tmp.path().join("single");
    let cfg = cfg.resolve().unwrap();
    let (summary, report) = execute(&cfg).unwrap();
    assert_eq!(summary.scenarios, 1);
    assert_eq!(report.scenarios.len(), 1);
    assert!(report.relative.iter().all(|r| r.relative == 1.0));
    assert_eq!(report.relative.len(), 3);
    assert_eq!(report.costs.len(), 1);
    // one treatment cannot be ranked
    assert!(report.friedman.is_empty());
    assert!(!report.notes.is_empty());
}

#[test]
fn generate_subcommand_writes_loadable_panel() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("panel.csv");
    let out = retrain(&[
        "generate",
        "--series",
        "3",
        "--length",
        "30",
        "--seed",
        "9",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("unique_id,ds,y\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 30);
}
