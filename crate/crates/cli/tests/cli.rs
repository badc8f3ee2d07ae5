use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

use wmmf_cli::{load_config, parse_config, ConfigError, ExperimentKind};

const MINIMAL: &str = r#"{
  "topology": { "incidence": [[1.0]], "capacity": [1.0], "weight": [1.0] },
  "traffic": [
    {
      "interarrival": { "family": "exponential", "mean": 2.0 },
      "service": { "family": "exponential", "mean": 1.0 }
    }
  ]
}"#;

fn with_fields(extra: &str) -> String {
    let base = MINIMAL.trim_end().trim_end_matches('}');
    format!("{base},\n{extra}\n}}")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn wmmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wmmf")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn small_norms() -> &'static str {
    r#""lyapunov": { "a": 0.5, "b": 2, "gamma": 0.02, "delta1": 0.5, "n": 2, "c2": 4.0 }"#
}

#[test]
fn minimal_config_materializes_defaults() {
    let dir = TempDir::new().unwrap();
    let config = load_config(&write_config(dir.path(), "c.json", MINIMAL)).unwrap();
    assert_eq!(config.seed, 0);
    assert_eq!(config.replications, 20);
    assert_eq!(config.lyapunov.b, 2);
    assert_eq!(config.experiment.kind, ExperimentKind::Validate);
    assert_eq!(config.experiment.drift.initial_counts, vec![vec![50], vec![100], vec![200]]);
    assert_eq!(config.experiment.run.initial_counts, vec![0]);
    let echo = config.to_json_pretty();
    for key in ["\"c3\"", "\"beta\"", "\"epsilon7\"", "\"t_values\"", "\"tolerance\"", "\"dir\""] {
        assert!(echo.contains(key), "{key} missing from {echo}");
    }
}

#[test]
fn effective_config_round_trips() {
    let dir = TempDir::new().unwrap();
    let text = with_fields(&format!("{},\n\"seed\": 99, \"horizon\": 50.0", small_norms()));
    let config = load_config(&write_config(dir.path(), "c.json", &text)).unwrap();
    let again = load_config(&write_config(dir.path(), "echo.json", &config.to_json_pretty())).unwrap();
    assert_eq!(config, again);
}

#[test]
fn heavy_tail_fails_the_moment_condition() {
    let text = r#"{
      "topology": { "incidence": [[1.0]], "capacity": [1.0], "weight": [1.0] },
      "traffic": [
        {
          "interarrival": { "family": "exponential", "mean": 4.0 },
          "service": { "family": "pareto", "shape": 2.1, "scale": 1.0 }
        }
      ],
      "lyapunov": { "a": 0.25, "b": 2, "gamma": 0.02, "delta1": 0.5, "n": 4 }
    }"#;
    let dir = TempDir::new().unwrap();
    match load_config(&write_config(dir.path(), "c.json", text)) {
        Err(ConfigError::Validation(errors)) => {
            assert!(errors.iter().any(|e| e.contains("moment")), "{errors:?}")
        }
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn short_truncation_level_is_rejected() {
    let dir = TempDir::new().unwrap();
    let text = with_fields(r#""lyapunov": { "a": 0.1, "b": 2, "gamma": 0.02, "delta1": 0.5, "n": 4 }"#);
    match load_config(&write_config(dir.path(), "c.json", &text)) {
        Err(ConfigError::Validation(errors)) => assert!(errors.iter().any(|e| e.contains("N * a >= 1")), "{errors:?}"),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn unknown_keys_are_parse_errors_with_a_line() {
    let text = with_fields(r#""seeed": 3"#);
    match parse_config(&text) {
        Err(ConfigError::Parse { line, message, .. }) => {
            assert_eq!(line, 10);
            assert!(message.contains("seeed"));
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn validate_writes_the_ledger() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &with_fields(small_norms()));
    let out_dir = dir.path().join("out");
    let out = wmmf(&["validate", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ledger: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("ledger.json")).unwrap()).unwrap();
    assert_eq!(ledger["schema_version"], 1);
    assert_eq!(ledger["seed"], 5);
    assert!(ledger["l1"].as_f64().unwrap() > 0.0);
    let echoed = load_config(&out_dir.join("effective_config.json")).unwrap();
    assert_eq!(echoed.seed, 5);
}

#[test]
fn drift_on_supercritical_load_is_a_config_error_and_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let text = MINIMAL.replace("\"mean\": 2.0", "\"mean\": 0.5");
    let cfg = write_config(dir.path(), "c.json", &text);
    let out_dir = dir.path().join("out");
    let out = wmmf(&["drift", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("supercritical"));
    assert!(!out_dir.exists());
}

#[test]
fn missing_config_is_a_config_error() {
    let out = wmmf(&["run", "--config", "/nonexistent/wmmf.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn run_is_byte_identical_across_reruns_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let text = with_fields(
        r#""seed": 42, "replications": 3, "horizon": 200.0,
        "experiment": { "run": { "initial_counts": [4], "samples": 10 } }"#,
    );
    let cfg = write_config(dir.path(), "c.json", &text);
    let go = |name: &str, parallel: &str| {
        let out_dir = dir.path().join(name);
        let out = wmmf(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--parallel",
            parallel,
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let (a, b, c) = (go("a", "1"), go("b", "1"), go("c", "3"));
    for file in ["trajectory_000.csv", "trajectory_002.csv", "samples.csv", "run.json"] {
        let x = std::fs::read(a.join(file)).unwrap();
        assert_eq!(x, std::fs::read(b.join(file)).unwrap(), "{file}");
        assert_eq!(x, std::fs::read(c.join(file)).unwrap(), "{file}");
    }
    let csv = std::fs::read_to_string(a.join("trajectory_000.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# schema_version=1 seed=42"));
    assert_eq!(lines.next(), Some("time,event_kind,route,service,lambda_w,count_0"));
}

#[test]
fn ps_bench_outside_tolerance_exits_one() {
    let dir = TempDir::new().unwrap();
    let text = with_fields(
        r#""replications": 2, "horizon": 20.0,
        "experiment": { "ps_bench": { "tolerance": 1e-9 } }"#,
    );
    let cfg = write_config(dir.path(), "c.json", &text);
    let out_dir = dir.path().join("out");
    let out = wmmf(&["ps-bench", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("ps_bench.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    assert_eq!(report["schema_version"], 1);
}

#[test]
fn stability_accepts_overload_and_reports_growth() {
    let dir = TempDir::new().unwrap();
    let text = MINIMAL.replace("\"mean\": 2.0", "\"mean\": 0.5");
    let text = text.trim_end().trim_end_matches('}').to_string() + r#", "replications": 4, "horizon": 400.0 }"#;
    let cfg = write_config(dir.path(), "c.json", &text);
    let out_dir = dir.path().join("out");
    let out = wmmf(&["stability", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("stability.json")).unwrap()).unwrap();
    assert!(report["slope"]["ci_low"].as_f64().unwrap() > 0.0);
    let csv = std::fs::read_to_string(out_dir.join("stability.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("time,mean_count"));
    assert_eq!(csv.lines().count(), 2 + 100);
}
