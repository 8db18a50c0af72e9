use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn quadsysid(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadsysid"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn simulate_then_identify() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = quadsysid(&["simulate", "--script", "flight", "--out", "f.ulg", "--config-out", "c.toml"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("f.ulg").is_file());

    let o = quadsysid(&["identify", "--config", "c.toml", "--out", "r.json", "--plots-dir", "plots", "f.ulg"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    let t_m = report["motor"]["time_constant_s"].as_f64().unwrap();
    assert!((t_m - 0.072).abs() < 1e-4, "{t_m}");
    assert!(report["inertia"]["ixx_kg_m2"]["value"].is_number());
    for kind in ["sweep", "thrust_fit", "angular_fit", "hover_hist"] {
        assert!(d.join("plots").join(format!("{kind}.csv")).is_file(), "{kind}");
    }

    let o = quadsysid(&["identify", "--config", "c.toml", "--format", "csv", "f.ulg"], d);
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("quantity,value\n"), "{csv}");

    let o = quadsysid(&["sweep", "--config", "c.toml", "f.ulg"], d);
    assert_eq!(code(&o), 0);
    let lines = String::from_utf8(o.stdout).unwrap().lines().count();
    assert_eq!(lines, 201);
}

#[test]
fn csv_logs_and_cli_service_parity() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = quadsysid(
        &["simulate", "--script", "flight", "--out", "f.csv", "--angular-accel", "--config-out", "c.toml", "--accel-noise", "0.05", "--seed", "3"],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = quadsysid(&["identify", "--config", "c.toml", "--out", "r.json", "f.csv"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let config = quadsysid::config::PipelineConfig::load(&d.join("c.toml")).unwrap();
    let bytes = std::fs::read(d.join("f.csv")).unwrap();
    let direct = quadsysid::pipeline::run_pipeline(&config, &[&bytes]).unwrap();
    let cli: quadsysid::report::IdentificationReport =
        serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(cli.without_timestamp(), direct.report.without_timestamp());
}

#[test]
fn exit_codes_follow_failure_stage() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("empty.ulg"), b"").unwrap();
    let o = quadsysid(&["identify", "empty.ulg"], d);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ingestion"));

    let o = quadsysid(&["identify", "missing.ulg"], d);
    assert_eq!(code(&o), 3);

    std::fs::write(d.join("bad.toml"), "[sweep]\npoints = 1\n").unwrap();
    let o = quadsysid(&["identify", "--config", "bad.toml", "empty.ulg"], d);
    assert_eq!(code(&o), 2);

    std::fs::write(d.join("broken.toml"), "this is not toml = = =").unwrap();
    let o = quadsysid(&["identify", "--config", "broken.toml", "empty.ulg"], d);
    assert_eq!(code(&o), 2);

    let o = quadsysid(&["identify"], d);
    assert_eq!(code(&o), 2);

    let o = quadsysid(&["simulate", "--script", "no_such_script", "--out", "x.csv"], d);
    assert_eq!(code(&o), 2);
}

#[test]
fn custom_scripts_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scripts = r#"
[[scripts]]
name = "two_levels"
duration_s = 2.0

[scripts.pattern]
kind = "piecewise"
times_s = [0.0, 1.0]
commands = [[0.5, 0.5, 0.5, 0.5], [0.7, 0.7, 0.7, 0.7]]
"#;
    std::fs::write(d.join("scripts.toml"), scripts).unwrap();
    let o = quadsysid(&["simulate", "--config", "scripts.toml", "--script", "two_levels", "--out", "s.csv"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(d.join("s.csv")).unwrap();
    let mut rows = text.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let m1 = header.iter().position(|h| *h == "motor.m1").unwrap();
    let values: Vec<f64> = rows.map(|r| r.split(',').nth(m1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 2000);
    assert_eq!(values[10], 0.5);
    assert_eq!(values[1500], 0.7);
}
