use std::path::Path;
use std::process::{Command, Output};

use lorenz_cli::{Config, SchemaError};
use serde_json::Value;

fn lorenz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lorenz"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn orbit_csv_of_the_k2_connection() {
    let out = lorenz(&["orbit", "--fixture", "K2", "--side", "right", "--steps", "20"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,x,symbol,fprime,cum_log_deriv");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("1,0.14911"));
    assert!(lines[5].starts_with("5,") && lines[5].contains(",C,"));
}

#[test]
fn empty_config_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "empty.json", "{}");
    let out = lorenz(&["run", &path]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("schema error at ."), "{}", stderr(&out));
}

#[test]
fn schema_errors_name_their_path() {
    let parse = |text: &str| Config::parse(text, Path::new(".")).unwrap_err();
    let e: SchemaError = parse(r#"{"pipeline": "tune-to-D", "map": "K1", "side": "up", "eps": 0.1}"#);
    assert_eq!(e.path, ".side");
    let e = parse(r#"{"pipeline": "orbit", "map": "K1", "steps": "ten", "x0": 0.2}"#);
    assert_eq!(e.path, ".steps");
    let e = parse(r#"{"schema": "lorenz-measures/0", "pipeline": "orbit"}"#);
    assert_eq!(e.path, ".schema");
    let e = parse(r#"{"pipeline": "no-such-thing"}"#);
    assert!(e.message.contains("no-such-thing"));
    let e = parse(r#"{"pipeline": "measure", "map": "K2", "ell": 3, "alpha_mass": 0.5}"#);
    assert!(e.message.contains("seed"), "{e}");
    assert!(parse("[1, 2]").message.contains("object"));
}

#[test]
fn config_round_trips_through_its_report() {
    let text = r#"{"schema": "lorenz-measures/1", "pipeline": "induce", "map": "K2", "r_max": 12}"#;
    let config = Config::parse(text, Path::new(".")).unwrap();
    let artifacts = lorenz_cli::run(&config).unwrap();
    let echoed = serde_json::to_string(&artifacts.report["config"]).unwrap();
    assert_eq!(Config::parse(&echoed, Path::new(".")).unwrap(), config);
    assert_eq!(artifacts.report["schema"], "lorenz-measures/1");
    assert_eq!(artifacts.report["result"]["t0"], 5);
    assert_eq!(artifacts.report["result"]["J"]["word"], "RL");
}

#[test]
fn theorem_b_certificate_on_k1_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        "b.json",
        r#"{"pipeline": "theorem-b-certify", "map": "K1", "seed": 5, "starts": 4, "steps": 2000}"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = lorenz(&["run", &path, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let bytes = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(bytes(&a, "report.json"), bytes(&b, "report.json"));
    assert_eq!(bytes(&a, "starts.csv"), bytes(&b, "starts.csv"));
    let r = report(&a);
    assert_eq!(r["schema"], "lorenz-measures/1");
    let k = &r["result"]["constants"];
    assert!((k["M"].as_f64().unwrap() - 0.693147).abs() < 1e-6);
    assert!((k["Upsilon"].as_f64().unwrap() - 18.8249).abs() < 1e-3);
    assert_eq!(r["violations"].as_array().unwrap().len(), 0);
    assert_eq!(r["result"]["checks"].as_array().unwrap().len(), 4);
}

#[test]
fn theorem_a_construction_on_k2() {
    let dir = tempfile::tempdir().unwrap();
    let out = lorenz(&[
        "construct",
        "--fixture",
        "K2",
        "--ell",
        "3",
        "--alpha-mass",
        "0.5",
        "--rmax",
        "16",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let m = &report(dir.path())["result"]["measure"];
    assert!(m["entropy_fc"].as_f64().unwrap().is_finite());
    assert!((m["int_rc"].as_f64().unwrap() - 1.0042027).abs() < 1e-6);
    assert_eq!(m["rc_sq_divergent"], true);
    let csv = std::fs::read_to_string(dir.path().join("lyapunov.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("level,lyapunov_partial"));
}

#[test]
fn measure_sampling_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |d: &str| {
        vec![
            "measure".to_owned(),
            "--fixture=K2".into(),
            "--ell=3".into(),
            "--alpha-mass=0.5".into(),
            "--rmax=16".into(),
            "--segments=2000".into(),
            "--seed=42".into(),
            format!("--out={d}"),
        ]
    };
    for d in ["x", "y"] {
        let p = dir.path().join(d);
        let a = args(p.to_str().unwrap());
        let out = lorenz(&a.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for f in ["report.json", "prefix_averages.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("x").join(f)).unwrap(),
            std::fs::read(dir.path().join("y").join(f)).unwrap()
        );
    }
    let csv = std::fs::read_to_string(dir.path().join("x/prefix_averages.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2001);
}

#[test]
fn tuned_map_feeds_back_into_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let out = lorenz(&[
        "tune",
        "--fixture",
        "K1",
        "--side",
        "both",
        "--eps",
        "0.2",
        "--eps-right",
        "0.03",
        "--rcap",
        "0.15",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = report(dir.path());
    assert_eq!(r["result"]["gate"]["passed"], true);
    let certs = r["result"]["certificates"].as_array().unwrap();
    assert_eq!(certs.len(), 2);
    assert_eq!(certs[0]["t"], 7);
    let map = dir.path().join("map.json");
    let out = lorenz(&["orbit", "--map", map.to_str().unwrap(), "--side", "left", "--steps", "50"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(7).unwrap().starts_with("7,") && text.contains(",C,"));
}

#[test]
fn shooting_from_the_command_line() {
    let out = lorenz(&[
        "tune", "--fixture", "K1", "--side", "right", "--shoot-t", "5", "--bracket", "0.84,0.86",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((r["result"]["map"]["d1"].as_f64().unwrap() - 0.85088).abs() < 1e-4);
    assert_eq!(r["result"]["certificates"][0]["t"], 5);
}

#[test]
fn module_errors_and_violations_have_distinct_exit_codes() {
    let out = lorenz(&["tune", "--fixture", "K1", "--side", "left", "--eps", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no connection"));
    // the left-tuned map still has c+ fixed at 0, so the gate rejects it
    let out = lorenz(&["tune", "--fixture", "K1", "--side", "left", "--eps", "0.1", "--rcap", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("violation: hypothesis gate"));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["result"]["gate"]["passed"], false);
}

#[test]
fn srb_diagnostic_flags_fixed_singular_values() {
    let out = lorenz(&["srb", "--fixture", "K1", "--seed", "3", "--steps", "500", "--samples", "5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["result"]["singular_values_typical"], false);
}
