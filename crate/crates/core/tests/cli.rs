use std::fs;
use std::process::Command;

use wentzell::cli::{self, Mode, RunConfig, PRESETS};
use wentzell::FluxKind;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wentzell"))
}

fn write(dir: &std::path::Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn minimal_config_fills_defaults() {
    let cfg = cli::parse_config(
        r#"{"grid": {"kind": "interval", "n": 4}, "model": {"id": "quadratic"}, "T": 1, "n": 2, "mode": "flow"}"#,
        &[],
    )
    .unwrap();
    assert_eq!(cfg.save_every, 1);
    assert_eq!(cfg.step, wentzell::StepConfig::default());
    assert_eq!(cfg.y0.as_constant(), Some(0.0));
}

#[test]
fn every_preset_round_trips() {
    for (id, _) in PRESETS {
        let cfg = cli::parse_config(&format!(r#"{{"preset": "{id}"}}"#), &[]).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = cli::parse_config(&text, &[]).unwrap();
        assert_eq!(cfg, back, "{id}");
    }
    let fractured = cli::parse_config(r#"{"preset": "fractured-1d"}"#, &[]).unwrap();
    assert!(matches!(fractured.model, FluxKind::Fractured { .. }));
}

#[test]
fn validation_errors() {
    let both = cli::parse_config(r#"{"preset": "quadratic-1d", "h": 0.05}"#, &[]);
    assert!(both.unwrap_err().to_string().contains("exactly one of"));
    let unknown = cli::parse_config(r#"{"preset": "quadratic-1d", "step": {"tol": 1}}"#, &[]);
    assert!(unknown.unwrap_err().to_string().contains("step.tol"));
    let mode = cli::parse_config(r#"{"preset": "quadratic-1d", "mode": "nope"}"#, &[]);
    assert!(mode.unwrap_err().to_string().contains("unknown variant"));
    let tv = cli::parse_config(r#"{"preset": "quadratic-1d", "mode": "tv"}"#, &[]);
    assert!(tv.is_err());
    let syntax = cli::parse_config("{\n  \"T\": ,\n}", &[]);
    assert!(syntax.unwrap_err().to_string().contains("line 2"));
}

#[test]
fn overrides_reach_nested_keys() {
    let cfg = cli::parse_config(
        r#"{"preset": "quadratic-1d"}"#,
        &["step.tolerance=1e-9".into(), "mode=convergence".into(), "y0=sin(x)".into()],
    )
    .unwrap();
    assert_eq!(cfg.step.tolerance, 1e-9);
    assert_eq!(cfg.mode, Mode::Convergence);
    assert_eq!(cfg.y0.source(), "sin(x)");
    assert!(cli::parse_config(r#"{"preset": "quadratic-1d"}"#, &["novalue".into()]).is_err());
}

#[test]
fn constant_flow_writes_constant_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"preset": "constant-1d", "save_every": 5}"#);
    let out = dir.path().join("out");
    let status = bin().args(["run"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let names: Vec<String> = fs::read_dir(out.join("fields"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names.len(), 3);
    let last = fs::read_to_string(out.join("fields/y_000010.csv")).unwrap();
    let mut lines = last.lines();
    assert_eq!(lines.next(), Some("x,u"));
    for line in lines {
        let v = line.split(',').nth(1).unwrap();
        assert_eq!(v, "1.0000000000000000e0");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "pass");
    assert_eq!(manifest["config"]["preset"], "constant-1d");
}

#[test]
fn metrics_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "k.json",
        r#"{"preset": "fractured-1d", "mode": "contraction", "n": 5, "seed": 7, "checks": {"noise": 0.05}}"#,
    );
    let mut runs = vec![];
    for k in 0..2 {
        let out = dir.path().join(format!("o{k}"));
        let status = bin().arg("run").arg(&cfg).arg("--out").arg(&out).status().unwrap();
        assert_eq!(status.code(), Some(0));
        runs.push(fs::read(out.join("metrics.jsonl")).unwrap());
    }
    assert!(!runs[0].is_empty());
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn convergence_mode_reports_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"preset": "quadratic-1d", "mode": "convergence", "n": 4}"#);
    let out = dir.path().join("out");
    let output = bin().arg("run").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&output.stdout).starts_with("PASS order"));
    let table = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"preset": "quadratic-1d", "mode": "nope"}"#);
    let output = bin().arg("run").arg(&bad).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(err["kind"], "config");

    // a starved iteration budget cannot converge
    let starved = write(
        dir.path(),
        "s.json",
        r#"{"preset": "tv-1d", "step": {"max_first_order_iterations": 3}}"#,
    );
    let output = bin().arg("run").arg(&starved).arg("--out").arg(dir.path().join("s")).output().unwrap();
    assert_eq!(output.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(err["kind"], "nonconverged");
    assert_eq!(err["step"], 1);

    // an unreachable asymptotics tolerance fails its check
    let strict = write(
        dir.path(),
        "a.json",
        r#"{"preset": "quadratic-1d", "mode": "asymptotics", "f": 0, "g": 0, "n": 4,
            "checks": {"t_long": 0.1, "asymptotics_tolerance": 1e-12}}"#,
    );
    let output = bin().arg("run").arg(&strict).arg("--out").arg(dir.path().join("a")).output().unwrap();
    assert_eq!(output.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&output.stdout).starts_with("FAIL asymptotics"));
}
