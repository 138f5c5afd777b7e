use std::path::Path;
use std::process::{Command, Output};

fn oscdamp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oscdamp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"));
    line.trim().parse().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn support_single_amplitude_is_two_over_pi() {
    let o = oscdamp(&["support", "--z", "1", "--backend", "torus-grid"]);
    assert_eq!(o.status.code(), Some(0));
    let v = field(&stdout(&o), "value");
    assert!((v - std::f64::consts::FRAC_2_PI).abs() < 1e-7, "{v}");
}

#[test]
fn support_at_zero_is_zero() {
    let o = oscdamp(&["support", "--z", "0,0"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(field(&text, "value"), 0.0);
    assert!(text.contains("gradient: undefined"));
}

#[test]
fn support_backends_agree() {
    let grid = field(&stdout(&oscdamp(&["support", "--z", "1,1"])), "value");
    let bessel = field(
        &stdout(&oscdamp(&["support", "--z", "1,1", "--backend", "bessel"])),
        "value",
    );
    assert!((grid - bessel).abs() / grid <= 1e-5);
    assert!((grid - 8.0 / std::f64::consts::PI.powi(2)).abs() < 1e-4);
}

#[test]
fn gauge_matches_ellipse_formula() {
    let o = oscdamp(&["gauge", "--x", "3,4", "--omega", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let rho = field(&stdout(&o), "rho");
    assert!((rho - 7.853982).abs() < 1e-6, "{rho}");
    // y > 0 so the control pushes down.
    assert_eq!(field(&stdout(&o), "u"), -1.0);
}

#[test]
fn simulate_from_frozen_state_gives_one_row() {
    let o = oscdamp(&["simulate", "--x0", "0,0.001"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# format_version: 1"));
    assert!(lines[1].starts_with("# config: {"));
    assert_eq!(lines[2], "t,x_1,y_1,rho,h,u,frozen");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].ends_with(",1"));
}

#[test]
fn simulate_output_reproduces_from_embedded_config() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.csv");
    let o = oscdamp(&[
        "simulate", "--x0", "2,0", "--horizon", "1", "--n", "200",
        "--out", first.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let a = std::fs::read_to_string(&first).unwrap();
    let cfg = a.lines().nth(1).unwrap().strip_prefix("# config: ").unwrap();
    let cfg_path = write(dir.path(), "cfg.json", cfg);
    // The embedded config names a.csv as output; redirect the rerun.
    let second = dir.path().join("b.csv");
    let o = oscdamp(&["--config", &cfg_path, "--out", second.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(0));
    let b = std::fs::read_to_string(&second).unwrap();
    let payload = |s: &str| s.lines().skip(2).collect::<Vec<_>>().join("\n");
    assert_eq!(payload(&a), payload(&b));
    assert!(a.lines().count() > 100);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"smoothing": {"n": 100.0}, "sim": {"horizon": 0.5}}"#);
    let o = oscdamp(&["--config", &cfg, "--n", "250", "simulate", "--x0", "1,1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let line = text.lines().nth(1).unwrap().strip_prefix("# config: ").unwrap();
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    assert_eq!(v["smoothing"]["n"], 250.0);
    assert_eq!(v["sim"]["horizon"], 0.5);
    // Resolved defaults are filled in.
    assert_eq!(v["quadrature"]["backend"], "torus-grid");
}

#[test]
fn exit_codes() {
    assert_eq!(oscdamp(&["--help"]).status.code(), Some(0));
    assert_eq!(oscdamp(&["--version"]).status.code(), Some(0));
    assert_eq!(oscdamp(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(oscdamp(&["gauge"]).status.code(), Some(1));
    assert_eq!(oscdamp(&["support", "--z", "1", "--backend", "magic"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let broken = write(dir.path(), "broken.json", "{ not json");
    assert_eq!(oscdamp(&["--config", &broken, "check"]).status.code(), Some(3));
    let unknown = write(dir.path(), "unknown.json", r#"{"frequncies": [1.0]}"#);
    assert_eq!(oscdamp(&["--config", &unknown, "check"]).status.code(), Some(3));
    let missing = dir.path().join("missing.json");
    assert_eq!(
        oscdamp(&["--config", missing.to_str().unwrap(), "check"]).status.code(),
        Some(3)
    );
    assert_eq!(oscdamp(&["gauge", "--x", "1,1", "--omega", "1,1"]).status.code(), Some(3));
    assert_eq!(oscdamp(&["gauge", "--x", "1,2,3"]).status.code(), Some(3));
    assert_eq!(oscdamp(&["simulate", "--n", "-1", "--x0", "1,0"]).status.code(), Some(3));
    assert_eq!(oscdamp(&["simulate"]).status.code(), Some(3));

    let starved = write(
        dir.path(),
        "starved.json",
        r#"{"frequencies": [1.0, 1.4142135623730951], "solver": {"max_iter": 3, "multistart": 0}}"#,
    );
    assert_eq!(
        oscdamp(&["--config", &starved, "gauge", "--x", "1,0.5,-0.3,0.8"]).status.code(),
        Some(2)
    );
}

#[test]
fn failed_runs_flush_a_failed_marker() {
    let dir = tempfile::tempdir().unwrap();
    let starved = write(
        dir.path(),
        "starved.json",
        r#"{"frequencies": [1.0, 1.4142135623730951], "solver": {"max_iter": 3, "multistart": 0}}"#,
    );
    let csv = dir.path().join("run.csv");
    let o = oscdamp(&[
        "--config", &starved, "simulate", "--x0", "1,0.5,-0.3,0.8", "--horizon", "1",
        "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# format_version: 1"));
    assert!(text.contains("t,x_1,y_1,x_2,y_2,rho,h,u,frozen"));
    assert!(text.lines().last().unwrap().contains(r#""status":"failed""#));

    let json = dir.path().join("conv.json");
    let o = oscdamp(&[
        "--config", &starved, "converge", "--x0", "1,0.5,-0.3,0.8", "--horizon", "1",
        "--out", json.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["status"], "failed");
    assert_eq!(v["format_version"], 1);
    assert!(v["results"]["error"].as_str().unwrap().contains("did not converge"));
}

#[test]
fn unwritable_output_leaves_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("no_such_dir").join("x.csv");
    let o = oscdamp(&["simulate", "--x0", "1,0", "--horizon", "0.1", "--out", target.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!target.exists());
}

#[test]
fn check_passes_on_defaults_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let o = oscdamp(&["check", "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let table = stdout(&o);
    assert!(table.lines().count() > 10);
    assert!(!table.contains("FAIL"));
    assert_eq!(oscdamp(&["check", "--out", b.to_str().unwrap()]).status.code(), Some(0));
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    // The embedded output path differs; everything else must match.
    let strip = |t: Vec<u8>| {
        let mut v: serde_json::Value = serde_json::from_slice(&t).unwrap();
        v["config"]["output"] = serde_json::Value::Null;
        v
    };
    let (va, vb) = (strip(ta), strip(tb));
    assert_eq!(va, vb);
    assert_eq!(va["status"], "ok");
    assert!(va.get("timings").is_none());
}

#[test]
fn check_reports_violations_with_nonzero_exit() {
    // Smoothing this weak never reaches the Coulomb end state in time.
    let o = oscdamp(&["check", "--n", "5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn compare_optimal_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp.json");
    let o = oscdamp(&[
        "compare-optimal", "--states", "2:0,3:-2", "--out", out.to_str().unwrap(), "--timings",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let cases = v["results"]["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 2);
    // From (2, 0) with w = 1 a single half-turn about u = +1 reaches the origin.
    assert!((cases[0]["t_star"].as_f64().unwrap() - std::f64::consts::PI).abs() < 1e-9);
    // Dry friction follows the same half-turn but stops at rho <= 0.5,
    // before the origin, so its time is shorter here.
    assert!(cases[0]["ratio"].as_f64().unwrap() < 1.0);
    assert!(cases[1]["ratio"].as_f64().unwrap() >= 1.0);
    assert!(v["timings"]["total_s"].as_f64().unwrap() > 0.0);
}
