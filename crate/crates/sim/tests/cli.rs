use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_adaptml");

const PE_CONFIG: &str = r#"
name = "pe"
horizon = 5.0
decimate = 50
theta0 = [0.0, 0.0]
theta_star = [1.0, -1.0]
[model]
kind = "algebraic"
[law]
kind = "gradient-flow"
gamma = 2.0
[signal]
kind = "sinusoids"
amplitudes = [1.0, 1.0]
frequencies = [1.0, 1.0]
phases = [0.0, 1.5707963267948966]
"#;

fn adaptml(args: &[&str], out: &Path) -> Output {
    Command::new(BIN).args(args).env("ADAPTML_OUT", out).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn list_scenarios_names_every_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let o = adaptml(&["list-scenarios"], tmp.path());
    assert!(o.status.success());
    let text = stdout(&o);
    for name in [
        "pe-convergence",
        "non-pe-stall",
        "regret-constant-vs-sqrt",
        "ht-vs-nesterov",
        "robustness-sigma-emod-deadzone",
        "spr-lyapunov",
    ] {
        assert!(text.contains(name), "{name} missing from:\n{text}");
    }
}

#[test]
fn unknown_scenario_is_a_usage_error_listing_presets() {
    let tmp = tempfile::tempdir().unwrap();
    let o = adaptml(&["scenario", "no-such-thing"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("no-such-thing"));
    assert!(err.contains("pe-convergence") && err.contains("spr-lyapunov"), "{err}");
}

#[test]
fn run_writes_csv_and_summary_into_env_out_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "pe.toml", PE_CONFIG);
    let out = tmp.path().join("results");
    let o = adaptml(&["run", &cfg], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("pe.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,theta_0,theta_1,e_y,theta_err_norm,lyapunov,cost");
    assert_eq!(lines.count(), 101);
    let summary = std::fs::read_to_string(out.join("pe.toml")).unwrap();
    assert!(summary.contains("status = \"completed\""), "{summary}");
}

#[test]
fn out_flag_overrides_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "pe.toml", PE_CONFIG);
    let flag_dir = tmp.path().join("flag");
    let o = adaptml(&["run", &cfg, "--out", flag_dir.to_str().unwrap(), "--decimate", "500"], &tmp.path().join("env"));
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(flag_dir.join("pe.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
    assert!(!tmp.path().join("env").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "pe.toml", PE_CONFIG);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(adaptml(&["run", &cfg], &a).status.success());
    assert!(adaptml(&["run", &cfg], &b).status.success());
    assert_eq!(std::fs::read(a.join("pe.csv")).unwrap(), std::fs::read(b.join("pe.csv")).unwrap());
}

#[test]
fn invalid_config_exits_2_with_field_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = PE_CONFIG.replace("horizon = 5.0", "horizon = 5.0\ndt = 0.1").replace("gamma = 2.0", "gamma = -1.0");
    let cfg = write(tmp.path(), "bad.toml", &bad);
    for cmd in ["validate", "run"] {
        let o = adaptml(&[cmd, &cfg], tmp.path());
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        let err = stderr(&o);
        assert!(err.contains("dt"), "{err}");
        assert!(err.contains("law.gamma"), "{err}");
    }
    let unknown = write(tmp.path(), "unknown.toml", &PE_CONFIG.replace("gamma = 2.0", "gama = 2.0"));
    assert_eq!(adaptml(&["validate", &unknown], tmp.path()).status.code(), Some(2));
    assert_eq!(adaptml(&["validate", "/nonexistent/cfg.toml"], tmp.path()).status.code(), Some(2));
}

#[test]
fn validate_accepts_good_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "pe.toml", PE_CONFIG);
    let o = adaptml(&["validate", &cfg], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!tmp.path().join("pe.csv").exists());
}

#[test]
fn divergent_run_exits_3_with_partial_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
        name = "blowup"
        horizon = 5000.0
        theta0 = [0.0]
        theta_star = [1.0]
        [model]
        kind = "algebraic"
        [law]
        kind = "gd"
        schedule = { gamma0 = 3.0 }
        [signal]
        kind = "constant"
        value = [1.0]
    "#;
    let cfg = write(tmp.path(), "blowup.toml", text);
    let o = adaptml(&["run", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    let csv = std::fs::read_to_string(tmp.path().join("blowup.csv")).unwrap();
    let rows = csv.lines().count() - 1;
    assert!(rows > 100 && rows < 5000, "{rows}");
    let summary = std::fs::read_to_string(tmp.path().join("blowup.toml")).unwrap();
    assert!(summary.contains("status = \"diverged\""), "{summary}");
}

#[test]
fn scenario_writes_artifacts_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = adaptml(&["scenario", "non-pe-stall"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}\n{}", stdout(&o), stderr(&o));
    let dir = tmp.path().join("non-pe-stall");
    assert!(dir.join("gradient-flow.csv").is_file());
    let summary = std::fs::read_to_string(dir.join("summary.toml")).unwrap();
    assert!(summary.contains("passed = true"), "{summary}");
    assert!(stdout(&o).contains("[PASS] final-theta-error-within"));
}

#[test]
fn failed_scenario_check_exits_1_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "pe.toml", PE_CONFIG);
    let manifest = r#"
        name = "too-strict"
        [[experiments]]
        id = "pe"
        config = "pe.toml"
        [[checks]]
        kind = "final-theta-error-below"
        experiment = "pe"
        value = 1e-30
    "#;
    let m = write(tmp.path(), "too-strict.toml", manifest);
    let o = adaptml(&["scenario", &m], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("final-theta-error-below"), "{}", stderr(&o));
    assert!(stdout(&o).contains("[FAIL]"));
}

#[test]
fn scenario_seed_and_dt_flags_are_applied() {
    let tmp = tempfile::tempdir().unwrap();
    let o = adaptml(&["scenario", "non-pe-stall", "--dt", "2e-3", "--decimate", "100"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("non-pe-stall/gradient-flow.csv")).unwrap();
    // 40 / 2e-3 = 20000 steps, every 100th logged plus t = 0
    assert_eq!(csv.lines().count(), 1 + 201);
}
