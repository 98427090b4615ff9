use adaptml::scenario::{embedded_config, preset_names, Check, Overrides, Scenario, ScenarioError};

#[test]
fn every_preset_loads_and_validates() {
    let names = preset_names();
    assert_eq!(names.len(), 6);
    for name in names {
        let s = Scenario::preset(name).unwrap();
        assert_eq!(s.spec.name, name);
        assert!(!s.spec.checks.is_empty(), "{name} has no checks");
        s.validate(&Overrides::default()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn every_preset_passes() {
    for name in preset_names() {
        let outcome = Scenario::preset(name).unwrap().run(&Overrides::default()).unwrap();
        for c in &outcome.checks {
            assert!(c.passed || c.warn_only, "{name}: {} ({}) failed: {}", c.kind, c.experiment, c.detail);
        }
        assert_eq!(outcome.exit_code(), 0, "{name}");
    }
}

#[test]
fn unknown_preset_lists_the_available_ones() {
    let err = Scenario::preset("nope").unwrap_err();
    assert!(matches!(err, ScenarioError::Unknown { .. }));
    let msg = err.to_string();
    for name in preset_names() {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn checks_must_name_declared_experiments() {
    let manifest = r#"
        name = "broken"
        [[experiments]]
        id = "a"
        config = "configs/non-pe-gradient-flow.toml"
        [[checks]]
        kind = "completed"
        experiment = "b"
    "#;
    let err = Scenario::from_manifest(manifest, |p| embedded_config(p).map(str::to_owned)).unwrap_err();
    assert!(err.to_string().contains("unknown experiment `b`"), "{err}");
    assert_eq!(err.exit_code(), 2);

    let missing = manifest.replace("non-pe-gradient-flow", "absent").replace("\"b\"", "\"a\"");
    let err = Scenario::from_manifest(&missing, |p| embedded_config(p).map(str::to_owned)).unwrap_err();
    assert!(err.to_string().contains("missing config"), "{err}");
}

#[test]
fn unknown_check_kind_is_rejected() {
    let manifest = r#"
        name = "typo"
        [[experiments]]
        id = "a"
        config = "configs/non-pe-gradient-flow.toml"
        [[checks]]
        kind = "final-theta-eror-below"
        experiment = "a"
        value = 1.0
    "#;
    let err = Scenario::from_manifest(manifest, |p| embedded_config(p).map(str::to_owned)).unwrap_err();
    assert!(matches!(err, ScenarioError::Manifest { .. }));
}

#[test]
fn warn_only_failures_do_not_fail_the_scenario() {
    let manifest = r#"
        name = "warned"
        [[experiments]]
        id = "a"
        config = "configs/non-pe-gradient-flow.toml"
        [[checks]]
        kind = "final-theta-error-below"
        experiment = "a"
        value = 1e-3
        warn_only = true
    "#;
    let s = Scenario::from_manifest(manifest, |p| embedded_config(p).map(str::to_owned)).unwrap();
    assert!(matches!(&s.spec.checks[0].check, Check::FinalThetaErrorBelow { value, .. } if *value == 1e-3));
    let outcome = s.run(&Overrides::default()).unwrap();
    assert!(!outcome.checks[0].passed);
    assert!(outcome.passed());
    assert_eq!(outcome.exit_code(), 0);
}

#[test]
fn unexpected_divergence_exits_3() {
    let cfg = r#"
        horizon = 3000.0
        theta0 = [0.0]
        theta_star = [1.0]
        [model]
        kind = "algebraic"
        [law]
        kind = "gd"
        schedule = { gamma0 = 2.5 }
        [signal]
        kind = "constant"
        value = [1.0]
    "#;
    let manifest = r#"
        name = "blowup"
        [[experiments]]
        id = "gd"
        config = "gd.toml"
    "#;
    let s = Scenario::from_manifest(manifest, |_| Some(cfg.to_owned())).unwrap();
    let outcome = s.run(&Overrides::default()).unwrap();
    assert_eq!(outcome.unexpected_divergence(), vec!["gd"]);
    assert_eq!(outcome.exit_code(), 3);
}

#[test]
fn artifacts_are_written_per_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let outcome = Scenario::preset("ht-vs-nesterov").unwrap().run(&Overrides::default()).unwrap();
    let files = outcome.write_artifacts(tmp.path()).unwrap();
    assert_eq!(files.len(), 3);
    let summary = std::fs::read_to_string(tmp.path().join("summary.toml")).unwrap();
    assert!(summary.contains("scenario = \"ht-vs-nesterov\""));
    assert!(summary.contains("kind = \"theta-escapes\""));
    assert!(summary.contains("status = \"diverged\""), "the Nesterov run is expected to blow up");
    let nesterov = std::fs::read_to_string(tmp.path().join("nesterov.csv")).unwrap();
    assert!(nesterov.lines().count() < 10_001);
}

#[test]
fn scenario_runs_are_deterministic() {
    let run = || {
        let o = Scenario::preset("regret-constant-vs-sqrt").unwrap().run(&Overrides::default()).unwrap();
        o.summary_toml()
    };
    assert_eq!(run(), run());
}
