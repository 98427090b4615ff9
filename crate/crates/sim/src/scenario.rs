//! Scenario presets: a manifest listing experiment configs and the checks
//! evaluated on their results. Presets ship as TOML files compiled into the
//! binary.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ExperimentConfig, Mode};
use crate::output;
use crate::report::{run_config, AnalysisReport, RunError, RunResult};

macro_rules! embed {
    ($($path:literal),* $(,)?) => {
        &[$(($path, include_str!(concat!("../scenarios/", $path)))),*]
    };
}

/// Manifests, in listing order.
const MANIFESTS: &[(&str, &str)] = embed![
    "pe-convergence.toml",
    "non-pe-stall.toml",
    "regret-constant-vs-sqrt.toml",
    "ht-vs-nesterov.toml",
    "robustness-sigma-emod-deadzone.toml",
    "spr-lyapunov.toml",
];

const CONFIGS: &[(&str, &str)] = embed![
    "configs/pe-gradient-flow.toml",
    "configs/pe-gradient-flow-half-dt.toml",
    "configs/non-pe-gradient-flow.toml",
    "configs/regret-gradient-flow-long.toml",
    "configs/regret-ogd-ball.toml",
    "configs/regret-gd-realizable.toml",
    "configs/jensen-gd-constant.toml",
    "configs/jensen-pgd-logistic.toml",
    "configs/stress-higher-order-tuner.toml",
    "configs/stress-nesterov.toml",
    "configs/robust-gradient-flow.toml",
    "configs/robust-sigma.toml",
    "configs/robust-emod.toml",
    "configs/robust-deadzone.toml",
    "configs/robust-projection.toml",
    "configs/spr-gradient-flow.toml",
];

pub fn preset_names() -> Vec<&'static str> {
    MANIFESTS.iter().map(|(p, _)| p.trim_end_matches(".toml")).collect()
}

/// Source text of an embedded experiment config, by manifest-relative path.
pub fn embedded_config(path: &str) -> Option<&'static str> {
    CONFIGS.iter().find(|(p, _)| *p == path).map(|(_, text)| *text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub experiments: Vec<ExperimentRef>,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentRef {
    pub id: String,
    pub config: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSpec {
    #[serde(flatten)]
    pub check: Check,
    /// Report a failure without failing the scenario.
    #[serde(default)]
    pub warn_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Check {
    Completed {
        experiment: String,
    },
    FinalThetaErrorBelow {
        experiment: String,
        value: f64,
    },
    FinalThetaErrorWithin {
        experiment: String,
        min: f64,
        max: f64,
    },
    FinalOutputErrorBelow {
        experiment: String,
        value: f64,
    },
    FinalThetaAgreement {
        experiment: String,
        other: String,
        tol: f64,
    },
    ConvergenceRate {
        experiment: String,
        max_slope: f64,
        min_r_squared: f64,
    },
    PeLevelAbove {
        experiment: String,
        value: f64,
    },
    PeLevelBelow {
        experiment: String,
        value: f64,
    },
    /// `V(t_{k+1}) ≤ V(t_k) + tol`, or `+ |δ(t_k)|·dt + tol` with `delta_slack`.
    LyapunovNonincreasing {
        experiment: String,
        tol: f64,
        #[serde(default)]
        delta_slack: bool,
    },
    RegretPlateau {
        experiment: String,
        t1: f64,
        t2: f64,
        ratio: f64,
    },
    OgdRegretBound {
        experiment: String,
        factor: f64,
    },
    RegretNondecreasing {
        experiment: String,
    },
    RegretWithinLyapunovBound {
        experiment: String,
    },
    /// `‖θ(t)‖ ≤ factor·(‖θ(0)‖ + ‖θ*‖)` at every step of a completed run.
    ThetaBounded {
        experiment: String,
        factor: f64,
    },
    /// `‖θ‖` exceeds `factor·(‖θ(0)‖ + ‖θ*‖)` (or the run diverges) before `before`.
    ThetaEscapes {
        experiment: String,
        factor: f64,
        before: f64,
    },
    StateDecays {
        experiment: String,
        value: f64,
    },
    Jensen {
        experiment: String,
        tol: f64,
    },
    ConstraintSatisfied {
        experiment: String,
        tol: f64,
    },
}

impl Check {
    pub fn experiment(&self) -> &str {
        match self {
            Self::Completed { experiment }
            | Self::FinalThetaErrorBelow { experiment, .. }
            | Self::FinalThetaErrorWithin { experiment, .. }
            | Self::FinalOutputErrorBelow { experiment, .. }
            | Self::FinalThetaAgreement { experiment, .. }
            | Self::ConvergenceRate { experiment, .. }
            | Self::PeLevelAbove { experiment, .. }
            | Self::PeLevelBelow { experiment, .. }
            | Self::LyapunovNonincreasing { experiment, .. }
            | Self::RegretPlateau { experiment, .. }
            | Self::OgdRegretBound { experiment, .. }
            | Self::RegretNondecreasing { experiment }
            | Self::RegretWithinLyapunovBound { experiment }
            | Self::ThetaBounded { experiment, .. }
            | Self::ThetaEscapes { experiment, .. }
            | Self::StateDecays { experiment, .. }
            | Self::Jensen { experiment, .. }
            | Self::ConstraintSatisfied { experiment, .. } => experiment,
        }
    }

    pub fn kind(&self) -> String {
        output::to_toml(self)
            .lines()
            .find_map(|l| l.strip_prefix("kind = ").map(|k| k.trim_matches('"').to_owned()))
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub kind: String,
    pub experiment: String,
    pub passed: bool,
    pub warn_only: bool,
    pub detail: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{name}`; available: {}", preset_names().join(", "))]
    Unknown { name: String },
    #[error("scenario manifest {name}: {source}")]
    Manifest { name: String, source: toml::de::Error },
    #[error("scenario {scenario}: {message}")]
    Reference { scenario: String, message: String },
    #[error("experiment `{id}`: {source}")]
    Config { id: String, source: ConfigError },
    #[error("experiment `{id}`: {source}")]
    Run { id: String, source: RunError },
    #[error("cannot write artifacts: {0}")]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    fn named(self, file: &str) -> Self {
        match self {
            Self::Manifest { source, .. } => Self::Manifest { name: file.to_owned(), source },
            e => e,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Run { source: RunError::Core(_), .. } => 1,
            Self::Io(_) => 1,
            _ => 2,
        }
    }
}

/// Command-line overrides applied to every experiment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    /// Applied to continuous experiments only.
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub decimate: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let (Some(dt), Mode::Continuous) = (self.dt, cfg.mode()) {
            cfg.dt = dt;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(d) = self.decimate {
            cfg.decimate = d;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub configs: Vec<(String, ExperimentConfig)>,
}

impl Scenario {
    pub fn preset(name: &str) -> Result<Self, ScenarioError> {
        let file = format!("{name}.toml");
        let text = MANIFESTS
            .iter()
            .find(|(p, _)| *p == file)
            .map(|(_, t)| *t)
            .ok_or_else(|| ScenarioError::Unknown { name: name.to_owned() })?;
        Self::from_manifest(text, |path| embedded_config(path).map(str::to_owned)).map_err(|e| e.named(&file))
    }

    /// Parses a manifest, resolving each `config` path through `resolve`.
    pub fn from_manifest(text: &str, resolve: impl Fn(&str) -> Option<String>) -> Result<Self, ScenarioError> {
        let spec: ScenarioSpec =
            toml::from_str(text).map_err(|source| ScenarioError::Manifest { name: "<manifest>".into(), source })?;
        let mut configs = Vec::new();
        for r in &spec.experiments {
            if configs.iter().any(|(id, _): &(String, ExperimentConfig)| *id == r.id) {
                return Err(ScenarioError::Reference {
                    scenario: spec.name.clone(),
                    message: format!("duplicate experiment id `{}`", r.id),
                });
            }
            let src = resolve(&r.config).ok_or_else(|| ScenarioError::Reference {
                scenario: spec.name.clone(),
                message: format!("experiment `{}` refers to missing config `{}`", r.id, r.config),
            })?;
            let mut cfg = ExperimentConfig::from_toml(&src)
                .map_err(|source| ScenarioError::Config { id: r.id.clone(), source })?;
            cfg.name.get_or_insert_with(|| r.id.clone());
            configs.push((r.id.clone(), cfg));
        }
        for c in &spec.checks {
            let referenced = [
                Some(c.check.experiment()),
                match &c.check {
                    Check::FinalThetaAgreement { other, .. } => Some(other.as_str()),
                    _ => None,
                },
            ];
            for id in referenced.into_iter().flatten() {
                if !configs.iter().any(|(cid, _)| cid == id) {
                    return Err(ScenarioError::Reference {
                        scenario: spec.name.clone(),
                        message: format!("check `{}` names unknown experiment `{id}`", c.check.kind()),
                    });
                }
            }
        }
        Ok(Self { spec, configs })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_manifest(&text, |p| std::fs::read_to_string(dir.join(p)).ok())
            .map_err(|e| e.named(&path.display().to_string()))
    }

    /// Validates every experiment without running it.
    pub fn validate(&self, overrides: &Overrides) -> Result<(), ScenarioError> {
        for (id, cfg) in &self.configs {
            let mut cfg = cfg.clone();
            overrides.apply(&mut cfg);
            cfg.build().map_err(|source| ScenarioError::Config { id: id.clone(), source })?;
        }
        Ok(())
    }

    /// Runs every experiment on its own thread and evaluates the checks.
    pub fn run(&self, overrides: &Overrides) -> Result<ScenarioOutcome, ScenarioError> {
        self.validate(overrides)?;
        let results: Vec<(String, Result<RunResult, RunError>)> = std::thread::scope(|s| {
            let handles: Vec<_> = self
                .configs
                .iter()
                .map(|(id, cfg)| {
                    let mut cfg = cfg.clone();
                    overrides.apply(&mut cfg);
                    (id.clone(), s.spawn(move || run_config(&cfg)))
                })
                .collect();
            handles.into_iter().map(|(id, h)| (id, h.join().expect("experiment thread panicked"))).collect()
        });
        let mut runs = Vec::new();
        for (id, r) in results {
            runs.push((id.clone(), r.map_err(|source| ScenarioError::Run { id, source })?));
        }
        let checks = self.spec.checks.iter().map(|c| evaluate(c, &runs)).collect();
        Ok(ScenarioOutcome { name: self.spec.name.clone(), description: self.spec.description.clone(), checks, runs })
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub name: String,
    pub description: String,
    pub checks: Vec<CheckResult>,
    pub runs: Vec<(String, RunResult)>,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    scenario: &'a str,
    description: &'a str,
    passed: bool,
    exit_code: i32,
    checks: &'a [CheckResult],
    experiments: Vec<&'a AnalysisReport>,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.warn_only)
    }

    pub fn run(&self, id: &str) -> Option<&RunResult> {
        self.runs.iter().find(|(i, _)| i == id).map(|(_, r)| r)
    }

    /// Experiments that diverged without a check expecting it.
    pub fn unexpected_divergence(&self) -> Vec<&str> {
        self.runs
            .iter()
            .filter(|(id, r)| {
                r.report.diverged() && !self.checks.iter().any(|c| c.kind == "theta-escapes" && c.experiment == *id)
            })
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// 0 pass, 1 failed check, 3 unexpected divergence.
    pub fn exit_code(&self) -> i32 {
        if !self.passed() {
            1
        } else if !self.unexpected_divergence().is_empty() {
            3
        } else {
            0
        }
    }

    pub fn summary_toml(&self) -> String {
        output::to_toml(&Summary {
            scenario: &self.name,
            description: &self.description,
            passed: self.passed(),
            exit_code: self.exit_code(),
            checks: &self.checks,
            experiments: self.runs.iter().map(|(_, r)| &r.report).collect(),
        })
    }

    /// Writes `<dir>/<id>.csv` per experiment and `<dir>/summary.toml`.
    pub fn write_artifacts(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (id, r) in &self.runs {
            let path = output::csv_path(dir, id);
            output::write_csv_file(&path, &r.outcome.trajectory)?;
            written.push(path);
        }
        let summary = dir.join("summary.toml");
        std::fs::write(&summary, self.summary_toml())?;
        written.push(summary);
        Ok(written)
    }
}

fn find<'a>(runs: &'a [(String, RunResult)], id: &str) -> &'a RunResult {
    &runs.iter().find(|(i, _)| i == id).expect("check references were validated").1
}

fn outcome(passed: bool, detail: String) -> (bool, String) {
    (passed, detail)
}

fn evaluate(spec: &CheckSpec, runs: &[(String, RunResult)]) -> CheckResult {
    let r = find(runs, spec.check.experiment());
    let rep = &r.report;
    let (passed, detail) = match &spec.check {
        Check::Completed { .. } => outcome(!rep.diverged(), format!("status {}", rep.status)),
        Check::FinalThetaErrorBelow { value, .. } => outcome(
            !rep.diverged() && rep.final_theta_err_norm < *value,
            format!("‖θ̃(T)‖ = {:e} (limit {value:e})", rep.final_theta_err_norm),
        ),
        Check::FinalThetaErrorWithin { min, max, .. } => outcome(
            !rep.diverged() && (*min..=*max).contains(&rep.final_theta_err_norm),
            format!("‖θ̃(T)‖ = {:e} (range [{min}, {max}])", rep.final_theta_err_norm),
        ),
        Check::FinalOutputErrorBelow { value, .. } => outcome(
            !rep.diverged() && rep.final_output_error.abs() < *value,
            format!("|e_y(T)| = {:e} (limit {value:e})", rep.final_output_error.abs()),
        ),
        Check::FinalThetaAgreement { other, tol, .. } => {
            let o = &find(runs, other).report;
            let diff = rep.final_theta.iter().zip(&o.final_theta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            outcome(diff <= *tol, format!("‖θ_a(T) − θ_b(T)‖ = {diff:e} against `{other}` (limit {tol:e})"))
        }
        Check::ConvergenceRate { max_slope, min_r_squared, .. } => match &rep.convergence {
            Some(f) => outcome(
                f.slope < *max_slope && f.r_squared > *min_r_squared,
                format!("slope {:.6}, R² {:.6} (need slope < {max_slope}, R² > {min_r_squared})", f.slope, f.r_squared),
            ),
            None => outcome(false, "no convergence fit; enable analysis.convergence_fit".into()),
        },
        Check::PeLevelAbove { value, .. } => match rep.pe_level {
            Some(l) => outcome(l > *value, format!("PE level {l:e} (need > {value:e})")),
            None => outcome(false, "no PE level; set analysis.pe_window".into()),
        },
        Check::PeLevelBelow { value, .. } => match rep.pe_level {
            Some(l) => outcome(l < *value, format!("PE level {l:e} (need < {value:e})")),
            None => outcome(false, "no PE level; set analysis.pe_window".into()),
        },
        Check::LyapunovNonincreasing { tol, delta_slack, .. } => {
            let worst = if *delta_slack { rep.max_lyapunov_excess } else { rep.max_lyapunov_increase };
            let what = if *delta_slack { "max V(t+dt) − V(t) − |δ|dt" } else { "max V(t+dt) − V(t)" };
            outcome(
                !rep.diverged() && worst <= *tol,
                format!("{what} = {worst:e} over {} steps (limit {tol:e})", rep.steps),
            )
        }
        Check::RegretPlateau { t1, t2, ratio, .. } => match &rep.continuous_regret {
            Some(c) => match (c.at(*t1), c.at(*t2)) {
                (Some(a), Some(b)) => outcome(
                    b - a <= ratio * a,
                    format!("regret({t1}) = {a:e}, regret({t2}) = {b:e}, growth {:e} (limit {:e})", b - a, ratio * a),
                ),
                _ => outcome(false, format!("horizon {} does not reach t = {t2}", rep.final_t)),
            },
            None => outcome(false, "no continuous regret; enable analysis.regret".into()),
        },
        Check::OgdRegretBound { factor, .. } => {
            match rep.discrete_regret.as_ref().and_then(|d| d.max_bound_ratio.map(|x| (d, x))) {
                Some((d, ratio)) => outcome(
                    ratio <= *factor,
                    format!(
                        "max_T regret_T/(G·D·√T) = {ratio:.6} with G = {:.6}, D = {:.6} (limit {factor})",
                        d.gradient_bound_observed, d.diameter
                    ),
                ),
                None => outcome(false, "no regret curve; enable analysis.regret on a quadratic stream".into()),
            }
        }
        Check::RegretNondecreasing { .. } => match rep.discrete_regret.as_ref().and_then(|d| d.nondecreasing) {
            Some(m) => outcome(m, format!("regret curve nondecreasing: {m}")),
            None => match &rep.continuous_regret {
                Some(c) => {
                    let m = adaptml_core::analysis::is_nondecreasing(&c.curve, 1e-12);
                    outcome(m, format!("regret curve nondecreasing: {m}"))
                }
                None => outcome(false, "no regret curve".into()),
            },
        },
        Check::RegretWithinLyapunovBound { .. } => match &rep.continuous_regret {
            Some(c) => outcome(
                c.within_bound,
                format!("∫eᵀQe − ∫δ = {:e}, V(t₀) = {:e}", c.run_integral - c.delta_integral, c.lyapunov_bound),
            ),
            None => outcome(false, "no continuous regret; enable analysis.regret".into()),
        },
        Check::ThetaBounded { factor, .. } => {
            let limit = factor * rep.theta_scale;
            outcome(
                !rep.diverged() && rep.max_theta_norm <= limit,
                format!("max ‖θ‖ = {:e} (limit {limit:e}), status {}", rep.max_theta_norm, rep.status),
            )
        }
        Check::ThetaEscapes { factor, before, .. } => {
            let limit = factor * rep.theta_scale;
            let first = r
                .outcome
                .trajectory
                .rows
                .iter()
                .find(|row| row.theta.norm() > limit)
                .map(|row| row.t)
                .or(rep.diverged_at);
            match first {
                Some(t) => {
                    outcome(t < *before, format!("‖θ‖ first exceeds {limit:e} at t = {t} (need before {before})"))
                }
                None => outcome(false, format!("‖θ‖ stayed within {limit:e}; max {:e}", rep.max_theta_norm)),
            }
        }
        Check::StateDecays { value, .. } => match (rep.final_state_norm, rep.final_phi_tilde_norm) {
            (Some(e), Some(p)) => outcome(
                !rep.diverged() && e < *value && p < *value,
                format!("‖e(T)‖ = {e:e}, ‖φ̃(T)‖ = {p:e} (limit {value:e})"),
            ),
            _ => outcome(false, "not a dynamic-model run".into()),
        },
        Check::Jensen { tol, .. } => match &rep.jensen {
            Some(j) => outcome(j.lhs <= j.rhs + tol, format!("lhs {:e}, rhs {:e} (slack {tol:e})", j.lhs, j.rhs)),
            None => outcome(false, "no Jensen report; enable analysis.jensen on a constant-cost discrete run".into()),
        },
        Check::ConstraintSatisfied { tol, .. } => match rep.constraint_violation {
            Some(v) => outcome(v <= *tol, format!("max constraint violation {v:e} (limit {tol:e})")),
            None => outcome(false, "law has no constraint".into()),
        },
    };
    CheckResult {
        kind: spec.check.kind(),
        experiment: spec.check.experiment().to_owned(),
        passed,
        warn_only: spec.warn_only,
        detail,
    }
}
