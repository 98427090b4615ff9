//! Experiment configuration: one TOML file per experiment.
//!
//! Parsing is two-phase. `serde` handles syntax and unknown keys, then
//! [`ExperimentConfig::build`] checks cross-field rules and reports every
//! problem with its dotted field path.

use std::fmt;
use std::path::{Path, PathBuf};

use adaptml_core::continuous::{
    ContinuousKind, ContinuousLaw, GainAdaptation, Modification, ProjectionBound, TunerParams,
};
use adaptml_core::discrete::{
    AdaptiveStepState, FeasibleSet, Parameterization, RegularizerKind, RegularizerSpec, ScheduleKind, StepSchedule,
};
use adaptml_core::error_models::{AlgebraicErrorModel, DynamicErrorModel, ErrorModel};
use adaptml_core::losses::LossKind;
use adaptml_core::signals::{RegressorSignal, SinusoidBank};
use adaptml_core::sim::{DiscreteLaw, Experiment, LawSpec};
use adaptml_core::{Matrix, Vector};
use serde::{Deserialize, Serialize};

pub const DEFAULT_DT: f64 = 1e-3;

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Base seed; seeded-random signals add their `seed_offset`.
    #[serde(default)]
    pub seed: u64,
    /// Optional explicit simulation mode; must agree with the law.
    #[serde(default)]
    pub mode: Option<Mode>,
    /// Time units for continuous laws, iterations for discrete ones.
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "one")]
    pub decimate: usize,
    pub theta0: Vec<f64>,
    pub theta_star: Vec<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Permits the time-varying gain on the dynamic error model.
    #[serde(default)]
    pub allow_unsafe_pairing: bool,
    pub model: ModelConfig,
    pub law: LawConfig,
    pub signal: SignalConfig,
    #[serde(default)]
    pub disturbance: Option<SignalConfig>,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Algebraic,
    Dynamic {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: Vec<f64>,
        /// Filter matrix; defaults to `−I`.
        #[serde(default)]
        lambda: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        e0: Option<Vec<f64>>,
        #[serde(default)]
        phi_tilde0: Option<Vec<f64>>,
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        allow_alpha_violation: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LawConfig {
    GradientFlow {
        gamma: f64,
    },
    Sigma {
        gamma: f64,
        sigma: f64,
    },
    EMod {
        gamma: f64,
        sigma: f64,
    },
    Deadzone {
        gamma: f64,
        d0: f64,
        eps: f64,
    },
    Projection {
        gamma: f64,
        outer: Vec<f64>,
        inner: Vec<f64>,
    },
    TimeVaryingGain {
        gamma: f64,
        #[serde(default)]
        forgetting: f64,
        mu: f64,
        gamma_max: f64,
        /// Defaults to the identity.
        #[serde(default)]
        gamma0: Option<Vec<Vec<f64>>>,
    },
    HigherOrderTuner {
        gamma: f64,
        beta: f64,
        mu: f64,
        /// Defaults to `θ(0)`.
        #[serde(default)]
        vartheta0: Option<Vec<f64>>,
    },
    Hold,
    Gd {
        schedule: ScheduleConfig,
    },
    Rftl {
        schedule: ScheduleConfig,
        regularizer: RegularizerConfig,
    },
    ProjectedGd {
        schedule: ScheduleConfig,
        set: SetConfig,
    },
    AdaptiveStep {
        schedule: ScheduleConfig,
        set: SetConfig,
        parameterization: ParameterizationConfig,
        #[serde(default)]
        beta1: Option<f64>,
        #[serde(default)]
        beta2: Option<f64>,
        #[serde(default)]
        eps: f64,
    },
    Nesterov {
        gamma: f64,
        beta: f64,
    },
}

impl LawConfig {
    pub fn mode(&self) -> Mode {
        match self {
            Self::Gd { .. }
            | Self::Rftl { .. }
            | Self::ProjectedGd { .. }
            | Self::AdaptiveStep { .. }
            | Self::Nesterov { .. } => Mode::Discrete,
            _ => Mode::Continuous,
        }
    }

    pub fn set(&self) -> Option<&SetConfig> {
        match self {
            Self::ProjectedGd { set, .. } | Self::AdaptiveStep { set, .. } => Some(set),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParameterizationConfig {
    Identity,
    Adagrad,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "constant_schedule")]
    pub kind: ScheduleKindConfig,
    #[serde(default)]
    pub gamma0: Option<f64>,
    /// Sets `γ₀ = D/G` from the feasible-set diameter `D` when `gamma0` is absent.
    #[serde(default)]
    pub gradient_bound: Option<f64>,
}

fn constant_schedule() -> ScheduleKindConfig {
    ScheduleKindConfig::Constant
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKindConfig {
    Constant,
    InverseSqrt,
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerConfig {
    pub kind: RegularizerKindConfig,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizerKindConfig {
    L2,
    L1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SetConfig {
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Ball {
        /// Defaults to the origin.
        #[serde(default)]
        center: Option<Vec<f64>>,
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalConfig {
    Constant {
        value: Vec<f64>,
    },
    Sinusoids {
        amplitudes: Vec<f64>,
        frequencies: Vec<f64>,
        #[serde(default)]
        phases: Option<Vec<f64>>,
    },
    Rbf {
        centers: Vec<Vec<f64>>,
        width: f64,
        input: SinusoidConfig,
    },
    Switching {
        levels: Vec<Vec<f64>>,
        period: f64,
    },
    SeededRandom {
        dimension: usize,
        amplitude: f64,
        hold: f64,
        #[serde(default)]
        seed_offset: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidConfig {
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    #[serde(default)]
    pub phases: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LossConfig {
    #[default]
    Squared,
    Lp {
        p: u32,
    },
    Hinge,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Window length for the persistent-excitation level.
    #[serde(default)]
    pub pe_window: Option<f64>,
    #[serde(default)]
    pub convergence_fit: bool,
    #[serde(default)]
    pub regret: bool,
    /// Weight `q` in `q·e_y²` for continuous regret on the algebraic model.
    #[serde(default)]
    pub regret_weight: Option<f64>,
    /// Comparator set for discrete regret; defaults to the law's set.
    #[serde(default)]
    pub regret_set: Option<SetConfig>,
    #[serde(default)]
    pub jensen: bool,
}

/// A single validation problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration:\n{}", format_issues(.0))]
    Invalid(Vec<Issue>),
}

fn format_issues(issues: &[Issue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

struct Issues(Vec<Issue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl fmt::Display) {
        self.0.push(Issue { path: path.into(), message: message.to_string() });
    }

    /// Records a core constructor error under `path` and returns the value if any.
    fn take<T>(&mut self, path: &str, r: adaptml_core::Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.push(path, e);
                None
            }
        }
    }

    fn finite(&mut self, path: &str, v: f64) -> Option<f64> {
        if v.is_finite() {
            Some(v)
        } else {
            self.push(path, format!("must be finite, got {v}"));
            None
        }
    }

    fn positive(&mut self, path: &str, v: f64) -> Option<f64> {
        if v > 0.0 && v.is_finite() {
            Some(v)
        } else {
            self.push(path, format!("must be positive and finite, got {v}"));
            None
        }
    }

    fn dim(&mut self, path: &str, expected: usize, got: usize) -> bool {
        if expected != got {
            self.push(path, format!("expected length {expected}, got {got}"));
        }
        expected == got
    }
}

fn vector(v: &[f64]) -> Vector {
    Vector::from_column_slice(v)
}

fn matrix(issues: &mut Issues, path: &str, rows: &[Vec<f64>]) -> Option<Matrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        issues.push(path, "must be a nonempty rectangular array of rows");
        return None;
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        issues.push(path, "entries must be finite");
        return None;
    }
    Some(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn mode(&self) -> Mode {
        self.law.mode()
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| "experiment".to_owned())
    }

    /// Validates every rule and builds the simulation input.
    pub fn build(&self) -> Result<Experiment, ConfigError> {
        let mut issues = Issues(Vec::new());
        let exp = self.build_inner(&mut issues);
        match exp {
            Some(exp) if issues.0.is_empty() => Ok(exp),
            _ => {
                if issues.0.is_empty() {
                    issues.push("", "configuration could not be built");
                }
                Err(ConfigError::Invalid(issues.0))
            }
        }
    }

    fn build_inner(&self, issues: &mut Issues) -> Option<Experiment> {
        let n = self.theta_star.len();
        if n == 0 {
            issues.push("theta_star", "must be nonempty");
        }
        issues.dim("theta0", n, self.theta0.len());
        for (path, v) in [("theta0", &self.theta0), ("theta_star", &self.theta_star)] {
            if v.iter().any(|x| !x.is_finite()) {
                issues.push(path, "entries must be finite");
            }
        }
        let mode = self.mode();
        if let Some(m) = self.mode {
            if m != mode {
                issues.push("mode", format!("{m:?} simulation cannot run the {mode:?} law `{}`", law_name(&self.law)));
            }
        }
        issues.positive("horizon", self.horizon);
        match mode {
            Mode::Continuous => {
                if !(self.dt > 0.0 && self.dt.is_finite()) {
                    issues.push("dt", format!("must be positive, got {}", self.dt));
                } else if self.horizon > 0.0 && self.dt > self.horizon / 100.0 {
                    issues
                        .push("dt", format!("must not exceed horizon/100 = {}, got {}", self.horizon / 100.0, self.dt));
                }
            }
            Mode::Discrete => {
                if self.horizon.fract() != 0.0 {
                    issues.push("horizon", format!("discrete runs need a whole number of steps, got {}", self.horizon));
                }
            }
        }
        if self.decimate == 0 {
            issues.push("decimate", "must be at least 1");
        }

        let loss = match self.loss {
            LossConfig::Squared => Some(LossKind::Squared),
            LossConfig::Lp { p } => issues.take("loss.p", LossKind::lp(p)),
            LossConfig::Hinge => Some(LossKind::Hinge),
            LossConfig::Logistic => Some(LossKind::Logistic),
        };

        let theta_star = vector(&self.theta_star);
        let (model, e0, phi_tilde0, alpha, allow_alpha) = match &self.model {
            ModelConfig::Algebraic => (
                issues.take("theta_star", AlgebraicErrorModel::new(theta_star.clone())).map(ErrorModel::Algebraic),
                None,
                None,
                None,
                false,
            ),
            ModelConfig::Dynamic { a, b, c, lambda, e0, phi_tilde0, alpha, allow_alpha_violation } => {
                let a_m = matrix(issues, "model.a", a);
                let lambda_m = match lambda {
                    Some(l) => matrix(issues, "model.lambda", l),
                    None => Some(-Matrix::identity(n, n)),
                };
                if let Some(a_m) = &a_m {
                    issues.dim("model.b", a_m.nrows(), b.len());
                    issues.dim("model.c", a_m.nrows(), c.len());
                    if let Some(e0) = e0 {
                        issues.dim("model.e0", a_m.nrows(), e0.len());
                    }
                }
                if let Some(l) = &lambda_m {
                    if l.nrows() != n || l.ncols() != n {
                        issues.push("model.lambda", format!("must be {n}×{n}"));
                    }
                }
                if let Some(p) = phi_tilde0 {
                    issues.dim("model.phi_tilde0", n, p.len());
                }
                if let Some(al) = alpha {
                    issues.positive("model.alpha", *al);
                }
                if mode == Mode::Discrete {
                    issues.push("law.kind", "discrete laws run on the algebraic model only");
                }
                if loss != Some(LossKind::Squared) {
                    issues.push("loss.kind", "the dynamic model adapts on the squared output error");
                }
                if matches!(self.law, LawConfig::TimeVaryingGain { .. }) && !self.allow_unsafe_pairing {
                    issues.push(
                        "law.kind",
                        "time-varying gain on the dynamic error model has no stability guarantee; set allow_unsafe_pairing = true to run it anyway",
                    );
                }
                let model = match (a_m, lambda_m) {
                    (Some(a_m), Some(l)) if issues.0.is_empty() => issues
                        .take("model", DynamicErrorModel::new(a_m, vector(b), vector(c), l, theta_star.clone()))
                        .map(ErrorModel::Dynamic),
                    _ => None,
                };
                (model, e0.as_deref().map(vector), phi_tilde0.as_deref().map(vector), *alpha, *allow_alpha_violation)
            }
        };

        let signal = build_signal(issues, "signal", &self.signal, self.seed);
        if let Some(s) = &signal {
            issues.dim("signal", n, s.dimension());
        }
        let disturbance = self.disturbance.as_ref().and_then(|d| {
            let s = build_signal(issues, "disturbance", d, self.seed)?;
            issues.dim("disturbance", 1, s.dimension()).then_some(s)
        });

        let law = self.build_law(issues, n);

        if self.analysis.regret && mode == Mode::Discrete && self.decimate != 1 {
            issues.push("analysis.regret", "discrete regret needs every iterate; set decimate = 1");
        }
        if let Some(w) = self.analysis.pe_window {
            issues.positive("analysis.pe_window", w);
        }
        if let Some(w) = self.analysis.regret_weight {
            issues.positive("analysis.regret_weight", w);
        }
        if let Some(set) = &self.analysis.regret_set {
            build_set(issues, "analysis.regret_set", set, n);
        }

        let mut exp = Experiment::new(model?, law?, signal?, vector(&self.theta0), self.horizon, self.dt);
        exp.loss = loss?;
        exp.decimate = self.decimate;
        exp.disturbance = disturbance;
        exp.e0 = e0;
        exp.phi_tilde0 = phi_tilde0;
        exp.alpha = alpha;
        exp.allow_alpha_violation = allow_alpha;
        if !issues.0.is_empty() {
            return None;
        }
        issues.take("", exp.validate()).map(|_| exp)
    }

    fn build_law(&self, issues: &mut Issues, n: usize) -> Option<LawSpec> {
        let continuous = |issues: &mut Issues, gamma: f64, kind: ContinuousKind| {
            issues.positive("law.gamma", gamma)?;
            issues.take("law", ContinuousLaw::new(gamma, kind)).map(LawSpec::Continuous)
        };
        match &self.law {
            LawConfig::GradientFlow { gamma } => continuous(issues, *gamma, ContinuousKind::GradientFlow),
            LawConfig::Sigma { gamma, sigma } => continuous(
                issues,
                *gamma,
                ContinuousKind::Modified { sigma: *sigma, modification: Modification::Sigma },
            ),
            LawConfig::EMod { gamma, sigma } => {
                continuous(issues, *gamma, ContinuousKind::Modified { sigma: *sigma, modification: Modification::EMod })
            }
            LawConfig::Deadzone { gamma, d0, eps } => {
                continuous(issues, *gamma, ContinuousKind::Deadzone { d0: *d0, eps: *eps })
            }
            LawConfig::Projection { gamma, outer, inner } => {
                if !(issues.dim("law.outer", n, outer.len()) & issues.dim("law.inner", n, inner.len())) {
                    return None;
                }
                let bounds: Option<Vec<_>> = outer
                    .iter()
                    .zip(inner)
                    .enumerate()
                    .map(|(i, (o, inn))| issues.take(&format!("law.outer[{i}]"), ProjectionBound::new(*o, *inn)))
                    .collect();
                let bounds = bounds?;
                for (i, (th, b)) in self.theta0.iter().zip(&bounds).enumerate() {
                    if th.abs() > b.outer {
                        issues.push(
                            format!("theta0[{i}]"),
                            format!("|θ(0)| must lie within the projection bound {}", b.outer),
                        );
                    }
                }
                continuous(issues, *gamma, ContinuousKind::Projection { bounds })
            }
            LawConfig::TimeVaryingGain { gamma, forgetting, mu, gamma_max, gamma0 } => {
                let g0 = match gamma0 {
                    Some(rows) => matrix(issues, "law.gamma0", rows)?,
                    None => Matrix::identity(n, n),
                };
                if !(g0.nrows() == n && g0.ncols() == n) {
                    issues.push("law.gamma0", format!("must be {n}×{n}"));
                    return None;
                }
                let params = issues.take("law", GainAdaptation::new(*forgetting, *mu, *gamma_max, g0))?;
                continuous(issues, *gamma, ContinuousKind::TimeVaryingGain(params))
            }
            LawConfig::HigherOrderTuner { gamma, beta, mu, vartheta0 } => {
                let v0 = vartheta0.as_deref().unwrap_or(&self.theta0);
                if !issues.dim("law.vartheta0", n, v0.len()) {
                    return None;
                }
                let params = issues.take("law", TunerParams::new(*beta, *mu, vector(v0)))?;
                continuous(issues, *gamma, ContinuousKind::HigherOrderTuner(params))
            }
            LawConfig::Hold => Some(LawSpec::Hold),
            LawConfig::Gd { schedule } => {
                let schedule = build_schedule(issues, schedule, None)?;
                Some(LawSpec::Discrete(DiscreteLaw::Gd { schedule }))
            }
            LawConfig::Rftl { schedule, regularizer } => {
                let schedule = build_schedule(issues, schedule, None)?;
                let kind = match regularizer.kind {
                    RegularizerKindConfig::L2 => RegularizerKind::L2,
                    RegularizerKindConfig::L1 => RegularizerKind::L1,
                };
                let regularizer = issues.take("law.regularizer", RegularizerSpec::new(kind, regularizer.sigma))?;
                Some(LawSpec::Discrete(DiscreteLaw::Rftl { schedule, regularizer }))
            }
            LawConfig::ProjectedGd { schedule, set } => {
                let set = build_set(issues, "law.set", set, n)?;
                let schedule = build_schedule(issues, schedule, Some(set.diameter()))?;
                Some(LawSpec::Discrete(DiscreteLaw::ProjectedGd { schedule, set }))
            }
            LawConfig::AdaptiveStep { schedule, set, parameterization, beta1, beta2, eps } => {
                let set = build_set(issues, "law.set", set, n)?;
                let schedule = build_schedule(issues, schedule, Some(set.diameter()))?;
                let p = match parameterization {
                    ParameterizationConfig::Identity => Parameterization::Identity,
                    ParameterizationConfig::Adagrad => Parameterization::AdaGrad,
                    ParameterizationConfig::Adam => Parameterization::Adam,
                };
                let (b1, b2) = match p {
                    Parameterization::Adam => (beta1.unwrap_or(0.9), beta2.unwrap_or(0.999)),
                    _ => (beta1.unwrap_or(0.0), beta2.unwrap_or(0.0)),
                };
                let state = issues.take("law", AdaptiveStepState::new(p, n, b1, b2, *eps))?;
                Some(LawSpec::Discrete(DiscreteLaw::Adaptive { schedule, set, state }))
            }
            LawConfig::Nesterov { gamma, beta } => {
                issues.positive("law.gamma", *gamma)?;
                if !(*beta >= 0.0 && beta.is_finite()) {
                    issues.push("law.beta", format!("must be nonnegative, got {beta}"));
                    return None;
                }
                Some(LawSpec::Discrete(DiscreteLaw::Nesterov { gamma: *gamma, beta: *beta }))
            }
        }
    }
}

fn law_name(law: &LawConfig) -> String {
    toml::to_string(law)
        .ok()
        .and_then(|s| s.lines().find_map(|l| l.strip_prefix("kind = ").map(|k| k.trim_matches('"').to_owned())))
        .unwrap_or_default()
}

fn build_schedule(issues: &mut Issues, cfg: &ScheduleConfig, diameter: Option<f64>) -> Option<StepSchedule> {
    let gamma0 = match (cfg.gamma0, cfg.gradient_bound, diameter) {
        (Some(g), None, _) => g,
        (None, Some(gb), Some(d)) => d / issues.positive("law.schedule.gradient_bound", gb)?,
        (None, Some(_), None) => {
            issues.push("law.schedule.gradient_bound", "needs a feasible set to define the diameter");
            return None;
        }
        (Some(_), Some(_), _) => {
            issues.push("law.schedule", "give either gamma0 or gradient_bound, not both");
            return None;
        }
        (None, None, _) => {
            issues.push("law.schedule.gamma0", "missing");
            return None;
        }
    };
    let kind = match cfg.kind {
        ScheduleKindConfig::Constant => ScheduleKind::Constant,
        ScheduleKindConfig::InverseSqrt => ScheduleKind::InverseSqrt,
        ScheduleKindConfig::Inverse => ScheduleKind::Inverse,
    };
    issues.take("law.schedule", StepSchedule::new(kind, gamma0))
}

pub(crate) fn build_set_checked(cfg: &SetConfig, n: usize) -> Result<FeasibleSet, ConfigError> {
    let mut issues = Issues(Vec::new());
    build_set(&mut issues, "set", cfg, n).ok_or(ConfigError::Invalid(issues.0))
}

fn build_set(issues: &mut Issues, path: &str, cfg: &SetConfig, n: usize) -> Option<FeasibleSet> {
    match cfg {
        SetConfig::Box { lower, upper } => {
            if !(issues.dim(&format!("{path}.lower"), n, lower.len())
                & issues.dim(&format!("{path}.upper"), n, upper.len()))
            {
                return None;
            }
            issues.take(path, FeasibleSet::boxed(vector(lower), vector(upper)))
        }
        SetConfig::Ball { center, radius } => {
            let c = center.clone().unwrap_or_else(|| vec![0.0; n]);
            if !issues.dim(&format!("{path}.center"), n, c.len()) {
                return None;
            }
            issues.take(path, FeasibleSet::ball(vector(&c), *radius))
        }
    }
}

fn build_signal(issues: &mut Issues, path: &str, cfg: &SignalConfig, seed: u64) -> Option<RegressorSignal> {
    let bank = |issues: &mut Issues, path: &str, a: &[f64], f: &[f64], p: &Option<Vec<f64>>| {
        let phases = p.clone().unwrap_or_else(|| vec![0.0; a.len()]);
        issues.take(path, SinusoidBank::new(a.to_vec(), f.to_vec(), phases))
    };
    match cfg {
        SignalConfig::Constant { value } => issues.take(path, RegressorSignal::constant(vector(value))),
        SignalConfig::Sinusoids { amplitudes, frequencies, phases } => {
            bank(issues, path, amplitudes, frequencies, phases).map(RegressorSignal::Sinusoids)
        }
        SignalConfig::Rbf { centers, width, input } => {
            let c = matrix(issues, &format!("{path}.centers"), centers)?;
            let b = bank(issues, &format!("{path}.input"), &input.amplitudes, &input.frequencies, &input.phases)?;
            issues.take(path, RegressorSignal::rbf_map(c, *width, b))
        }
        SignalConfig::Switching { levels, period } => {
            let levels: Vec<Vector> = levels.iter().map(|l| vector(l)).collect();
            issues.take(path, RegressorSignal::piecewise_switching(levels, *period))
        }
        SignalConfig::SeededRandom { dimension, amplitude, hold, seed_offset } => {
            issues.finite(&format!("{path}.amplitude"), *amplitude)?;
            issues.take(
                path,
                RegressorSignal::seeded_random(*dimension, *amplitude, *hold, seed.wrapping_add(*seed_offset)),
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        horizon = 10.0
        theta0 = [0.0, 0.0]
        theta_star = [1.0, -1.0]
        [model]
        kind = "algebraic"
        [law]
        kind = "gradient-flow"
        gamma = 1.0
        [signal]
        kind = "sinusoids"
        amplitudes = [1.0, 1.0]
        frequencies = [1.0, 1.0]
        phases = [0.0, 1.5707963267948966]
    "#;

    fn issues_of(text: &str) -> Vec<Issue> {
        match ExperimentConfig::from_toml(text).unwrap().build() {
            Err(ConfigError::Invalid(i)) => i,
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_builds() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.dt, DEFAULT_DT);
        assert_eq!(cfg.mode(), Mode::Continuous);
        cfg.build().unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BASE.replace("gamma = 1.0", "gamma = 1.0\nspeed = 2.0");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn coarse_dt_is_reported_with_path() {
        let issues = issues_of(&BASE.replace("horizon = 10.0", "horizon = 10.0\ndt = 0.5"));
        assert_eq!(issues[0].path, "dt");
    }

    #[test]
    fn mismatched_lengths_are_all_reported() {
        let text = BASE
            .replace("theta0 = [0.0, 0.0]", "theta0 = [0.0]")
            .replace("amplitudes = [1.0, 1.0]", "amplitudes = [1.0]");
        let paths: Vec<String> = issues_of(&text).into_iter().map(|i| i.path).collect();
        assert!(paths.contains(&"theta0".to_owned()));
        assert!(paths.contains(&"signal".to_owned()));
    }

    #[test]
    fn mode_must_match_law() {
        let issues = issues_of(&BASE.replace("horizon = 10.0", "horizon = 10.0\nmode = \"discrete\""));
        assert_eq!(issues[0].path, "mode");
    }

    #[test]
    fn dynamic_time_varying_gain_needs_opt_in() {
        let text = BASE
            .replace("kind = \"algebraic\"", "kind = \"dynamic\"\na = [[-1.0]]\nb = [1.0]\nc = [1.0]")
            .replace("kind = \"gradient-flow\"", "kind = \"time-varying-gain\"\nmu = 1.0\ngamma_max = 5.0");
        let issues = issues_of(&text);
        assert_eq!(issues[0].path, "law.kind");
        let allowed = text.replace("horizon = 10.0", "horizon = 10.0\nallow_unsafe_pairing = true");
        ExperimentConfig::from_toml(&allowed).unwrap().build().unwrap();
    }

    #[test]
    fn non_spr_model_is_rejected() {
        let text = BASE
            .replace("theta0 = [0.0, 0.0]", "theta0 = [0.0]")
            .replace("theta_star = [1.0, -1.0]", "theta_star = [1.0]")
            .replace("amplitudes = [1.0, 1.0]", "amplitudes = [1.0]")
            .replace("frequencies = [1.0, 1.0]", "frequencies = [1.0]")
            .replace("phases = [0.0, 1.5707963267948966]", "phases = [0.0]")
            .replace(
                "kind = \"algebraic\"",
                "kind = \"dynamic\"\na = [[0.0, 1.0], [-1.0, -1.0]]\nb = [0.0, 1.0]\nc = [1.0, 0.0]",
            );
        let issues = issues_of(&text);
        assert_eq!(issues[0].path, "model");
        assert!(issues[0].message.contains("positive real"), "{}", issues[0].message);
    }

    #[test]
    fn discrete_schedule_from_gradient_bound() {
        let text = r#"
            horizon = 100
            theta0 = [0.0, 0.0]
            theta_star = [0.5, 0.5]
            [model]
            kind = "algebraic"
            [law]
            kind = "projected-gd"
            schedule = { kind = "inverse-sqrt", gradient_bound = 4.0 }
            set = { kind = "ball", radius = 1.0 }
            [signal]
            kind = "seeded-random"
            dimension = 2
            amplitude = 0.5
            hold = 1.0
        "#;
        let exp = ExperimentConfig::from_toml(text).unwrap().build().unwrap();
        match exp.law {
            LawSpec::Discrete(DiscreteLaw::ProjectedGd { schedule, .. }) => assert_eq!(schedule.gamma0, 0.5),
            other => panic!("{other:?}"),
        }
    }
}
