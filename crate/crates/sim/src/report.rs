//! Running one configured experiment and deriving its analysis report.

use adaptml_core::analysis::{
    continuous_regret, convergence_fit, discrete_regret, is_nondecreasing, jensen_gap, quadratic_regret_curve, simpson,
    static_minimizer, LossCost, QuadraticCost, StepCost,
};
use adaptml_core::discrete::{project, FeasibleSet};
use adaptml_core::error_models::ErrorModel;
use adaptml_core::signals::{pe_level, PeWindowConfig, RegressorSignal};
use adaptml_core::sim::{run, Experiment, LawSpec, RunOutcome, RunStatus, Trajectory};
use adaptml_core::{Matrix, Vector};
use serde::Serialize;

use crate::config::{build_set_checked, ConfigError, ExperimentConfig, LawConfig, Mode};

/// Stand-in comparator set when a discrete law is unconstrained.
const UNCONSTRAINED_HALF_WIDTH: f64 = 1e6;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Core(#[from] adaptml_core::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub slope: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuousRegretReport {
    pub weight: String,
    pub comparator: Vec<f64>,
    pub final_regret: f64,
    pub run_integral: f64,
    pub baseline_integral: f64,
    /// `∫δ dt`, zero on the algebraic model.
    pub delta_integral: f64,
    /// `V(t₀)`, which bounds `∫eᵀQe − ∫δ` along gradient flow.
    pub lyapunov_bound: f64,
    pub within_bound: bool,
    #[serde(skip)]
    pub times: Vec<f64>,
    #[serde(skip)]
    pub curve: Vec<f64>,
}

impl ContinuousRegretReport {
    /// Regret at the logged time nearest `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        let i = self.times.iter().position(|&s| s >= t - 1e-9)?;
        Some(self.curve[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteRegretReport {
    pub final_regret: f64,
    pub comparator: Vec<f64>,
    pub comparator_cost: f64,
    pub diameter: f64,
    /// Largest `‖∇𝒞_k(θ_k)‖` seen over the run.
    pub gradient_bound_observed: f64,
    /// `max_T regret_T / (G·D·√T)`; present when the full curve is exact.
    pub max_bound_ratio: Option<f64>,
    pub nondecreasing: Option<bool>,
    #[serde(skip)]
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JensenReport {
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub name: String,
    pub mode: String,
    pub status: String,
    pub diverged_at: Option<f64>,
    pub steps: usize,
    pub rows_logged: usize,
    pub final_t: f64,
    pub final_theta: Vec<f64>,
    pub final_theta_err_norm: f64,
    pub final_output_error: f64,
    /// `‖θ(0)‖ + ‖θ*‖`, the scale for boundedness checks.
    pub theta_scale: f64,
    pub max_theta_norm: f64,
    pub max_lyapunov_increase: f64,
    pub max_lyapunov_excess: f64,
    pub final_state_norm: Option<f64>,
    pub final_phi_tilde_norm: Option<f64>,
    /// Largest distance outside the constraint (projection bounds or feasible set).
    pub constraint_violation: Option<f64>,
    pub pe_level: Option<f64>,
    pub convergence: Option<FitReport>,
    pub continuous_regret: Option<ContinuousRegretReport>,
    pub discrete_regret: Option<DiscreteRegretReport>,
    pub jensen: Option<JensenReport>,
    pub notes: Vec<String>,
}

impl AnalysisReport {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// A finished run with everything needed to write artifacts.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub experiment: Experiment,
    pub outcome: RunOutcome,
    pub report: AnalysisReport,
}

pub fn run_config(cfg: &ExperimentConfig) -> Result<RunResult, RunError> {
    let exp = cfg.build()?;
    let outcome = run(&exp)?;
    let report = analyze(cfg, &exp, &outcome)?;
    Ok(RunResult { config: cfg.clone(), experiment: exp, outcome, report })
}

fn analyze(cfg: &ExperimentConfig, exp: &Experiment, outcome: &RunOutcome) -> Result<AnalysisReport, RunError> {
    let traj = &outcome.trajectory;
    let theta_star = exp.model.theta_star();
    let last = traj.last();
    let (diverged_at, status) = match outcome.status {
        RunStatus::Completed => (None, "completed"),
        RunStatus::Diverged { t } => (Some(t), "diverged"),
    };
    let d = &outcome.diagnostics;
    let mut report = AnalysisReport {
        name: cfg.display_name(),
        mode: match cfg.mode() {
            Mode::Continuous => "continuous".into(),
            Mode::Discrete => "discrete".into(),
        },
        status: status.into(),
        diverged_at,
        steps: d.steps,
        rows_logged: traj.rows.len(),
        final_t: last.map_or(0.0, |r| r.t),
        final_theta: outcome.final_theta.iter().copied().collect(),
        final_theta_err_norm: (&outcome.final_theta - theta_star).norm(),
        final_output_error: last.map_or(f64::NAN, |r| r.e_y),
        theta_scale: exp.theta0.norm() + theta_star.norm(),
        max_theta_norm: d.max_theta_norm,
        max_lyapunov_increase: d.max_lyapunov_increase,
        max_lyapunov_excess: d.max_lyapunov_excess,
        final_state_norm: None,
        final_phi_tilde_norm: None,
        constraint_violation: constraint_violation(cfg, exp, traj),
        pe_level: None,
        convergence: None,
        continuous_regret: None,
        discrete_regret: None,
        jensen: None,
        notes: Vec::new(),
    };
    if traj.dynamic {
        report.final_state_norm = last.map(|r| r.e.norm());
        report.final_phi_tilde_norm = last.map(|r| r.phi_tilde.norm());
    }
    if outcome.status != RunStatus::Completed {
        report.notes.push("run diverged; analysis limited to the logged prefix".into());
    }

    if let Some(window) = cfg.analysis.pe_window {
        let step = if exp.is_discrete() { 1.0 } else { exp.dt };
        let count = (exp.horizon / step).round() as usize + 1;
        let (times, samples) = exp.signal.sample(0.0, step, count);
        let pe = PeWindowConfig::new(window, step, 1e-6).and_then(|c| pe_level(&times, &samples, &c));
        match pe {
            Ok(level) => report.pe_level = Some(level),
            Err(e) => report.notes.push(format!("pe level unavailable: {e}")),
        }
    }

    if cfg.analysis.convergence_fit {
        let fit = convergence_fit(&traj.times(), &traj.theta_err_norms());
        match fit {
            Ok(f) => report.convergence = Some(FitReport { slope: f.slope, r_squared: f.r_squared }),
            Err(e) => report.notes.push(format!("convergence fit unavailable: {e}")),
        }
    }

    if cfg.analysis.regret {
        if exp.is_discrete() {
            report.discrete_regret = discrete_regret_report(cfg, exp, traj, &mut report.notes)?;
        } else {
            report.continuous_regret = continuous_regret_report(cfg, exp, traj, &mut report.notes)?;
        }
    }

    if cfg.analysis.jensen {
        report.jensen = jensen_report(cfg, exp, traj, &mut report.notes)?;
    }
    Ok(report)
}

fn constraint_violation(cfg: &ExperimentConfig, exp: &Experiment, traj: &Trajectory) -> Option<f64> {
    if let LawConfig::Projection { outer, .. } = &cfg.law {
        let worst = traj
            .rows
            .iter()
            .flat_map(|r| r.theta.iter().zip(outer).map(|(t, o)| t.abs() - o))
            .fold(f64::NEG_INFINITY, f64::max);
        return Some(worst.max(0.0));
    }
    if let LawSpec::Discrete(law) = &exp.law {
        let set = law.feasible_set()?;
        let worst = traj.rows.iter().map(|r| (&r.theta - project(set, &r.theta)).norm()).fold(0.0, f64::max);
        return Some(worst);
    }
    None
}

fn comparator_set(cfg: &ExperimentConfig, exp: &Experiment, notes: &mut Vec<String>) -> Result<FeasibleSet, RunError> {
    let n = exp.theta0.len();
    if let Some(set) = &cfg.analysis.regret_set {
        return Ok(build_set_checked(set, n)?);
    }
    if let LawSpec::Discrete(law) = &exp.law {
        if let Some(set) = law.feasible_set() {
            return Ok(set.clone());
        }
    }
    notes.push(format!("unconstrained law: comparator taken over the box ±{UNCONSTRAINED_HALF_WIDTH:e}"));
    Ok(FeasibleSet::symmetric_box(n, UNCONSTRAINED_HALF_WIDTH)?)
}

fn step_cost(exp: &Experiment, k: f64) -> LossCost {
    let (phi, y) = exp.observe(k);
    LossCost { kind: exp.loss, phi, y }
}

fn discrete_regret_report(
    cfg: &ExperimentConfig,
    exp: &Experiment,
    traj: &Trajectory,
    notes: &mut Vec<String>,
) -> Result<Option<DiscreteRegretReport>, RunError> {
    if traj.rows.is_empty() {
        return Ok(None);
    }
    let set = comparator_set(cfg, exp, notes)?;
    let costs: Vec<LossCost> = traj.rows.iter().map(|r| step_cost(exp, r.t)).collect();
    let iterates: Vec<Vector> = traj.rows.iter().map(|r| r.theta.clone()).collect();
    let g_obs = costs.iter().zip(&iterates).map(|(c, th)| c.gradient(th).norm()).fold(0.0, f64::max);
    let diameter = set.diameter();
    let quadratics: Option<Vec<QuadraticCost>> = costs.iter().map(StepCost::quadratic).collect();
    let record = discrete_regret(&costs, &iterates, &set)?;
    let (curve, ratio, monotone) = match quadratics {
        Some(qs) => {
            let curve = quadratic_regret_curve(&qs, &iterates, &set)?;
            let scale = g_obs * diameter;
            let ratio = curve
                .iter()
                .enumerate()
                .map(|(i, r)| if scale > 0.0 { r / (scale * ((i + 1) as f64).sqrt()) } else { 0.0 })
                .fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-9 * (1.0 + curve.last().copied().unwrap_or(0.0).abs());
            let monotone = is_nondecreasing(&curve, tol);
            (curve, Some(ratio), Some(monotone))
        }
        None => {
            notes.push("non-quadratic costs: regret reported at the final horizon only".into());
            (vec![record.regret], None, None)
        }
    };
    Ok(Some(DiscreteRegretReport {
        final_regret: record.regret,
        comparator: record.comparator.iter().copied().collect(),
        comparator_cost: record.comparator_cost,
        diameter,
        gradient_bound_observed: g_obs,
        max_bound_ratio: ratio,
        nondecreasing: monotone,
        curve,
    }))
}

/// Minimum-norm least-squares parameter for the logged regression stream.
fn regression_comparator(exp: &Experiment, times: &[f64]) -> Vector {
    let n = exp.theta0.len();
    let mut h = Matrix::zeros(n, n);
    let mut g = Vector::zeros(n);
    let obs: Vec<(Vector, f64)> = times.iter().map(|&t| exp.observe(t)).collect();
    for i in 1..times.len() {
        let w = 0.5 * (times[i] - times[i - 1]);
        for (phi, y) in [&obs[i - 1], &obs[i]] {
            h += phi * phi.transpose() * w;
            g += phi * (*y * w);
        }
    }
    let svd = h.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    svd.solve(&g, tol).unwrap_or_else(|_| Vector::zeros(n))
}

fn output_errors(traj: &Trajectory) -> Vec<Vector> {
    traj.output_states()
}

fn continuous_regret_report(
    cfg: &ExperimentConfig,
    exp: &Experiment,
    traj: &Trajectory,
    notes: &mut Vec<String>,
) -> Result<Option<ContinuousRegretReport>, RunError> {
    if traj.rows.len() < 2 {
        return Ok(None);
    }
    if !exp.loss.is_regression() {
        notes.push("continuous regret is defined for regression losses only".into());
        return Ok(None);
    }
    let times = traj.times();
    let (comparator, q, weight) = match &exp.model {
        ErrorModel::Algebraic(_) => {
            let w = cfg.analysis.regret_weight.unwrap_or(2.0);
            (regression_comparator(exp, &times), Matrix::from_element(1, 1, w), format!("{w}"))
        }
        ErrorModel::Dynamic(m) => (m.theta_star.clone(), m.spr.q.clone(), "certificate Q".to_owned()),
    };
    let mut base_exp = exp.baseline(comparator.clone());
    base_exp.horizon = traj.last().map_or(exp.horizon, |r| r.t);
    let baseline = run(&base_exp)?;
    if baseline.trajectory.rows.len() != traj.rows.len() {
        notes.push("baseline grid differs from the run; continuous regret skipped".into());
        return Ok(None);
    }
    let errors = output_errors(traj);
    let base_errors = output_errors(&baseline.trajectory);
    let curve = continuous_regret(&times, &errors, &baseline.trajectory.times(), &base_errors, &q)?;
    let integral = |errs: &[Vector]| -> f64 {
        let vals: Vec<f64> = errs.iter().map(|e| e.dot(&(&q * e))).collect();
        simpson(&times, &vals)
    };
    let run_integral = integral(&errors);
    let baseline_integral = integral(&base_errors);
    let deltas: Vec<f64> = traj.rows.iter().map(|r| r.delta).collect();
    let delta_integral = simpson(&times, &deltas);
    let lyapunov_bound = traj.rows[0].lyapunov;
    let measured = run_integral - delta_integral;
    let within_bound = measured <= lyapunov_bound * (1.0 + 1e-6) + 1e-9;
    if !within_bound {
        notes.push(format!("∫eᵀQe − ∫δ = {measured:e} exceeds V(t₀) = {lyapunov_bound:e}"));
    }
    if exp.disturbance.is_some() {
        notes.push("output disturbance present: the V(t₀) bound is not guaranteed".into());
    }
    Ok(Some(ContinuousRegretReport {
        weight,
        comparator: comparator.iter().copied().collect(),
        final_regret: curve.last().copied().unwrap_or(0.0),
        run_integral,
        baseline_integral,
        delta_integral,
        lyapunov_bound,
        within_bound,
        times,
        curve,
    }))
}

fn jensen_report(
    cfg: &ExperimentConfig,
    exp: &Experiment,
    traj: &Trajectory,
    notes: &mut Vec<String>,
) -> Result<Option<JensenReport>, RunError> {
    let constant = matches!(exp.signal, RegressorSignal::Constant(_)) && exp.disturbance.is_none();
    if !constant || !exp.is_discrete() {
        notes.push("Jensen bound applies to discrete runs with a constant cost only".into());
        return Ok(None);
    }
    if traj.rows.is_empty() {
        return Ok(None);
    }
    let cost = step_cost(exp, 1.0);
    let set = comparator_set(cfg, exp, notes)?;
    let minimizer = static_minimizer(std::slice::from_ref(&cost), &set)?;
    let iterates: Vec<Vector> = traj.rows.iter().map(|r| r.theta.clone()).collect();
    let (lhs, rhs) = jensen_gap(&cost, &iterates, &minimizer)?;
    Ok(Some(JensenReport { lhs, rhs }))
}
