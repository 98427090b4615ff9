//! Fixed-step simulation: RK4 for continuous laws, a plain iteration loop for
//! discrete ones. Both produce the same [`Trajectory`] layout, with step `k`
//! logged at `t = k` for discrete runs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::analysis::{lyapunov_value, LyapunovSpec};
use crate::continuous::{ContinuousLaw, LawAux};
use crate::discrete::{
    nesterov_step, project, rftl_step, AdaptiveStepState, FeasibleSet, NesterovState, RegularizerSpec, StepSchedule,
};
use crate::error::{check_dim, Error, Result};
use crate::error_models::{DynamicErrorModel, DynamicState, ErrorModel};
use crate::linalg::{all_finite, Vector};
use crate::losses::LossKind;
use crate::signals::RegressorSignal;

/// One classical fourth-order Runge–Kutta step of `ẋ = f(t, x)`.
pub fn rk4_step<F>(mut f: F, state: &[f64], t: f64, dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let n = state.len();
    let mut eval = |t: f64, x: &[f64]| -> Result<Vec<f64>> {
        let d = f(t, x)?;
        check_dim("derivative", n, d.len())?;
        if !all_finite(&d) {
            return Err(Error::Diverged { t });
        }
        Ok(d)
    };
    let axpy = |h: f64, k: &[f64]| -> Vec<f64> { state.iter().zip(k).map(|(x, k)| x + h * k).collect() };
    let k1 = eval(t, state)?;
    let k2 = eval(t + 0.5 * dt, &axpy(0.5 * dt, &k1))?;
    let k3 = eval(t + 0.5 * dt, &axpy(0.5 * dt, &k2))?;
    let k4 = eval(t + dt, &axpy(dt, &k3))?;
    let next: Vec<f64> = (0..n).map(|i| state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
    if !all_finite(&next) {
        return Err(Error::Diverged { t: t + dt });
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DiscreteLaw {
    Gd {
        schedule: StepSchedule,
    },
    Rftl {
        schedule: StepSchedule,
        regularizer: RegularizerSpec,
    },
    ProjectedGd {
        schedule: StepSchedule,
        set: FeasibleSet,
    },
    /// The state passed in is the initial (empty) aggregate.
    Adaptive {
        schedule: StepSchedule,
        set: FeasibleSet,
        state: AdaptiveStepState,
    },
    Nesterov {
        gamma: f64,
        beta: f64,
    },
}

impl DiscreteLaw {
    pub fn nominal_gain(&self) -> f64 {
        match self {
            Self::Gd { schedule } | Self::Rftl { schedule, .. } | Self::ProjectedGd { schedule, .. } => schedule.gamma0,
            Self::Adaptive { schedule, .. } => schedule.gamma0,
            Self::Nesterov { gamma, .. } => *gamma,
        }
    }

    pub fn feasible_set(&self) -> Option<&FeasibleSet> {
        match self {
            Self::ProjectedGd { set, .. } | Self::Adaptive { set, .. } => Some(set),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LawSpec {
    Continuous(ContinuousLaw),
    Discrete(DiscreteLaw),
    /// θ held at its initial value; used for comparator runs.
    Hold,
}

/// Everything needed to run one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub model: ErrorModel,
    pub law: LawSpec,
    pub signal: RegressorSignal,
    pub loss: LossKind,
    pub theta0: Vector,
    /// Time horizon for continuous runs, step count for discrete runs.
    pub horizon: f64,
    pub dt: f64,
    pub decimate: usize,
    /// Additive output disturbance, a 1-dimensional signal.
    pub disturbance: Option<RegressorSignal>,
    pub e0: Option<Vector>,
    pub phi_tilde0: Option<Vector>,
    pub alpha: Option<f64>,
    pub allow_alpha_violation: bool,
}

impl Experiment {
    pub fn new(
        model: ErrorModel,
        law: LawSpec,
        signal: RegressorSignal,
        theta0: Vector,
        horizon: f64,
        dt: f64,
    ) -> Self {
        Self {
            model,
            law,
            signal,
            loss: LossKind::Squared,
            theta0,
            horizon,
            dt,
            decimate: 1,
            disturbance: None,
            e0: None,
            phi_tilde0: None,
            alpha: None,
            allow_alpha_violation: false,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.law, LawSpec::Discrete(_))
    }

    /// The same experiment with θ frozen at `theta`.
    pub fn baseline(&self, theta: Vector) -> Self {
        Self { law: LawSpec::Hold, theta0: theta, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.model.theta_star().len();
        check_dim("θ(0)", n, self.theta0.len())?;
        check_dim("regressor", n, self.signal.dimension())?;
        if !all_finite(self.theta0.as_slice()) {
            return Err(Error::InvalidParameter("θ(0) must be finite".into()));
        }
        if self.decimate == 0 {
            return Err(Error::InvalidParameter("decimation must be at least 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        if let Some(d) = &self.disturbance {
            check_dim("disturbance", 1, d.dimension())?;
        }
        if let ErrorModel::Dynamic(m) = &self.model {
            if self.loss != LossKind::Squared {
                return Err(Error::InvalidParameter(
                    "the dynamic error model adapts on the squared output error".into(),
                ));
            }
            if self.is_discrete() {
                return Err(Error::InvalidParameter("discrete laws run on the algebraic model only".into()));
            }
            if let Some(e0) = &self.e0 {
                check_dim("e(0)", m.state_dim(), e0.len())?;
            }
            if let Some(p0) = &self.phi_tilde0 {
                check_dim("φ̃(0)", n, p0.len())?;
            }
        }
        if !self.is_discrete() && !(self.dt > 0.0 && self.dt <= self.horizon / 100.0) {
            return Err(Error::InvalidParameter(format!(
                "dt must satisfy 0 < dt ≤ T/100, got dt = {} with T = {}",
                self.dt, self.horizon
            )));
        }
        if let LawSpec::Continuous(law) = &self.law {
            law.initial_aux(n)?;
        }
        if let LawSpec::Discrete(law) = &self.law {
            if let Some(set) = law.feasible_set() {
                check_dim("feasible set", n, set.dimension())?;
            }
            if let DiscreteLaw::Adaptive { state, .. } = law {
                check_dim("adaptive state", n, state.m.len())?;
            }
        }
        Ok(())
    }

    fn lyapunov_spec(&self) -> Result<LyapunovSpec> {
        let gamma = match &self.law {
            LawSpec::Continuous(law) => law.gamma,
            LawSpec::Discrete(law) => law.nominal_gain(),
            LawSpec::Hold => 1.0,
        };
        match &self.model {
            ErrorModel::Algebraic(_) => LyapunovSpec::algebraic(gamma),
            ErrorModel::Dynamic(m) => LyapunovSpec::dynamic(gamma, m, self.alpha, self.allow_alpha_violation),
        }
    }

    /// `(φ(t), y(t))`: the regressor and the measured target at time (or step) `t`.
    pub fn observe(&self, t: f64) -> (Vector, f64) {
        let phi = self.signal.evaluate(t);
        let (y, _) = self.target(&phi, t);
        (phi, y)
    }

    fn target(&self, phi: &Vector, t: f64) -> (f64, f64) {
        let d = self.disturbance.as_ref().map_or(0.0, |s| s.evaluate(t)[0]);
        let clean = self.model.theta_star().dot(phi);
        if self.loss.is_classification() {
            (if clean + d >= 0.0 { 1.0 } else { -1.0 }, d)
        } else {
            (clean + d, d)
        }
    }
}

/// One logged sample of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub t: f64,
    pub theta: Vector,
    pub e_y: f64,
    pub theta_err_norm: f64,
    pub lyapunov: f64,
    pub cost: f64,
    /// Dynamic model only: `δ`, `e` and `φ̃`.
    pub delta: f64,
    pub e: Vector,
    pub phi_tilde: Vector,
    /// Law-specific columns, named by [`Trajectory::aux_names`].
    pub aux: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub param_dim: usize,
    pub state_dim: usize,
    pub dynamic: bool,
    pub aux_names: Vec<String>,
    pub rows: Vec<Row>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn theta_err_norms(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.theta_err_norm).collect()
    }

    /// The error entering `eᵀQe`: the model state, or `e_y` for the algebraic model.
    pub fn output_states(&self) -> Vec<Vector> {
        self.rows.iter().map(|r| if self.dynamic { r.e.clone() } else { Vector::from_element(1, r.e_y) }).collect()
    }

    pub fn last(&self) -> Option<&Row> {
        self.rows.last()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        names.push(String::from("t"));
        names.extend((0..self.param_dim).map(|i| format!("theta_{i}")));
        for n in ["e_y", "theta_err_norm", "lyapunov", "cost"] {
            names.push(String::from(n));
        }
        if self.dynamic {
            names.push(String::from("delta"));
            names.extend((0..self.state_dim).map(|i| format!("e_{i}")));
            names.extend((0..self.param_dim).map(|i| format!("phi_tilde_{i}")));
        }
        names.extend(self.aux_names.iter().cloned());
        names
    }

    /// Row values in [`Self::column_names`] order.
    pub fn row_values(&self, row: &Row) -> Vec<f64> {
        let mut vals = Vec::with_capacity(8 + row.theta.len() + row.aux.len());
        vals.push(row.t);
        vals.extend(row.theta.iter());
        vals.extend([row.e_y, row.theta_err_norm, row.lyapunov, row.cost]);
        if self.dynamic {
            vals.push(row.delta);
            vals.extend(row.e.iter());
            vals.extend(row.phi_tilde.iter());
        }
        vals.extend(row.aux.iter());
        vals
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Completed,
    Diverged { t: f64 },
}

/// Per-step extremes, tracked at every integration step regardless of decimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// `max_k V(t_{k+1}) − V(t_k)`.
    pub max_lyapunov_increase: f64,
    /// `max_k V(t_{k+1}) − V(t_k) − |δ(t_k)|·dt`; equals the above when `δ ≡ 0`.
    pub max_lyapunov_excess: f64,
    pub max_theta_norm: f64,
    pub steps: usize,
}

impl StepDiagnostics {
    fn new(theta_norm: f64) -> Self {
        Self {
            max_lyapunov_increase: f64::NEG_INFINITY,
            max_lyapunov_excess: f64::NEG_INFINITY,
            max_theta_norm: theta_norm,
            steps: 0,
        }
    }

    fn record(&mut self, v_prev: f64, v_next: f64, delta_dt: f64, theta_norm: f64) {
        let inc = v_next - v_prev;
        self.max_lyapunov_increase = self.max_lyapunov_increase.max(inc);
        self.max_lyapunov_excess = self.max_lyapunov_excess.max(inc - delta_dt.abs());
        self.max_theta_norm = self.max_theta_norm.max(theta_norm);
        self.steps += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub status: RunStatus,
    pub final_theta: Vector,
    pub diagnostics: StepDiagnostics,
}

impl RunOutcome {
    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }
}

/// Runs an experiment to its horizon. Deterministic in its inputs.
pub fn run(exp: &Experiment) -> Result<RunOutcome> {
    exp.validate()?;
    match &exp.law {
        LawSpec::Discrete(law) => run_discrete(exp, law),
        _ => run_continuous(exp),
    }
}

/// Offsets of the packed continuous state `[θ̃ | aux | e | φ̃]`.
struct Layout {
    n: usize,
    aux: usize,
    model: usize,
}

impl Layout {
    fn total(&self) -> usize {
        self.n + self.aux + self.model + if self.model > 0 { self.n } else { 0 }
    }
}

struct Snapshot {
    e_y: f64,
    cost: f64,
    grad: Vector,
    phi: Vector,
}

fn run_continuous(exp: &Experiment) -> Result<RunOutcome> {
    let theta_star = exp.model.theta_star().clone();
    let n = theta_star.len();
    let (law, aux0) = match &exp.law {
        LawSpec::Continuous(law) => (Some(law), law.initial_aux(n)?),
        _ => (None, LawAux::None),
    };
    let dynamic = match &exp.model {
        ErrorModel::Dynamic(m) => Some(m),
        ErrorModel::Algebraic(_) => None,
    };
    let layout = Layout { n, aux: aux0.len(), model: dynamic.map_or(0, |m| m.state_dim()) };
    let lyap = exp.lyapunov_spec()?;

    // Tuner auxiliaries are stored relative to θ*, like θ itself.
    let shift_aux = matches!(aux0, LawAux::Tuner(_));
    let mut x = Vec::with_capacity(layout.total());
    x.extend((&exp.theta0 - &theta_star).iter());
    match &aux0 {
        LawAux::Tuner(v) => x.extend((v - &theta_star).iter()),
        other => x.extend(other.as_slice().iter()),
    }
    if let Some(m) = dynamic {
        let e0 = exp.e0.clone().unwrap_or_else(|| Vector::zeros(m.state_dim()));
        let p0 = exp.phi_tilde0.clone().unwrap_or_else(|| Vector::zeros(n));
        x.extend(e0.iter());
        x.extend(p0.iter());
    }

    let unpack = |x: &[f64]| -> (Vector, LawAux, Option<DynamicState>) {
        let theta_err = Vector::from_column_slice(&x[..n]);
        let mut aux = aux0.clone();
        aux.as_mut_slice().copy_from_slice(&x[n..n + layout.aux]);
        if shift_aux {
            if let LawAux::Tuner(v) = &mut aux {
                *v += &theta_star;
            }
        }
        let state = dynamic.map(|_| {
            let off = n + layout.aux;
            DynamicState {
                e: Vector::from_column_slice(&x[off..off + layout.model]),
                phi_tilde: Vector::from_column_slice(&x[off + layout.model..off + layout.model + n]),
            }
        });
        (theta_err, aux, state)
    };

    let observe = |t: f64, theta_err: &Vector, state: &Option<DynamicState>| -> Result<Snapshot> {
        let phi = exp.signal.evaluate(t);
        match (dynamic, state) {
            (Some(m), Some(s)) => {
                let d = exp.disturbance.as_ref().map_or(0.0, |sig| sig.evaluate(t)[0]);
                let e_y = m.output(&s.e) + d;
                let phi_hat = m.filtered_regressor(&phi, &s.phi_tilde);
                Ok(Snapshot { e_y, cost: 0.5 * e_y * e_y, grad: phi_hat * e_y, phi })
            }
            _ => {
                let (y, d) = exp.target(&phi, t);
                if exp.loss.is_regression() {
                    let e_y = theta_err.dot(&phi) - d;
                    let grad = &phi * exp.loss.derivative_from_error(e_y);
                    Ok(Snapshot { e_y, cost: exp.loss.value_from_error(e_y), grad, phi })
                } else {
                    let theta = theta_err + &theta_star;
                    let y_hat = theta.dot(&phi);
                    let grad = &phi * exp.loss.derivative_at(y_hat, y)?;
                    Ok(Snapshot { e_y: y_hat - y, cost: exp.loss.value_at(y_hat, y)?, grad, phi })
                }
            }
        }
    };

    let deriv = |t: f64, x: &[f64]| -> Result<Vec<f64>> {
        let (theta_err, aux, state) = unpack(x);
        let snap = observe(t, &theta_err, &state)?;
        let mut out = Vec::with_capacity(x.len());
        match law {
            Some(law) => {
                let theta = &theta_err + &theta_star;
                let (theta_dot, aux_dot) = law.derivative(&theta, &aux, &snap.grad, &snap.phi, snap.e_y)?;
                out.extend(theta_dot.iter());
                out.extend(aux_dot.as_slice().iter());
            }
            None => out.extend(core::iter::repeat_n(0.0, n + layout.aux)),
        }
        if let (Some(m), Some(s)) = (dynamic, &state) {
            let d = m.derivatives_from_error(s, &theta_err, &snap.phi);
            out.extend(d.e_dot.iter());
            out.extend(d.phi_tilde_dot.iter());
        }
        Ok(out)
    };

    let aux_names: Vec<String> = match &aux0 {
        LawAux::None => Vec::new(),
        LawAux::Gain(_) => alloc::vec![String::from("gain_fro")],
        LawAux::Tuner(_) => (0..n).map(|i| format!("vartheta_{i}")).collect(),
    };
    let mut traj =
        Trajectory { param_dim: n, state_dim: layout.model, dynamic: dynamic.is_some(), aux_names, rows: Vec::new() };

    let log = |t: f64, x: &[f64], traj: &mut Trajectory| -> Result<()> {
        let (theta_err, aux, state) = unpack(x);
        let snap = observe(t, &theta_err, &state)?;
        let (e, phi_tilde, delta) = match (&state, dynamic) {
            (Some(s), Some(m)) => (s.e.clone(), s.phi_tilde.clone(), m.delta(&s.e, &s.phi_tilde)),
            _ => (Vector::zeros(0), Vector::zeros(0), 0.0),
        };
        let lyapunov =
            lyapunov_value(&lyap, &theta_err, state.as_ref().map(|s| &s.e), state.as_ref().map(|s| &s.phi_tilde));
        let aux_vals = match &aux {
            LawAux::None => Vec::new(),
            LawAux::Gain(g) => alloc::vec![g.norm()],
            LawAux::Tuner(v) => v.iter().copied().collect(),
        };
        traj.rows.push(Row {
            t,
            theta: &theta_err + &theta_star,
            e_y: snap.e_y,
            theta_err_norm: theta_err.norm(),
            lyapunov,
            cost: snap.cost,
            delta,
            e,
            phi_tilde,
            aux: aux_vals,
        });
        Ok(())
    };

    // V, δ·dt and ‖θ‖ of a packed state
    let energy = |x: &[f64]| -> (f64, f64, f64) {
        let (theta_err, _, state) = unpack(x);
        let v = lyapunov_value(&lyap, &theta_err, state.as_ref().map(|s| &s.e), state.as_ref().map(|s| &s.phi_tilde));
        let delta = match (&state, dynamic) {
            (Some(s), Some(m)) => m.delta(&s.e, &s.phi_tilde),
            _ => 0.0,
        };
        (v, delta * exp.dt, (&theta_err + &theta_star).norm())
    };

    let steps = libm::round(exp.horizon / exp.dt) as usize;
    log(0.0, &x, &mut traj)?;
    let (mut v_prev, mut delta_dt, theta_norm) = energy(&x);
    let mut diagnostics = StepDiagnostics::new(theta_norm);
    let mut status = RunStatus::Completed;
    for k in 0..steps {
        let t = k as f64 * exp.dt;
        match rk4_step(deriv, &x, t, exp.dt) {
            Ok(next) => x = next,
            Err(Error::Diverged { t }) => {
                status = RunStatus::Diverged { t };
                break;
            }
            Err(e) => return Err(e),
        }
        if let (Some(law), LawAux::Gain(_)) = (law, &aux0) {
            let mut aux = aux0.clone();
            aux.as_mut_slice().copy_from_slice(&x[n..n + layout.aux]);
            law.post_step(&mut aux);
            x[n..n + layout.aux].copy_from_slice(aux.as_slice());
        }
        let (v, d, theta_norm) = energy(&x);
        diagnostics.record(v_prev, v, delta_dt, theta_norm);
        (v_prev, delta_dt) = (v, d);
        if (k + 1) % exp.decimate == 0 {
            log((k + 1) as f64 * exp.dt, &x, &mut traj)?;
        }
    }
    let final_theta = Vector::from_column_slice(&x[..n]) + &theta_star;
    Ok(RunOutcome { trajectory: traj, status, final_theta, diagnostics })
}

fn run_discrete(exp: &Experiment, law: &DiscreteLaw) -> Result<RunOutcome> {
    let theta_star = exp.model.theta_star().clone();
    let n = theta_star.len();
    let lyap = exp.lyapunov_spec()?;
    let steps = libm::round(exp.horizon) as usize;

    let aux_names: Vec<String> = match law {
        DiscreteLaw::Adaptive { .. } => {
            (0..n).map(|i| format!("m_{i}")).chain((0..n).map(|i| format!("v_{i}"))).collect()
        }
        DiscreteLaw::Nesterov { .. } => (0..n).map(|i| format!("lookahead_{i}")).collect(),
        _ => Vec::new(),
    };
    let mut traj = Trajectory { param_dim: n, state_dim: 0, dynamic: false, aux_names, rows: Vec::new() };

    let mut theta = exp.theta0.clone();
    let mut adaptive = match law {
        DiscreteLaw::Adaptive { state, .. } => Some(state.clone()),
        _ => None,
    };
    let mut nesterov = NesterovState::new(theta.clone());
    let mut status = RunStatus::Completed;
    let mut diagnostics = StepDiagnostics::new(theta.norm());

    for k in 1..=steps {
        let t = k as f64;
        let phi = exp.signal.evaluate(t);
        let (y, d) = exp.target(&phi, t);
        let theta_err = &theta - &theta_star;
        let (e_y, cost, grad_at) = if exp.loss.is_regression() {
            let e_y = theta_err.dot(&phi) - d;
            (e_y, exp.loss.value_from_error(e_y), exp.loss)
        } else {
            let y_hat = theta.dot(&phi);
            (y_hat - y, exp.loss.value_at(y_hat, y)?, exp.loss)
        };
        let gradient = |th: &Vector| -> Vector {
            if grad_at.is_regression() {
                let e = (th - &theta_star).dot(&phi) - d;
                &phi * grad_at.derivative_from_error(e)
            } else {
                &phi * grad_at.derivative_at(th.dot(&phi), y).unwrap_or(f64::NAN)
            }
        };
        let grad = gradient(&theta);

        let (next, aux) = match law {
            DiscreteLaw::Gd { schedule } => (&theta - &grad * schedule.gamma(k), Vec::new()),
            DiscreteLaw::Rftl { schedule, regularizer } => {
                (rftl_step(&theta, &grad, regularizer, schedule, k), Vec::new())
            }
            DiscreteLaw::ProjectedGd { schedule, set } => {
                (project(set, &(&theta - &grad * schedule.gamma(k))), Vec::new())
            }
            DiscreteLaw::Adaptive { schedule, set, .. } => {
                let st = adaptive.as_mut().expect("adaptive state");
                let next = st.step(&theta, &grad, schedule, k, set)?;
                let aux = st.m.iter().chain(st.v.iter()).copied().collect();
                (next, aux)
            }
            DiscreteLaw::Nesterov { gamma, beta } => {
                let look = nesterov_step(&mut nesterov, gradient, *gamma, *beta);
                (nesterov.theta.clone(), look.iter().copied().collect())
            }
        };

        if !(e_y.is_finite() && cost.is_finite() && all_finite(theta.as_slice())) {
            status = RunStatus::Diverged { t };
            break;
        }
        if (k - 1) % exp.decimate == 0 {
            traj.rows.push(Row {
                t,
                theta: theta.clone(),
                e_y,
                theta_err_norm: theta_err.norm(),
                lyapunov: lyapunov_value(&lyap, &theta_err, None, None),
                cost,
                delta: 0.0,
                e: Vector::zeros(0),
                phi_tilde: Vector::zeros(0),
                aux,
            });
        }
        if !all_finite(next.as_slice()) {
            status = RunStatus::Diverged { t: t + 1.0 };
            break;
        }
        let v_prev = lyapunov_value(&lyap, &theta_err, None, None);
        let v_next = lyapunov_value(&lyap, &(&next - &theta_star), None, None);
        diagnostics.record(v_prev, v_next, 0.0, next.norm());
        theta = next;
    }
    Ok(RunOutcome { trajectory: traj, status, final_theta: theta, diagnostics })
}

/// Convenience accessor for the dynamic model inside an experiment.
pub fn dynamic_model(exp: &Experiment) -> Option<&DynamicErrorModel> {
    match &exp.model {
        ErrorModel::Dynamic(m) => Some(m),
        ErrorModel::Algebraic(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuous::{ContinuousKind, TunerParams};
    use crate::error_models::AlgebraicErrorModel;
    use crate::linalg::Matrix;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn rk4_zero_field() {
        let x = rk4_step(|_, x| Ok(alloc::vec![0.0; x.len()]), &[1.0, -2.0], 0.0, 0.1).unwrap();
        assert_eq!(x, alloc::vec![1.0, -2.0]);
    }

    #[test]
    fn rk4_exponential_decay() {
        let x = rk4_step(|_, x| Ok(x.iter().map(|v| -v).collect()), &[1.0], 0.0, 0.1).unwrap();
        let exact = libm::exp(-0.1);
        assert!((x[0] - exact).abs() < 1e-7);
        assert!((x[0] - 0.904_837_5).abs() < 1e-7);
        // local error is O(dt⁵): halving dt shrinks it about 32×
        let x2 = rk4_step(|_, x| Ok(x.iter().map(|v| -v).collect()), &[1.0], 0.0, 0.05).unwrap();
        let ratio = (x[0] - exact).abs() / (x2[0] - libm::exp(-0.05)).abs();
        assert!(ratio > 28.0 && ratio < 36.0, "ratio {ratio}");
    }

    #[test]
    fn rk4_linear_scaling() {
        let a = Matrix::from_row_slice(2, 2, &[-0.5, 1.0, -1.0, -0.2]);
        let f = |_: f64, x: &[f64]| Ok((&a * Vector::from_column_slice(x)).iter().copied().collect());
        let base = rk4_step(f, &[0.3, -0.7], 0.0, 0.1).unwrap();
        let scaled = rk4_step(f, &[0.9, -2.1], 0.0, 0.1).unwrap();
        for (b, s) in base.iter().zip(&scaled) {
            assert!((3.0 * b - s).abs() < 1e-15);
        }
    }

    #[test]
    fn rk4_flags_non_finite() {
        let err = rk4_step(|_, _| Ok(alloc::vec![f64::NAN]), &[0.0], 2.0, 0.1).unwrap_err();
        assert_eq!(err, Error::Diverged { t: 2.0 });
    }

    fn scalar_gf(dt: f64, horizon: f64) -> Experiment {
        let model = ErrorModel::Algebraic(AlgebraicErrorModel::new(v(&[1.0])).unwrap());
        Experiment::new(
            model,
            LawSpec::Continuous(ContinuousLaw::gradient_flow(1.0).unwrap()),
            RegressorSignal::constant(v(&[1.0])).unwrap(),
            v(&[0.0]),
            horizon,
            dt,
        )
    }

    #[test]
    fn gradient_flow_closed_form() {
        let out = run(&scalar_gf(1e-3, 1.0)).unwrap();
        let exact = 1.0 - libm::exp(-1.0);
        assert!((out.final_theta[0] - exact).abs() < 1e-12);
        assert!((out.final_theta[0] - 0.6321).abs() < 1e-4);
        assert_eq!(out.trajectory.rows.len(), 1001);
    }

    #[test]
    fn equilibrium_start_stays_put() {
        let mut exp = scalar_gf(1e-2, 5.0);
        exp.theta0 = v(&[1.0]);
        let out = run(&exp).unwrap();
        assert!(out.trajectory.rows.iter().all(|r| r.e_y == 0.0 && r.theta[0] == 1.0));
    }

    #[test]
    fn dt_must_resolve_horizon() {
        let exp = scalar_gf(0.1, 1.0);
        assert!(matches!(run(&exp), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn tuner_self_convergence() {
        let tuner = |dt: f64| {
            let mut exp = scalar_gf(dt, 5.0);
            exp.law = LawSpec::Continuous(
                ContinuousLaw::new(
                    1.0,
                    ContinuousKind::HigherOrderTuner(TunerParams::new(2.0, 1.0, v(&[0.0])).unwrap()),
                )
                .unwrap(),
            );
            run(&exp).unwrap().final_theta[0]
        };
        let coarse = tuner(1e-3);
        let fine = tuner(5e-4);
        assert!((coarse - fine).abs() < 1e-6, "{coarse} vs {fine}");
    }

    #[test]
    fn dynamic_first_order_response() {
        // A = −1, b = c = 1, θ̃ᵀφ̂ ≡ 1: e(t) = 1 − e^{−t}
        let s = |x| Matrix::from_element(1, 1, x);
        let model = DynamicErrorModel::new(s(-1.0), v(&[1.0]), v(&[1.0]), s(-1.0), v(&[0.0])).unwrap();
        let exp = Experiment::new(
            ErrorModel::Dynamic(model),
            LawSpec::Hold,
            RegressorSignal::constant(v(&[1.0])).unwrap(),
            v(&[1.0]),
            1.0,
            1e-3,
        );
        let out = run(&exp).unwrap();
        let last = out.trajectory.last().unwrap();
        assert!((last.e[0] - (1.0 - libm::exp(-1.0))).abs() < 1e-12);
        assert!((last.e[0] - 0.6321).abs() < 1e-4);
    }
}
