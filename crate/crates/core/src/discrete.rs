//! Discrete-time optimizers: gradient descent, regularized follow-the-leader,
//! projected gradient descent, the generic adaptive-stepsize family and
//! Nesterov's method.

use alloc::format;

use crate::error::{check_dim, Error, Result};
use crate::linalg::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    /// `γ₀/√k`
    InverseSqrt,
    /// `γ₀/k`
    Inverse,
}

/// Stepsize sequence `γ_k`, indexed from `k = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub kind: ScheduleKind,
    pub gamma0: f64,
}

impl StepSchedule {
    pub fn new(kind: ScheduleKind, gamma0: f64) -> Result<Self> {
        if !(gamma0 > 0.0 && gamma0.is_finite()) {
            return Err(Error::InvalidParameter(format!("γ₀ must be positive, got {gamma0}")));
        }
        Ok(Self { kind, gamma0 })
    }

    pub fn constant(gamma0: f64) -> Result<Self> {
        Self::new(ScheduleKind::Constant, gamma0)
    }

    pub fn gamma(&self, k: usize) -> f64 {
        let k = k.max(1) as f64;
        match self.kind {
            ScheduleKind::Constant => self.gamma0,
            ScheduleKind::InverseSqrt => self.gamma0 / libm::sqrt(k),
            ScheduleKind::Inverse => self.gamma0 / k,
        }
    }
}

/// `θ_{k+1} = θ_k − γ_k ∇L`.
pub fn gd_step(theta: &Vector, grad: &Vector, schedule: &StepSchedule, k: usize) -> Vector {
    theta - grad * schedule.gamma(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerKind {
    /// `ℛ = ½‖θ‖²`
    L2,
    /// `ℛ = ‖θ‖₁`
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub sigma: f64,
}

impl RegularizerSpec {
    pub fn new(kind: RegularizerKind, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("σ must be nonnegative, got {sigma}")));
        }
        Ok(Self { kind, sigma })
    }

    /// `∇ℛ(θ)`; the ℓ₁ subgradient uses `sign(0) = 0`.
    pub fn gradient(&self, theta: &Vector) -> Vector {
        match self.kind {
            RegularizerKind::L2 => theta.clone(),
            RegularizerKind::L1 => theta.map(|t| {
                if t > 0.0 {
                    1.0
                } else if t < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }),
        }
    }
}

/// `θ_{k+1} = θ_k − γ_k [∇L + σ∇ℛ(θ_k)]`.
pub fn rftl_step(theta: &Vector, grad: &Vector, reg: &RegularizerSpec, schedule: &StepSchedule, k: usize) -> Vector {
    if reg.sigma == 0.0 {
        return gd_step(theta, grad, schedule, k);
    }
    theta - (grad + reg.gradient(theta) * reg.sigma) * schedule.gamma(k)
}

/// Closed convex feasible set with a closed-form Euclidean projection.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    Box { lower: Vector, upper: Vector },
    Ball { center: Vector, radius: f64 },
}

impl FeasibleSet {
    pub fn boxed(lower: Vector, upper: Vector) -> Result<Self> {
        check_dim("box upper bounds", lower.len(), upper.len())?;
        if lower.is_empty() || lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidParameter("box needs nonempty bounds with lower ≤ upper".into()));
        }
        Ok(Self::Box { lower, upper })
    }

    pub fn symmetric_box(dim: usize, half_width: f64) -> Result<Self> {
        Self::boxed(Vector::from_element(dim, -half_width), Vector::from_element(dim, half_width))
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if center.is_empty() || !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("ball needs a center and radius ≥ 0, got {radius}")));
        }
        Ok(Self::Ball { center, radius })
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::Box { lower, .. } => lower.len(),
            Self::Ball { center, .. } => center.len(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Self::Box { lower, upper } => (upper - lower).norm(),
            Self::Ball { radius, .. } => 2.0 * radius,
        }
    }

    pub fn contains(&self, theta: &Vector, tol: f64) -> bool {
        match self {
            Self::Box { lower, upper } => {
                theta.iter().zip(lower.iter().zip(upper.iter())).all(|(t, (l, u))| *t >= l - tol && *t <= u + tol)
            }
            Self::Ball { center, radius } => (theta - center).norm() <= radius + tol,
        }
    }
}

/// Euclidean projection onto `set`.
pub fn project(set: &FeasibleSet, point: &Vector) -> Vector {
    match set {
        FeasibleSet::Box { lower, upper } => Vector::from_iterator(
            point.len(),
            point.iter().zip(lower.iter().zip(upper.iter())).map(|(p, (l, u))| p.clamp(*l, *u)),
        ),
        FeasibleSet::Ball { center, radius } => {
            let offset = point - center;
            let dist = offset.norm();
            if dist <= *radius {
                point.clone()
            } else {
                center + offset * (radius / dist)
            }
        }
    }
}

/// `θ̄ = θ_k − γ_k∇L`, `θ_{k+1} = Π(θ̄)`.
pub fn projected_gd_step(
    theta: &Vector,
    grad: &Vector,
    schedule: &StepSchedule,
    k: usize,
    set: &FeasibleSet,
) -> Vector {
    project(set, &(theta - grad * schedule.gamma(k)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameterization {
    /// `m_k = g_k`, `V_k = I`: projected gradient descent.
    Identity,
    /// `m_k = g_k`, `V_k = εI + diag(Σ g_i²)`.
    AdaGrad,
    /// `m_k = (1−β₁)Σβ₁^{k−i}g_i`, `V_k = (1−β₂)diag(Σβ₂^{k−i}g_i²)`, no bias correction.
    Adam,
}

/// Running aggregates of the generic adaptive-stepsize update.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveStepState {
    pub parameterization: Parameterization,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// First-moment aggregate `m_k`.
    pub m: Vector,
    /// Diagonal of `V_k`.
    pub v: Vector,
    /// Raw `Σ g_i²` (AdaGrad) or exponentially weighted sum (Adam).
    sum_sq: Vector,
}

impl AdaptiveStepState {
    pub fn new(parameterization: Parameterization, dim: usize, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::InvalidParameter(format!("β₁, β₂ must lie in [0, 1), got {beta1}, {beta2}")));
        }
        if !(eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("ε must be nonnegative, got {eps}")));
        }
        Ok(Self {
            parameterization,
            beta1,
            beta2,
            eps,
            m: Vector::zeros(dim),
            v: Vector::from_element(dim, if parameterization == Parameterization::Identity { 1.0 } else { 0.0 }),
            sum_sq: Vector::zeros(dim),
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(Parameterization::Identity, dim, 0.0, 0.0, 0.0).expect("identity parameters are valid")
    }

    pub fn adagrad(dim: usize, eps: f64) -> Result<Self> {
        Self::new(Parameterization::AdaGrad, dim, 0.0, 0.0, eps)
    }

    pub fn adam(dim: usize, beta1: f64, beta2: f64) -> Result<Self> {
        Self::new(Parameterization::Adam, dim, beta1, beta2, 0.0)
    }

    fn absorb(&mut self, g: &Vector) {
        match self.parameterization {
            Parameterization::Identity => {
                self.m = g.clone();
            }
            Parameterization::AdaGrad => {
                self.m = g.clone();
                self.sum_sq += g.component_mul(g);
                self.v = self.sum_sq.add_scalar(self.eps);
            }
            Parameterization::Adam => {
                self.m = &self.m * self.beta1 + g * (1.0 - self.beta1);
                self.sum_sq = &self.sum_sq * self.beta2 + g.component_mul(g);
                self.v = &self.sum_sq * (1.0 - self.beta2);
            }
        }
    }

    /// Absorbs `g_k` and returns `Π(θ_k − γ_k m_k / V_k^{1/2})`.
    pub fn step(
        &mut self,
        theta: &Vector,
        g: &Vector,
        schedule: &StepSchedule,
        k: usize,
        set: &FeasibleSet,
    ) -> Result<Vector> {
        check_dim("gradient", theta.len(), g.len())?;
        check_dim("adaptive state", theta.len(), self.m.len())?;
        self.absorb(g);
        if let Some(index) = self.v.iter().position(|&v| v <= 0.0) {
            return Err(Error::DegenerateCurvature { index });
        }
        let gamma = schedule.gamma(k);
        let scaled = self.m.zip_map(&self.v, |m, v| m / libm::sqrt(v));
        Ok(project(set, &(theta - scaled * gamma)))
    }

    /// Per-coordinate effective stepsize `γ_k / √V_k,ii`.
    pub fn effective_step(&self, schedule: &StepSchedule, k: usize) -> Vector {
        let gamma = schedule.gamma(k);
        self.v.map(|v| gamma / libm::sqrt(v))
    }
}

pub fn adaptive_step(
    state: &mut AdaptiveStepState,
    theta: &Vector,
    g: &Vector,
    schedule: &StepSchedule,
    k: usize,
    set: &FeasibleSet,
) -> Result<Vector> {
    state.step(theta, g, schedule, k, set)
}

/// `(θ_k, θ_{k−1})` for Nesterov's method.
#[derive(Debug, Clone, PartialEq)]
pub struct NesterovState {
    pub theta: Vector,
    pub theta_prev: Vector,
}

impl NesterovState {
    pub fn new(theta0: Vector) -> Self {
        Self { theta_prev: theta0.clone(), theta: theta0 }
    }

    /// `ϑ_k = θ_k + β(θ_k − θ_{k−1})`.
    pub fn extrapolated(&self, beta: f64) -> Vector {
        &self.theta + (&self.theta - &self.theta_prev) * beta
    }
}

/// `θ_{k+1} = ϑ_k − γ∇L(ϑ_k)`; shifts `θ_k` into `θ_{k−1}`. Returns `ϑ_k`.
pub fn nesterov_step<F>(state: &mut NesterovState, mut grad_at: F, gamma: f64, beta: f64) -> Vector
where
    F: FnMut(&Vector) -> Vector,
{
    let look = state.extrapolated(beta);
    let next = &look - grad_at(&look) * gamma;
    state.theta_prev = core::mem::replace(&mut state.theta, next);
    look
}
