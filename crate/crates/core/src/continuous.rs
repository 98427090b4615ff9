//! Continuous-time update laws. Each law only evaluates derivatives; the
//! simulation module owns integration.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{is_positive_definite, Matrix, Vector};
use crate::signals::normalizing_signal;

/// Leakage term `𝒢` added to the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modification {
    None,
    /// `𝒢 = θ`
    Sigma,
    /// `𝒢 = |e_y| θ`
    EMod,
}

/// Per-coordinate projection bounds: boundary layer `θ'_max ≤ |θ_i| ≤ θ_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionBound {
    pub outer: f64,
    pub inner: f64,
}

impl ProjectionBound {
    pub fn new(outer: f64, inner: f64) -> Result<Self> {
        if !(inner > 0.0 && inner < outer && outer.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "projection bounds need 0 < θ'_max < θ_max, got θ'_max = {inner}, θ_max = {outer}"
            )));
        }
        Ok(Self { outer, inner })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainAdaptation {
    /// Forgetting factor `Υ ≥ 0`.
    pub forgetting: f64,
    pub mu: f64,
    /// Frobenius-norm cap on `Γ`.
    pub gamma_max: f64,
    pub gamma0: Matrix,
}

impl GainAdaptation {
    pub fn new(forgetting: f64, mu: f64, gamma_max: f64, gamma0: Matrix) -> Result<Self> {
        if !(forgetting >= 0.0) || !(mu >= 0.0) {
            return Err(Error::InvalidParameter("forgetting factor and μ must be nonnegative".into()));
        }
        if !(gamma_max > 0.0) {
            return Err(Error::InvalidParameter(format!("Γ_max must be positive, got {gamma_max}")));
        }
        if !gamma0.is_square() || gamma0 != gamma0.transpose() || !is_positive_definite(&gamma0) {
            return Err(Error::InvalidParameter("Γ(0) must be symmetric positive definite".into()));
        }
        if gamma0.norm() > gamma_max {
            return Err(Error::InvalidParameter(format!("‖Γ(0)‖_F = {} exceeds Γ_max = {gamma_max}", gamma0.norm())));
        }
        Ok(Self { forgetting, mu, gamma_max, gamma0 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunerParams {
    pub beta: f64,
    pub mu: f64,
    pub vartheta0: Vector,
}

impl TunerParams {
    pub fn new(beta: f64, mu: f64, vartheta0: Vector) -> Result<Self> {
        if !(beta > 0.0) || !(mu >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "higher-order tuner needs β > 0 and μ ≥ 0, got β = {beta}, μ = {mu}"
            )));
        }
        Ok(Self { beta, mu, vartheta0 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContinuousKind {
    GradientFlow,
    Modified { sigma: f64, modification: Modification },
    Deadzone { d0: f64, eps: f64 },
    Projection { bounds: Vec<ProjectionBound> },
    TimeVaryingGain(GainAdaptation),
    HigherOrderTuner(TunerParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousLaw {
    pub gamma: f64,
    pub kind: ContinuousKind,
}

/// Auxiliary state carried by a law alongside θ.
#[derive(Debug, Clone, PartialEq)]
pub enum LawAux {
    None,
    Gain(Matrix),
    Tuner(Vector),
}

impl LawAux {
    pub fn len(&self) -> usize {
        match self {
            Self::None => 0,
            Self::Gain(g) => g.len(),
            Self::Tuner(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            Self::None => &[],
            Self::Gain(g) => g.as_slice(),
            Self::Tuner(v) => v.as_slice(),
        }
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        match self {
            Self::None => &mut [],
            Self::Gain(g) => g.as_mut_slice(),
            Self::Tuner(v) => v.as_mut_slice(),
        }
    }
}

impl ContinuousLaw {
    pub fn new(gamma: f64, kind: ContinuousKind) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("γ must be positive, got {gamma}")));
        }
        match &kind {
            ContinuousKind::Modified { sigma, .. } if !(*sigma >= 0.0) => {
                return Err(Error::InvalidParameter(format!("σ must be nonnegative, got {sigma}")));
            }
            ContinuousKind::Deadzone { d0, eps } if !(*d0 >= 0.0 && *eps > 0.0) => {
                return Err(Error::InvalidParameter(format!(
                    "deadzone needs d0 ≥ 0 and ε > 0, got d0 = {d0}, ε = {eps}"
                )));
            }
            _ => {}
        }
        Ok(Self { gamma, kind })
    }

    pub fn gradient_flow(gamma: f64) -> Result<Self> {
        Self::new(gamma, ContinuousKind::GradientFlow)
    }

    pub fn initial_aux(&self, dim: usize) -> Result<LawAux> {
        match &self.kind {
            ContinuousKind::TimeVaryingGain(g) => {
                check_dim("Γ(0)", dim, g.gamma0.nrows())?;
                Ok(LawAux::Gain(g.gamma0.clone()))
            }
            ContinuousKind::HigherOrderTuner(t) => {
                check_dim("ϑ(0)", dim, t.vartheta0.len())?;
                Ok(LawAux::Tuner(t.vartheta0.clone()))
            }
            ContinuousKind::Projection { bounds } => {
                check_dim("projection bounds", dim, bounds.len())?;
                Ok(LawAux::None)
            }
            _ => Ok(LawAux::None),
        }
    }

    /// Returns `(θ̇, auẋ)` at the given state; `auẋ` has the same layout as `aux`.
    pub fn derivative(
        &self,
        theta: &Vector,
        aux: &LawAux,
        grad: &Vector,
        phi: &Vector,
        e_y: f64,
    ) -> Result<(Vector, LawAux)> {
        let g = self.gamma;
        Ok(match (&self.kind, aux) {
            (ContinuousKind::GradientFlow, _) => (gradient_flow(g, grad), LawAux::None),
            (ContinuousKind::Modified { sigma, modification }, _) => {
                (sigma_e_modification(g, *sigma, *modification, grad, theta, e_y), LawAux::None)
            }
            (ContinuousKind::Deadzone { d0, eps }, _) => (deadzone(g, *d0, *eps, grad, e_y), LawAux::None),
            (ContinuousKind::Projection { bounds }, _) => (projected_flow(g, bounds, theta, grad), LawAux::None),
            (ContinuousKind::TimeVaryingGain(params), LawAux::Gain(gain)) => {
                let (theta_dot, gain_dot) = time_varying_gain(g, params, gain, phi, grad);
                (theta_dot, LawAux::Gain(gain_dot))
            }
            (ContinuousKind::HigherOrderTuner(params), LawAux::Tuner(vartheta)) => {
                let (theta_dot, vartheta_dot) = higher_order_tuner(g, params, grad, theta, vartheta, phi);
                (theta_dot, LawAux::Tuner(vartheta_dot))
            }
            _ => return Err(Error::InvalidInput("auxiliary state does not match the law".into())),
        })
    }

    /// Post-step correction of the auxiliary state: `Γ` is re-symmetrized
    /// and pulled back onto the `‖Γ‖_F ≤ Γ_max` ball.
    pub fn post_step(&self, aux: &mut LawAux) {
        if let (ContinuousKind::TimeVaryingGain(params), LawAux::Gain(gain)) = (&self.kind, aux) {
            let sym = (&*gain + gain.transpose()) * 0.5;
            *gain = sym;
            let norm = gain.norm();
            if norm > params.gamma_max {
                *gain *= params.gamma_max / norm;
            }
        }
    }
}

/// `θ̇ = −γ ∇L`.
pub fn gradient_flow(gamma: f64, grad: &Vector) -> Vector {
    grad * -gamma
}

/// `θ̇ = −γ [∇L + σ 𝒢(θ, e_y)]`.
pub fn sigma_e_modification(
    gamma: f64,
    sigma: f64,
    modification: Modification,
    grad: &Vector,
    theta: &Vector,
    e_y: f64,
) -> Vector {
    let leak = match modification {
        Modification::None => return gradient_flow(gamma, grad),
        Modification::Sigma => theta * sigma,
        Modification::EMod => theta * (sigma * e_y.abs()),
    };
    (grad + leak) * -gamma
}

/// Gradient flow switched off while `|e_y| ≤ d0 + ε`.
pub fn deadzone(gamma: f64, d0: f64, eps: f64, grad: &Vector, e_y: f64) -> Vector {
    if e_y.abs() > d0 + eps {
        gradient_flow(gamma, grad)
    } else {
        Vector::zeros(grad.len())
    }
}

/// Smooth projection of one coordinate of a velocity `ζ_i`.
///
/// Outward motion (`θ_i ζ_i > 0`) with `|θ_i| ≥ θ'_max` is scaled by
/// `(θ²_max − θ_i²)/(θ²_max − θ'²_max)`; everything else passes unchanged.
/// The factor reaches zero on the outer boundary and turns negative beyond
/// it, which pushes an overshooting iterate back inside.
pub fn proj_operator(theta_i: f64, zeta_i: f64, bound: &ProjectionBound) -> f64 {
    let in_layer = theta_i.abs() >= bound.inner;
    if in_layer && theta_i * zeta_i > 0.0 {
        let outer2 = bound.outer * bound.outer;
        (outer2 - theta_i * theta_i) / (outer2 - bound.inner * bound.inner) * zeta_i
    } else {
        zeta_i
    }
}

/// `θ̇ = Proj(θ, −γ∇L)` applied coordinatewise.
pub fn projected_flow(gamma: f64, bounds: &[ProjectionBound], theta: &Vector, grad: &Vector) -> Vector {
    Vector::from_iterator(
        theta.len(),
        theta.iter().zip(grad.iter()).zip(bounds).map(|((t, g), b)| proj_operator(*t, -gamma * g, b)),
    )
}

/// `θ̇ = −γΓ∇L`, `Γ̇ = ΥΓ − ΓφφᵀΓ/𝒩` while `‖Γ‖_F ≤ Γ_max`, else `Γ̇ = 0`.
pub fn time_varying_gain(
    gamma: f64,
    params: &GainAdaptation,
    gain: &Matrix,
    phi: &Vector,
    grad: &Vector,
) -> (Vector, Matrix) {
    let theta_dot = (gain * grad) * -gamma;
    let gain_dot = if gain.norm() <= params.gamma_max {
        let gp = gain * phi;
        gain * params.forgetting - (&gp * gp.transpose()) / normalizing_signal(phi, params.mu)
    } else {
        Matrix::zeros(gain.nrows(), gain.ncols())
    };
    (theta_dot, gain_dot)
}

/// `ϑ̇ = −γ∇L(θ)`, `θ̇ = −β(θ − ϑ)𝒩`.
pub fn higher_order_tuner(
    gamma: f64,
    params: &TunerParams,
    grad: &Vector,
    theta: &Vector,
    vartheta: &Vector,
    phi: &Vector,
) -> (Vector, Vector) {
    let vartheta_dot = grad * -gamma;
    let theta_dot = (theta - vartheta) * (-params.beta * normalizing_signal(phi, params.mu));
    (theta_dot, vartheta_dot)
}
