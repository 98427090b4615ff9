//! Algebraic and dynamic (SPR) error models relating parameter error to the
//! measurable output error.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{
    check_hurwitz, is_positive_definite, lyapunov_operator, lyapunov_residual, min_symmetric_eigenvalue,
    solve_lyapunov, symmetrize, Matrix, Vector,
};

/// Residual tolerance for every KYP / Lyapunov certificate.
pub const CERTIFICATE_TOL: f64 = 1e-8;
/// Positive-realness margin on the frequency grid.
pub const SPR_FREQ_TOL: f64 = 1e-9;
pub const SPR_GRID_POINTS: usize = 200;
pub const SPR_OMEGA_MIN: f64 = 1e-3;
pub const SPR_OMEGA_MAX: f64 = 1e3;

/// `e_y = (θ − θ*)ᵀφ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraicErrorModel {
    pub theta_star: Vector,
}

impl AlgebraicErrorModel {
    pub fn new(theta_star: Vector) -> Result<Self> {
        if theta_star.is_empty() || !theta_star.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("θ* must be nonempty and finite".into()));
        }
        Ok(Self { theta_star })
    }

    pub fn output(&self, theta: &Vector, phi: &Vector) -> Result<f64> {
        algebraic_output(theta, self, phi)
    }
}

pub fn algebraic_output(theta: &Vector, model: &AlgebraicErrorModel, phi: &Vector) -> Result<f64> {
    check_dim("θ", model.theta_star.len(), theta.len())?;
    check_dim("φ", model.theta_star.len(), phi.len())?;
    Ok((theta - &model.theta_star).dot(phi))
}

/// Matrices `P, Q` with `AᵀP + PA = −Q` and `Pb = cᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SprCertificate {
    pub p: Matrix,
    pub q: Matrix,
}

impl SprCertificate {
    pub fn lyapunov_residual(&self, a: &Matrix) -> f64 {
        lyapunov_residual(a, &self.p, &self.q)
    }

    pub fn output_residual(&self, b: &Vector, c: &Vector) -> f64 {
        (&self.p * b - c).norm()
    }
}

/// `Λ̄` certificate: `ΛᵀP̄ + P̄Λ = −Q̄` with `Q̄ = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCertificate {
    pub p_bar: Matrix,
    pub q_bar: Matrix,
}

impl FilterCertificate {
    pub fn for_filter(lambda: &Matrix) -> Result<Self> {
        let q_bar = Matrix::identity(lambda.nrows(), lambda.ncols());
        let p_bar = solve_lyapunov(lambda, &q_bar)?;
        let residual = lyapunov_residual(lambda, &p_bar, &q_bar);
        if residual > CERTIFICATE_TOL || !is_positive_definite(&p_bar) {
            return Err(Error::KypSolveFailed { residual });
        }
        Ok(Self { p_bar, q_bar })
    }
}

/// `Re[c (jωI − A)⁻¹ b]`, via the real 2n×2n form of the complex solve.
pub fn real_part_frequency_response(a: &Matrix, b: &Vector, c: &Vector, omega: f64) -> Option<f64> {
    let n = a.nrows();
    let mut m = Matrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(-a));
    m.view_mut((n, n), (n, n)).copy_from(&(-a));
    for i in 0..n {
        m[(i, n + i)] = -omega;
        m[(n + i, i)] = omega;
    }
    let mut rhs = Vector::zeros(2 * n);
    rhs.rows_mut(0, n).copy_from(b);
    let x = m.lu().solve(&rhs)?;
    Some(c.dot(&x.rows(0, n)))
}

pub fn frequency_grid() -> Vec<f64> {
    let (lo, hi) = (libm::log10(SPR_OMEGA_MIN), libm::log10(SPR_OMEGA_MAX));
    (0..SPR_GRID_POINTS).map(|i| libm::pow(10.0, lo + (hi - lo) * i as f64 / (SPR_GRID_POINTS - 1) as f64)).collect()
}

/// Certifies that `W(s) = c(sI − A)⁻¹b` is strictly positive real and returns
/// a KYP pair `(P, Q)`.
///
/// Stability is checked first, then positive realness on a log-spaced
/// frequency grid, then `P` is found by equality-constrained least squares:
/// minimize `‖AᵀP + PA + q₀I‖` subject to `Pb = cᵀ` over symmetric `P`,
/// scanning `q₀` and keeping the best-conditioned positive definite pair.
pub fn check_spr(a: &Matrix, b: &Vector, c: &Vector) -> Result<SprCertificate> {
    check_hurwitz(a)?;
    let n = a.nrows();
    check_dim("b", n, b.len())?;
    check_dim("c", n, c.len())?;

    for omega in frequency_grid() {
        let re = real_part_frequency_response(a, b, c, omega)
            .ok_or_else(|| Error::InvalidInput(format!("jωI − A singular at ω = {omega}")))?;
        if re <= SPR_FREQ_TOL {
            return Err(Error::NotSpr { omega, real_part: re });
        }
    }

    let cert = solve_kyp(a, b, c)?;
    let lyap = cert.lyapunov_residual(a);
    let out = cert.output_residual(b, c);
    if lyap > CERTIFICATE_TOL || out > CERTIFICATE_TOL {
        return Err(Error::KypSolveFailed { residual: lyap.max(out) });
    }
    Ok(cert)
}

fn sym_basis(n: usize) -> Vec<(usize, usize)> {
    let mut basis = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            basis.push((i, j));
        }
    }
    basis
}

fn sym_from_coords(n: usize, basis: &[(usize, usize)], z: &[f64]) -> Matrix {
    let mut p = Matrix::zeros(n, n);
    for (&(i, j), &v) in basis.iter().zip(z) {
        p[(i, j)] = v;
        p[(j, i)] = v;
    }
    p
}

fn solve_kyp(a: &Matrix, b: &Vector, c: &Vector) -> Result<SprCertificate> {
    let n = a.nrows();
    let basis = sym_basis(n);
    let m = basis.len();
    let op = lyapunov_operator(a);

    // columns: vec(L(E_k)) for each symmetric basis element, and the constraint rows E_k b
    let mut lmat = Matrix::zeros(n * n, m);
    let mut cmat = Matrix::zeros(n, m);
    for (k, _) in basis.iter().enumerate() {
        let mut z = alloc::vec![0.0; m];
        z[k] = 1.0;
        let e = sym_from_coords(n, &basis, &z);
        let le = &op * Vector::from_column_slice(e.as_slice());
        lmat.set_column(k, &le);
        cmat.set_column(k, &(&e * b));
    }

    let gram = lmat.transpose() * &lmat;
    let mut kkt = Matrix::zeros(m + n, m + n);
    kkt.view_mut((0, 0), (m, m)).copy_from(&gram);
    kkt.view_mut((0, m), (m, n)).copy_from(&cmat.transpose());
    kkt.view_mut((m, 0), (n, m)).copy_from(&cmat);
    let kkt_lu = kkt.lu();

    let identity = Vector::from_column_slice(Matrix::identity(n, n).as_slice());
    let mut best: Option<(f64, SprCertificate)> = None;
    let mut worst_residual = f64::INFINITY;
    for step in 0..=80 {
        let q0 = libm::pow(10.0, -4.0 + step as f64 * 0.1);
        let mut rhs = Vector::zeros(m + n);
        rhs.rows_mut(0, m).copy_from(&(-(lmat.transpose() * (&identity * q0))));
        rhs.rows_mut(m, n).copy_from(c);
        let Some(sol) = kkt_lu.solve(&rhs) else { continue };
        let p = sym_from_coords(n, &basis, &sol.as_slice()[..m]);
        let q = symmetrize(&-(a.transpose() * &p + &p * a));
        let residual = (&p * b - c).norm();
        worst_residual = worst_residual.min(residual);
        let scale = p.norm().max(q.norm());
        let score = min_symmetric_eigenvalue(&p).min(min_symmetric_eigenvalue(&q)) / scale;
        if score > 0.0 && best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, SprCertificate { p, q }));
        }
    }
    best.map(|(_, cert)| cert).ok_or(Error::KypSolveFailed { residual: worst_residual })
}

/// State of the dynamic error model: plant error `e` and filter error `φ̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicState {
    pub e: Vector,
    pub phi_tilde: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicDerivatives {
    pub e_dot: Vector,
    pub phi_tilde_dot: Vector,
    pub e_y: f64,
}

/// `ė = Ae + b θ̃ᵀφ̂ + b θ*ᵀφ̃`, `e_y = ce`, `φ̃̇ = Λφ̃` with `φ̂ = φ + φ̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicErrorModel {
    pub a: Matrix,
    pub b: Vector,
    pub c: Vector,
    pub lambda: Matrix,
    pub theta_star: Vector,
    pub spr: SprCertificate,
    pub filter: FilterCertificate,
}

impl DynamicErrorModel {
    /// Validates stability of `A` and `Λ`, the SPR property of `(A, b, c)`,
    /// and stores both certificates.
    pub fn new(a: Matrix, b: Vector, c: Vector, lambda: Matrix, theta_star: Vector) -> Result<Self> {
        if theta_star.is_empty() || !theta_star.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("θ* must be nonempty and finite".into()));
        }
        check_hurwitz(&lambda)?;
        check_dim("Λ", theta_star.len(), lambda.nrows())?;
        let spr = check_spr(&a, &b, &c)?;
        let filter = FilterCertificate::for_filter(&lambda)?;
        Ok(Self { a, b, c, lambda, theta_star, spr, filter })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn param_dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn output(&self, e: &Vector) -> f64 {
        self.c.dot(e)
    }

    pub fn filtered_regressor(&self, phi: &Vector, phi_tilde: &Vector) -> Vector {
        phi + phi_tilde
    }

    pub fn derivatives(&self, state: &DynamicState, theta: &Vector, phi: &Vector) -> Result<DynamicDerivatives> {
        let n = self.param_dim();
        check_dim("θ", n, theta.len())?;
        check_dim("φ", n, phi.len())?;
        check_dim("φ̃", n, state.phi_tilde.len())?;
        check_dim("e", self.state_dim(), state.e.len())?;
        Ok(self.derivatives_from_error(state, &(theta - &self.theta_star), phi))
    }

    /// Same as [`Self::derivatives`] but takes `θ̃` directly.
    pub fn derivatives_from_error(&self, state: &DynamicState, theta_err: &Vector, phi: &Vector) -> DynamicDerivatives {
        let phi_hat = self.filtered_regressor(phi, &state.phi_tilde);
        let drive = theta_err.dot(&phi_hat) + self.theta_star.dot(&state.phi_tilde);
        DynamicDerivatives {
            e_dot: &self.a * &state.e + &self.b * drive,
            phi_tilde_dot: &self.lambda * &state.phi_tilde,
            e_y: self.output(&state.e),
        }
    }

    /// `δ = 2 eᵀPb θ*ᵀφ̃`.
    pub fn delta(&self, e: &Vector, phi_tilde: &Vector) -> f64 {
        2.0 * e.dot(&(&self.spr.p * &self.b)) * self.theta_star.dot(phi_tilde)
    }

    /// `4‖Pb‖²‖θ*‖² / (λ_min(Q) λ_min(Q̄))`; `α` must exceed this.
    pub fn alpha_bound(&self) -> f64 {
        let pb = (&self.spr.p * &self.b).norm_squared();
        4.0 * pb * self.theta_star.norm_squared()
            / (min_symmetric_eigenvalue(&self.spr.q) * min_symmetric_eigenvalue(&self.filter.q_bar))
    }

    /// Twice the bound, or 1 when the bound vanishes (θ* = 0).
    pub fn default_alpha(&self) -> f64 {
        let bound = self.alpha_bound();
        if bound > 0.0 {
            2.0 * bound
        } else {
            1.0
        }
    }
}

// built once per run; boxing the dynamic variant buys nothing
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorModel {
    Algebraic(AlgebraicErrorModel),
    Dynamic(DynamicErrorModel),
}

impl ErrorModel {
    pub fn theta_star(&self) -> &Vector {
        match self {
            Self::Algebraic(m) => &m.theta_star,
            Self::Dynamic(m) => &m.theta_star,
        }
    }
}
