//! Lyapunov values, discrete and continuous regret, the Jensen average-cost
//! bound and exponential convergence fits.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::discrete::{project, FeasibleSet};
use crate::error::{check_dim, Error, Result};
use crate::error_models::DynamicErrorModel;
use crate::linalg::{min_symmetric_eigenvalue, Matrix, Vector};
use crate::losses::LossKind;

/// Extra terms of `V` for the dynamic error model.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicTerms {
    pub p: Matrix,
    pub q: Matrix,
    pub p_bar: Matrix,
    pub q_bar: Matrix,
    pub alpha: f64,
    pub alpha_bound: f64,
}

/// `V = γ⁻¹θ̃ᵀθ̃ + eᵀPe + αφ̃ᵀP̄φ̃`; the last two terms only for the dynamic model.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSpec {
    pub gamma: f64,
    pub dynamic: Option<DynamicTerms>,
    /// Permit `α` at or below the bound (derivatives are still computed).
    pub allow_alpha_violation: bool,
}

impl LyapunovSpec {
    pub fn algebraic(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("γ must be positive, got {gamma}")));
        }
        Ok(Self { gamma, dynamic: None, allow_alpha_violation: false })
    }

    /// Uses the model's certificates; `alpha = None` picks the model default.
    pub fn dynamic(
        gamma: f64,
        model: &DynamicErrorModel,
        alpha: Option<f64>,
        allow_alpha_violation: bool,
    ) -> Result<Self> {
        let mut spec = Self::algebraic(gamma)?;
        let bound = model.alpha_bound();
        let alpha = alpha.unwrap_or_else(|| model.default_alpha());
        if !(alpha > bound) && !allow_alpha_violation {
            return Err(Error::InvalidSpec { alpha, bound });
        }
        spec.allow_alpha_violation = allow_alpha_violation;
        spec.dynamic = Some(DynamicTerms {
            p: model.spr.p.clone(),
            q: model.spr.q.clone(),
            p_bar: model.filter.p_bar.clone(),
            q_bar: model.filter.q_bar.clone(),
            alpha,
            alpha_bound: bound,
        });
        Ok(spec)
    }

    pub fn alpha_satisfied(&self) -> bool {
        self.dynamic.as_ref().is_none_or(|d| d.alpha > d.alpha_bound)
    }
}

pub fn lyapunov_value(spec: &LyapunovSpec, theta_err: &Vector, e: Option<&Vector>, phi_tilde: Option<&Vector>) -> f64 {
    let mut v = theta_err.norm_squared() / spec.gamma;
    if let Some(d) = &spec.dynamic {
        if let Some(e) = e {
            v += e.dot(&(&d.p * e));
        }
        if let Some(pt) = phi_tilde {
            v += d.alpha * pt.dot(&(&d.p_bar * pt));
        }
    }
    v
}

/// `V̇ = −eᵀQe − αφ̃ᵀQ̄φ̃ + δ` along gradient flow on the dynamic model.
pub fn lyapunov_derivative(spec: &LyapunovSpec, e: &Vector, phi_tilde: &Vector, delta: f64) -> Result<f64> {
    let Some(d) = &spec.dynamic else {
        return Err(Error::InvalidInput("V̇ needs the dynamic-model terms".into()));
    };
    if !(d.alpha > d.alpha_bound) && !spec.allow_alpha_violation {
        return Err(Error::InvalidSpec { alpha: d.alpha, bound: d.alpha_bound });
    }
    check_dim("e", d.q.nrows(), e.len())?;
    check_dim("φ̃", d.q_bar.nrows(), phi_tilde.len())?;
    Ok(-e.dot(&(&d.q * e)) - d.alpha * phi_tilde.dot(&(&d.q_bar * phi_tilde)) + delta)
}

/// `V̇ = −2e_y²` for gradient flow on the algebraic model.
pub fn algebraic_lyapunov_derivative(e_y: f64) -> f64 {
    -2.0 * e_y * e_y
}

/// `½θᵀHθ + gᵀθ + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    pub h: Matrix,
    pub g: Vector,
    pub c: f64,
}

impl QuadraticCost {
    pub fn zero(dim: usize) -> Self {
        Self { h: Matrix::zeros(dim, dim), g: Vector::zeros(dim), c: 0.0 }
    }

    /// `½(θᵀφ − y)²`.
    pub fn regression(phi: &Vector, y: f64) -> Self {
        Self { h: phi * phi.transpose(), g: phi * -y, c: 0.5 * y * y }
    }

    pub fn value(&self, theta: &Vector) -> f64 {
        0.5 * theta.dot(&(&self.h * theta)) + self.g.dot(theta) + self.c
    }

    pub fn gradient(&self, theta: &Vector) -> Vector {
        &self.h * theta + &self.g
    }

    pub fn accumulate(&mut self, other: &QuadraticCost) {
        self.h += &other.h;
        self.g += &other.g;
        self.c += other.c;
    }
}

/// A per-step convex cost `𝒞_k`.
pub trait StepCost {
    fn value(&self, theta: &Vector) -> f64;
    fn gradient(&self, theta: &Vector) -> Vector;
    /// Exact quadratic form when the cost is quadratic.
    fn quadratic(&self) -> Option<QuadraticCost> {
        None
    }
}

impl StepCost for QuadraticCost {
    fn value(&self, theta: &Vector) -> f64 {
        QuadraticCost::value(self, theta)
    }
    fn gradient(&self, theta: &Vector) -> Vector {
        QuadraticCost::gradient(self, theta)
    }
    fn quadratic(&self) -> Option<QuadraticCost> {
        Some(self.clone())
    }
}

/// A loss evaluated on one regressor/target pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCost {
    pub kind: LossKind,
    pub phi: Vector,
    pub y: f64,
}

impl StepCost for LossCost {
    fn value(&self, theta: &Vector) -> f64 {
        self.kind.value_at(theta.dot(&self.phi), self.y).unwrap_or(f64::NAN)
    }
    fn gradient(&self, theta: &Vector) -> Vector {
        &self.phi * self.kind.derivative_at(theta.dot(&self.phi), self.y).unwrap_or(f64::NAN)
    }
    fn quadratic(&self) -> Option<QuadraticCost> {
        match self.kind {
            LossKind::Squared => Some(QuadraticCost::regression(&self.phi, self.y)),
            LossKind::Lp(2) => Some(QuadraticCost::regression(&self.phi, self.y)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretRecord {
    pub horizon: usize,
    /// `𝒞_k(θ_k)` for `k = 1..=T`.
    pub costs: Vec<f64>,
    /// Best static parameter in hindsight.
    pub comparator: Vector,
    pub comparator_cost: f64,
    pub regret: f64,
    /// `θ̄_T`.
    pub averaged: Vector,
}

/// Exact minimizer of a convex quadratic over a box or ball.
///
/// Boxes up to 12 dimensions enumerate every active set (free, lower,
/// upper per coordinate) and keep the best feasible stationary point; larger
/// boxes fall back to projected gradient. Balls use the pseudo-inverse
/// minimizer when it is feasible, otherwise bisection on the multiplier of
/// the active constraint `‖θ − c‖ = r`.
pub fn minimize_quadratic(cost: &QuadraticCost, set: &FeasibleSet) -> Result<Vector> {
    let n = cost.g.len();
    check_dim("feasible set", n, set.dimension())?;
    if min_symmetric_eigenvalue(&cost.h) < -1e-9 * (1.0 + cost.h.norm()) {
        return Err(Error::InvalidInput("quadratic cost is not convex".into()));
    }
    match set {
        FeasibleSet::Box { lower, upper } if n <= 12 => Ok(box_active_sets(cost, lower, upper)),
        FeasibleSet::Box { .. } => projected_descent(cost, set, project(set, &Vector::zeros(n))),
        FeasibleSet::Ball { center, radius } => Ok(ball_minimizer(cost, center, *radius)),
    }
}

fn pinv_solve(h: &Matrix, rhs: &Vector) -> Vector {
    let svd = h.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(1e-300);
    svd.solve(rhs, tol).unwrap_or_else(|_| Vector::zeros(rhs.len()))
}

fn box_active_sets(cost: &QuadraticCost, lower: &Vector, upper: &Vector) -> Vector {
    let n = cost.g.len();
    let mut best = project(&FeasibleSet::Box { lower: lower.clone(), upper: upper.clone() }, &Vector::zeros(n));
    let mut best_val = cost.value(&best);
    let total = 3usize.pow(n as u32);
    let mut states = vec![0u8; n];
    for code in 0..total {
        let mut c = code;
        for s in states.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| states[i] == 0).collect();
        let mut theta = Vector::zeros(n);
        for i in 0..n {
            match states[i] {
                1 => theta[i] = lower[i],
                2 => theta[i] = upper[i],
                _ => {}
            }
        }
        if !free.is_empty() {
            let m = free.len();
            let mut h_ff = Matrix::zeros(m, m);
            let mut rhs = Vector::zeros(m);
            for (a, &i) in free.iter().enumerate() {
                rhs[a] = -cost.g[i];
                for j in 0..n {
                    if states[j] != 0 {
                        rhs[a] -= cost.h[(i, j)] * theta[j];
                    }
                }
                for (b, &j) in free.iter().enumerate() {
                    h_ff[(a, b)] = cost.h[(i, j)];
                }
            }
            let x = pinv_solve(&h_ff, &rhs);
            for (a, &i) in free.iter().enumerate() {
                theta[i] = x[a];
            }
            let feasible = free.iter().all(|&i| theta[i] >= lower[i] - 1e-12 && theta[i] <= upper[i] + 1e-12);
            if !feasible {
                continue;
            }
            for &i in &free {
                theta[i] = theta[i].clamp(lower[i], upper[i]);
            }
        }
        let val = cost.value(&theta);
        // far-out stationary points of a singular H tie with the incumbent up to
        // cancellation error; only a clear improvement replaces it
        if val < best_val - value_roundoff(cost, &theta) {
            best_val = val;
            best = theta;
        }
    }
    best
}

/// Bound on the floating-point error of `cost.value(theta)`.
fn value_roundoff(cost: &QuadraticCost, theta: &Vector) -> f64 {
    let t = theta.norm();
    16.0 * f64::EPSILON * (0.5 * cost.h.norm() * t * t + cost.g.norm() * t + cost.c.abs())
}

fn ball_minimizer(cost: &QuadraticCost, center: &Vector, radius: f64) -> Vector {
    let n = center.len();
    // in d = θ − center: ½dᵀHd + rᵀd + const with r = g + H·center
    let r = &cost.g + &cost.h * center;
    let d_free = pinv_solve(&cost.h, &(-&r));
    let consistent = (&cost.h * &d_free + &r).norm() <= 1e-10 * (1.0 + r.norm());
    if consistent && d_free.norm() <= radius {
        return center + d_free;
    }
    if radius == 0.0 || r.norm() == 0.0 {
        return center.clone();
    }
    let identity = Matrix::identity(n, n);
    let step = |lambda: f64| -> Vector {
        (&cost.h + &identity * lambda)
            .cholesky()
            .map(|ch| ch.solve(&(-&r)))
            .unwrap_or_else(|| pinv_solve(&(&cost.h + &identity * lambda), &(-&r)))
    };
    let (mut lo, mut hi) = (0.0_f64, r.norm() / radius);
    for _ in 0..200 {
        let mid = if lo == 0.0 { hi * 0.5 } else { 0.5 * (lo + hi) };
        if step(mid).norm() > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let d = step(hi);
    let norm = d.norm();
    center + if norm > radius { d * (radius / norm) } else { d }
}

fn projected_descent<C: StepCost + ?Sized>(cost: &C, set: &FeasibleSet, start: Vector) -> Result<Vector> {
    const MAX_ITER: usize = 20_000;
    let mut theta = project(set, &start);
    let mut value = cost.value(&theta);
    let mut t = 1.0;
    let mut residual = f64::INFINITY;
    for iter in 0..MAX_ITER {
        let grad = cost.gradient(&theta);
        if !grad.iter().all(|g| g.is_finite()) || !value.is_finite() {
            return Err(Error::BaselineFailure { iterations: iter, residual });
        }
        // Armijo backtracking on the projected arc
        loop {
            let cand = project(set, &(&theta - &grad * t));
            let diff = &cand - &theta;
            let cand_val = cost.value(&cand);
            if cand_val <= value + grad.dot(&diff) + diff.norm_squared() / (2.0 * t) || t < 1e-16 {
                residual = diff.norm() / t;
                theta = cand;
                value = cand_val;
                break;
            }
            t *= 0.5;
        }
        if residual < 1e-9 || t < 1e-16 {
            return Ok(theta);
        }
        t = (t * 2.0).min(1e6);
    }
    Err(Error::BaselineFailure { iterations: MAX_ITER, residual })
}

/// `argmin_{θ∈Θ} Σ_k 𝒞_k(θ)`: exact for quadratic streams, otherwise a
/// dense grid (dimension ≤ 3) followed by projected-gradient refinement.
pub fn static_minimizer<C: StepCost>(costs: &[C], set: &FeasibleSet) -> Result<Vector> {
    let n = set.dimension();
    let quadratics: Option<Vec<QuadraticCost>> = costs.iter().map(|c| c.quadratic()).collect();
    if let Some(qs) = quadratics {
        let mut total = QuadraticCost::zero(n);
        for q in &qs {
            check_dim("cost", n, q.g.len())?;
            total.accumulate(q);
        }
        return minimize_quadratic(&total, set);
    }
    let sum = SumCost(costs);
    let start = grid_start(&sum, set);
    projected_descent(&sum, set, start)
}

struct SumCost<'a, C>(&'a [C]);

impl<C: StepCost> StepCost for SumCost<'_, C> {
    fn value(&self, theta: &Vector) -> f64 {
        self.0.iter().map(|c| c.value(theta)).sum()
    }
    fn gradient(&self, theta: &Vector) -> Vector {
        let mut g = Vector::zeros(theta.len());
        for c in self.0 {
            g += c.gradient(theta);
        }
        g
    }
}

fn grid_start<C: StepCost + ?Sized>(cost: &C, set: &FeasibleSet) -> Vector {
    let n = set.dimension();
    let (lo, hi) = match set {
        FeasibleSet::Box { lower, upper } => (lower.clone(), upper.clone()),
        FeasibleSet::Ball { center, radius } => (center.add_scalar(-radius), center.add_scalar(*radius)),
    };
    let mut best = project(set, &((&lo + &hi) * 0.5));
    if n > 3 {
        return best;
    }
    let per_axis = 21usize;
    let mut best_val = cost.value(&best);
    let mut idx = vec![0usize; n];
    for code in 0..per_axis.pow(n as u32) {
        let mut c = code;
        for slot in idx.iter_mut() {
            *slot = c % per_axis;
            c /= per_axis;
        }
        let point =
            Vector::from_iterator(n, (0..n).map(|i| lo[i] + (hi[i] - lo[i]) * idx[i] as f64 / (per_axis - 1) as f64));
        let point = project(set, &point);
        let val = cost.value(&point);
        if val < best_val {
            best_val = val;
            best = point;
        }
    }
    best
}

/// `regret_T = Σ𝒞_k(θ_k) − min_{θ∈Θ} Σ𝒞_k(θ)`.
pub fn discrete_regret<C: StepCost>(costs: &[C], iterates: &[Vector], set: &FeasibleSet) -> Result<RegretRecord> {
    if costs.is_empty() {
        return Err(Error::InvalidInput("regret needs T ≥ 1".into()));
    }
    check_dim("iterates", costs.len(), iterates.len())?;
    let step_costs: Vec<f64> = costs.iter().zip(iterates).map(|(c, th)| c.value(th)).collect();
    let comparator = static_minimizer(costs, set)?;
    let comparator_cost: f64 = costs.iter().map(|c| c.value(&comparator)).sum();
    let mut averaged = Vector::zeros(iterates[0].len());
    for th in iterates {
        averaged += th;
    }
    averaged /= iterates.len() as f64;
    Ok(RegretRecord {
        horizon: costs.len(),
        regret: step_costs.iter().sum::<f64>() - comparator_cost,
        costs: step_costs,
        comparator,
        comparator_cost,
        averaged,
    })
}

/// `regret_t` for every prefix `t = 1..=T` of a quadratic stream.
pub fn quadratic_regret_curve(costs: &[QuadraticCost], iterates: &[Vector], set: &FeasibleSet) -> Result<Vec<f64>> {
    check_dim("iterates", costs.len(), iterates.len())?;
    let n = set.dimension();
    let mut total = QuadraticCost::zero(n);
    let mut alg = 0.0;
    let mut curve = Vec::with_capacity(costs.len());
    for (c, th) in costs.iter().zip(iterates) {
        alg += c.value(th);
        total.accumulate(c);
        let best = minimize_quadratic(&total, set)?;
        curve.push(alg - total.value(&best));
    }
    Ok(curve)
}

pub fn is_nondecreasing(curve: &[f64], tol: f64) -> bool {
    curve.windows(2).all(|w| w[1] >= w[0] - tol)
}

/// `eᵀQe`.
pub fn quadratic_form(e: &Vector, q: &Matrix) -> f64 {
    e.dot(&(q * e))
}

/// Cumulative trapezoidal integral, starting at 0.
pub fn cumulative_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..values.len() {
        acc += 0.5 * (values[i] + values[i - 1]) * (times[i] - times[i - 1]);
        out.push(acc);
    }
    out
}

/// Composite Simpson integral over a uniform grid; an odd trailing interval
/// falls back to the trapezoid rule. Nonuniform grids use the trapezoid rule
/// throughout.
pub fn simpson(times: &[f64], values: &[f64]) -> f64 {
    let n = times.len().min(values.len());
    if n < 2 {
        return 0.0;
    }
    let h = times[1] - times[0];
    let uniform = times[..n].windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1e-300));
    if !uniform || n < 3 {
        return cumulative_trapezoid(&times[..n], &values[..n])[n - 1];
    }
    let pairs = (n - 1) / 2;
    let mut acc = 0.0;
    for i in 0..pairs {
        let k = 2 * i;
        acc += h / 3.0 * (values[k] + 4.0 * values[k + 1] + values[k + 2]);
    }
    if (n - 1) % 2 == 1 {
        acc += 0.5 * h * (values[n - 2] + values[n - 1]);
    }
    acc
}

/// `∫eᵀQe dt` of the run minus the same integral for a baseline run on the
/// same grid (the baseline holds θ at its best static value).
pub fn continuous_regret(
    times: &[f64],
    errors: &[Vector],
    baseline_times: &[f64],
    baseline_errors: &[Vector],
    q: &Matrix,
) -> Result<Vec<f64>> {
    check_dim("trajectory errors", times.len(), errors.len())?;
    check_dim("baseline errors", baseline_times.len(), baseline_errors.len())?;
    if times.len() != baseline_times.len()
        || times.iter().zip(baseline_times).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs()))
    {
        return Err(Error::InvalidInput("run and baseline trajectories are on different grids".into()));
    }
    if times.is_empty() {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let run: Vec<f64> = errors.iter().map(|e| quadratic_form(e, q)).collect();
    let base: Vec<f64> = baseline_errors.iter().map(|e| quadratic_form(e, q)).collect();
    let run_int = cumulative_trapezoid(times, &run);
    let base_int = cumulative_trapezoid(times, &base);
    Ok(run_int.iter().zip(&base_int).map(|(a, b)| a - b).collect())
}

/// `(𝒞(θ̄_T) − 𝒞(θ*), regret_T / T)` for a constant convex cost.
pub fn jensen_gap<C: StepCost + ?Sized>(cost: &C, iterates: &[Vector], minimizer: &Vector) -> Result<(f64, f64)> {
    if iterates.is_empty() {
        return Err(Error::InvalidInput("Jensen bound needs at least one iterate".into()));
    }
    let t = iterates.len() as f64;
    let mut avg = Vector::zeros(minimizer.len());
    for th in iterates {
        check_dim("iterate", minimizer.len(), th.len())?;
        avg += th;
    }
    avg /= t;
    let best = cost.value(minimizer);
    let lhs = cost.value(&avg) - best;
    let rhs = iterates.iter().map(|th| cost.value(th) - best).sum::<f64>() / t;
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceFit {
    pub slope: f64,
    pub r_squared: f64,
}

/// Least-squares line through `ln‖θ̃‖` versus `t` over the final 80% of the
/// horizon. A perfectly flat series reports `R² = 1`.
pub fn convergence_fit(times: &[f64], norms: &[f64]) -> Result<ConvergenceFit> {
    check_dim("norms", times.len(), norms.len())?;
    if norms.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("convergence fit needs strictly positive norms".into()));
    }
    let (Some(&t0), Some(&t1)) = (times.first(), times.last()) else {
        return Err(Error::InvalidInput("empty trajectory".into()));
    };
    let cut = t0 + 0.2 * (t1 - t0);
    let pts: Vec<(f64, f64)> =
        times.iter().zip(norms).filter(|(t, _)| **t >= cut).map(|(t, v)| (*t, libm::log(*v))).collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: pts.len() });
    }
    let m = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let stt: f64 = pts.iter().map(|p| (p.0 - tm) * (p.0 - tm)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - ym) * (p.1 - ym)).sum();
    // constant log-norm up to rounding: a perfect fit with zero rate
    let flat_tol = 1e-12 * (1.0 + ym.abs());
    if syy <= m * flat_tol * flat_tol {
        return Ok(ConvergenceFit { slope: 0.0, r_squared: 1.0 });
    }
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let r_squared = 1.0 - ss_res / syy;
    Ok(ConvergenceFit { slope, r_squared })
}
