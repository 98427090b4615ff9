//! Losses on the output error and their gradients with respect to θ.

use alloc::format;

use crate::error::{check_dim, Error, Result};
use crate::linalg::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `½ e_y²`
    Squared,
    /// `(1/p)|e_y|^p`, `p` even and positive.
    Lp(u32),
    /// `max(0, 1 − y ŷ)`, labels ±1.
    Hinge,
    /// `ln(1 + exp(−y ŷ))`, labels ±1.
    Logistic,
}

impl LossKind {
    pub fn lp(p: u32) -> Result<Self> {
        if p == 0 || !p.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("lp loss needs an even positive p, got {p}")));
        }
        Ok(Self::Lp(p))
    }

    pub fn is_classification(self) -> bool {
        matches!(self, Self::Hinge | Self::Logistic)
    }

    fn check_label(self, y: f64) -> Result<()> {
        if self.is_classification() && y != 1.0 && y != -1.0 {
            return Err(Error::InvalidInput(format!("classification label must be ±1, got {y}")));
        }
        if let Self::Lp(p) = self {
            if p == 0 || !p.is_multiple_of(2) {
                return Err(Error::InvalidParameter(format!("lp loss needs an even positive p, got {p}")));
            }
        }
        Ok(())
    }

    pub fn is_regression(self) -> bool {
        matches!(self, Self::Squared | Self::Lp(_))
    }

    /// Regression loss as a function of the error `e = ŷ − y`.
    pub fn value_from_error(self, e: f64) -> f64 {
        match self {
            Self::Lp(p) => libm::pow(e.abs(), p as f64) / p as f64,
            _ => 0.5 * e * e,
        }
    }

    /// `∂L/∂ŷ` of a regression loss at error `e = ŷ − y`.
    pub fn derivative_from_error(self, e: f64) -> f64 {
        match self {
            Self::Lp(p) => libm::pow(e.abs(), (p - 2) as f64) * e,
            _ => e,
        }
    }

    /// Loss as a function of the prediction `ŷ = θᵀφ`.
    pub fn value_at(self, y_hat: f64, y: f64) -> Result<f64> {
        self.check_label(y)?;
        let e = y_hat - y;
        Ok(match self {
            Self::Squared | Self::Lp(_) => self.value_from_error(e),
            Self::Hinge => (1.0 - y * y_hat).max(0.0),
            Self::Logistic => softplus(-y * y_hat),
        })
    }

    /// `∂L/∂ŷ`; the θ-gradient is this times φ.
    pub fn derivative_at(self, y_hat: f64, y: f64) -> Result<f64> {
        self.check_label(y)?;
        let e = y_hat - y;
        Ok(match self {
            Self::Squared | Self::Lp(_) => self.derivative_from_error(e),
            // the kink 1 − yŷ = 0 takes the inactive branch
            Self::Hinge => {
                if 1.0 - y * y_hat > 0.0 {
                    -y
                } else {
                    0.0
                }
            }
            Self::Logistic => -y * sigmoid(-y * y_hat),
        })
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-z.abs()))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let ez = libm::exp(z);
        ez / (1.0 + ez)
    }
}

pub fn loss_value(kind: LossKind, theta: &Vector, phi: &Vector, y: f64) -> Result<f64> {
    check_dim("φ", theta.len(), phi.len())?;
    kind.value_at(theta.dot(phi), y)
}

pub fn loss_grad(kind: LossKind, theta: &Vector, phi: &Vector, y: f64) -> Result<Vector> {
    check_dim("φ", theta.len(), phi.len())?;
    Ok(phi * kind.derivative_at(theta.dot(phi), y)?)
}

/// One regressor/target pair of an empirical-risk batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub phi: Vector,
    pub y: f64,
}

/// `(1/m) Σ ∇L_i(θ)`.
pub fn erm_grad(kind: LossKind, theta: &Vector, batch: &[Sample]) -> Result<Vector> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empirical risk needs at least one sample".into()));
    }
    let mut acc = Vector::zeros(theta.len());
    for s in batch {
        acc += loss_grad(kind, theta, &s.phi, s.y)?;
    }
    Ok(acc / batch.len() as f64)
}

pub fn erm_value(kind: LossKind, theta: &Vector, batch: &[Sample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empirical risk needs at least one sample".into()));
    }
    let mut acc = 0.0;
    for s in batch {
        acc += loss_value(kind, theta, &s.phi, s.y)?;
    }
    Ok(acc / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn value_examples() {
        let theta = v(&[1.0, 2.0]);
        let phi = v(&[1.0, 1.0]);
        assert_eq!(loss_value(LossKind::Squared, &theta, &phi, 3.0).unwrap(), 0.0);
        let unit = v(&[1.0]);
        assert_eq!(loss_value(LossKind::Hinge, &unit, &unit, 1.0).unwrap(), 0.0);
        let ln2 = loss_value(LossKind::Logistic, &v(&[0.0]), &unit, 1.0).unwrap();
        assert!((ln2 - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((loss_value(LossKind::Lp(4), &v(&[2.0]), &unit, 0.0).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn grad_examples() {
        // θᵀφ − y = 2 with φ = (1, 0)
        let g = loss_grad(LossKind::Squared, &v(&[2.0, 5.0]), &v(&[1.0, 0.0]), 0.0).unwrap();
        assert_eq!(g, v(&[2.0, 0.0]));
        let kink = loss_grad(LossKind::Hinge, &v(&[1.0]), &v(&[1.0]), 1.0).unwrap();
        assert_eq!(kink, v(&[0.0]));
        let active = loss_grad(LossKind::Hinge, &v(&[0.5]), &v(&[2.0]), -1.0).unwrap();
        assert_eq!(active, v(&[2.0]));
    }

    #[test]
    fn logistic_grad_matches_central_difference() {
        let theta = v(&[0.3, -0.7]);
        let phi = v(&[1.0, 2.0]);
        let h = 1e-5;
        let g = loss_grad(LossKind::Logistic, &theta, &phi, 1.0).unwrap();
        for i in 0..2 {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let fd = (loss_value(LossKind::Logistic, &tp, &phi, 1.0).unwrap()
                - loss_value(LossKind::Logistic, &tm, &phi, 1.0).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs(), "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn logistic_is_stable_for_large_margins() {
        let big = v(&[1e4]);
        let unit = v(&[1.0]);
        assert!(loss_value(LossKind::Logistic, &big, &unit, -1.0).unwrap().is_finite());
        assert!((loss_value(LossKind::Logistic, &big, &unit, -1.0).unwrap() - 1e4).abs() < 1e-9);
        assert!(loss_grad(LossKind::Logistic, &big, &unit, 1.0).unwrap()[0].abs() < 1e-300);
    }

    #[test]
    fn invalid_inputs() {
        let unit = v(&[1.0]);
        assert!(matches!(loss_value(LossKind::Hinge, &unit, &unit, 0.5), Err(Error::InvalidInput(_))));
        assert!(matches!(LossKind::lp(3), Err(Error::InvalidParameter(_))));
        assert!(matches!(LossKind::lp(0), Err(Error::InvalidParameter(_))));
        assert!(matches!(erm_grad(LossKind::Squared, &unit, &[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn erm_examples() {
        let theta = v(&[0.5, -1.0]);
        let s = Sample { phi: v(&[1.0, 2.0]), y: 0.3 };
        let single = erm_grad(LossKind::Squared, &theta, core::slice::from_ref(&s)).unwrap();
        assert_eq!(single, loss_grad(LossKind::Squared, &theta, &s.phi, s.y).unwrap());
        let twice = erm_grad(LossKind::Squared, &theta, &[s.clone(), s.clone()]).unwrap();
        assert_eq!(twice, single);
        // same regressor, errors +1 and −1
        let theta = v(&[1.0]);
        let batch = vec![Sample { phi: v(&[1.0]), y: 0.0 }, Sample { phi: v(&[1.0]), y: 2.0 }];
        assert_eq!(erm_grad(LossKind::Squared, &theta, &batch).unwrap(), v(&[0.0]));
    }
}
