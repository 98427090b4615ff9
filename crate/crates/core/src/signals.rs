//! Regressor generators, the normalizing signal and persistence-of-excitation
//! measurement.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{min_symmetric_eigenvalue, Matrix, Vector};

/// Componentwise sinusoids `x_i(t) = a_i sin(ω_i t + p_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinusoidBank {
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub phases: Vec<f64>,
}

impl SinusoidBank {
    pub fn new(amplitudes: Vec<f64>, frequencies: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        let n = amplitudes.len();
        if n == 0 {
            return Err(Error::InvalidParameter("sinusoid bank needs at least one component".into()));
        }
        check_dim("sinusoid frequencies", n, frequencies.len())?;
        check_dim("sinusoid phases", n, phases.len())?;
        if !amplitudes.iter().chain(&frequencies).chain(&phases).all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("sinusoid parameters must be finite".into()));
        }
        Ok(Self { amplitudes, frequencies, phases })
    }

    pub fn dimension(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn evaluate(&self, t: f64) -> Vector {
        Vector::from_iterator(
            self.dimension(),
            self.amplitudes.iter().zip(&self.frequencies).zip(&self.phases).map(|((a, w), p)| a * libm::sin(w * t + p)),
        )
    }
}

/// A regressor trajectory `φ(t) ∈ R^N`.
///
/// Generators are immutable once built, so one instance can be shared by
/// any number of concurrent readers.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressorSignal {
    Constant(Vector),
    Sinusoids(SinusoidBank),
    /// Gaussian RBF features of a sinusoidal input trajectory.
    RbfMap {
        centers: Matrix,
        width: f64,
        input: SinusoidBank,
    },
    /// Cycles through `levels`, holding each one for `period` time units.
    PiecewiseSwitching {
        levels: Vec<Vector>,
        period: f64,
    },
    /// Uniform values in `[-amplitude, amplitude]`, redrawn every `hold` time
    /// units. Segment `j` is drawn from ChaCha8 keyed by `seed` on stream `j`,
    /// so evaluation is random-access and platform independent.
    SeededRandom {
        dimension: usize,
        amplitude: f64,
        hold: f64,
        seed: u64,
    },
}

impl RegressorSignal {
    pub fn constant(value: Vector) -> Result<Self> {
        if value.is_empty() || !value.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("constant regressor must be nonempty and finite".into()));
        }
        Ok(Self::Constant(value))
    }

    pub fn sinusoids(amplitudes: Vec<f64>, frequencies: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        SinusoidBank::new(amplitudes, frequencies, phases).map(Self::Sinusoids)
    }

    pub fn rbf_map(centers: Matrix, width: f64, input: SinusoidBank) -> Result<Self> {
        validate_rbf(&centers, width)?;
        check_dim("rbf center dimension", input.dimension(), centers.ncols())?;
        Ok(Self::RbfMap { centers, width, input })
    }

    pub fn piecewise_switching(levels: Vec<Vector>, period: f64) -> Result<Self> {
        let Some(first) = levels.first() else {
            return Err(Error::InvalidParameter("switching regressor needs at least one level".into()));
        };
        let n = first.len();
        if n == 0 {
            return Err(Error::InvalidParameter("switching levels must be nonempty".into()));
        }
        for level in &levels {
            check_dim("switching level", n, level.len())?;
            if !level.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidParameter("switching levels must be finite".into()));
            }
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidParameter(format!("switch period must be positive, got {period}")));
        }
        Ok(Self::PiecewiseSwitching { levels, period })
    }

    pub fn seeded_random(dimension: usize, amplitude: f64, hold: f64, seed: u64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidParameter("random regressor dimension must be positive".into()));
        }
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidParameter(format!("amplitude must be nonnegative, got {amplitude}")));
        }
        if !(hold > 0.0 && hold.is_finite()) {
            return Err(Error::InvalidParameter(format!("hold time must be positive, got {hold}")));
        }
        Ok(Self::SeededRandom { dimension, amplitude, hold, seed })
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::Constant(v) => v.len(),
            Self::Sinusoids(bank) => bank.dimension(),
            Self::RbfMap { centers, .. } => centers.nrows(),
            Self::PiecewiseSwitching { levels, .. } => levels[0].len(),
            Self::SeededRandom { dimension, .. } => *dimension,
        }
    }

    /// Evaluates `φ(t)`. Total for `t ≥ 0`.
    pub fn evaluate(&self, t: f64) -> Vector {
        match self {
            Self::Constant(v) => v.clone(),
            Self::Sinusoids(bank) => bank.evaluate(t),
            Self::RbfMap { centers, width, input } => gaussian_features(centers, *width, &input.evaluate(t)),
            Self::PiecewiseSwitching { levels, period } => {
                let idx = libm::floor(t / period) as i64;
                levels[idx.rem_euclid(levels.len() as i64) as usize].clone()
            }
            Self::SeededRandom { dimension, amplitude, hold, seed } => {
                let segment = libm::floor(t / hold).max(0.0) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(segment);
                Vector::from_iterator(
                    *dimension,
                    (0..*dimension).map(|_| amplitude * (2.0 * unit_uniform(&mut rng) - 1.0)),
                )
            }
        }
    }

    /// Samples `φ` on the grid `t0, t0 + step, …` with `count` points.
    pub fn sample(&self, t0: f64, step: f64, count: usize) -> (Vec<f64>, Vec<Vector>) {
        let times: Vec<f64> = (0..count).map(|i| t0 + i as f64 * step).collect();
        let values = times.iter().map(|&t| self.evaluate(t)).collect();
        (times, values)
    }
}

/// Uniform draw in `[0, 1)` from the top 53 bits of a 64-bit output.
fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn validate_rbf(centers: &DMatrix<f64>, width: f64) -> Result<()> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::InvalidParameter(format!("rbf width must be positive, got {width}")));
    }
    if centers.nrows() == 0 || centers.ncols() == 0 {
        return Err(Error::InvalidParameter("rbf centers must be nonempty".into()));
    }
    Ok(())
}

fn gaussian_features(centers: &Matrix, width: f64, x: &Vector) -> Vector {
    let scale = 1.0 / (2.0 * width * width);
    Vector::from_iterator(
        centers.nrows(),
        centers.row_iter().map(|c| {
            let d2: f64 = c.iter().zip(x.iter()).map(|(ci, xi)| (xi - ci) * (xi - ci)).sum();
            libm::exp(-d2 * scale)
        }),
    )
}

/// Gaussian radial basis features; row `i` of `centers` is the i-th center.
pub fn rbf_features(centers: &Matrix, width: f64, x: &Vector) -> Result<Vector> {
    validate_rbf(centers, width)?;
    check_dim("rbf input", centers.ncols(), x.len())?;
    Ok(gaussian_features(centers, width, x))
}

/// `𝒩 = 1 + μ φᵀφ`.
pub fn normalizing_signal(phi: &DVector<f64>, mu: f64) -> f64 {
    1.0 + mu * phi.norm_squared()
}

/// Window and quadrature grid for measuring persistence of excitation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeWindowConfig {
    pub window: f64,
    pub step: f64,
    pub tolerance: f64,
}

impl PeWindowConfig {
    pub fn new(window: f64, step: f64, tolerance: f64) -> Result<Self> {
        if !(window > 0.0) {
            return Err(Error::InvalidParameter(format!("PE window must be positive, got {window}")));
        }
        if !(step > 0.0 && step < window) {
            return Err(Error::InvalidParameter(format!("quadrature step must lie in (0, window), got {step}")));
        }
        if !(tolerance >= 0.0) {
            return Err(Error::InvalidParameter("PE tolerance must be nonnegative".into()));
        }
        Ok(Self { window, step, tolerance })
    }

    pub fn window_steps(&self) -> usize {
        libm::round(self.window / self.step) as usize
    }

    /// Whether a measured level certifies excitation.
    pub fn certifies(&self, level: f64) -> bool {
        level > self.tolerance
    }
}

/// Minimum over sliding windows of `λ_min(∫ φφᵀ dτ)` by the trapezoidal rule.
///
/// Samples must lie on a uniform grid with spacing `cfg.step`; every grid
/// point that starts a full window is a window start.
pub fn pe_level(times: &[f64], samples: &[Vector], cfg: &PeWindowConfig) -> Result<f64> {
    check_dim("PE sample times", samples.len(), times.len())?;
    let w = cfg.window_steps().max(1);
    if samples.len() < w + 1 {
        return Err(Error::InsufficientData { needed: w + 1, got: samples.len() });
    }
    let n = samples[0].len();
    for s in samples {
        check_dim("PE sample", n, s.len())?;
    }
    for pair in times.windows(2) {
        let h = pair[1] - pair[0];
        if (h - cfg.step).abs() > 1e-9 * cfg.step.max(1.0) {
            return Err(Error::InvalidInput(format!("PE samples must be spaced by {} (found {h})", cfg.step)));
        }
    }

    let segment = |i: usize| -> Matrix {
        let a = &samples[i];
        let b = &samples[i + 1];
        (a * a.transpose() + b * b.transpose()) * (0.5 * (times[i + 1] - times[i]))
    };

    let mut gram = Matrix::zeros(n, n);
    for i in 0..w {
        gram += segment(i);
    }
    let mut level = min_symmetric_eigenvalue(&gram);
    for start in 1..=(samples.len() - 1 - w) {
        gram -= segment(start - 1);
        gram += segment(start + w - 1);
        level = level.min(min_symmetric_eigenvalue(&gram));
    }
    Ok(level.max(0.0))
}
