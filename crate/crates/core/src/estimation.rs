//! Regularized least-squares estimators, confidence widths and exploration
//! bonuses.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::PdFactor;

/// `theta_hat = Λ^{-1} u` through a Cholesky factorization of `Λ`.
pub fn solve_estimator(lambda: &DMatrix<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    PdFactor::new(lambda)?.solve(u)
}

/// Exploration bonus `β · sqrt(xᵀ Λ⁻¹ x)`.
pub fn bonus(feature: &[f64], lambda: &DMatrix<f64>, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::domain("bonus width must be non-negative"));
    }
    let q = PdFactor::new(lambda)?.inv_quadratic(feature)?;
    Ok(beta * libm::sqrt(q))
}

/// Regularity constants of one regularized stream: with high probability
/// `‖Z‖ ≤ lambda_max`, `‖Z⁻¹‖ ≤ 1/lambda_min` and `‖z‖_{Z⁻¹} ≤ nu`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StreamRegularity {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub nu: f64,
}

/// Regularity constants for the transition (`p`) and reward (`r`) streams.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Regularity {
    pub transition: StreamRegularity,
    pub reward: StreamRegularity,
}

impl Regularity {
    /// Constants of a fixed ridge `Z = λI`, `z = 0`.
    pub fn ridge(lambda: f64) -> Self {
        let s = StreamRegularity {
            lambda_min: lambda,
            lambda_max: lambda,
            nu: 0.0,
        };
        Regularity {
            transition: s,
            reward: s,
        }
    }
}

/// Confidence level plus regularizer constants; the source of both widths.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfidenceParams {
    pub alpha: f64,
    pub regularity: Regularity,
}

/// The two widths used for one run.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Widths {
    pub beta_p: f64,
    pub beta_r: f64,
}

impl ConfidenceParams {
    pub fn new(alpha: f64, regularity: Regularity) -> Result<Self> {
        let cp = ConfidenceParams { alpha, regularity };
        cp.validate()?;
        Ok(cp)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::domain("alpha must lie in (0, 1]"));
        }
        for (name, s) in [
            ("transition", self.regularity.transition),
            ("reward", self.regularity.reward),
        ] {
            if !(s.lambda_min > 0.0) || !s.lambda_min.is_finite() {
                return Err(Error::domain(alloc::format!(
                    "{name} lambda_min must be positive"
                )));
            }
            if !(s.lambda_max >= s.lambda_min) || !s.lambda_max.is_finite() {
                return Err(Error::domain(alloc::format!(
                    "{name} lambda_max must be at least lambda_min"
                )));
            }
            if !(s.nu >= 0.0) || !s.nu.is_finite() {
                return Err(Error::domain(alloc::format!(
                    "{name} nu must be non-negative"
                )));
            }
        }
        Ok(())
    }

    /// `β_p = (H/2)·sqrt(2 ln(H/α) + d1 ln(1 + K H² / λ_min,p)) + sqrt(d1 λ_max,p) + ν_p`.
    pub fn beta_p(&self, d1: usize, episodes: usize, horizon: usize) -> Result<f64> {
        self.validate()?;
        let s = self.regularity.transition;
        let (h, d, k) = (horizon as f64, d1 as f64, episodes as f64);
        let log_term =
            2.0 * libm::log(h / self.alpha) + d * libm::log(1.0 + k * h * h / s.lambda_min);
        Ok(0.5 * h * libm::sqrt(log_term) + libm::sqrt(d * s.lambda_max) + s.nu)
    }

    /// `β_r = (1/2)·sqrt(2 ln(H/α) + d2 ln(1 + K / (d2 λ_min,r))) + sqrt(d2 λ_max,r) + ν_r`.
    pub fn beta_r(&self, d2: usize, episodes: usize, horizon: usize) -> Result<f64> {
        self.validate()?;
        let s = self.regularity.reward;
        let (h, d, k) = (horizon as f64, d2 as f64, episodes as f64);
        let log_term =
            2.0 * libm::log(h / self.alpha) + d * libm::log(1.0 + k / (d * s.lambda_min));
        Ok(0.5 * libm::sqrt(log_term) + libm::sqrt(d * s.lambda_max) + s.nu)
    }

    pub fn widths(&self, d1: usize, d2: usize, episodes: usize, horizon: usize) -> Result<Widths> {
        Ok(Widths {
            beta_p: self.beta_p(d1, episodes, horizon)?,
            beta_r: self.beta_r(d2, episodes, horizon)?,
        })
    }
}
