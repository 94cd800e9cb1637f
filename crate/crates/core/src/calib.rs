//! Privacy-derived constants: sensitivities, Gaussian noise scales, tree
//! depth, PSD shift magnitudes and the regularity constants they imply.
//!
//! The recipe: each of the four counters (transition Gram, transition target,
//! reward Gram, reward target) is made `(ε/4, δ/4)`-DP through the Gaussian
//! mechanism composed over `m` tree memberships, and the whole run then pays
//! a factor `H` for the `H` steps per episode, which is absorbed by replacing
//! `(ε, δ)` with `(ε/H, δ/H)`:
//!
//! `σ = (H Δ / ε) · sqrt(32 m ln(4H/δ))`.
//!
//! Natural logarithms throughout.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::estimation::{Regularity, StreamRegularity};
use crate::tree::tree_depth;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::domain("epsilon must be positive"));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::domain("delta must lie in (0, 1]"));
        }
        Ok(PrivacyBudget { epsilon, delta })
    }
}

/// All noise and shift constants for one run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseCalibration {
    /// Tree membership bound `⌈log₂ K⌉ + 1`.
    pub m: usize,
    pub sigma_p1: f64,
    pub sigma_p2: f64,
    pub sigma_r1: f64,
    pub sigma_r2: f64,
    pub delta_p1: f64,
    pub delta_p2: f64,
    /// Shared sensitivity of both reward counters.
    pub delta_r: f64,
    pub shift_p1: f64,
    pub shift_r: f64,
    pub lambda_min_p: f64,
    pub lambda_max_p: f64,
    pub lambda_min_r: f64,
    pub lambda_max_r: f64,
    pub nu_p: f64,
    pub nu_r: f64,
}

fn check_dims(episodes: usize, horizon: usize, d1: usize, d2: usize) -> Result<()> {
    if episodes == 0 || horizon == 0 || d1 == 0 || d2 == 0 {
        return Err(Error::domain("K, H, d1 and d2 must be positive"));
    }
    Ok(())
}

/// Sensitivities and noise scales. Shift and regularity fields are left at
/// zero; see [`shift_magnitudes`].
pub fn calibrate_noise(
    budget: PrivacyBudget,
    episodes: usize,
    horizon: usize,
    d1: usize,
    d2: usize,
) -> Result<NoiseCalibration> {
    let budget = PrivacyBudget::new(budget.epsilon, budget.delta)?;
    check_dims(episodes, horizon, d1, d2)?;
    let m = tree_depth(episodes);
    let h = horizon as f64;
    let delta_p1 = d1 as f64 * h * h;
    let delta_p2 = libm::sqrt(d1 as f64) * h * h;
    let delta_r = 1.0;
    let base =
        (h / budget.epsilon) * libm::sqrt(32.0 * m as f64 * libm::log(4.0 * h / budget.delta));
    Ok(NoiseCalibration {
        m,
        sigma_p1: base * delta_p1,
        sigma_p2: base * delta_p2,
        sigma_r1: base * delta_r,
        sigma_r2: base * delta_r,
        delta_p1,
        delta_p2,
        delta_r,
        ..NoiseCalibration::default()
    })
}

/// Operator-norm bound on a sum of `m` symmetric Gaussian matrices of
/// per-entry scale `σ` in dimension `d`, holding for all `K·H` releases with
/// probability `1 - α/4` overall: `σ √m (4√d + sqrt(8 ln(8KH/α)))`.
pub fn matrix_noise_bound(
    sigma: f64,
    m: usize,
    d: usize,
    episodes: usize,
    horizon: usize,
    alpha: f64,
) -> f64 {
    let kh = (episodes * horizon) as f64;
    sigma
        * libm::sqrt(m as f64)
        * (4.0 * libm::sqrt(d as f64) + libm::sqrt(8.0 * libm::log(8.0 * kh / alpha)))
}

/// Euclidean-norm bound on a sum of `m` Gaussian vectors of per-entry scale
/// `σ` in dimension `d`: `√m σ (√d + sqrt(2 ln(4KH/α)))`.
pub fn vector_noise_bound(
    sigma: f64,
    m: usize,
    d: usize,
    episodes: usize,
    horizon: usize,
    alpha: f64,
) -> f64 {
    let kh = (episodes * horizon) as f64;
    libm::sqrt(m as f64)
        * sigma
        * (libm::sqrt(d as f64) + libm::sqrt(2.0 * libm::log(4.0 * kh / alpha)))
}

/// Fills the shift magnitudes `Σ_{p,1}`, `Σ_r` and the regularity constants:
/// `λ_min = Σ`, `λ_max = 3Σ` (from the shift `Z = N + 2ΣI`) and
/// `ν = vector bound / sqrt(Σ)`. All zero when the noise scales are zero.
pub fn shift_magnitudes(
    cal: NoiseCalibration,
    alpha: f64,
    episodes: usize,
    horizon: usize,
    d1: usize,
    d2: usize,
) -> Result<NoiseCalibration> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain("alpha must lie in (0, 1]"));
    }
    check_dims(episodes, horizon, d1, d2)?;
    let m = cal.m;
    let shift_p1 = matrix_noise_bound(cal.sigma_p1, m, d1, episodes, horizon, alpha);
    let shift_r = matrix_noise_bound(cal.sigma_r1, m, d2, episodes, horizon, alpha);
    let nu = |sigma2: f64, shift: f64, d: usize| {
        if shift == 0.0 {
            0.0
        } else {
            vector_noise_bound(sigma2, m, d, episodes, horizon, alpha) / libm::sqrt(shift)
        }
    };
    Ok(NoiseCalibration {
        shift_p1,
        shift_r,
        lambda_min_p: shift_p1,
        lambda_max_p: 3.0 * shift_p1,
        lambda_min_r: shift_r,
        lambda_max_r: 3.0 * shift_r,
        nu_p: nu(cal.sigma_p2, shift_p1, d1),
        nu_r: nu(cal.sigma_r2, shift_r, d2),
        ..cal
    })
}

impl NoiseCalibration {
    /// `calibrate_noise` followed by `shift_magnitudes`.
    pub fn for_run(
        budget: PrivacyBudget,
        alpha: f64,
        episodes: usize,
        horizon: usize,
        d1: usize,
        d2: usize,
    ) -> Result<Self> {
        let cal = calibrate_noise(budget, episodes, horizon, d1, d2)?;
        shift_magnitudes(cal, alpha, episodes, horizon, d1, d2)
    }

    /// Calibration with every noise scale zero (testing mode).
    pub fn zero_noise(episodes: usize) -> Self {
        NoiseCalibration {
            m: tree_depth(episodes),
            delta_r: 1.0,
            ..NoiseCalibration::default()
        }
    }

    pub fn is_zero_noise(&self) -> bool {
        self.sigma_p1 == 0.0 && self.sigma_p2 == 0.0 && self.sigma_r1 == 0.0 && self.sigma_r2 == 0.0
    }

    pub fn regularity(&self) -> Regularity {
        Regularity {
            transition: StreamRegularity {
                lambda_min: self.lambda_min_p,
                lambda_max: self.lambda_max_p,
                nu: self.nu_p,
            },
            reward: StreamRegularity {
                lambda_min: self.lambda_min_r,
                lambda_max: self.lambda_max_r,
                nu: self.nu_r,
            },
        }
    }
}

/// One of the four private counters of a step.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CounterEntry {
    pub name: &'static str,
    pub sensitivity: f64,
    pub sigma: f64,
    /// `ln(4H/δ)`, shared by all counters.
    pub log_factor: f64,
    pub epsilon: f64,
    pub delta: f64,
}

/// Summary of the privacy accounting for a run.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AccountingReport {
    pub m: usize,
    pub sigma_p1: f64,
    pub sigma_p2: f64,
    pub sigma_r1: f64,
    pub sigma_r2: f64,
    #[cfg_attr(feature = "serde", serde(rename = "Sigma_p1"))]
    pub shift_p1: f64,
    #[cfg_attr(feature = "serde", serde(rename = "Sigma_r"))]
    pub shift_r: f64,
    pub lambda_min_p: f64,
    pub lambda_max_p: f64,
    pub lambda_min_r: f64,
    pub lambda_max_r: f64,
    pub nu_p: f64,
    pub nu_r: f64,
    /// `ε / (4H)`: the four-way split after the `ε → ε/H` replacement.
    pub per_counter_epsilon: f64,
    /// `δ / (4H)`.
    pub per_counter_delta: f64,
    pub counters: Vec<CounterEntry>,
}

pub fn accounting_report(
    cal: &NoiseCalibration,
    budget: PrivacyBudget,
    horizon: usize,
) -> AccountingReport {
    let h = horizon as f64;
    let per_counter_epsilon = budget.epsilon / (4.0 * h);
    let per_counter_delta = budget.delta / (4.0 * h);
    let log_factor = libm::log(4.0 * h / budget.delta);
    let entry = |name, sensitivity, sigma| CounterEntry {
        name,
        sensitivity,
        sigma,
        log_factor,
        epsilon: per_counter_epsilon,
        delta: per_counter_delta,
    };
    AccountingReport {
        m: cal.m,
        sigma_p1: cal.sigma_p1,
        sigma_p2: cal.sigma_p2,
        sigma_r1: cal.sigma_r1,
        sigma_r2: cal.sigma_r2,
        shift_p1: cal.shift_p1,
        shift_r: cal.shift_r,
        lambda_min_p: cal.lambda_min_p,
        lambda_max_p: cal.lambda_max_p,
        lambda_min_r: cal.lambda_min_r,
        lambda_max_r: cal.lambda_max_r,
        nu_p: cal.nu_p,
        nu_r: cal.nu_r,
        per_counter_epsilon,
        per_counter_delta,
        counters: vec![
            entry("transition_gram", cal.delta_p1, cal.sigma_p1),
            entry("transition_target", cal.delta_p2, cal.sigma_p2),
            entry("reward_gram", cal.delta_r, cal.sigma_r1),
            entry("reward_target", cal.delta_r, cal.sigma_r2),
        ],
    }
}
