//! Regularizers turn per-episode regression data into the released statistics
//! `Λ = G + Z`, `u = g + z` consumed by the agents.
//!
//! Protocol: `release(0)` before any data, then for each episode `k = 1, 2, …`
//! `ingest(k, …)` followed by `release(k)`, which covers episodes `1..=k` and
//! is used for episode `k + 1`. Releasing the current episode again returns
//! bit-identical statistics.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::calib::NoiseCalibration;
use crate::error::{Error, Result};
use crate::estimation::Regularity;
use crate::tree::{NoisyPSumTree, Shape};

/// Shift used by a Privatizer whose noise scales are all zero, so the
/// released matrices stay positive definite.
pub const ZERO_NOISE_FLOOR: f64 = 1.0;

/// Regression data of one step of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct StepIncrement {
    /// Transition feature `phi_h^k(s_h, a_h)`, computed from this episode's
    /// value estimate.
    pub phi: Vec<f64>,
    /// `V_{h+1}^k(s_{h+1})`.
    pub target: f64,
    /// Reward feature `varphi(s_h, a_h)`.
    pub varphi: Vec<f64>,
    /// Realized reward `r_h`.
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    pub lambda_p: DMatrix<f64>,
    pub u_p: DVector<f64>,
    pub lambda_r: DMatrix<f64>,
    pub u_r: DVector<f64>,
}

/// Released statistics, one entry per step.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularizedStats {
    pub steps: Vec<StepStats>,
}

pub trait Regularizer {
    /// Adds episode `episode`'s data; episodes must arrive as `1, 2, …`.
    fn ingest(&mut self, episode: usize, increments: &[StepIncrement]) -> Result<()>;

    /// Statistics over episodes `1..=episode`.
    fn release(&self, episode: usize) -> Result<RegularizedStats>;

    /// Regularity constants the released `(Z, z)` satisfy.
    fn regularity(&self) -> Regularity;

    fn episodes_ingested(&self) -> usize;
}

impl<T: Regularizer + ?Sized> Regularizer for &mut T {
    fn ingest(&mut self, episode: usize, increments: &[StepIncrement]) -> Result<()> {
        (**self).ingest(episode, increments)
    }

    fn release(&self, episode: usize) -> Result<RegularizedStats> {
        (**self).release(episode)
    }

    fn regularity(&self) -> Regularity {
        (**self).regularity()
    }

    fn episodes_ingested(&self) -> usize {
        (**self).episodes_ingested()
    }
}

/// The four counters of one step.
#[derive(Clone, Debug)]
struct StepCounters {
    gram_p: NoisyPSumTree,
    target_p: NoisyPSumTree,
    gram_r: NoisyPSumTree,
    target_r: NoisyPSumTree,
}

#[derive(Clone, Debug)]
struct CounterBank {
    d1: usize,
    d2: usize,
    steps: Vec<StepCounters>,
    count: usize,
}

fn outer(x: &[f64]) -> Vec<f64> {
    x.iter()
        .flat_map(|a| x.iter().map(move |b| a * b))
        .collect()
}

fn scaled(x: &[f64], y: f64) -> Vec<f64> {
    x.iter().map(|a| a * y).collect()
}

impl CounterBank {
    fn new(
        d1: usize,
        d2: usize,
        horizon: usize,
        episodes: usize,
        sigmas: [f64; 4],
    ) -> Result<Self> {
        if d1 == 0 || d2 == 0 || horizon == 0 {
            return Err(Error::domain("d1, d2 and H must be positive"));
        }
        let steps = (0..horizon)
            .map(|_| {
                Ok(StepCounters {
                    gram_p: NoisyPSumTree::new(Shape::SymMatrix(d1), sigmas[0], episodes)?,
                    target_p: NoisyPSumTree::new(Shape::Vector(d1), sigmas[1], episodes)?,
                    gram_r: NoisyPSumTree::new(Shape::SymMatrix(d2), sigmas[2], episodes)?,
                    target_r: NoisyPSumTree::new(Shape::Vector(d2), sigmas[3], episodes)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CounterBank {
            d1,
            d2,
            steps,
            count: 0,
        })
    }

    fn check_ingest(&self, episode: usize, increments: &[StepIncrement]) -> Result<()> {
        if episode != self.count + 1 {
            return Err(Error::protocol(format!(
                "expected episode {}, got {episode}",
                self.count + 1
            )));
        }
        if increments.len() != self.steps.len() {
            return Err(Error::domain(format!(
                "{} step increments for horizon {}",
                increments.len(),
                self.steps.len()
            )));
        }
        for inc in increments {
            if inc.phi.len() != self.d1 || inc.varphi.len() != self.d2 {
                return Err(Error::domain("increment feature has the wrong dimension"));
            }
        }
        Ok(())
    }

    fn ingest(
        &mut self,
        episode: usize,
        increments: &[StepIncrement],
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<()> {
        self.check_ingest(episode, increments)?;
        for (counters, inc) in self.steps.iter_mut().zip(increments) {
            let items = [
                (&mut counters.gram_p, outer(&inc.phi)),
                (&mut counters.target_p, scaled(&inc.phi, inc.target)),
                (&mut counters.gram_r, outer(&inc.varphi)),
                (&mut counters.target_r, scaled(&inc.varphi, inc.reward)),
            ];
            for (tree, item) in items {
                match rng.as_deref_mut() {
                    Some(r) => tree.append(&item, r)?,
                    None => tree.append_exact(&item)?,
                }
            }
        }
        self.count = episode;
        Ok(())
    }

    fn release(&self, episode: usize, shift_p: f64, shift_r: f64) -> Result<RegularizedStats> {
        if episode > self.count {
            return Err(Error::protocol(format!(
                "release({episode}) with only {} episodes ingested",
                self.count
            )));
        }
        let (d1, d2) = (self.d1, self.d2);
        let k = episode + 1;
        let steps = self
            .steps
            .iter()
            .map(|c| {
                let mut lambda_p = DMatrix::from_row_slice(d1, d1, &c.gram_p.private_prefix(k)?);
                let mut lambda_r = DMatrix::from_row_slice(d2, d2, &c.gram_r.private_prefix(k)?);
                for i in 0..d1 {
                    lambda_p[(i, i)] += shift_p;
                }
                for i in 0..d2 {
                    lambda_r[(i, i)] += shift_r;
                }
                Ok(StepStats {
                    lambda_p,
                    u_p: DVector::from_vec(c.target_p.private_prefix(k)?),
                    lambda_r,
                    u_r: DVector::from_vec(c.target_r.private_prefix(k)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RegularizedStats { steps })
    }
}

/// Non-private ridge: `Z = λI`, `z = 0` for every step and episode.
///
/// The exact sums are accumulated through the same dyadic partial sums the
/// Privatizer uses, so a zero-noise Privatizer with shift `λ` reproduces this
/// regularizer bit for bit.
#[derive(Clone, Debug)]
pub struct FixedRidge {
    lambda: f64,
    bank: CounterBank,
}

impl FixedRidge {
    pub fn new(lambda: f64, d1: usize, d2: usize, horizon: usize, episodes: usize) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::domain("ridge weight must be positive"));
        }
        Ok(FixedRidge {
            lambda,
            bank: CounterBank::new(d1, d2, horizon, episodes, [0.0; 4])?,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Regularizer for FixedRidge {
    fn ingest(&mut self, episode: usize, increments: &[StepIncrement]) -> Result<()> {
        self.bank.ingest(episode, increments, None)
    }

    fn release(&self, episode: usize) -> Result<RegularizedStats> {
        self.bank.release(episode, self.lambda, self.lambda)
    }

    fn regularity(&self) -> Regularity {
        Regularity::ridge(self.lambda)
    }

    fn episodes_ingested(&self) -> usize {
        self.bank.count
    }
}

/// `(N_p, z_p, N_r, z_r)`
pub type NoiseTerms = (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>);

/// Joint-DP regularizer: four binary-tree counters per step with Gaussian
/// node noise, and matrix releases shifted by `2Σ·I` (`Σ_{p,1}` for the
/// transition stream, `Σ_r` for the reward stream) to keep them positive
/// definite with high probability.
#[derive(Clone, Debug)]
pub struct Privatizer<R> {
    calibration: NoiseCalibration,
    bank: CounterBank,
    floor: f64,
    rng: R,
}

impl<R: RngCore> Privatizer<R> {
    /// `calibration` must carry noise scales and shift magnitudes for the
    /// same `K`, `H`, `d1`, `d2`. All node noise comes from `rng`.
    pub fn new(
        calibration: NoiseCalibration,
        d1: usize,
        d2: usize,
        horizon: usize,
        episodes: usize,
        rng: R,
    ) -> Result<Self> {
        let c = &calibration;
        let bank = CounterBank::new(
            d1,
            d2,
            horizon,
            episodes,
            [c.sigma_p1, c.sigma_p2, c.sigma_r1, c.sigma_r2],
        )?;
        if !c.is_zero_noise() && (c.shift_p1 <= 0.0 || c.shift_r <= 0.0) {
            return Err(Error::domain(
                "noisy calibration needs positive shift magnitudes",
            ));
        }
        Ok(Privatizer {
            calibration,
            bank,
            floor: ZERO_NOISE_FLOOR,
            rng,
        })
    }

    /// Shift used instead of `2Σ` when every noise scale is zero.
    pub fn with_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor > 0.0) || !floor.is_finite() {
            return Err(Error::domain("zero-noise floor must be positive"));
        }
        self.floor = floor;
        Ok(self)
    }

    pub fn calibration(&self) -> &NoiseCalibration {
        &self.calibration
    }

    /// `(transition shift, reward shift)` added to the released matrices.
    pub fn shifts(&self) -> (f64, f64) {
        if self.calibration.is_zero_noise() {
            (self.floor, self.floor)
        } else {
            (
                2.0 * self.calibration.shift_p1,
                2.0 * self.calibration.shift_r,
            )
        }
    }

    /// Accumulated tree noise `(N_p, z_p, N_r, z_r)` in `release(episode)` for
    /// step `h`.
    pub fn total_noise(&self, h: usize, episode: usize) -> Result<NoiseTerms> {
        let c = self.bank.steps.get(h).ok_or(Error::Index {
            what: "step",
            index: h,
            limit: self.bank.steps.len(),
        })?;
        let (d1, d2) = (self.bank.d1, self.bank.d2);
        let k = episode + 1;
        Ok((
            DMatrix::from_row_slice(d1, d1, &c.gram_p.total_noise(k)?),
            DVector::from_vec(c.target_p.total_noise(k)?),
            DMatrix::from_row_slice(d2, d2, &c.gram_r.total_noise(k)?),
            DVector::from_vec(c.target_r.total_noise(k)?),
        ))
    }

    /// The transition-Gram counter of step `h`, for inspection.
    pub fn transition_gram_tree(&self, h: usize) -> Option<&NoisyPSumTree> {
        self.bank.steps.get(h).map(|c| &c.gram_p)
    }
}

impl<R: RngCore> Regularizer for Privatizer<R> {
    fn ingest(&mut self, episode: usize, increments: &[StepIncrement]) -> Result<()> {
        self.bank
            .ingest(episode, increments, Some(&mut self.rng as &mut dyn RngCore))
    }

    fn release(&self, episode: usize) -> Result<RegularizedStats> {
        let (sp, sr) = self.shifts();
        self.bank.release(episode, sp, sr)
    }

    fn regularity(&self) -> Regularity {
        if self.calibration.is_zero_noise() {
            Regularity::ridge(self.floor)
        } else {
            self.calibration.regularity()
        }
    }

    fn episodes_ingested(&self) -> usize {
        self.bank.count
    }
}
