//! Optimistic value iteration and optimistic policy optimization over a
//! pluggable [`Regularizer`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::estimation::{ConfidenceParams, Widths};
use crate::linalg::{dot, PdFactor};
use crate::mdp::{
    argmax_first, exact_optimal_values, policy_value, sample_trajectory, LinearMixtureMdp, Policy,
    Trajectory,
};
use crate::regularizer::{RegularizedStats, Regularizer, StepIncrement};

/// How `V_h` is read off `Q_h`.
#[derive(Clone, Copy, Debug)]
pub enum ValueRule<'a> {
    /// `V_h(s) = max_a Q_h(s, a)`.
    Greedy,
    /// `V_h(s) = Σ_a π_h(a|s) Q_h(s, a)`.
    Expectation(&'a Policy),
}

/// Optimistic estimates of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueEstimates {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    /// `[h][s][a]`
    q: Vec<f64>,
    /// `[h][s]` for `h` in `0..=H`; the last layer is zero.
    v: Vec<f64>,
    theta_p: Vec<DVector<f64>>,
    theta_r: Vec<DVector<f64>>,
}

impl ValueEstimates {
    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[(h * self.n_states + s) * self.n_actions + a]
    }

    pub fn q_row(&self, h: usize, s: usize) -> &[f64] {
        let base = (h * self.n_states + s) * self.n_actions;
        &self.q[base..base + self.n_actions]
    }

    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.n_states + s]
    }

    /// Layer `h` in `0..=H`.
    pub fn v_layer(&self, h: usize) -> &[f64] {
        &self.v[h * self.n_states..(h + 1) * self.n_states]
    }

    pub fn theta_p(&self, h: usize) -> &DVector<f64> {
        &self.theta_p[h]
    }

    pub fn theta_r(&self, h: usize) -> &DVector<f64> {
        &self.theta_r[h]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Deterministic policy picking the lowest-index maximizer of `Q_h(s, ·)`.
    pub fn greedy_policy(&self) -> Policy {
        let actions: Vec<usize> = (0..self.horizon)
            .flat_map(|h| (0..self.n_states).map(move |s| (h, s)))
            .map(|(h, s)| argmax_first(self.q_row(h, s)))
            .collect();
        Policy::deterministic(self.horizon, self.n_states, self.n_actions, &actions)
            .expect("argmax is in range")
    }
}

/// Backward recursion from `h = H-1` down to `0` (steps are 0-based):
///
/// `Q_h = max{0, min{H-h, varphiᵀθ̂_r + phiᵀθ̂_p + Γ_p + Γ_r}}`
///
/// with `phi` computed from `V_{h+1}` and `θ̂ = Λ⁻¹u` from `stats`.
pub fn backward_pass(
    mdp: &LinearMixtureMdp,
    stats: &RegularizedStats,
    widths: Widths,
    rule: ValueRule<'_>,
) -> Result<ValueEstimates> {
    let (ns, na, hz) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    if stats.steps.len() != hz {
        return Err(Error::domain(format!(
            "statistics for {} steps, horizon is {hz}",
            stats.steps.len()
        )));
    }
    if let ValueRule::Expectation(pi) = rule {
        if pi.horizon() != hz || pi.n_states() != ns || pi.n_actions() != na {
            return Err(Error::domain("policy shape does not match the MDP"));
        }
    }
    if !(widths.beta_p >= 0.0 && widths.beta_r >= 0.0) {
        return Err(Error::domain("widths must be non-negative"));
    }
    let mut q = vec![0.0; hz * ns * na];
    let mut v = vec![0.0; (hz + 1) * ns];
    let mut theta_p = vec![DVector::zeros(0); hz];
    let mut theta_r = vec![DVector::zeros(0); hz];
    for h in (0..hz).rev() {
        let st = &stats.steps[h];
        let fp = PdFactor::new(&st.lambda_p)?;
        let fr = PdFactor::new(&st.lambda_r)?;
        let tp = fp.solve(&st.u_p)?;
        let tr = fr.solve(&st.u_r)?;
        let ceiling = (hz - h) as f64;
        let (cur, next) = v.split_at_mut((h + 1) * ns);
        let phi = mdp.compute_phi(&next[..ns])?;
        for s in 0..ns {
            let base = (h * ns + s) * na;
            for a in 0..na {
                let x = phi.get(s, a);
                let y = mdp.varphi(s, a);
                let raw = dot(y, tr.as_slice())
                    + dot(x, tp.as_slice())
                    + widths.beta_p * libm::sqrt(fp.inv_quadratic(x)?)
                    + widths.beta_r * libm::sqrt(fr.inv_quadratic(y)?);
                if !raw.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite Q at h={h} s={s} a={a}"
                    )));
                }
                q[base + a] = raw.min(ceiling).max(0.0);
            }
            let row = &q[base..base + na];
            let value = match rule {
                ValueRule::Greedy => row[argmax_first(row)],
                ValueRule::Expectation(pi) => dot(pi.row(h, s), row),
            };
            cur[h * ns + s] = value.min(ceiling).max(0.0);
        }
        theta_p[h] = tp;
        theta_r[h] = tr;
    }
    Ok(ValueEstimates {
        n_states: ns,
        n_actions: na,
        horizon: hz,
        q,
        v,
        theta_p,
        theta_r,
    })
}

/// `π_{k+1}(·|s) ∝ π_k(·|s) exp(η Q(s, ·))` for every `(h, s)`, in log space
/// with the row maximum subtracted before exponentiation.
pub fn exponential_weights_update(policy: &mut Policy, q: &ValueEstimates, eta: f64) -> Result<()> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::domain("step size must be positive"));
    }
    let na = policy.n_actions();
    let mut logits = vec![0.0; na];
    for h in 0..policy.horizon() {
        for s in 0..policy.n_states() {
            let qrow = q.q_row(h, s);
            let row = policy.row_mut(h, s);
            for a in 0..na {
                logits[a] = libm::log(row[a]) + eta * qrow[a];
            }
            let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !top.is_finite() {
                return Err(Error::Numerical(format!(
                    "policy row ({h}, {s}) has no finite weight"
                )));
            }
            let mut total = 0.0;
            for a in 0..na {
                row[a] = libm::exp(logits[a] - top);
                total += row[a];
            }
            for p in row.iter_mut() {
                *p /= total;
            }
        }
    }
    Ok(())
}

/// `sqrt(2 ln A / (H T))` with `T = K H`.
pub fn default_eta(n_actions: usize, horizon: usize, episodes: usize) -> f64 {
    let h = horizon as f64;
    let t = episodes as f64 * h;
    libm::sqrt(2.0 * libm::log(n_actions as f64) / (h * t))
}

/// Settings shared by both agents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentConfig {
    pub episodes: usize,
    pub alpha: f64,
    /// Replaces the widths derived from `alpha` and the regularizer.
    pub widths: Option<Widths>,
}

impl AgentConfig {
    pub fn new(episodes: usize, alpha: f64) -> Self {
        AgentConfig {
            episodes,
            alpha,
            widths: None,
        }
    }

    /// Widths for this run: the override if any, else the confidence
    /// formulas at `alpha` with the regularizer's constants.
    pub fn resolve_widths<G: Regularizer + ?Sized>(
        &self,
        mdp: &LinearMixtureMdp,
        reg: &G,
    ) -> Result<Widths> {
        if self.episodes == 0 {
            return Err(Error::domain("K must be at least 1"));
        }
        match self.widths {
            Some(w) => Ok(w),
            None => ConfidenceParams::new(self.alpha, reg.regularity())?.widths(
                mdp.d1(),
                mdp.d2(),
                self.episodes,
                mdp.horizon(),
            ),
        }
    }
}

/// What an observer sees after each episode.
#[derive(Debug)]
pub struct EpisodeView<'a> {
    /// 1-based episode index.
    pub episode: usize,
    /// Statistics the estimates were built from (`release(episode - 1)`).
    pub stats: &'a RegularizedStats,
    pub estimates: &'a ValueEstimates,
    /// Policy executed in this episode.
    pub policy: &'a Policy,
    pub trajectory: &'a Trajectory,
    pub regret: f64,
    pub widths: Widths,
}

/// Per-episode regret `V*_1(s_1) - V^{π_k}_1(s_1)` and the sampled episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub regrets: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    pub widths: Widths,
}

impl RunOutcome {
    pub fn cumulative(&self) -> Vec<f64> {
        self.regrets
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.regrets.iter().sum()
    }
}

#[derive(Clone, Copy)]
enum Mode {
    Vi,
    Po { eta: f64 },
}

fn increments(
    mdp: &LinearMixtureMdp,
    est: &ValueEstimates,
    traj: &Trajectory,
) -> Result<Vec<StepIncrement>> {
    traj.steps
        .iter()
        .enumerate()
        .map(|(h, st)| {
            let next = est.v_layer(h + 1);
            Ok(StepIncrement {
                phi: mdp.compute_phi_at(st.state, st.action, next)?,
                target: next[st.next_state],
                varphi: mdp.varphi(st.state, st.action).to_vec(),
                reward: st.reward,
            })
        })
        .collect()
}

fn run<G, R, F>(
    mdp: &LinearMixtureMdp,
    reg: &mut G,
    cfg: &AgentConfig,
    mode: Mode,
    rng: &mut R,
    mut observe: F,
) -> Result<RunOutcome>
where
    G: Regularizer + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&EpisodeView<'_>) -> Result<()>,
{
    let widths = cfg.resolve_widths(mdp, reg)?;
    if reg.episodes_ingested() != 0 {
        return Err(Error::protocol("regularizer already holds data"));
    }
    let (ns, na, hz) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let s1 = mdp.initial_state();
    let best = exact_optimal_values(mdp).v(0, s1);
    let mut po_policy = Policy::uniform(hz, ns, na);
    let mut regrets = Vec::with_capacity(cfg.episodes);
    let mut trajectories = Vec::with_capacity(cfg.episodes);
    for k in 1..=cfg.episodes {
        let mut step = |rng: &mut R, po_policy: &mut Policy| -> Result<(f64, Trajectory)> {
            let stats = reg.release(k - 1)?;
            let (est, policy) = match mode {
                Mode::Vi => {
                    let est = backward_pass(mdp, &stats, widths, ValueRule::Greedy)?;
                    let pi = est.greedy_policy();
                    (est, pi)
                }
                Mode::Po { .. } => {
                    let est =
                        backward_pass(mdp, &stats, widths, ValueRule::Expectation(po_policy))?;
                    (est, po_policy.clone())
                }
            };
            let traj = sample_trajectory(mdp, &policy, rng)?;
            let achieved = policy_value(mdp, &policy)?[s1];
            let regret = best - achieved;
            observe(&EpisodeView {
                episode: k,
                stats: &stats,
                estimates: &est,
                policy: &policy,
                trajectory: &traj,
                regret,
                widths,
            })?;
            let incs = increments(mdp, &est, &traj)?;
            reg.ingest(k, &incs)?;
            if let Mode::Po { eta } = mode {
                exponential_weights_update(po_policy, &est, eta)?;
            }
            Ok((regret, traj))
        };
        let (regret, traj) = step(rng, &mut po_policy).map_err(|e| e.at_episode(k))?;
        regrets.push(regret);
        trajectories.push(traj);
    }
    Ok(RunOutcome {
        regrets,
        trajectories,
        widths,
    })
}

/// Optimistic value iteration with greedy policies.
pub fn run_vi<G, R>(
    mdp: &LinearMixtureMdp,
    reg: &mut G,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<RunOutcome>
where
    G: Regularizer + ?Sized,
    R: Rng + ?Sized,
{
    run(mdp, reg, cfg, Mode::Vi, rng, |_| Ok(()))
}

/// [`run_vi`] with a callback after every episode; an error from the
/// callback aborts the run.
pub fn run_vi_observed<G, R, F>(
    mdp: &LinearMixtureMdp,
    reg: &mut G,
    cfg: &AgentConfig,
    rng: &mut R,
    observe: F,
) -> Result<RunOutcome>
where
    G: Regularizer + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&EpisodeView<'_>) -> Result<()>,
{
    run(mdp, reg, cfg, Mode::Vi, rng, observe)
}

/// Optimistic policy optimization from the uniform policy with step size
/// `eta` (see [`default_eta`]).
pub fn run_po<G, R>(
    mdp: &LinearMixtureMdp,
    reg: &mut G,
    cfg: &AgentConfig,
    eta: f64,
    rng: &mut R,
) -> Result<RunOutcome>
where
    G: Regularizer + ?Sized,
    R: Rng + ?Sized,
{
    run_po_observed(mdp, reg, cfg, eta, rng, |_| Ok(()))
}

pub fn run_po_observed<G, R, F>(
    mdp: &LinearMixtureMdp,
    reg: &mut G,
    cfg: &AgentConfig,
    eta: f64,
    rng: &mut R,
    observe: F,
) -> Result<RunOutcome>
where
    G: Regularizer + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&EpisodeView<'_>) -> Result<()>,
{
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::domain("step size must be positive"));
    }
    run(mdp, reg, cfg, Mode::Po { eta }, rng, observe)
}
