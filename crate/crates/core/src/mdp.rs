//! Ground-truth linear mixture MDPs, trajectory sampling and exact
//! dynamic-programming oracles.
//!
//! Steps are indexed from zero throughout: `h` in `0..horizon`. The value
//! layer `horizon` is the terminal layer and is identically zero.
//!
//! A linear mixture MDP has transition kernel
//! `P_h(s' | s, a) = <psi(s, a, s'), theta_p[h]>` and mean reward
//! `r_h(s, a) = <varphi(s, a), theta_r[h]>` for known feature maps `psi`,
//! `varphi` and unknown parameters `theta_p`, `theta_r`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{check_index, Error, Result};
use crate::linalg::{dot, norm2};

/// Tolerance for the kernel normalization check at construction.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Tolerance for policy rows summing to one.
pub const POLICY_TOL: f64 = 1e-12;

/// Largest state count for which the feature-norm bound is certified by
/// exhaustive vertex enumeration. Larger models use the triangle inequality.
const VERTEX_ENUMERATION_MAX_STATES: usize = 12;

/// Raw parts of a linear mixture MDP, all flattened row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureParts {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub d1: usize,
    pub d2: usize,
    /// `[s][a][s'][d1]`
    pub psi: Vec<f64>,
    /// `[s][a][d2]`
    pub varphi: Vec<f64>,
    /// `[h][d1]`
    pub theta_p: Vec<f64>,
    /// `[h][d2]`
    pub theta_r: Vec<f64>,
    pub initial_state: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearMixtureMdp {
    parts: MixtureParts,
    /// `[h][s][a][s']`, cached `<psi, theta_p>`.
    transitions: Vec<f64>,
    /// `[h][s][a]`, cached `<varphi, theta_r>`.
    rewards: Vec<f64>,
}

impl LinearMixtureMdp {
    /// Validates and builds a mixture MDP.
    ///
    /// Checked: every transition probability lies in `[0, 1]` and each
    /// `(h, s, a)` row sums to one within [`NORMALIZATION_TOL`]; mean rewards
    /// lie in `[0, 1]`; `‖theta_p[h]‖ ≤ √d1`, `‖theta_r[h]‖ ≤ √d2`,
    /// `‖varphi(s, a)‖ ≤ 1`; and `‖Σ_s' psi(s, a, s') V(s')‖ ≤ √d1·H` for every
    /// `V ∈ [0, H]^S`.
    pub fn new(parts: MixtureParts) -> Result<Self> {
        let MixtureParts {
            n_states: ns,
            n_actions: na,
            horizon: hz,
            d1,
            d2,
            ..
        } = parts;
        if ns == 0 || na == 0 || hz == 0 || d1 == 0 || d2 == 0 {
            return Err(Error::domain("S, A, H, d1 and d2 must all be positive"));
        }
        let expect = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::domain(format!(
                    "{name} has {got} entries, expected {want}"
                )))
            }
        };
        expect("psi", parts.psi.len(), ns * na * ns * d1)?;
        expect("varphi", parts.varphi.len(), ns * na * d2)?;
        expect("theta_p", parts.theta_p.len(), hz * d1)?;
        expect("theta_r", parts.theta_r.len(), hz * d2)?;
        check_index("initial state", parts.initial_state, ns)?;
        let all_finite = parts
            .psi
            .iter()
            .chain(&parts.varphi)
            .chain(&parts.theta_p)
            .chain(&parts.theta_r)
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::domain("non-finite feature or parameter entry"));
        }

        let slack = NORMALIZATION_TOL;
        for h in 0..hz {
            let tp = &parts.theta_p[h * d1..(h + 1) * d1];
            if norm2(tp) > libm::sqrt(d1 as f64) + slack {
                return Err(Error::domain(format!("‖theta_p[{h}]‖ exceeds √d1")));
            }
            let tr = &parts.theta_r[h * d2..(h + 1) * d2];
            if norm2(tr) > libm::sqrt(d2 as f64) + slack {
                return Err(Error::domain(format!("‖theta_r[{h}]‖ exceeds √d2")));
            }
        }

        let mut transitions = Vec::with_capacity(hz * ns * na * ns);
        let mut rewards = Vec::with_capacity(hz * ns * na);
        for h in 0..hz {
            let tp = &parts.theta_p[h * d1..(h + 1) * d1];
            let tr = &parts.theta_r[h * d2..(h + 1) * d2];
            for s in 0..ns {
                for a in 0..na {
                    let mut row_sum = 0.0;
                    for s2 in 0..ns {
                        let base = ((s * na + a) * ns + s2) * d1;
                        let p = dot(&parts.psi[base..base + d1], tp);
                        if !(-slack..=1.0 + slack).contains(&p) {
                            return Err(Error::domain(format!(
                                "P_{h}({s2} | {s}, {a}) = {p} outside [0, 1]"
                            )));
                        }
                        row_sum += p;
                        transitions.push(p);
                    }
                    if (row_sum - 1.0).abs() > slack {
                        return Err(Error::domain(format!(
                            "P_{h}(· | {s}, {a}) sums to {row_sum}"
                        )));
                    }
                    let base = (s * na + a) * d2;
                    let feat = &parts.varphi[base..base + d2];
                    let r = dot(feat, tr);
                    if !(-slack..=1.0 + slack).contains(&r) {
                        return Err(Error::domain(format!(
                            "mean reward r_{h}({s}, {a}) = {r} outside [0, 1]"
                        )));
                    }
                    rewards.push(r);
                }
            }
        }
        for s in 0..ns {
            for a in 0..na {
                let base = (s * na + a) * d2;
                if norm2(&parts.varphi[base..base + d2]) > 1.0 + slack {
                    return Err(Error::domain(format!("‖varphi({s}, {a})‖ exceeds 1")));
                }
            }
        }

        let mdp = LinearMixtureMdp {
            parts,
            transitions,
            rewards,
        };
        mdp.check_feature_bound()?;
        Ok(mdp)
    }

    /// `‖Σ_s' psi(s,a,s') V(s')‖ ≤ √d1·H` for all `V ∈ [0,H]^S`. The norm is
    /// convex in `V`, so the maximum sits at a vertex of the box.
    fn check_feature_bound(&self) -> Result<()> {
        let (ns, na, d1) = (self.n_states(), self.n_actions(), self.d1());
        let limit = libm::sqrt(d1 as f64) * (1.0 + NORMALIZATION_TOL);
        for s in 0..ns {
            for a in 0..na {
                let col = |s2: usize| {
                    let base = ((s * na + a) * ns + s2) * d1;
                    &self.parts.psi[base..base + d1]
                };
                let worst = if ns <= VERTEX_ENUMERATION_MAX_STATES {
                    let mut worst = 0.0f64;
                    let mut acc = vec![0.0; d1];
                    for mask in 1u32..(1u32 << ns) {
                        acc.iter_mut().for_each(|x| *x = 0.0);
                        for s2 in (0..ns).filter(|s2| mask & (1 << s2) != 0) {
                            for (x, y) in acc.iter_mut().zip(col(s2)) {
                                *x += y;
                            }
                        }
                        worst = worst.max(norm2(&acc));
                    }
                    worst
                } else {
                    (0..ns).map(|s2| norm2(col(s2))).sum()
                };
                if worst > limit {
                    return Err(Error::domain(format!(
                        "feature bound ‖Σ psi({s},{a},s')V(s')‖ ≤ √d1·H cannot be certified"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.parts.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.parts.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.parts.horizon
    }

    pub fn d1(&self) -> usize {
        self.parts.d1
    }

    pub fn d2(&self) -> usize {
        self.parts.d2
    }

    pub fn initial_state(&self) -> usize {
        self.parts.initial_state
    }

    pub fn parts(&self) -> &MixtureParts {
        &self.parts
    }

    pub fn theta_p(&self, h: usize) -> &[f64] {
        let d1 = self.d1();
        &self.parts.theta_p[h * d1..(h + 1) * d1]
    }

    pub fn theta_r(&self, h: usize) -> &[f64] {
        let d2 = self.d2();
        &self.parts.theta_r[h * d2..(h + 1) * d2]
    }

    pub fn psi(&self, s: usize, a: usize, s2: usize) -> &[f64] {
        let (ns, na, d1) = (self.n_states(), self.n_actions(), self.d1());
        let base = ((s * na + a) * ns + s2) * d1;
        &self.parts.psi[base..base + d1]
    }

    /// Reward feature `varphi(s, a)`.
    pub fn varphi(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions() + a) * self.d2();
        &self.parts.varphi[base..base + self.d2()]
    }

    fn check_sa(&self, s: usize, a: usize) -> Result<()> {
        check_index("state", s, self.n_states())?;
        check_index("action", a, self.n_actions())
    }

    /// `P_h(s2 | s, a) = <psi(s, a, s2), theta_p[h]>`.
    pub fn transition_prob(&self, h: usize, s: usize, a: usize, s2: usize) -> Result<f64> {
        check_index("step", h, self.horizon())?;
        self.check_sa(s, a)?;
        check_index("next state", s2, self.n_states())?;
        Ok(self.transitions[self.row_index(h, s, a) * self.n_states() + s2])
    }

    /// Full next-state distribution `P_h(· | s, a)`.
    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let ns = self.n_states();
        let base = self.row_index(h, s, a) * ns;
        &self.transitions[base..base + ns]
    }

    pub fn mean_reward(&self, h: usize, s: usize, a: usize) -> Result<f64> {
        check_index("step", h, self.horizon())?;
        self.check_sa(s, a)?;
        Ok(self.rewards[self.row_index(h, s, a)])
    }

    fn row_index(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.n_states() + s) * self.n_actions() + a
    }

    fn check_value(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_states() {
            return Err(Error::domain(format!(
                "value vector has {} entries, expected {}",
                v.len(),
                self.n_states()
            )));
        }
        let cap = self.horizon() as f64;
        match v.iter().position(|x| !(0.0..=cap).contains(x)) {
            Some(i) => Err(Error::domain(format!(
                "V({i}) = {} outside [0, {cap}]",
                v[i]
            ))),
            None => Ok(()),
        }
    }

    /// `phi(s, a) = Σ_s' psi(s, a, s') V(s')` for every `(s, a)`, by exact
    /// summation over next states.
    pub fn compute_phi(&self, v: &[f64]) -> Result<PhiTable> {
        self.check_value(v)?;
        let (ns, na, d1) = (self.n_states(), self.n_actions(), self.d1());
        let mut data = vec![0.0; ns * na * d1];
        for s in 0..ns {
            for a in 0..na {
                let out = &mut data[(s * na + a) * d1..(s * na + a + 1) * d1];
                self.accumulate_phi(s, a, v, out);
            }
        }
        Ok(PhiTable {
            n_actions: na,
            dim: d1,
            data,
        })
    }

    /// `phi(s, a)` for a single pair.
    pub fn compute_phi_at(&self, s: usize, a: usize, v: &[f64]) -> Result<Vec<f64>> {
        self.check_sa(s, a)?;
        self.check_value(v)?;
        let mut out = vec![0.0; self.d1()];
        self.accumulate_phi(s, a, v, &mut out);
        Ok(out)
    }

    fn accumulate_phi(&self, s: usize, a: usize, v: &[f64], out: &mut [f64]) {
        for (s2, &w) in v.iter().enumerate() {
            for (o, p) in out.iter_mut().zip(self.psi(s, a, s2)) {
                *o += p * w;
            }
        }
    }
}

/// Transition features `phi(s, a)` for a fixed value function.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiTable {
    n_actions: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PhiTable {
    pub fn get(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.dim;
        &self.data[base..base + self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Builds the tabular special case: `psi` is the one-hot basis over
/// `(s, a, s')` (so `d1 = S²A`) and `varphi` the one-hot basis over `(s, a)`
/// (so `d2 = SA`); the parameters are the flattened tables.
///
/// `p` is `[h][s][a][s']`, `r` is `[h][s][a]`.
pub fn make_tabular_mixture(
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    p: &[f64],
    r: &[f64],
    initial_state: usize,
) -> Result<LinearMixtureMdp> {
    let (ns, na, hz) = (n_states, n_actions, horizon);
    if p.len() != hz * ns * na * ns || r.len() != hz * ns * na {
        return Err(Error::domain("tabular tables have the wrong shape"));
    }
    for (i, row) in p.chunks(ns).enumerate() {
        if row.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::domain(format!(
                "transition row {i} has entries outside [0, 1]"
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::domain(format!("transition row {i} sums to {sum}")));
        }
    }
    if r.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::domain("mean rewards must lie in [0, 1]"));
    }
    let d1 = ns * ns * na;
    let d2 = ns * na;
    let mut psi = vec![0.0; ns * na * ns * d1];
    for idx in 0..d1 {
        psi[idx * d1 + idx] = 1.0;
    }
    let mut varphi = vec![0.0; ns * na * d2];
    for idx in 0..d2 {
        varphi[idx * d2 + idx] = 1.0;
    }
    LinearMixtureMdp::new(MixtureParts {
        n_states: ns,
        n_actions: na,
        horizon: hz,
        d1,
        d2,
        psi,
        varphi,
        theta_p: p.to_vec(),
        theta_r: r.to_vec(),
        initial_state,
    })
}

/// A (possibly stochastic) Markov policy `pi_h(a | s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    /// `[h][s][a]`
    probs: Vec<f64>,
}

impl Policy {
    pub fn uniform(horizon: usize, n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Policy {
            n_states,
            n_actions,
            horizon,
            probs: vec![p; horizon * n_states * n_actions],
        }
    }

    /// One-hot policy from `actions[h * S + s]`.
    pub fn deterministic(
        horizon: usize,
        n_states: usize,
        n_actions: usize,
        actions: &[usize],
    ) -> Result<Self> {
        if actions.len() != horizon * n_states {
            return Err(Error::domain("action table has the wrong shape"));
        }
        let mut probs = vec![0.0; horizon * n_states * n_actions];
        for (row, &a) in actions.iter().enumerate() {
            check_index("action", a, n_actions)?;
            probs[row * n_actions + a] = 1.0;
        }
        Ok(Policy {
            n_states,
            n_actions,
            horizon,
            probs,
        })
    }

    /// Validated construction from `[h][s][a]` probabilities.
    pub fn from_probs(
        horizon: usize,
        n_states: usize,
        n_actions: usize,
        probs: Vec<f64>,
    ) -> Result<Self> {
        if probs.len() != horizon * n_states * n_actions || n_actions == 0 {
            return Err(Error::domain("policy table has the wrong shape"));
        }
        let policy = Policy {
            n_states,
            n_actions,
            horizon,
            probs,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.probs.chunks(self.n_actions).enumerate() {
            if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(Error::domain(format!("policy row {i} has invalid entries")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > POLICY_TOL {
                return Err(Error::domain(format!("policy row {i} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        let base = (h * self.n_states + s) * self.n_actions;
        &self.probs[base..base + self.n_actions]
    }

    pub(crate) fn row_mut(&mut self, h: usize, s: usize) -> &mut [f64] {
        let base = (h * self.n_states + s) * self.n_actions;
        &mut self.probs[base..base + self.n_actions]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn check_shape(&self, mdp: &LinearMixtureMdp) -> Result<()> {
        if self.horizon != mdp.horizon()
            || self.n_states != mdp.n_states()
            || self.n_actions != mdp.n_actions()
        {
            return Err(Error::domain("policy shape does not match the MDP"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// One episode: exactly `H` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

/// Inverse-CDF draw from a probability row. Rounding mass past the last
/// cumulative bound falls on the last index with positive weight.
fn draw_index(weights: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            cum += w;
            last_positive = i;
            if u < cum {
                return i;
            }
        }
    }
    last_positive
}

/// Rolls out one episode of `policy` from the fixed initial state.
///
/// Per step the generator is consumed in a fixed order: action, reward,
/// next state. Realized rewards are Bernoulli with the model's mean.
pub fn sample_trajectory<R: Rng + ?Sized>(
    mdp: &LinearMixtureMdp,
    policy: &Policy,
    rng: &mut R,
) -> Result<Trajectory> {
    policy.check_shape(mdp)?;
    let mut state = mdp.initial_state();
    let mut steps = Vec::with_capacity(mdp.horizon());
    for h in 0..mdp.horizon() {
        let action = draw_index(policy.row(h, state), rng.random::<f64>());
        let mean = mdp.rewards[mdp.row_index(h, state, action)];
        let reward = if rng.random::<f64>() < mean { 1.0 } else { 0.0 };
        let next_state = draw_index(mdp.transition_row(h, state, action), rng.random::<f64>());
        steps.push(Step {
            state,
            action,
            reward,
            next_state,
        });
        state = next_state;
    }
    Ok(Trajectory { steps })
}

/// Exact optimal action values from backward induction.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimalValues {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    /// `[h][s][a]`
    q: Vec<f64>,
    /// `[h][s]` for `h` in `0..=H`; the last layer is zero.
    v: Vec<f64>,
}

impl OptimalValues {
    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[(h * self.n_states + s) * self.n_actions + a]
    }

    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.n_states + s]
    }

    /// Layer `h` of the optimal value function, `h` in `0..=H`.
    pub fn v_layer(&self, h: usize) -> &[f64] {
        &self.v[h * self.n_states..(h + 1) * self.n_states]
    }

    /// Greedy policy with ties broken toward the lowest action index.
    pub fn greedy_policy(&self) -> Policy {
        let mut actions = Vec::with_capacity(self.horizon * self.n_states);
        for h in 0..self.horizon {
            for s in 0..self.n_states {
                let base = (h * self.n_states + s) * self.n_actions;
                actions.push(argmax_first(&self.q[base..base + self.n_actions]));
            }
        }
        Policy::deterministic(self.horizon, self.n_states, self.n_actions, &actions)
            .expect("argmax is in range")
    }
}

/// Index of the maximum, lowest index on ties.
pub(crate) fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// `Q*_h(s,a) = r_h(s,a) + Σ_s' P_h(s'|s,a) V*_{h+1}(s')`, `V*_h = max_a Q*_h`.
pub fn exact_optimal_values(mdp: &LinearMixtureMdp) -> OptimalValues {
    let (ns, na, hz) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let mut q = vec![0.0; hz * ns * na];
    let mut v = vec![0.0; (hz + 1) * ns];
    for h in (0..hz).rev() {
        let (cur, next) = v.split_at_mut((h + 1) * ns);
        let next = &next[..ns];
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                let idx = mdp.row_index(h, s, a);
                let val = mdp.rewards[idx] + dot(mdp.transition_row(h, s, a), next);
                q[idx] = val;
                if val > best {
                    best = val;
                }
            }
            cur[h * ns + s] = best;
        }
    }
    OptimalValues {
        n_states: ns,
        n_actions: na,
        horizon: hz,
        q,
        v,
    }
}

/// Exact `V^pi_h(s)` for every `h` in `0..=H` (flattened `[h][s]`, last layer
/// zero).
pub fn policy_value(mdp: &LinearMixtureMdp, policy: &Policy) -> Result<Vec<f64>> {
    policy.check_shape(mdp)?;
    policy.validate()?;
    let (ns, hz) = (mdp.n_states(), mdp.horizon());
    let mut v = vec![0.0; (hz + 1) * ns];
    for h in (0..hz).rev() {
        let (cur, next) = v.split_at_mut((h + 1) * ns);
        let next = &next[..ns];
        for s in 0..ns {
            let pi = policy.row(h, s);
            let mut total = 0.0;
            for (a, &w) in pi.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let q =
                    mdp.rewards[mdp.row_index(h, s, a)] + dot(mdp.transition_row(h, s, a), next);
                total += w * q;
            }
            cur[h * ns + s] = total;
        }
    }
    Ok(v)
}
