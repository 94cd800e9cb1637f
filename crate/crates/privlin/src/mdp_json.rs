//! JSON description of an MDP.
//!
//! ```json
//! {"kind": "tabular", "S": 2, "A": 1, "H": 1,
//!  "P": [[[[0.5, 0.5]], [[1.0, 0.0]]]], "R": [[[0.3], [0.7]]]}
//! ```
//!
//! `P` is indexed `[h][s][a][s']` and `R` `[h][s][a]`. A mixture model
//! instead carries `d1`, `d2`, `psi` `[s][a][s'][d1]`, `varphi` `[s][a][d2]`,
//! `theta_p` `[h][d1]` and `theta_r` `[h][d2]`. `initial_state` defaults to 0.

use std::path::Path;

use privlin_core::benchmark::{three_state_benchmark, BENCHMARK_STATES};
use privlin_core::mdp::{make_tabular_mixture, LinearMixtureMdp, MixtureParts};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Name of the shipped benchmark in `"mdp": "builtin:<name>"`.
pub const BUILTIN_THREE_STATE: &str = "builtin:three_state";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MdpSpec {
    Tabular {
        #[serde(rename = "S")]
        n_states: usize,
        #[serde(rename = "A")]
        n_actions: usize,
        #[serde(rename = "H")]
        horizon: usize,
        #[serde(rename = "P")]
        transitions: Vec<Vec<Vec<Vec<f64>>>>,
        #[serde(rename = "R")]
        rewards: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        initial_state: usize,
    },
    Mixture {
        #[serde(rename = "S")]
        n_states: usize,
        #[serde(rename = "A")]
        n_actions: usize,
        #[serde(rename = "H")]
        horizon: usize,
        d1: usize,
        d2: usize,
        psi: Vec<Vec<Vec<Vec<f64>>>>,
        varphi: Vec<Vec<Vec<f64>>>,
        theta_p: Vec<Vec<f64>>,
        theta_r: Vec<Vec<f64>>,
        #[serde(default)]
        initial_state: usize,
    },
}

fn flatten<T: Flat>(name: &str, value: &T, dims: &[usize]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(dims.iter().product());
    value.flatten_into(dims, &mut out).map_err(|depth| {
        HarnessError::config(format!("{name}: dimension {depth} has the wrong length"))
    })?;
    Ok(out)
}

trait Flat {
    fn flatten_into(&self, dims: &[usize], out: &mut Vec<f64>) -> Result<(), usize>;
}

impl Flat for f64 {
    fn flatten_into(&self, dims: &[usize], out: &mut Vec<f64>) -> Result<(), usize> {
        debug_assert!(dims.is_empty());
        out.push(*self);
        Ok(())
    }
}

impl<T: Flat> Flat for Vec<T> {
    fn flatten_into(&self, dims: &[usize], out: &mut Vec<f64>) -> Result<(), usize> {
        if self.len() != dims[0] {
            return Err(0);
        }
        for item in self {
            item.flatten_into(&dims[1..], out).map_err(|d| d + 1)?;
        }
        Ok(())
    }
}

impl MdpSpec {
    pub fn build(&self) -> Result<LinearMixtureMdp> {
        let built = match self {
            MdpSpec::Tabular {
                n_states: s,
                n_actions: a,
                horizon: h,
                transitions,
                rewards,
                initial_state,
            } => {
                let p = flatten("P", transitions, &[*h, *s, *a, *s])?;
                let r = flatten("R", rewards, &[*h, *s, *a])?;
                make_tabular_mixture(*s, *a, *h, &p, &r, *initial_state)
            }
            MdpSpec::Mixture {
                n_states: s,
                n_actions: a,
                horizon: h,
                d1,
                d2,
                psi,
                varphi,
                theta_p,
                theta_r,
                initial_state,
            } => LinearMixtureMdp::new(MixtureParts {
                n_states: *s,
                n_actions: *a,
                horizon: *h,
                d1: *d1,
                d2: *d2,
                psi: flatten("psi", psi, &[*s, *a, *s, *d1])?,
                varphi: flatten("varphi", varphi, &[*s, *a, *d2])?,
                theta_p: flatten("theta_p", theta_p, &[*h, *d1])?,
                theta_r: flatten("theta_r", theta_r, &[*h, *d2])?,
                initial_state: *initial_state,
            }),
        };
        built.map_err(|e| HarnessError::config(format!("MDP rejected: {e}")))
    }

    /// Tabular description of the shipped three-state benchmark.
    pub fn three_state() -> Self {
        let mdp = three_state_benchmark();
        let (s, a, h) = (BENCHMARK_STATES, mdp.n_actions(), mdp.horizon());
        let transitions = (0..h)
            .map(|h| {
                (0..s)
                    .map(|s| {
                        (0..a)
                            .map(|a| mdp.transition_row(h, s, a).to_vec())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let rewards = (0..h)
            .map(|h| {
                (0..s)
                    .map(|s| {
                        (0..a)
                            .map(|a| mdp.mean_reward(h, s, a).expect("in range"))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        MdpSpec::Tabular {
            n_states: s,
            n_actions: a,
            horizon: h,
            transitions,
            rewards,
            initial_state: mdp.initial_state(),
        }
    }
}

/// Reads and validates an MDP file.
pub fn load_mdp(path: &Path) -> Result<LinearMixtureMdp> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        HarnessError::config(format!("cannot read MDP file {}: {e}", path.display()))
    })?;
    let spec: MdpSpec = serde_json::from_str(&text)
        .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
    spec.build()
}
