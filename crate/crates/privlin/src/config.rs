use std::path::{Path, PathBuf};

use privlin_core::agents::default_eta;
use privlin_core::mdp::LinearMixtureMdp;
use privlin_core::regularizer::ZERO_NOISE_FLOOR;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::mdp_json::{load_mdp, MdpSpec, BUILTIN_THREE_STATE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MdpSource {
    /// A file path (relative paths resolve against the config file) or
    /// `"builtin:three_state"`.
    Reference(String),
    Inline(MdpSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Vi,
    Po,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegularizerSpec {
    FixedRidge {
        lambda: f64,
    },
    Privatizer {
        epsilon: f64,
        delta: f64,
    },
    PrivatizerZeroNoise {
        #[serde(default = "default_floor")]
        floor: f64,
    },
}

fn default_floor() -> f64 {
    ZERO_NOISE_FLOOR
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mdp: MdpSource,
    pub agent: AgentKind,
    pub regularizer: RegularizerSpec,
    pub alpha: f64,
    #[serde(rename = "K")]
    pub episodes: usize,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_override: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(HarnessError::config(format!(
            "{name} must be positive, got {x}"
        )))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative MDP path is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg = Self::from_json(&text)
            .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
        if let MdpSource::Reference(r) = &cfg.mdp {
            let p = Path::new(r);
            if r != BUILTIN_THREE_STATE && p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.mdp = MdpSource::Reference(dir.join(p).to_string_lossy().into_owned());
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(HarnessError::config("K must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(HarnessError::config(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::config("seeds must not be empty"));
        }
        if let Some(eta) = self.eta_override {
            positive("eta_override", eta)?;
        }
        match self.regularizer {
            RegularizerSpec::FixedRidge { lambda } => positive("lambda", lambda)?,
            RegularizerSpec::Privatizer { epsilon, delta } => {
                positive("epsilon", epsilon)?;
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(HarnessError::config(format!(
                        "delta must lie in (0, 1), got {delta}"
                    )));
                }
            }
            RegularizerSpec::PrivatizerZeroNoise { floor } => positive("floor", floor)?,
        }
        Ok(())
    }

    pub fn load_mdp(&self) -> Result<LinearMixtureMdp> {
        match &self.mdp {
            MdpSource::Inline(spec) => spec.build(),
            MdpSource::Reference(r) if r == BUILTIN_THREE_STATE => MdpSpec::three_state().build(),
            MdpSource::Reference(r) if r.starts_with("builtin:") => {
                Err(HarnessError::config(format!("unknown builtin MDP {r:?}")))
            }
            MdpSource::Reference(r) => load_mdp(Path::new(r)),
        }
    }

    /// Step size for the policy-optimization agent.
    pub fn eta(&self, mdp: &LinearMixtureMdp) -> f64 {
        self.eta_override
            .unwrap_or_else(|| default_eta(mdp.n_actions(), mdp.horizon(), self.episodes))
    }
}
