//! Seed sweeps: one run per seed, one CSV per run, one metadata file per
//! experiment.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use privlin_core::agents::{run_po_observed, run_vi_observed, AgentConfig};
use privlin_core::calib::{accounting_report, AccountingReport, NoiseCalibration, PrivacyBudget};
use privlin_core::estimation::{ConfidenceParams, Regularity, Widths};
use privlin_core::mdp::{exact_optimal_values, LinearMixtureMdp};
use privlin_core::regularizer::{FixedRidge, Privatizer, Regularizer};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AgentKind, RegularizerSpec, RunConfig};
use crate::error::{HarnessError, Result};

pub const CSV_HEADER: [&str; 3] = ["episode", "inst_regret", "cum_regret"];
pub const METADATA_FILE: &str = "run.json";

/// Generator stream used for the regularizer's node noise; the agent's
/// sampling uses stream 0 of the same seed.
pub const NOISE_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub episode: usize,
    pub inst_regret: f64,
    pub cum_regret: f64,
}

/// Regret of one seeded run. `stamps[k]` is the wall-clock time elapsed when
/// episode `k + 1` finished; it is kept in memory only so the CSV stays
/// reproducible.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretLog {
    pub seed: u64,
    pub rows: Vec<RegretRow>,
    pub stamps: Vec<Duration>,
}

impl RegretLog {
    pub fn from_regrets(seed: u64, regrets: &[f64], stamps: Vec<Duration>) -> Self {
        let mut cum = 0.0;
        let rows = regrets
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                cum += r;
                RegretRow {
                    episode: i + 1,
                    inst_regret: r,
                    cum_regret: cum,
                }
            })
            .collect();
        RegretLog { seed, rows, stamps }
    }

    pub fn total(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cum_regret)
    }

    pub fn wall_clock(&self) -> Duration {
        self.stamps.last().copied().unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub file: String,
    pub cumulative_regret: f64,
    pub wall_clock_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMetadata {
    pub version: &'static str,
    pub config: RunConfig,
    #[serde(rename = "K")]
    pub episodes: usize,
    pub optimal_value: f64,
    pub widths: Widths,
    pub regularity: Regularity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accounting: Option<AccountingReport>,
    pub runs: Vec<SeedRecord>,
}

pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub logs: Vec<RegretLog>,
    pub metadata: RunMetadata,
}

pub fn csv_name(index: usize, seed: u64) -> String {
    format!("run_{index:03}_seed_{seed}.csv")
}

fn build_regularizer(
    spec: RegularizerSpec,
    calibration: Option<NoiseCalibration>,
    mdp: &LinearMixtureMdp,
    episodes: usize,
    seed: u64,
) -> privlin_core::Result<Box<dyn Regularizer + Send>> {
    let (d1, d2, h) = (mdp.d1(), mdp.d2(), mdp.horizon());
    let mut noise_rng = ChaCha20Rng::seed_from_u64(seed);
    noise_rng.set_stream(NOISE_STREAM);
    Ok(match spec {
        RegularizerSpec::FixedRidge { lambda } => {
            Box::new(FixedRidge::new(lambda, d1, d2, h, episodes)?)
        }
        RegularizerSpec::Privatizer { .. } => {
            let cal = calibration.expect("calibrated before the runs");
            Box::new(Privatizer::new(cal, d1, d2, h, episodes, noise_rng)?)
        }
        RegularizerSpec::PrivatizerZeroNoise { floor } => Box::new(
            Privatizer::new(
                NoiseCalibration::zero_noise(episodes),
                d1,
                d2,
                h,
                episodes,
                noise_rng,
            )?
            .with_floor(floor)?,
        ),
    })
}

fn calibrate(
    cfg: &RunConfig,
    mdp: &LinearMixtureMdp,
) -> Result<Option<(NoiseCalibration, PrivacyBudget)>> {
    match cfg.regularizer {
        RegularizerSpec::Privatizer { epsilon, delta } => {
            let bad = |e: privlin_core::Error| HarnessError::config(e.to_string());
            let budget = PrivacyBudget::new(epsilon, delta).map_err(bad)?;
            let cal = NoiseCalibration::for_run(
                budget,
                cfg.alpha,
                cfg.episodes,
                mdp.horizon(),
                mdp.d1(),
                mdp.d2(),
            )
            .map_err(bad)?;
            Ok(Some((cal, budget)))
        }
        _ => Ok(None),
    }
}

/// One seeded run, entirely in memory.
pub fn run_seed(cfg: &RunConfig, mdp: &LinearMixtureMdp, seed: u64) -> Result<RegretLog> {
    let cal = calibrate(cfg, mdp)?.map(|(c, _)| c);
    run_seed_calibrated(cfg, mdp, cal, seed)
}

fn run_seed_calibrated(
    cfg: &RunConfig,
    mdp: &LinearMixtureMdp,
    cal: Option<NoiseCalibration>,
    seed: u64,
) -> Result<RegretLog> {
    let wrap = |source| HarnessError::Run { seed, source };
    let mut reg = build_regularizer(cfg.regularizer, cal, mdp, cfg.episodes, seed).map_err(wrap)?;
    let agent_cfg = AgentConfig::new(cfg.episodes, cfg.alpha);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let start = Instant::now();
    let mut stamps = Vec::with_capacity(cfg.episodes);
    let stamp = |_: &privlin_core::agents::EpisodeView<'_>| {
        stamps.push(start.elapsed());
        Ok(())
    };
    let outcome = match cfg.agent {
        AgentKind::Vi => run_vi_observed(mdp, reg.as_mut(), &agent_cfg, &mut rng, stamp),
        AgentKind::Po => {
            run_po_observed(mdp, reg.as_mut(), &agent_cfg, cfg.eta(mdp), &mut rng, stamp)
        }
    }
    .map_err(wrap)?;
    Ok(RegretLog::from_regrets(seed, &outcome.regrets, stamps))
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    f.sync_all().map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub fn csv_bytes(log: &RegretLog) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &log.rows {
        w.serialize(row).expect("in-memory CSV write");
    }
    w.into_inner().expect("in-memory CSV flush")
}

pub fn read_csv(path: &Path) -> Result<Vec<RegretRow>> {
    let bad = |msg: String| HarnessError::config(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<RegretRow>, _>>()
        .map_err(|e| bad(e.to_string()))?;
    Ok(rows)
}

/// Runs every seed of `cfg` (in parallel) and writes the CSVs and metadata
/// into `out_dir`.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mdp = cfg.load_mdp()?;
    let calibrated = calibrate(cfg, &mdp)?;
    let cal = calibrated.map(|(c, _)| c);
    let regularity = build_regularizer(cfg.regularizer, cal, &mdp, cfg.episodes, 0)
        .map_err(|e| HarnessError::config(e.to_string()))?
        .regularity();
    let widths = ConfidenceParams::new(cfg.alpha, regularity)
        .and_then(|cp| cp.widths(mdp.d1(), mdp.d2(), cfg.episodes, mdp.horizon()))
        .map_err(|e| HarnessError::config(e.to_string()))?;

    let results: Vec<Result<RegretLog>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed_calibrated(cfg, &mdp, cal, seed))
        .collect();
    let logs = results.into_iter().collect::<Result<Vec<_>>>()?;

    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut runs = Vec::with_capacity(logs.len());
    for (i, log) in logs.iter().enumerate() {
        let name = csv_name(i, log.seed);
        write_atomic(&out_dir.join(&name), &csv_bytes(log))?;
        runs.push(SeedRecord {
            seed: log.seed,
            file: name,
            cumulative_regret: log.total(),
            wall_clock_seconds: log.wall_clock().as_secs_f64(),
        });
    }
    let metadata = RunMetadata {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        episodes: cfg.episodes,
        optimal_value: exact_optimal_values(&mdp).v(0, mdp.initial_state()),
        widths,
        regularity,
        eta: (cfg.agent == AgentKind::Po).then(|| cfg.eta(&mdp)),
        accounting: calibrated.map(|(c, b)| accounting_report(&c, b, mdp.horizon())),
        runs,
    };
    let json = serde_json::to_vec_pretty(&metadata).expect("metadata serializes");
    write_atomic(&out_dir.join(METADATA_FILE), &json)?;
    Ok(ExperimentOutput {
        dir: out_dir.to_path_buf(),
        logs,
        metadata,
    })
}
