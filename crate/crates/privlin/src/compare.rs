//! Summaries across experiment directories written by `run`.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::config::{AgentKind, RegularizerSpec, RunConfig};
use crate::error::{HarnessError, Result};
use crate::experiment::{read_csv, RegretRow, SeedRecord, METADATA_FILE};

#[derive(Deserialize)]
struct MetadataHeader {
    config: RunConfig,
    #[serde(rename = "K")]
    episodes: usize,
    runs: Vec<SeedRecord>,
}

/// Mean and sample standard deviation of cumulative regret at one episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Checkpoint {
    pub episode: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub label: String,
    pub agent: AgentKind,
    pub regularizer: RegularizerSpec,
    pub seeds: usize,
    pub episodes: usize,
    pub checkpoints: Vec<Checkpoint>,
    /// Mean per-episode regret over the first tenth of the episodes, averaged
    /// over seeds.
    pub head_mean: f64,
    /// Same over the last tenth.
    pub tail_mean: f64,
}

impl Summary {
    pub fn head_tail_ratio(&self) -> f64 {
        self.head_mean / self.tail_mean
    }

    pub fn final_mean(&self) -> f64 {
        self.checkpoints.last().map_or(0.0, |c| c.mean)
    }
}

/// Episodes `max(1, K/10)`, `max(1, K/2)` and `K`.
pub fn checkpoint_episodes(episodes: usize) -> [usize; 3] {
    [(episodes / 10).max(1), (episodes / 2).max(1), episodes]
}

/// Length of the head and tail windows.
pub fn window(episodes: usize) -> usize {
    (episodes / 10).max(1)
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn regularizer_label(spec: &RegularizerSpec) -> String {
    match spec {
        RegularizerSpec::FixedRidge { lambda } => format!("fixed_ridge(lambda={lambda})"),
        RegularizerSpec::Privatizer { epsilon, delta } => {
            format!("privatizer(epsilon={epsilon};delta={delta})")
        }
        RegularizerSpec::PrivatizerZeroNoise { floor } => {
            format!("privatizer_zero_noise(floor={floor})")
        }
    }
}

/// Summary of the per-seed logs of one configuration.
pub fn summarize_logs(
    label: String,
    agent: AgentKind,
    regularizer: RegularizerSpec,
    episodes: usize,
    logs: &[Vec<RegretRow>],
) -> Summary {
    let checkpoints = checkpoint_episodes(episodes)
        .iter()
        .map(|&e| {
            let vals: Vec<f64> = logs.iter().map(|rows| rows[e - 1].cum_regret).collect();
            let (mean, sd) = mean_sd(&vals);
            Checkpoint {
                episode: e,
                mean,
                sd,
            }
        })
        .collect();
    let w = window(episodes);
    let avg = |range: std::ops::Range<usize>| {
        logs.iter()
            .map(|rows| {
                rows[range.clone()]
                    .iter()
                    .map(|r| r.inst_regret)
                    .sum::<f64>()
                    / w as f64
            })
            .sum::<f64>()
            / logs.len() as f64
    };
    Summary {
        label,
        agent,
        regularizer,
        seeds: logs.len(),
        episodes,
        checkpoints,
        head_mean: avg(0..w),
        tail_mean: avg(episodes - w..episodes),
    }
}

/// Reads one directory written by `run`.
pub fn summarize_dir(dir: &Path) -> Result<Summary> {
    let meta_path = dir.join(METADATA_FILE);
    let text = fs::read_to_string(&meta_path)
        .map_err(|e| HarnessError::config(format!("cannot read {}: {e}", meta_path.display())))?;
    let meta: MetadataHeader = serde_json::from_str(&text)
        .map_err(|e| HarnessError::config(format!("{}: {e}", meta_path.display())))?;
    if meta.runs.is_empty() || meta.episodes == 0 {
        return Err(HarnessError::config(format!(
            "{}: no runs recorded",
            meta_path.display()
        )));
    }
    let mut logs = Vec::with_capacity(meta.runs.len());
    for run in &meta.runs {
        let path = dir.join(&run.file);
        let rows = read_csv(&path)?;
        let sequential = rows.iter().enumerate().all(|(i, r)| r.episode == i + 1);
        if rows.len() != meta.episodes || !sequential {
            return Err(HarnessError::config(format!(
                "{}: expected episodes 1..={}",
                path.display(),
                meta.episodes
            )));
        }
        logs.push(rows);
    }
    let label = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(summarize_logs(
        label,
        meta.config.agent,
        meta.config.regularizer,
        meta.episodes,
        &logs,
    ))
}

/// Summaries of several directories; all must share `K`.
pub fn compare(dirs: &[impl AsRef<Path>]) -> Result<Vec<Summary>> {
    if dirs.is_empty() {
        return Err(HarnessError::config("no directories to compare"));
    }
    let summaries = dirs
        .iter()
        .map(|d| summarize_dir(d.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let k = summaries[0].episodes;
    if let Some(other) = summaries.iter().find(|s| s.episodes != k) {
        return Err(HarnessError::config(format!(
            "mismatched K: {} has {k}, {} has {}",
            summaries[0].label, other.label, other.episodes
        )));
    }
    Ok(summaries)
}

pub fn summary_csv(summaries: &[Summary]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "config".to_string(),
        "agent".into(),
        "regularizer".into(),
        "seeds".into(),
        "K".into(),
    ];
    if let Some(first) = summaries.first() {
        for c in &first.checkpoints {
            header.push(format!("cum_regret_{}_mean", c.episode));
            header.push(format!("cum_regret_{}_sd", c.episode));
        }
    }
    header.extend([
        "head_mean".into(),
        "tail_mean".into(),
        "head_tail_ratio".into(),
    ]);
    w.write_record(&header).expect("in-memory CSV write");
    for s in summaries {
        let agent = match s.agent {
            AgentKind::Vi => "vi",
            AgentKind::Po => "po",
        };
        let mut rec = vec![
            s.label.clone(),
            agent.to_string(),
            regularizer_label(&s.regularizer),
            s.seeds.to_string(),
            s.episodes.to_string(),
        ];
        for c in &s.checkpoints {
            rec.push(c.mean.to_string());
            rec.push(c.sd.to_string());
        }
        rec.push(s.head_mean.to_string());
        rec.push(s.tail_mean.to_string());
        rec.push(s.head_tail_ratio().to_string());
        w.write_record(&rec).expect("in-memory CSV write");
    }
    w.into_inner().expect("in-memory CSV flush")
}
