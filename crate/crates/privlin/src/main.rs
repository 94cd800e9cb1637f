use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use privlin::compare::{compare, summary_csv};
use privlin::experiment::write_atomic;
use privlin::{run_experiment, HarnessError, RunConfig};
use privlin_core::calib::{accounting_report, NoiseCalibration, PrivacyBudget};

#[derive(Parser)]
#[command(
    name = "privlin",
    version,
    about = "Private optimistic RL experiments on linear mixture MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config and write regret CSVs plus run.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize run directories into one CSV.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the noise calibration and privacy accounting as JSON.
    #[command(allow_negative_numbers = true)]
    Calibrate {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long = "K")]
        episodes: usize,
        #[arg(long = "H")]
        horizon: usize,
        #[arg(long)]
        d1: usize,
        #[arg(long)]
        d2: usize,
        #[arg(long)]
        alpha: f64,
    },
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let dir = out.or_else(|| cfg.output_dir.clone()).ok_or_else(|| {
                HarnessError::config("no output directory: pass --out or set output_dir")
            })?;
            let result = run_experiment(&cfg, &dir)?;
            for run in &result.metadata.runs {
                println!(
                    "seed {}: cumulative regret {:.4} ({:.2}s) -> {}",
                    run.seed,
                    run.cumulative_regret,
                    run.wall_clock_seconds,
                    dir.join(&run.file).display()
                );
            }
            Ok(())
        }
        Command::Compare { dirs, out } => {
            let summaries = compare(&dirs)?;
            write_atomic(&out, &summary_csv(&summaries))
        }
        Command::Calibrate {
            epsilon,
            delta,
            episodes,
            horizon,
            d1,
            d2,
            alpha,
        } => {
            let bad = |e: privlin_core::Error| HarnessError::config(e.to_string());
            let budget = PrivacyBudget::new(epsilon, delta).map_err(bad)?;
            let cal =
                NoiseCalibration::for_run(budget, alpha, episodes, horizon, d1, d2).map_err(bad)?;
            let report = accounting_report(&cal, budget, horizon);
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.episode() {
                Some(k) => eprintln!("error at episode {k}: {e}"),
                None => eprintln!("error: {e}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
