use clap::{Args, Parser, Subcommand};
use corrisar::config::{ConfigError, ScenarioConfig};
use corrisar::harness::{self, Goal, HarnessError, RunOptions, SweepOptions, SweepParam};
use std::path::PathBuf;
use std::process::ExitCode;

/// Correlation-based imaging of rotating orbital targets.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (TOML); merged over the preset when both are given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `output.dir` of the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Built-in preset: desk, desk-single, desk-noisy, full-scale.
    #[arg(long)]
    preset: Option<String>,
    /// Directory for cached correlation sets.
    #[arg(long)]
    stage_cache: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Verb {
    /// Synthesize echoes and store the correlation sets.
    Simulate(Common),
    /// Estimate the rotation from the autocorrelation supports.
    Estimate(Common),
    /// Run the full pipeline and write images.
    Image(Common),
    /// Repeat the pipeline over values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// theta_rot, aperture_pulses, snr_db or alpha.
        #[arg(long)]
        param: String,
        /// Comma-separated values; `0.75pi` and `off` are accepted.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Concurrent runs.
        #[arg(long, default_value_t = 2)]
        workers: usize,
    },
    /// Evaluate the resolution kernels of the configured acquisition.
    Kernels(Common),
}

fn load(c: &Common) -> Result<(ScenarioConfig, PathBuf), ConfigError> {
    let mut cfg = ScenarioConfig::load(c.preset.as_deref(), c.config.as_deref())?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let out = c.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, out))
}

fn run(verb: Verb) -> Result<(), HarnessError> {
    match verb {
        Verb::Simulate(c) => pipeline(&c, Goal::Simulate),
        Verb::Estimate(c) => pipeline(&c, Goal::Estimate),
        Verb::Image(c) => pipeline(&c, Goal::Image),
        Verb::Sweep {
            common,
            param,
            values,
            workers,
        } => {
            let (cfg, out) = load(&common)?;
            let param: SweepParam = param.parse()?;
            let values = values
                .iter()
                .map(|v| harness::parse_sweep_value(v))
                .collect::<Result<Vec<_>, _>>()?;
            let opts = SweepOptions {
                goal: Goal::Image,
                workers,
                out: Some(out.clone()),
                stage_cache: common.stage_cache.clone(),
            };
            let entries = harness::sweep(&cfg, param, &values, &opts)?;
            let mut failed = 0;
            for e in &entries {
                match &e.result {
                    Ok(r) => {
                        let peaks: Vec<String> = r
                            .images
                            .iter()
                            .map(|m| format!("{} {}/{}", m.kind.name(), m.true_peaks, m.truth_count))
                            .collect();
                        println!("{} = {}: {}", param.name(), e.value, peaks.join(", "));
                    }
                    Err(err) => {
                        failed += 1;
                        println!("{} = {}: {err}", param.name(), e.value);
                    }
                }
            }
            println!("wrote {}", out.join(format!("sweep_{}.csv", param.name())).display());
            if failed > 0 {
                return Err(HarnessError::Stage {
                    stage: harness::Stage::Output,
                    message: format!("{failed} of {} sweep entries failed", entries.len()),
                });
            }
            Ok(())
        }
        Verb::Kernels(c) => {
            let (cfg, out) = load(&c)?;
            let report = harness::kernels(&cfg, Some(&out))?;
            print!("{}", report.to_text());
            Ok(())
        }
    }
}

fn pipeline(c: &Common, goal: Goal) -> Result<(), HarnessError> {
    let (cfg, out) = load(c)?;
    let opts = RunOptions {
        out: Some(out),
        stage_cache: c.stage_cache.clone(),
    };
    let report = harness::run_pipeline(&cfg, goal, &opts)?;
    print!("{}", report.to_text());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.verb) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
