use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use acb_core::harness::{execute, Experiment, ExperimentConfig};
use acb_core::{AcbError, Result};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Coverage,
    Rates,
    Lowerbound,
    Concentration,
    Calibrate,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::Coverage => Experiment::Coverage,
            Command::Rates => Experiment::Rates,
            Command::Lowerbound => Experiment::Lowerbound,
            Command::Concentration => Experiment::Concentration,
            Command::Calibrate => Experiment::Calibrate,
        }
    }
}

/// Adaptive confidence band experiments.
#[derive(Debug, Parser)]
#[command(name = "acb", version)]
struct Cli {
    command: Command,
    /// key = value config file, or a run manifest to replay
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Sample sizes, comma separated
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long = "B")]
    b: Option<f64>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed; ACB_SEED takes precedence
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Extra key=value settings, applied after the flags above
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    cfg.experiment = cli.command.into();
    let flags: [(&str, Option<String>); 11] = [
        ("n", cli.n.clone()),
        ("sigma", cli.sigma.map(|v| v.to_string())),
        ("r", cli.r.map(|v| v.to_string())),
        ("s", cli.s.map(|v| v.to_string())),
        ("B", cli.b.map(|v| v.to_string())),
        ("l", cli.l.map(|v| v.to_string())),
        ("alpha", cli.alpha.map(|v| v.to_string())),
        ("reps", cli.reps.map(|v| v.to_string())),
        ("seed", cli.seed.map(|v| v.to_string())),
        ("out", cli.out.as_ref().map(|p| p.display().to_string())),
        ("format", cli.format.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| AcbError::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k, v)?;
    }
    if let Ok(seed) = std::env::var("ACB_SEED") {
        cfg.set("seed", &seed)
            .map_err(|_| AcbError::Config(format!("ACB_SEED is not a seed: '{seed}'")))?;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = build_config(cli)?;
    let (output, manifest) = execute(&cfg)?;
    match &cfg.out {
        Some(out) => eprintln!(
            "acb {}: {} rows -> {} ({:.1}s)",
            cfg.experiment,
            output.table.len(),
            out.display(),
            manifest.wall_time_s
        ),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(output.table.render(cfg.format).as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("acb: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
