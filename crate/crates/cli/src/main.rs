use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use nlkpp_cli::commands;
use nlkpp_cli::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "nlkpp", version, about = "Homogenization experiments for nonlocal KPP fronts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated seeds replacing the configured ones.
    #[arg(long, global = true, value_delimiter = ',')]
    seed_override: Option<Vec<u64>>,
    /// Output directory replacing the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Tabulate the effective Hamiltonian.
    Hbar,
    /// Integrate the KPP equation directly.
    Simulate,
    /// Solve the effective variational inequality.
    Vi,
    /// Radial limits of the metric problem against the dual formula.
    Metric,
    /// Front convergence along the scale sequence.
    Converge,
    /// Run the invariant suite.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Hbar => "hbar",
            Command::Simulate => "simulate",
            Command::Vi => "vi",
            Command::Metric => "metric",
            Command::Converge => "converge",
            Command::Validate => "validate",
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seeds) = cli.seed_override {
        cfg.seeds = seeds;
    }
    if let Some(out) = cli.out {
        cfg.output = out;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, "--threads must be positive");
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building the worker pool")?;
    let name = cli.command.name();
    let report = pool.install(|| commands::run(name, &cfg))?;
    for (k, v) in &report.metrics {
        println!("{k} = {v}");
    }
    for c in &report.checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        println!("[{mark}] {} observed {} threshold {} ({})", c.name, c.observed, c.threshold, c.detail);
    }
    for (k, v) in &report.notes {
        println!("{k}: {v}");
    }
    println!("config hash {} in {:.2}s", report.config_hash, report.wall_clock_s);
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
