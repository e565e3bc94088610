//! `cogarch`: run COGARCH symbol, generator and characteristics experiments
//! from a TOML config and write CSV/JSON artifacts.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Parser, Subcommand};

use crate::config::{Format, LoadedConfig};
use crate::report::RunMeta;

#[derive(Parser, Debug)]
#[command(
    name = "cogarch",
    version,
    about = "Symbol, generator and characteristics experiments for the COGARCH(1,1) process"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides `mc.workers`; defaults to all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory; falls back to `outputs.dir`, then `./out`.
    #[arg(long, global = true, env = "COGARCH_OUT_DIR")]
    out: Option<PathBuf>,

    /// Table format; falls back to `outputs.format`.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Simulate sample paths and write them as a table.
    Simulate,
    /// Evaluate the closed-form symbol on the start x frequency grid.
    Symbol,
    /// Monte-Carlo symbol estimates, with an R-independence check when `mc.R_list` has several radii.
    McSymbol,
    /// Compare closed-form and Monte-Carlo symbols.
    VerifySymbol,
    /// Martingale residuals of Gaussian bumps and generator/symbol consistency.
    GeneratorCheck,
    /// Integrated characteristics and their empirical checks.
    CharacteristicsCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Symbol => "symbol",
            Command::McSymbol => "mc-symbol",
            Command::VerifySymbol => "verify-symbol",
            Command::GeneratorCheck => "generator-check",
            Command::CharacteristicsCheck => "characteristics-check",
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let config_path = cli.config.context("--config <path> is required")?;
    let source = std::fs::read_to_string(&config_path).with_context(|| format!("reading {}", config_path.display()))?;
    let loaded = LoadedConfig::parse(&source, &config_path.display().to_string())?;
    let config = &loaded.config;
    let seed = cli.seed.unwrap_or(config.mc.seed);
    let workers = cli.workers.or(config.mc.workers);
    anyhow::ensure!(workers != Some(0), "--workers must be >= 1");
    let format = cli.format.unwrap_or(config.outputs.format);
    let out = cli.out.or_else(|| config.outputs.dir.clone()).unwrap_or_else(|| PathBuf::from("out"));

    let cx = commands::Context {
        config,
        params: loaded.params()?,
        seed,
        workers,
    };
    let outcome = match cli.command {
        Command::Simulate => commands::simulate(&cx),
        Command::Symbol => commands::symbol(&cx),
        Command::McSymbol => commands::mc_symbol(&cx),
        Command::VerifySymbol => commands::verify_symbol(&cx),
        Command::GeneratorCheck => commands::generator_check(&cx),
        Command::CharacteristicsCheck => commands::characteristics_check(&cx),
    }
    .with_context(|| format!("{} failed", cli.command.name()))?;

    let meta = RunMeta {
        command: cli.command.name(),
        config_path: &config_path,
        config_source: &source,
        seed,
        workers,
        format,
    };
    let report = report::write_all(&out, &meta, &outcome)?;
    for v in &outcome.verdicts {
        println!(
            "[{}] {}: {:.4} (limit {})",
            if v.passed { "PASS" } else { "FAIL" },
            v.name,
            v.value,
            v.threshold
        );
    }
    println!("report: {}", report.display());
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
