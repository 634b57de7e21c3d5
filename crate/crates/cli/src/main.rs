//! `lambda1`: solves and checks the least-eigenvalue Dirichlet problem.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{RunContext, EXIT_CONTRACT};
use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "lambda1", version, about = "Monotone wide-stencil solver for the least eigenvalue of the complex Hessian")]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one key; repeatable, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve and write solution.csv and report.json.
    Solve,
    /// Residuals, verdicts and quadratic-fit probes of a field.
    Verify { field: PathBuf },
    /// Comparability and property table for `operators.list`.
    Operators,
    /// Certify `u` and `v` and check `u <= v`.
    Compare { u: PathBuf, v: PathBuf },
    /// Sample an exact radial or quadratic solution.
    Oracle,
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    for pair in &cli.overrides {
        cfg.set_pair(pair)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<i32> {
    let ctx = RunContext {
        config: load_config(cli)?,
        out: cli.out.clone(),
    };
    std::fs::create_dir_all(&ctx.out)?;
    match &cli.command {
        Command::Solve => commands::solve(&ctx),
        Command::Verify { field } => commands::verify(&ctx, field),
        Command::Operators => commands::operators(&ctx),
        Command::Compare { u, v } => commands::compare(&ctx, u, v),
        Command::Oracle => commands::oracle(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONTRACT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONTRACT as u8)
        }
    }
}
