// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use splatreg_cli::{run, Command};

#[derive(Parser)]
#[command(name = "splatreg", version, about = "Splat regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Common {
    /// Key-value config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for traces, models and the run manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Sub {
    /// Least-squares regression on a built-in target.
    Fit(Common),
    /// Physics-informed training (Allen-Cahn or Poisson).
    Pde(Common),
    /// Chebyshev and Haar reference errors.
    Baseline(Common),
    /// Analytic gradients against finite differences.
    Gradcheck(Common),
    /// Sup-norm error of the explicit construction.
    ApproxBound(Common),
    /// Bures-Wasserstein geodesic between two affine maps.
    Geodesic(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Sub::Fit(c) => (Command::Fit, c),
        Sub::Pde(c) => (Command::Pde, c),
        Sub::Baseline(c) => (Command::Baseline, c),
        Sub::Gradcheck(c) => (Command::Gradcheck, c),
        Sub::ApproxBound(c) => (Command::ApproxBound, c),
        Sub::Geodesic(c) => (Command::Geodesic, c),
    };
    match run(command, &common.config, &common.out) {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
            println!("wrote {}", common.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("splatreg {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
