// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! `cqdyn` — simulate and certify hybrid classical-quantum dynamics from a
//! TOML configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{RunContext, EXIT_CONFIG};

#[derive(Parser)]
#[command(
    name = "cqdyn",
    version,
    about = "Hybrid classical-quantum master equations: evolve, certify, estimate"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for certificates, CSV diagnostics and snapshots.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// RNG seed recorded in the resolved config (runs are deterministic per
    /// config + seed).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Evolve even when the validity check says invalid (negativity growth
    /// is then the measurement).
    #[arg(long)]
    allow_invalid: bool,
    /// Steps between state snapshots.
    #[arg(long)]
    snapshot_stride: Option<usize>,
    /// Hard cap on integration steps.
    #[arg(long)]
    max_steps: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Certify complete positivity of the configured dynamics.
    Check(CommonArgs),
    /// Integrate the configured dynamics and write diagnostics.
    Evolve(EvolveArgs),
    /// Estimate short-time Kramers-Moyal coefficients.
    Moments(CommonArgs),
    /// Repeat check/evolve over a 1-D parameter grid.
    Sweep(CommonArgs),
    /// List bundled scenarios.
    Scenarios,
}

fn context(common: &CommonArgs) -> RunContext {
    RunContext {
        config_path: common.config.clone(),
        out_dir: common.out_dir.clone(),
        seed: common.seed,
        allow_invalid: false,
        snapshot_stride: None,
        max_steps: None,
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("CQDYN_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Check(common) => commands::cmd_check(&context(common)),
        Cmd::Evolve(args) => {
            let mut ctx = context(&args.common);
            ctx.allow_invalid = args.allow_invalid;
            ctx.snapshot_stride = args.snapshot_stride;
            ctx.max_steps = args.max_steps;
            commands::cmd_evolve(&ctx)
        }
        Cmd::Moments(common) => commands::cmd_moments(&context(common)),
        Cmd::Sweep(common) => commands::cmd_sweep(&context(common)),
        Cmd::Scenarios => commands::cmd_scenarios(),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}
