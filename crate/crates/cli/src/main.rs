mod commands;
mod config;
mod export;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::Failure;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "magtopo", version, about = "ON/OFF topology optimization for 2D magnetostatics")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Mesh file in mesh2d format (overrides the generator).
    #[arg(long, global = true)]
    mesh: Option<PathBuf>,
    /// Material mode (overrides `material.mode`).
    #[arg(long, global = true)]
    mode: Option<ModeArg>,
    /// Accepted for compatibility; every command is deterministic.
    #[arg(long, global = true)]
    seedless: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Linear,
    Nonlinear,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the state equation and report the air-gap objective.
    Solve,
    /// ON/OFF sensitivities and, in linear mode, the topological derivative.
    Sensitivity,
    /// Run the ON/OFF hole-carving loop.
    Optimize,
    /// Polarization matrix of an inclusion shape.
    Polarization {
        /// `disk`, `ellipse:a,b` or `polygon:x1,y1;x2,y2;...`
        shape: String,
        nu0: f64,
        nu1: f64,
        #[arg(default_value_t = 256)]
        panels: usize,
        /// Also print a panel-doubling convergence table.
        #[arg(long)]
        refine: bool,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Config)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(mesh) = &cli.mesh {
        cfg.geometry.mesh = Some(std::path::absolute(mesh).unwrap_or_else(|_| mesh.clone()));
    }
    if let Some(mode) = cli.mode {
        cfg.material.mode = match mode {
            ModeArg::Linear => "linear",
            ModeArg::Nonlinear => "nonlinear",
        }
        .into();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Solve => commands::solve(&load_config(cli)?),
        Command::Sensitivity => commands::sensitivity(&load_config(cli)?),
        Command::Optimize => commands::optimize(&load_config(cli)?),
        Command::Polarization { shape, nu0, nu1, panels, refine } => commands::polarization(shape, *nu0, *nu1, *panels, *refine),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
