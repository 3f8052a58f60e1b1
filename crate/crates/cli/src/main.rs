use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use exchange_cli::{run, Command, Format, Overrides, RunManifest, EXIT_VALIDATION};

/// Simulates fully connected Cobb-Douglas exchange economies and bounds their mixing.
#[derive(Parser)]
#[command(name = "exchange-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Run configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long = "t-end", global = true)]
    t_end: Option<f64>,
    #[arg(long, global = true)]
    trajectories: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for the ensemble (defaults to all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the ensemble and write moment and trajectory tables
    Simulate,
    /// Compare the ensemble with the Dirichlet equilibrium
    Verify,
    /// Compute the certified Doeblin convergence rate
    Bound,
    /// Write the Kac-model configuration
    PresetKac {
        #[arg(long, default_value_t = 2)]
        agents: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION as u8 } else { 0 });
        }
    };
    let command = match cli.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Verify => Command::Verify,
        Cmd::Bound => Command::Bound,
        Cmd::PresetKac { agents } => Command::PresetKac { agents },
    };
    let manifest = RunManifest {
        config_path: cli.config,
        command,
        output_dir: cli.out,
        overrides: Overrides { seed: cli.seed, t_end: cli.t_end, n_trajectories: cli.trajectories },
        format: cli.format,
        threads: cli.threads,
    };
    ExitCode::from(run(&manifest) as u8)
}
