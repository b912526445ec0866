use std::path::PathBuf;
use std::process::ExitCode;

use amz_cli::dispatch::{run, Command};
use clap::Parser;

/// Experiments on random piecewise-linear interval maps.
#[derive(Debug, Parser)]
#[command(name = "amz", version)]
struct Cli {
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then
    /// $AMZ_OUT_DIR, then ./amz-out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = run(cli.command, &cli.config, cli.out.as_deref(), cli.seed);
    ExitCode::from(code as u8)
}
