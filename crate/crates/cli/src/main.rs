use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ringmod_cli::{execute, Command, RunConfig};

/// Conformal modulus, capacity and equicontinuity computations from a config file.
#[derive(Debug, Parser)]
#[command(name = "ringmod", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `run.out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write `<command>.csv`.
    #[arg(long)]
    csv: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = RunConfig::from_path(args.command, &args.config).and_then(|mut cfg| {
        cfg.seed = args.seed;
        cfg.out = args.out;
        cfg.csv = args.csv;
        execute(&cfg)
    });
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("ringmod: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
