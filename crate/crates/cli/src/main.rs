use std::path::PathBuf;

use arbband_cli::{main_with, Command};
use clap::Parser;

/// Pricing bands for European calls under random arbitrage.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides `run.output_dir`.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

fn main() {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().replace('"', "'");
            eprintln!("error code=2 kind=usage message=\"{first}\"");
            std::process::exit(2);
        }
        Err(e) => e.exit(),
    };
    std::process::exit(main_with(args.command, &args.config, args.output_dir));
}
