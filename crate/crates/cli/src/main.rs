use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use noncoercive_cli::config::parse_config_for;
use noncoercive_cli::{run, Subcommand, EXIT_ERROR};

#[derive(Debug, Parser)]
#[command(
    name = "noncoercive",
    version,
    about = "Truncation solver, estimate audits and radial counterexample"
)]
struct Args {
    #[arg(value_enum)]
    command: Subcommand,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed (at most 2^63 - 1).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}

fn execute(args: &Args) -> Result<i32, noncoercive_cli::CliError> {
    let text =
        fs::read_to_string(&args.config).map_err(|source| noncoercive_cli::CliError::Io {
            path: args.config.clone(),
            source,
        })?;
    let mut config = parse_config_for(&text, args.command)?;
    if let Some(seed) = args.seed {
        // the echoed TOML must hold the seed, and TOML integers are i64
        if seed > i64::MAX as u64 {
            return Err(noncoercive_cli::CliError::Config(format!(
                "--seed must not exceed {} (got {seed})",
                i64::MAX
            )));
        }
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output.directory = out.display().to_string();
    }
    if args.jobs == Some(0) {
        return Err(noncoercive_cli::CliError::Config(
            "--jobs must be at least 1".into(),
        ));
    }
    let out = PathBuf::from(&config.output.directory);
    let outcome = run(&config, &out, args.jobs)?;
    eprintln!(
        "{}: converged={} hard_failures={} warnings={} check_failures={} -> {}",
        config.subcommand,
        outcome.converged,
        outcome.hard_failures,
        outcome.warnings,
        outcome.check_failures,
        out.display()
    );
    Ok(outcome.exit_code())
}
