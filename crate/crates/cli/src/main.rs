use clap::{Parser, Subcommand};
use horizon_cli::{commands, CliError, Outcome, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "horizon",
    version,
    about = "Resonances, Carleman certificates and energy decay for Schwarzschild-de Sitter"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; built-in baseline when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized checks, overriding `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Resonances in the configured window.
    Qnm,
    /// Resolvent scan of the strip near the real axis.
    Scan,
    /// Carleman weights and their certificates.
    Carleman,
    /// Energy decay of evolved data.
    Decay,
    /// Full invariant suite.
    Verify,
}

fn run(args: &Args) -> Result<Outcome, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(k) = args.threads {
        if k == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    match args.command {
        Command::Qnm => commands::cmd_qnm(&cfg),
        Command::Scan => commands::cmd_scan(&cfg),
        Command::Carleman => commands::cmd_carleman(&cfg),
        Command::Decay => commands::cmd_decay(&cfg),
        Command::Verify => commands::cmd_verify(&cfg),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(o) => {
            println!("{}", o.summary);
            ExitCode::from(o.code as u8)
        }
        Err(e) => {
            eprintln!("horizon: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
