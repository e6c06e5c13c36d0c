use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qpspec_cli::{run, CliError, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "qpspec", version, about = "Spectral experiments for quasiperiodic Jacobi block operators")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the commands listed in the config.
    Run(Common),
    /// Run only the identity suite.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel sweeps.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(args: Common, verify_only: bool) -> Result<bool, CliError> {
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let cfg = ExperimentConfig::load(&args.config)?;
    let opts = RunOptions {
        out: args.out,
        seed: args.seed,
        verify_only,
    };
    let report = run(cfg, &opts)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for r in &report.results {
        eprintln!("{}: done in {:.2} s", r.command, r.seconds);
    }
    Ok(report.verified.unwrap_or(true))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Cmd::Run(a) => execute(a, false),
        Cmd::Verify(a) => execute(a, true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: {}", CliError::Verification("identity suite reported violations (see verify.csv)".into()));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
