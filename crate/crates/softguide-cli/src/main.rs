use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use softguide_cli::commands::{self, DEFAULT_SEED};
use softguide_cli::{exit, CliError, Context, Run, RunConfig};

#[derive(Parser)]
#[command(name = "softguide", version, about = "Bound states of bent soft quantum waveguides")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides output.dir (default: out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed of the eigensolver start vectors
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the strip conditions and report curve metadata
    Validate,
    /// Transverse ground state of the profile
    Profile,
    /// Eigenvalues below the threshold on two grids
    Spectrum,
    /// Variational existence certificate
    Certify,
    /// Arc-spline approximations and their convergence
    Arcs,
}

fn finish<T>(run: Run<T>) -> i32 {
    // a closed pipe on stdout is not an error of the run
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", run.summary);
    for f in &run.files {
        let _ = writeln!(out, "wrote {}", f.display());
    }
    run.exit
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let config = RunConfig::load(path)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Context::new(&config, &out, cli.seed.unwrap_or(DEFAULT_SEED))?;
    Ok(match cli.command {
        Command::Validate => finish(commands::cmd_validate(&config, &ctx)?),
        Command::Profile => finish(commands::cmd_profile(&config, &ctx)?),
        Command::Spectrum => finish(commands::cmd_spectrum(&config, &ctx)?),
        Command::Certify => finish(commands::cmd_certify(&config, &ctx)?),
        Command::Arcs => finish(commands::cmd_arcs(&config, &ctx)?),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    if code == exit::OK {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(code as u8)
    }
}
