use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tidelock::Error;
use tidelock_cli::{cmd_catalog, cmd_equilibria, cmd_simulate, cmd_sweep, CliError};

#[derive(Parser)]
#[command(name = "tidelock", version, about = "Dissipative elastic satellite around a point-mass planet")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true, value_enum, default_value_t = Level::Warn)]
    log_level: Level,
}

#[derive(clap::Args)]
struct Io {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one scenario and classify its outcome.
    Simulate(Io),
    /// Solve for a relative equilibrium and certify its spectrum.
    Equilibria(Io),
    /// List the rigid quadrupole relative equilibria.
    Catalog(Io),
    /// Run a parameter sweep and tally outcomes.
    Sweep {
        #[command(flatten)]
        io: Io,
        /// Worker threads; defaults to the number of CPUs.
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl From<Level> for log::LevelFilter {
    fn from(l: Level) -> Self {
        match l {
            Level::Error => log::LevelFilter::Error,
            Level::Warn => log::LevelFilter::Warn,
            Level::Info => log::LevelFilter::Info,
            Level::Debug => log::LevelFilter::Debug,
            Level::Trace => log::LevelFilter::Trace,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level.into()).format_timestamp(None).init();

    let result = match &cli.command {
        Command::Simulate(io) => cmd_simulate(&io.config, &io.out),
        Command::Equilibria(io) => cmd_equilibria(&io.config, &io.out),
        Command::Catalog(io) => cmd_catalog(&io.config, &io.out),
        Command::Sweep { io, workers } => {
            let n = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            cmd_sweep(&io.config, &io.out, n)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tidelock: {e}");
            if let CliError::Numeric(Error::NoConvergence { trace, .. }) = &e {
                eprintln!("residual trace:");
                for (i, r) in trace.iter().enumerate() {
                    eprintln!("  {i:>3}  {r:e}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
