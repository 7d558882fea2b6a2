//! `fedsgt` command-line harness. Every subcommand is callable as a library
//! function so tests can drive it without spawning processes.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fedsgt_core::Error;

pub mod commands;
pub mod output;

pub use commands::analyze::{cmd_analyze, AnalyzeArgs};
pub use commands::compare::{cmd_compare, CompareArgs};
pub use commands::train::{cmd_train, TrainArgs};
pub use commands::unlearn::{cmd_unlearn, UnlearnArgs};
pub use commands::validate::{cmd_validate, validation_failures, ValidateArgs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_CORRUPT: i32 = 4;
pub const EXIT_TRAINING: i32 = 5;

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    /// Monte Carlo rows outside the allowed z-score.
    ValidationFailed(usize),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::ValidationFailed(n) => write!(f, "{n} quantities disagree with their closed forms"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ValidationFailed(_) => EXIT_VALIDATION,
            CliError::Core(e) => match e {
                Error::Domain(_) | Error::Config(_) | Error::Lookup(_) => EXIT_CONFIG,
                Error::AuditMismatch { .. } => EXIT_VALIDATION,
                Error::Corrupt(_) => EXIT_CORRUPT,
                Error::Training(_) => EXIT_TRAINING,
                Error::ServiceUnavailable | Error::Io(_) | Error::Json(_) | Error::Csv(_) => EXIT_IO,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "fedsgt", version, about = "Sequential group training and exact unlearning simulator")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for training and Monte Carlo (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form tables: deletion rates, remaining samples, costs.
    Analyze(AnalyzeArgs),
    /// Monte Carlo check of every closed form.
    Validate(ValidateArgs),
    /// Train all sequences and write the module bank.
    Train(TrainArgs),
    /// Replay deletion requests against a trained bank.
    Unlearn(UnlearnArgs),
    /// FedSGT, FedCIO and FedRetrain on one request stream.
    Compare(CompareArgs),
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.global.workers {
        if n == 0 {
            return Err(Error::Config(vec!["--workers must be at least 1".into()]).into());
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(vec![format!("thread pool: {e}")]))?;
    let g = &cli.global;
    pool.install(|| match &cli.command {
        Command::Analyze(a) => cmd_analyze(a, g).map(drop),
        Command::Validate(a) => cmd_validate(a, g).map(drop),
        Command::Train(a) => cmd_train(a, g).map(drop),
        Command::Unlearn(a) => cmd_unlearn(a, g).map(drop),
        Command::Compare(a) => cmd_compare(a, g).map(drop),
    })
}
