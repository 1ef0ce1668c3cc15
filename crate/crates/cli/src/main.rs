//! `mtasr`: simulate multi-talker training mixtures, assign reference
//! channels, evaluate alignment losses, and score multi-channel hypotheses.
//!
//! Exit codes: 0 success, 1 validation error, 2 I/O error, 64 usage error.

mod commands;
mod manifests;
mod output;
mod provenance;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use commands::{fit_stats, heat, loss, score, simulate, subsegment};

/// Environment variable consulted for the default `--jobs` value.
const JOBS_ENV: &str = "MTASR_JOBS";

const EXIT_VALIDATION: i32 = 1;
const EXIT_IO: i32 = 2;
const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "mtasr",
    version,
    about = "Multi-talker ASR toolkit: mixture simulation, channel assignment, \
             alignment losses, and multi-channel scoring"
)]
struct Cli {
    /// Worker threads for parallel sections (default: MTASR_JOBS or all
    /// cores). Results are merged in input order regardless.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Seed for randomized commands; required by `simulate`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Log verbosity on stderr.
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    log_level: LogLevel,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl LogLevel {
    fn as_filter(self) -> tracing::level_filters::LevelFilter {
        use tracing::level_filters::LevelFilter;
        match self {
            LogLevel::Error => LevelFilter::ERROR,
            LogLevel::Warn => LevelFilter::WARN,
            LogLevel::Info => LevelFilter::INFO,
            LogLevel::Debug => LevelFilter::DEBUG,
            LogLevel::Trace => LevelFilter::TRACE,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split utterances at word gaps longer than a threshold.
    Subsegment(subsegment::SubsegmentArgs),
    /// Fit pause/overlap gap statistics from meeting transcripts.
    FitStats(fit_stats::FitStatsArgs),
    /// Generate simulated mixtures from a segment pool (requires --seed).
    Simulate(simulate::SimulateArgs),
    /// Assign utterances to channels and emit per-channel references.
    Heat(heat::HeatArgs),
    /// Score hypothesis channels against reference meetings.
    Score(score::ScoreArgs),
    /// Evaluate alignment losses on tensors from a JSON file.
    Loss(loss::LossArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };

    tracing_subscriber::fmt()
        .with_max_level(cli.log_level.as_filter())
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();

    if let Err(err) = configure_jobs(cli.jobs) {
        eprintln!("error: {err:#}");
        std::process::exit(EXIT_VALIDATION);
    }

    let result = match &cli.command {
        Command::Subsegment(args) => subsegment::run(args),
        Command::FitStats(args) => fit_stats::run(args),
        Command::Simulate(args) => match cli.seed {
            Some(seed) => simulate::run(args, seed),
            None => {
                eprintln!("error: simulate is randomized and requires an explicit --seed <SEED>");
                std::process::exit(EXIT_USAGE);
            }
        },
        Command::Heat(args) => heat::run(args),
        Command::Score(args) => score::run(args),
        Command::Loss(args) => loss::run(args),
    };

    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code_for(&err));
    }
}

/// Builds the global worker pool. `--jobs` wins; otherwise the MTASR_JOBS
/// environment variable; otherwise the rayon default (all cores).
fn configure_jobs(flag: Option<usize>) -> anyhow::Result<()> {
    let jobs = match flag {
        Some(n) => Some(n),
        None => match std::env::var(JOBS_ENV) {
            Ok(raw) => Some(raw.parse::<usize>().map_err(|_| {
                anyhow::anyhow!("{JOBS_ENV} must be a positive integer, got {raw:?}")
            })?),
            Err(_) => None,
        },
    };
    if let Some(jobs) = jobs {
        if jobs == 0 {
            anyhow::bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| anyhow::anyhow!("building worker pool: {e}"))?;
    }
    Ok(())
}

/// Maps an error chain to the exit code: I/O problems (filesystem, WAV
/// decode) are 2, everything else is a validation failure, 1.
fn exit_code_for(err: &anyhow::Error) -> i32 {
    use mtasr_core::corpus::CorpusError;
    use mtasr_core::mixer::MixerError;

    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
        if matches!(cause.downcast_ref::<CorpusError>(), Some(CorpusError::Io { .. })) {
            return EXIT_IO;
        }
        if matches!(
            cause.downcast_ref::<MixerError>(),
            Some(MixerError::Io { .. } | MixerError::Wav { .. })
        ) {
            return EXIT_IO;
        }
    }
    EXIT_VALIDATION
}
