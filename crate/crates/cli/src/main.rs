use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use performa_cli::config::{parse_config, parse_config_str, Experiment, DATA_DIR_ENV};
use performa_cli::{run_suite, summary, suite, write_outputs, CliError, Overrides};

/// Seeded performative-optimisation experiments, written as CSV.
#[derive(Debug, Parser)]
#[command(name = "performa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// 2D Gaussian classes, logistic loss, sweep over the shift magnitude γ.
    Log2d(RunArgs),
    /// 7D Gaussian classes, quadratic loss, sweep over the noise σ.
    Quad7d(RunArgs),
    /// Linear demand pricing.
    Pricing(RunArgs),
    /// Housing data with a simulated shift, sweep over its magnitude.
    Housing(RunArgs),
    /// Empirical vs analytic covariance of the RP and SF estimators.
    EstimatorVariance(RunArgs),
    /// Quadratic-loss risk along a line for several Π = λI.
    ConvexityProfile(RunArgs),
    /// Mean and std over runs per algorithm, sweep value and iteration.
    Summarize {
        /// A run-level CSV written by one of the experiments.
        input: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic table with the housing schema.
    SynthHousing {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML config; defaults apply to every omitted key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the CSV files.
    #[arg(long)]
    out: PathBuf,
    /// Overrides run.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides run.n_runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Keep RRM runs in the main CSV instead of a separate file.
    #[arg(long)]
    inline_rrm: bool,
    /// Directory for relative housing paths [default: $PERFORMA_DATA_DIR, then ./data].
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

fn experiment(args: RunArgs, experiment: Experiment) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => parse_config(path, experiment)?,
        None => parse_config_str("", experiment)?,
    };
    Overrides {
        seed: args.seed,
        runs: args.runs,
    }
    .apply(&mut config)?;
    let data_dir = args
        .data_dir
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from));
    let output = run_suite(&config, data_dir.as_deref())?;
    let written = write_outputs(&output, &args.out, args.inline_rrm)?;
    suite::report(&written, std::io::stdout().lock()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn summarize(input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let rows = summary::read_run_csv(input)?;
    let table = summary::summarize(&rows);
    match out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
            summary::write_summary(&table, file)
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            summary::write_summary(&table, &mut stdout)?;
            stdout.flush().map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Log2d(a) => experiment(a, Experiment::Log2d),
        Command::Quad7d(a) => experiment(a, Experiment::Quad7d),
        Command::Pricing(a) => experiment(a, Experiment::Pricing),
        Command::Housing(a) => experiment(a, Experiment::Housing),
        Command::EstimatorVariance(a) => experiment(a, Experiment::EstimatorVariance),
        Command::ConvexityProfile(a) => experiment(a, Experiment::ConvexityProfile),
        Command::Summarize { input, out } => summarize(&input, out.as_deref()),
        Command::SynthHousing { out, rows, seed } => {
            if rows == 0 {
                return Err(CliError::Config("--rows must be >= 1".into()));
            }
            performa::housing::write_synthetic_housing(&out, rows, seed)
                .map_err(|e| CliError::Data(e.to_string()))?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("performa: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
