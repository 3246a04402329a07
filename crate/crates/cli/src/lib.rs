//! Experiment harness for the `performa` toolkit: configuration files,
//! seeded parallel suites and CSV summaries.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod config;
pub mod suite;
pub mod summary;

pub use config::{parse_config, parse_config_str, Experiment, ExperimentConfig};
pub use suite::{run_suite, write_outputs, SuiteOutput};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{0}")]
    Run(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration problems, 3 for unreadable or malformed data.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Run(_) | CliError::Io { .. } => 1,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<performa::error::Error> for CliError {
    fn from(e: performa::error::Error) -> Self {
        match e {
            performa::error::Error::Data(d) => CliError::Data(d.to_string()),
            other => CliError::Run(other.to_string()),
        }
    }
}

/// Command-line overrides applied on top of a parsed config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) -> Result<(), CliError> {
        if let Some(seed) = self.seed {
            config.run.master_seed = seed;
        }
        if let Some(runs) = self.runs {
            if runs == 0 {
                return Err(CliError::Config("--runs must be >= 1".into()));
            }
            if !config.experiment.is_optimisation() {
                return Err(CliError::Config(format!("--runs does not apply to `{}`", config.experiment)));
            }
            config.run.n_runs = runs;
        }
        Ok(())
    }
}
