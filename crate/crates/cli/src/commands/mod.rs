//! Subcommand implementations. Each command prints its own report and
//! returns a process exit code; fatal problems come back as [`CmdError`].

mod ic_check;
mod power;
mod reproduce;
mod simulate;
mod stabilize;

pub use ic_check::ic_check;
pub use power::power;
pub use reproduce::{
    reproduce, ReproduceTarget, TRANSFORM_STUDY_EXPECTED, TRANSFORM_STUDY_RATES,
    TRANSFORM_STUDY_TOLERANCE,
};
pub use simulate::simulate;
pub use stabilize::stabilize;

use crate::config::{load, Built};
use crate::exit;
use crate::report::Format;
use std::path::{Path, PathBuf};

/// How certification / estimation is carried out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Analytic,
    MonteCarlo,
}

/// Errors that terminate a command, tagged with the exit code they map to.
#[derive(Debug)]
pub struct CmdError {
    pub code: u8,
    pub message: String,
}

impl CmdError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: exit::CONFIG,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: exit::RUNTIME,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

/// Options shared by the scenario-driven subcommands.
#[derive(Clone, Debug)]
pub struct CommonOpts {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub reps: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl CommonOpts {
    /// Load the config and apply seed/reps overrides.
    pub fn load(&self) -> Result<Built, CmdError> {
        let mut built =
            load(&self.config).map_err(|e| CmdError::config(format!("config error: {e}")))?;
        if let Some(seed) = self.seed {
            built.seed = seed;
        }
        if let Some(reps) = self.reps {
            built.reps = reps;
        }
        Ok(built)
    }

    /// Write `text` to `--out` when given, otherwise to stdout.
    pub fn emit(&self, text: &str) -> Result<(), CmdError> {
        match &self.out {
            Some(path) => std::fs::write(path, text)
                .map_err(|e| CmdError::runtime(format!("cannot write {}: {e}", path.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    pub fn config_dir(&self) -> &Path {
        self.config.parent().unwrap_or_else(|| Path::new("."))
    }
}
