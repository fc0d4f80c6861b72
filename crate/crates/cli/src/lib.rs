//! Driver for bandit exploration experiments: declarative run configs,
//! a resumable trial runner, reports, distillation exports and fits.

pub mod cli;
pub mod config;
pub mod distill;
pub mod envgen;
pub mod fit;
pub mod report;
pub mod run;
mod setup;

use std::fmt;
use std::path::Path;

pub use cli::{execute, Cli, Command};
pub use config::{load_config, ConfigError, LoadedConfig, RunConfig};

/// Process exit status for a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    /// Bad config, flags or input files.
    Validation,
    /// The command stopped with some outputs missing or incomplete.
    Partial,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::Validation => 2,
            ExitKind::Partial => 3,
        }
    }
}

/// An error that knows which exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Validation,
            message: message.into(),
        }
    }

    pub fn partial(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Partial,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

/// Exit status for an error returned by [`execute`]. Anything not tagged
/// as a validation problem counts as a partial failure.
pub fn exit_kind(err: &anyhow::Error) -> ExitKind {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return f.kind;
    }
    if err.downcast_ref::<ConfigError>().is_some() {
        return ExitKind::Validation;
    }
    ExitKind::Partial
}

/// Writes `bytes` to `path` through a temporary sibling and a rename, so
/// readers never see a half-written file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    use anyhow::Context;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming {} into place", tmp.display()))?;
    Ok(())
}
