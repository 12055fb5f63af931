use std::fmt;

use mxconv::{ModelIoError, SimError};

/// Failure of a subcommand, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flag values that clap cannot catch on its own.
    Usage(String),
    /// A check the user asked for did not hold.
    Verify(String),
    /// I/O, malformed files, invalid configs, divergence.
    Failed(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Verify(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Verify(m) => write!(f, "verification failed: {m}"),
            CliError::Failed(e) => write!(f, "{e:#}"),
        }
    }
}

macro_rules! failed_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Failed(e.into())
            }
        })*
    };
}

failed_from!(anyhow::Error, std::io::Error, ModelIoError, SimError, mxconv::Error, serde_json::Error);

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
