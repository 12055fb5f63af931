pub mod mask;
pub mod model;
pub mod report;
pub mod simulate;
pub mod train;

use std::io::Write;
use std::path::Path;

use anyhow::Context;

use crate::error::CliError;

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    Ok(std::fs::read(path).with_context(|| format!("reading {}", path.display()))?)
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    Ok(std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?)
}

/// Writes to `path`, or stdout without one.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write(p, text.as_bytes()),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}
