//! Per-run manifests.
//!
//! Every subcommand that writes a primary output also drops a
//! `<output>.manifest.json` beside it, recording the tool version and the
//! fully resolved argument vector. Re-invoking the binary with exactly that
//! argument vector reproduces the outputs byte for byte, timing fields
//! aside, which is what makes runs auditable after the fact.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Canonical argument vector, subcommand first, every flag explicit.
    pub command: Vec<String>,
    /// Primary outputs the run produced, resolved.
    pub outputs: Vec<PathBuf>,
}

/// Builder for the canonical argument vector stored in manifests.
#[derive(Debug, Default)]
pub struct CommandLine {
    args: Vec<String>,
}

impl CommandLine {
    pub fn new(subcommand: &str) -> Self {
        CommandLine {
            args: vec![subcommand.to_string()],
        }
    }

    pub fn flag<T: Display>(mut self, name: &str, value: T) -> Self {
        self.args.push(name.to_string());
        self.args.push(value.to_string());
        self
    }

    pub fn flag_path(self, name: &str, value: &Path) -> Self {
        self.flag(name, value.display())
    }

    pub fn switch(mut self, name: &str, on: bool) -> Self {
        if on {
            self.args.push(name.to_string());
        }
        self
    }

    pub fn list<T: Display>(self, name: &str, values: &[T]) -> Self {
        let joined = values
            .iter()
            .map(T::to_string)
            .collect::<Vec<_>>()
            .join(",");
        self.flag(name, joined)
    }

    pub fn into_args(self) -> Vec<String> {
        self.args
    }
}

pub fn manifest_path(primary_output: &Path) -> PathBuf {
    let mut name = primary_output.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Write the manifest next to `primary_output` and return its path.
pub fn write_manifest(
    primary_output: &Path,
    command: CommandLine,
    outputs: Vec<PathBuf>,
) -> Result<PathBuf, CliError> {
    let manifest = Manifest {
        tool: "trackcull".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.into_args(),
        outputs,
    };
    let mut body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Internal(format!("manifest serialization failed: {e}")))?;
    body.push('\n');
    let path = manifest_path(primary_output);
    std::fs::write(&path, body)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}
