use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Record of one CLI run. `args` alone determines a rerun.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// Directory relative paths in `args` resolve against.
    pub working_dir: PathBuf,
    pub version: String,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub config: Value,
    pub metrics: Value,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, args: &[std::ffi::OsString]) -> Self {
        RunManifest {
            command: command.to_string(),
            args: args.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
            working_dir: std::env::current_dir().unwrap_or_default(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: Value::Null,
            metrics: Value::Null,
            wall_time_s: 0.0,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::usage(format!("cannot serialize manifest: {e}")))?;
        write_text(path, &(text + "\n"))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError {
            code: 2,
            message: format!("{}: invalid manifest: {e}", path.display()),
        })
    }
}

/// `<output>.manifest.json` unless overridden.
pub fn manifest_path(explicit: Option<&PathBuf>, output: &Path) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| {
        let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        output.with_file_name(name)
    })
}

pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}
