//! Result envelopes and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const TOOL: &str = "surfspin";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    NotConverged,
    Failed,
}

/// Every JSON output has this shape. `result` is held as a generic value so
/// that a saved file deserialises and re-serialises to the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub command: String,
    pub input: Option<String>,
    pub status: Status,
    pub result: serde_json::Value,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

impl Envelope {
    pub fn new(command: &str, config_hash: &str, input: Option<&Path>) -> Self {
        Envelope {
            tool: TOOL.into(),
            version: VERSION.into(),
            config_hash: config_hash.into(),
            command: command.into(),
            input: input.map(|p| p.display().to_string()),
            status: Status::Ok,
            result: serde_json::Value::Null,
            warnings: Vec::new(),
            error: None,
        }
    }

    pub fn with_result<T: Serialize>(mut self, value: &T) -> Result<Self, CliError> {
        self.result = serde_json::to_value(value).map_err(surfspin::Error::from)?;
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("envelope serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Core(surfspin::Error::Json(e)))
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::output(path, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::output(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::output(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::output(path, e))?;
    tmp.persist(path).map_err(|e| CliError::output(path, e.error))?;
    Ok(())
}

/// `dir/stem.suffix`, where `stem` is the input file name without extension.
pub fn derived_path(dir: &Path, input: &Path, suffix: &str) -> PathBuf {
    let stem = input.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    dir.join(format!("{stem}.{suffix}"))
}
