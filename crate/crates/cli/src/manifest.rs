//! One JSON manifest per command, written next to its outputs.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use a3d::fsutil::write_atomic;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name; `a3d replay` re-runs them.
    pub argv: Vec<String>,
    /// Resolved configuration of the command.
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<PathBuf>,
    /// Command-specific results.
    pub extra: serde_json::Value,
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String], seed: u64) -> Self {
        Self {
            command: command.into(),
            argv: argv.to_vec(),
            config: serde_json::Value::Null,
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            outputs: Vec::new(),
            extra: serde_json::Value::Null,
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn write(mut self, path: &Path) -> CliResult<()> {
        self.finished_unix_ms = now_ms();
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())?;
        Ok(())
    }
}

/// Manifest path for a file output: `<file>.manifest.json`.
pub fn beside(file: &Path) -> PathBuf {
    let mut name = file.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    file.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_naming() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let mut m = RunManifest::new("cost", &["cost".into()], 7);
        m.outputs.push("x.csv".into());
        m.clone().write(&p).unwrap();
        let back = RunManifest::load(&p).unwrap();
        assert_eq!((back.command.as_str(), back.seed, back.outputs.len()), ("cost", 7, 1));
        assert!(back.finished_unix_ms >= back.started_unix_ms);
        assert_eq!(beside(Path::new("out/t.csv")), PathBuf::from("out/t.csv.manifest.json"));
    }
}
