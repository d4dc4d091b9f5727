//! Every run writes exactly one manifest into the output directory, also on
//! failure paths that reach the runner. Re-runs differ only in the timestamp.

use std::path::Path;

use serde::Serialize;

use crate::error::CliError;
use crate::io::write_json;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: String,
    pub timestamp: String,
    pub seeds_used: Vec<u64>,
    /// Echo of the loaded config, when one was parsed.
    pub config: Option<serde_json::Value>,
    /// Files written by the run, relative to the output directory.
    pub outputs: Vec<String>,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            seeds_used: Vec::new(),
            config: None,
            outputs: Vec::new(),
            status: "ok".into(),
            error: None,
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        write_json(&out_dir.join("manifest.json"), self)
    }
}
