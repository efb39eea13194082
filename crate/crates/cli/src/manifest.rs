use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// Written next to every output as `<output>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    pub config: Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, config: Value) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            config,
        }
    }

    pub fn input(&mut self, path: &str, bytes: &[u8]) {
        self.inputs.push(InputRecord { path: path.to_string(), sha256: sha256_hex(bytes) });
    }

    pub fn output(&mut self, path: &str) {
        self.outputs.push(path.to_string());
    }

    pub fn path_for(output: &str) -> String {
        format!("{output}.manifest.json")
    }

    pub fn write(&self, primary_output: &str) -> CliResult<()> {
        let path = Self::path_for(primary_output);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))?;
        text.push('\n');
        write_file(&path, text.as_bytes())
    }
}

pub fn read_file(path: &str) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn write_file(path: &str, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = Path::new(path).parent() {
        if !dir.as_os_str().is_empty() && !dir.exists() {
            return Err(CliError::io(path, "parent directory does not exist"));
        }
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
