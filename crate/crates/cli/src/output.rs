use std::path::Path;

use esap_core::config::AppConfig;
use esap_core::TOOL_VERSION;
use serde::Serialize;

use crate::error::CliError;

/// Every JSON document the tool emits.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub tool_version: &'static str,
    pub config_echo: &'a AppConfig,
    pub command: &'static str,
    pub result: T,
}

impl<'a, T: Serialize> Envelope<'a, T> {
    pub fn new(config: &'a AppConfig, command: &'static str, result: T) -> Self {
        Self {
            tool_version: TOOL_VERSION,
            config_echo: config,
            command,
            result,
        }
    }

    pub fn compact(&self) -> String {
        serde_json::to_string(self).expect("output serializes")
    }

    pub fn pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("output serializes") + "\n"
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::write(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::write(path, e))
}
