//! Machine-readable run manifests.
//!
//! Every run writes a JSON snapshot of the resolved settings, the
//! subcommand arguments, the result counts and the wall time. For a
//! mock-driven run the manifest pins everything needed to reproduce the
//! output files byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::config::Settings;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub subcommand: String,
    pub args: serde_json::Value,
    pub settings: Settings,
    pub counts: BTreeMap<String, u64>,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, args: serde_json::Value, settings: Settings) -> Self {
        RunManifest {
            tool: format!("veritriple {}", env!("CARGO_PKG_VERSION")),
            subcommand: subcommand.to_string(),
            args,
            settings,
            counts: BTreeMap::new(),
            wall_time_secs: 0.0,
        }
    }

    pub fn count(&mut self, name: &str, value: u64) {
        self.counts.insert(name.to_string(), value);
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut body = serde_json::to_string_pretty(self).expect("manifest serializes");
        body.push('\n');
        std::fs::write(path, body)
    }
}
