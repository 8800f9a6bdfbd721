use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use fusformer::data::io::write_atomic;
use serde::{Deserialize, Serialize};

/// Record of one command run, written as JSON next to its outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully materialized configuration, defaults included.
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub wall_time_secs: f64,
    pub version: String,
}

pub struct ManifestBuilder {
    started: Instant,
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: impl Serialize) -> Result<Self> {
        Ok(ManifestBuilder {
            started: Instant::now(),
            manifest: RunManifest {
                command: command.to_string(),
                config: serde_json::to_value(config)?,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                seed: None,
                wall_time_secs: 0.0,
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
        })
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.manifest.seed = Some(seed);
        self
    }

    pub fn input(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.manifest.inputs.insert(key.to_string(), value.to_string());
        self
    }

    pub fn output(&mut self, key: &str, path: &Path) -> &mut Self {
        self.manifest.outputs.insert(key.to_string(), path.display().to_string());
        self
    }

    pub fn write(&mut self, path: &Path) -> Result<RunManifest> {
        self.manifest.wall_time_secs = self.started.elapsed().as_secs_f64();
        write_json(path, &self.manifest)?;
        Ok(self.manifest.clone())
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

/// `<file>.manifest.json` beside a single-file output.
pub fn beside(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}
