use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Replay record written next to every mutating command's output: the
/// resolved configuration, seed, and digests of every input file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub input_digests: Vec<InputDigest>,
    pub tool_version: String,
    pub timestamp: String,
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn digest_file(path: impl AsRef<Path>) -> anyhow::Result<InputDigest> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: format!("{:x}", hasher.finalize()),
    })
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            seed,
            input_digests: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        }
    }

    pub fn with_input(mut self, path: impl AsRef<Path>) -> anyhow::Result<Self> {
        self.input_digests.push(digest_file(path)?);
        Ok(self)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> anyhow::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
