//! Checkpoint container: a JSON header (config, seed, parameter manifest)
//! followed by the raw parameter arrays as little-endian f64, with a
//! trailing SHA-256 over header and payload. Round-trips are bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ndtensor::{BnStats, Tensor};

use crate::error::CheckpointError;
use crate::model::{parameter_manifest, ModelConfig, ModelState};

const MAGIC: &[u8; 8] = b"MACINCK\0";
pub const FORMAT_VERSION: u32 = 1;

const RUNNING_MEAN: &str = "bn.running_mean";
const RUNNING_VAR: &str = "bn.running_var";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    seed: u64,
    config: ModelConfig,
    manifest: Vec<ManifestEntry>,
}

fn full_manifest(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let mut entries = parameter_manifest(config);
    entries.push((RUNNING_MEAN.to_string(), vec![config.filters]));
    entries.push((RUNNING_VAR.to_string(), vec![config.filters]));
    entries
}

pub fn save_checkpoint(state: &ModelState, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let manifest: Vec<ManifestEntry> = full_manifest(&state.config)
        .into_iter()
        .map(|(name, shape)| ManifestEntry { name, shape })
        .collect();
    let header = Header {
        format_version: FORMAT_VERSION,
        seed: state.seed,
        config: state.config.clone(),
        manifest,
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| CheckpointError::Header(e.to_string()))?;

    let mut payload = Vec::new();
    for (name, _) in parameter_manifest(&state.config) {
        for &v in state.param(&name).data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    for &v in state.bn_running.mean.iter().chain(&state.bn_running.var) {
        payload.extend_from_slice(&v.to_le_bytes());
    }

    let mut hasher = Sha256::new();
    hasher.update(&header_bytes);
    hasher.update(&payload);
    let digest = hasher.finalize();

    let mut file = Vec::with_capacity(8 + 4 + 8 + header_bytes.len() + payload.len() + 32);
    file.extend_from_slice(MAGIC);
    file.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    file.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    file.extend_from_slice(&header_bytes);
    file.extend_from_slice(&payload);
    file.extend_from_slice(&digest);

    std::fs::write(path, file).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelState, CheckpointError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() < 8 + 4 + 8 + 32 || &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let header_start = 20;
    let Some(payload_end) = bytes.len().checked_sub(32) else {
        return Err(CheckpointError::Checksum);
    };
    if header_start + header_len > payload_end {
        return Err(CheckpointError::Checksum);
    }
    let header_bytes = &bytes[header_start..header_start + header_len];
    let payload = &bytes[header_start + header_len..payload_end];

    let mut hasher = Sha256::new();
    hasher.update(header_bytes);
    hasher.update(payload);
    if hasher.finalize().as_slice() != &bytes[payload_end..] {
        return Err(CheckpointError::Checksum);
    }

    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| CheckpointError::Header(e.to_string()))?;

    // the manifest must agree with the inventory implied by the config
    let expected = full_manifest(&header.config);
    if header.manifest.len() != expected.len() {
        return Err(CheckpointError::Header(format!(
            "manifest lists {} entries, config implies {}",
            header.manifest.len(),
            expected.len()
        )));
    }
    for (entry, (name, shape)) in header.manifest.iter().zip(&expected) {
        if &entry.name != name {
            return Err(CheckpointError::ManifestMissing { name: name.clone() });
        }
        if &entry.shape != shape {
            return Err(CheckpointError::ManifestShape {
                name: name.clone(),
                shape: entry.shape.clone(),
                expected: shape.clone(),
            });
        }
    }

    let declared: usize = expected
        .iter()
        .map(|(_, shape)| shape.iter().product::<usize>())
        .sum();
    if payload.len() != declared * 8 {
        return Err(CheckpointError::PayloadLength {
            got: payload.len() / 8,
            expected: declared,
        });
    }

    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut state = crate::model::init_model(&header.config, header.seed)
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    for (name, shape) in parameter_manifest(&header.config) {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        *state.param_mut(&name) = Tensor::new(shape, data).expect("manifest shape");
    }
    let c = header.config.filters;
    let mean: Vec<f64> = values.by_ref().take(c).collect();
    let var: Vec<f64> = values.by_ref().take(c).collect();
    state.bn_running = BnStats { mean, var };
    state.seed = header.seed;
    Ok(state)
}
