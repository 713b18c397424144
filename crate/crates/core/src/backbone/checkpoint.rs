use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ForecastModel;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned model snapshot: configuration, every weight tensor and the graph state
/// (constant adjacency, φ, dropout rate, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub epoch: Option<usize>,
    pub model: ForecastModel,
}

impl Checkpoint {
    pub fn new(model: ForecastModel, epoch: Option<usize>) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            epoch,
            model,
        }
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let text = serde_json::to_string(ckpt)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Rejects any version other than [`CHECKPOINT_VERSION`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let probe: serde_json::Value = serde_json::from_str(&text)?;
    let version = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    Ok(serde_json::from_value(probe)?)
}
