use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Scaler;
use crate::error::{Error, Result};

/// Everything needed to reproduce a prepared dataset and undo its normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub node_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub interval_minutes: u32,
    pub xi: f64,
    pub epsilon: f64,
    pub total_steps: usize,
    /// Original indices of time steps discarded for missing values.
    pub dropped_steps: Vec<usize>,
    pub dropped_timestamps: Vec<String>,
    /// Raw time indices `[train_end, val_end]` after dropping.
    pub split_boundaries: [usize; 2],
    /// Window counts for train, val, test.
    pub split_sizes: [usize; 3],
    pub t_in: usize,
    pub horizon: usize,
    pub scaler: Scaler,
    pub seed: u64,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
