//! JSON run configuration. Every key is optional; command-line flags win.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use crate::UsageError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub theta: Option<f64>,
    pub n: Option<u32>,
    #[serde(alias = "n_t")]
    pub nt: Option<u32>,
    pub m: Option<u32>,
    pub snr_db: Option<f64>,
    pub eps: Option<f64>,
    pub sigma2: Option<f64>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    pub batch: Option<u64>,
    pub sampler: Option<String>,
    pub literal: Option<bool>,
    pub methods: Option<Vec<String>>,
    pub clamp_rate: Option<bool>,
    pub per_channel_use: Option<bool>,
    pub sweep: Option<String>,
    pub grid: Option<GridValue>,
    pub grid_m: Option<GridValue>,
    pub grid_snr_db: Option<GridValue>,
}

/// A grid given either as the command-line string form or as a JSON array.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridValue {
    Text(String),
    Values(Vec<f64>),
}

impl GridValue {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        match self {
            GridValue::Text(s) => crate::grid::parse_grid(s),
            GridValue::Values(v) => Ok(v.clone()),
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }
}
