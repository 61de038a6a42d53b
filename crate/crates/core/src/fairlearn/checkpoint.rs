//! JSON model checkpoints.
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "task": "classification",
//!   "architecture": {"mlp": {"hidden": [64]}},
//!   "link": "sigmoid",
//!   "input_columns": ["x1", "x2", "a"],
//!   "layers": [{"rows": 64, "cols": 3, "weights": [...row-major...], "bias": [...]}, ...],
//!   "config": {...training configuration...},
//!   "config_hash": "<sha256 hex of the compact JSON encoding of config>"
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so loading a saved
//! checkpoint reproduces every parameter bit for bit.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{Architecture, Layer, Link, ModelParams};
use super::train::TrainConfig;
use crate::data::Task;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerRecord {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub task: Task,
    pub architecture: Architecture,
    pub link: Link,
    pub input_columns: Vec<String>,
    layers: Vec<LayerRecord>,
    pub config: TrainConfig,
    pub config_hash: String,
}

fn config_hash(config: &TrainConfig) -> Result<String> {
    let bytes = serde_json::to_vec(config).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Checkpoint {
    pub fn new(
        model: &ModelParams,
        task: Task,
        config: &TrainConfig,
        input_columns: Vec<String>,
    ) -> Result<Self> {
        if input_columns.len() != model.n_inputs() {
            return Err(Error::Dimension(format!(
                "{} input column names for a model with {} inputs",
                input_columns.len(),
                model.n_inputs()
            )));
        }
        let layers = model
            .layers
            .iter()
            .map(|l| LayerRecord {
                rows: l.weights.nrows(),
                cols: l.weights.ncols(),
                weights: l.weights.transpose().iter().copied().collect(),
                bias: l.bias.iter().copied().collect(),
            })
            .collect();
        Ok(Self {
            format_version: FORMAT_VERSION,
            task,
            architecture: model.architecture.clone(),
            link: model.link,
            input_columns,
            layers,
            config: config.clone(),
            config_hash: config_hash(config)?,
        })
    }

    pub fn model(&self) -> Result<ModelParams> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (k, r) in self.layers.iter().enumerate() {
            if r.weights.len() != r.rows * r.cols || r.bias.len() != r.rows {
                return Err(Error::Checkpoint(format!(
                    "layer {k} has inconsistent sizes"
                )));
            }
            if k > 0 && self.layers[k - 1].rows != r.cols {
                return Err(Error::Checkpoint(format!(
                    "layer {k} does not chain to layer {}",
                    k - 1
                )));
            }
            layers.push(Layer {
                weights: DMatrix::from_row_slice(r.rows, r.cols, &r.weights),
                bias: DVector::from_column_slice(&r.bias),
            });
        }
        if layers.is_empty() {
            return Err(Error::Checkpoint("no layers".into()));
        }
        let model = ModelParams {
            architecture: self.architecture.clone(),
            link: self.link,
            layers,
        };
        if !model.is_finite() {
            return Err(Error::Checkpoint("non-finite parameters".into()));
        }
        Ok(model)
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let text =
        serde_json::to_string_pretty(checkpoint).map_err(|e| Error::Checkpoint(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint, rejecting unknown format versions and configs whose
/// hash does not match.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if ckpt.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            ckpt.format_version
        )));
    }
    if config_hash(&ckpt.config)? != ckpt.config_hash {
        return Err(Error::Checkpoint("config hash mismatch".into()));
    }
    ckpt.model()?;
    Ok(ckpt)
}
