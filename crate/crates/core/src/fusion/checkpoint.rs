use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Adam, PolicyParams, PolicyShape, PpoConfig, PpoTrainer, TrainerState};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("layer `{name}` has shape {rows}x{cols}, expected {want_rows}x{want_cols}")]
    Shape {
        name: String,
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
}

/// One named parameter block, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerArray {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub ppo: PpoConfig,
    pub threshold: f64,
}

/// Versioned JSON snapshot of the policy, its optimiser and the batch
/// counter. Floats round-trip bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: CheckpointConfig,
    pub shape: PolicyShape,
    pub layers: Vec<LayerArray>,
    pub seed: u64,
    pub batch_counter: u64,
    pub adam: Adam,
}

impl Checkpoint {
    pub fn from_state(state: &TrainerState, threshold: f64) -> Self {
        let params = &state.trainer.params;
        let shape = params.shape();
        let mut theta = params.theta().iter().copied();
        let layers = shape
            .layers()
            .iter()
            .map(|&(name, rows, cols)| LayerArray {
                name: name.to_string(),
                rows,
                cols,
                data: (0..rows)
                    .map(|_| theta.by_ref().take(cols).collect())
                    .collect(),
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            config: CheckpointConfig {
                ppo: state.trainer.cfg,
                threshold,
            },
            shape,
            layers,
            seed: state.trainer.cfg.seed,
            batch_counter: state.batch_counter,
            adam: state.trainer.adam.clone(),
        }
    }

    pub fn params(&self) -> Result<PolicyParams, CheckpointError> {
        let expected = self.shape.layers();
        if expected.len() != self.layers.len() {
            return Err(CheckpointError::Malformed(format!(
                "expected {} layers, found {}",
                expected.len(),
                self.layers.len()
            )));
        }
        let mut theta = Vec::with_capacity(self.shape.len());
        for (layer, &(name, want_rows, want_cols)) in self.layers.iter().zip(&expected) {
            if layer.name != name {
                return Err(CheckpointError::Malformed(format!(
                    "expected layer `{name}`, found `{}`",
                    layer.name
                )));
            }
            let ragged = layer.data.len() != layer.rows || layer.data.iter().any(|r| r.len() != layer.cols);
            if ragged || layer.rows != want_rows || layer.cols != want_cols {
                return Err(CheckpointError::Shape {
                    name: layer.name.clone(),
                    rows: layer.data.len(),
                    cols: layer.data.first().map_or(0, Vec::len),
                    want_rows,
                    want_cols,
                });
            }
            theta.extend(layer.data.iter().flatten());
        }
        PolicyParams::from_flat(self.shape, theta).map_err(|e| CheckpointError::Malformed(e.to_string()))
    }

    pub fn trainer_state(&self) -> Result<TrainerState, CheckpointError> {
        let params = self.params()?;
        if self.adam.m.len() != params.theta().len() || self.adam.v.len() != params.theta().len() {
            return Err(CheckpointError::Malformed("optimiser state length mismatch".into()));
        }
        Ok(TrainerState {
            trainer: PpoTrainer {
                params,
                adam: self.adam.clone(),
                cfg: self.config.ppo,
            },
            batch_counter: self.batch_counter,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let found = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| CheckpointError::Malformed("missing version".into()))? as u32;
        if found != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found,
                expected: CHECKPOINT_VERSION,
            });
        }
        let ckpt: Checkpoint =
            serde_json::from_value(value).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        ckpt.params()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        fs::write(path, self.to_json()).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}
