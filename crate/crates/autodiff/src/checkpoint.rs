//! JSON parameter checkpoints: a versioned header, free-form metadata, named
//! flat arrays with shapes and optional optimizer state.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adam::{Adam, AdamConfig, AdamState};
use crate::error::CheckpointError;
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "teamsched-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NamedArray {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OptimizerRecord {
    config: AdamConfig,
    state: AdamState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FileLayout {
    format: String,
    version: u32,
    #[serde(default)]
    meta: Value,
    params: Vec<NamedArray>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<OptimizerRecord>,
}

/// Contents of a checkpoint file.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: Value,
    pub params: ParamStore,
    pub optimizer: Option<Adam>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String, CheckpointError> {
        let layout = FileLayout {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            meta: self.meta.clone(),
            params: self
                .params
                .iter()
                .map(|(_, name, t)| NamedArray {
                    name: name.to_string(),
                    shape: [t.rows(), t.cols()],
                    data: t.data().to_vec(),
                })
                .collect(),
            optimizer: self.optimizer.as_ref().map(|a| OptimizerRecord {
                config: a.config,
                state: a.state().clone(),
            }),
        };
        Ok(serde_json::to_string(&layout)?)
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let layout: FileLayout = serde_json::from_str(text)?;
        if layout.format != CHECKPOINT_FORMAT || layout.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Format {
                format: layout.format,
                version: layout.version,
            });
        }
        let mut params = ParamStore::new();
        for p in layout.params {
            if params.id(&p.name).is_some() {
                return Err(CheckpointError::Parameter {
                    name: p.name,
                    detail: "duplicate name".into(),
                });
            }
            let t = Tensor::new(p.shape[0], p.shape[1], p.data).map_err(|e| CheckpointError::Parameter {
                name: p.name.clone(),
                detail: e.to_string(),
            })?;
            params.add(p.name, t);
        }
        let optimizer = match layout.optimizer {
            Some(rec) => {
                let consistent = rec.state.first.len() == params.len()
                    && rec.state.second.len() == params.len()
                    && params.iter().all(|(id, _, t)| {
                        rec.state.first[id.index()].shape() == t.shape()
                            && rec.state.second[id.index()].shape() == t.shape()
                    });
                if !consistent {
                    return Err(CheckpointError::Parameter {
                        name: "optimizer".into(),
                        detail: "moment shapes do not match the parameters".into(),
                    });
                }
                Some(Adam::from_state(rec.config, rec.state))
            }
            None => None,
        };
        Ok(Self {
            meta: layout.meta,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let text = self.to_json()?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|source| io_error(dir, source))?;
        }
        fs::write(path, text).map_err(|source| io_error(path, source))
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(path).map_err(|source| io_error(path, source))?;
        Self::from_json(&text)
    }

    /// Copies the stored values into `target`, which must have exactly the
    /// same parameter names and shapes.
    pub fn restore_into(&self, target: &mut ParamStore) -> Result<(), CheckpointError> {
        if target.len() != self.params.len() {
            return Err(CheckpointError::Parameter {
                name: "*".into(),
                detail: format!(
                    "checkpoint has {} parameters, model has {}",
                    self.params.len(),
                    target.len()
                ),
            });
        }
        for (_, name, t) in self.params.iter() {
            let id = target.id(name).ok_or_else(|| CheckpointError::Parameter {
                name: name.into(),
                detail: "not present in the model".into(),
            })?;
            let dst = target.get_mut(id);
            if dst.shape() != t.shape() {
                return Err(CheckpointError::Parameter {
                    name: name.into(),
                    detail: format!("shape {:?} but model expects {:?}", t.shape(), dst.shape()),
                });
            }
            *dst = t.clone();
        }
        Ok(())
    }
}

fn io_error(path: &Path, source: std::io::Error) -> CheckpointError {
    CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}
