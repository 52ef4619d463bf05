//! Named parameter collections and the on-disk checkpoint format.
//!
//! A checkpoint is a JSON document:
//!
//! ```text
//! {"magic": "CSAGN-PARAMS", "version": 1, "meta": <any>,
//!  "params": {"<name>": {"shape": [..], "values": [..]}, ...}}
//! ```
//!
//! `f64` values are written in shortest round-trip form, so save/load is exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &str = "CSAGN-PARAMS";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Ordered map from parameter name to tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    /// Adds a parameter and returns its slot. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::Checkpoint(format!(
                "duplicate parameter {name}"
            )));
        }
        self.entries.push((name.clone(), value));
        self.index.insert(name, self.entries.len() - 1);
        Ok(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.slot(name).map(|i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = self.slot(name)?;
        Some(&mut self.entries[i].1)
    }

    pub fn at(&self, slot: usize) -> &Tensor {
        &self.entries[slot].1
    }

    pub fn at_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.entries[slot].1
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.entries[slot].0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn num_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }

    /// Registers every parameter as a trainable leaf of `graph`, in slot order.
    pub fn bind(&self, graph: &mut Graph) -> Vec<Var> {
        self.entries
            .iter()
            .map(|(_, t)| graph.param(t.clone()))
            .collect()
    }

    /// Gradients of the bound leaves; parameters the loss never reached get zeros.
    pub fn collect_grads(&self, graph: &Graph, vars: &[Var]) -> Vec<Tensor> {
        self.entries
            .iter()
            .zip(vars)
            .map(|((_, t), v)| {
                graph
                    .grad(*v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(t.shape()))
            })
            .collect()
    }

    /// Copies values for every name in `self` from `other`, checking shapes.
    pub fn assign_from(&mut self, other: &ParamStore) -> Result<()> {
        for (name, value) in &mut self.entries {
            let src = other
                .get(name)
                .ok_or_else(|| TensorError::Checkpoint(format!("missing parameter {name}")))?;
            if src.shape() != value.shape() {
                return Err(TensorError::Checkpoint(format!(
                    "parameter {name}: expected shape {:?}, found {:?}",
                    value.shape(),
                    src.shape()
                )));
            }
            *value = src.clone();
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, meta: &serde_json::Value) -> Result<()> {
        let file = CheckpointFile {
            magic: CHECKPOINT_MAGIC.to_string(),
            version: CHECKPOINT_VERSION,
            meta: meta.clone(),
            params: self
                .entries
                .iter()
                .map(|(n, t)| {
                    (
                        n.clone(),
                        StoredTensor {
                            shape: t.shape().to_vec(),
                            values: t.data().to_vec(),
                        },
                    )
                })
                .collect(),
        };
        fs::write(path, serde_json::to_vec(&file)?)?;
        Ok(())
    }

    /// Reads a checkpoint; parameters come back in name order.
    pub fn load(path: &Path) -> Result<(ParamStore, serde_json::Value)> {
        let bytes = fs::read(path)?;
        let file: CheckpointFile = serde_json::from_slice(&bytes)?;
        if file.magic != CHECKPOINT_MAGIC {
            return Err(TensorError::Checkpoint(format!(
                "bad magic {:?}",
                file.magic
            )));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(TensorError::Checkpoint(format!(
                "unsupported version {}",
                file.version
            )));
        }
        let mut store = ParamStore::new();
        for (name, t) in file.params {
            store.insert(name, Tensor::new(t.shape, t.values)?)?;
        }
        Ok((store, file.meta))
    }
}

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    magic: String,
    version: u32,
    #[serde(default)]
    meta: serde_json::Value,
    params: BTreeMap<String, StoredTensor>,
}
