//! JSON instance documents.
//!
//! ```json
//! { "n": 2, "m": 1, "b": [0.5],
//!   "blocks": [ { "A": [[1.0, 0.0]], "app": "quadratic-box", "params": { ... } } ] }
//! ```
//!
//! `A` is stored as a list of rows. Writing a loaded document reproduces it
//! byte for byte.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apps::oracle_from_descriptor;
use crate::model::{BlockDescriptor, BlockSpec, ModelError, ProblemInstance};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("block {0} has no serializable description")]
    NotSerializable(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub n: usize,
    pub m: usize,
    pub b: Vec<f64>,
    pub blocks: Vec<BlockDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDoc {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub app: String,
    pub params: serde_json::Value,
}

impl InstanceDoc {
    pub fn from_instance(inst: &ProblemInstance) -> Result<Self, IoError> {
        let blocks = inst
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, blk)| {
                let desc = blk.oracle.descriptor().ok_or(IoError::NotSerializable(i))?;
                let a = (0..blk.a.nrows())
                    .map(|r| blk.a.row(r).iter().copied().collect())
                    .collect();
                Ok(BlockDoc {
                    a,
                    app: desc.app,
                    params: desc.params,
                })
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        Ok(Self {
            n: inst.n(),
            m: inst.m(),
            b: inst.b().to_vec(),
            blocks,
        })
    }

    pub fn to_instance(&self) -> Result<ProblemInstance, ModelError> {
        if self.blocks.len() != self.n {
            return Err(ModelError::Invalid(format!(
                "n = {} but {} blocks listed",
                self.n,
                self.blocks.len()
            )));
        }
        if self.b.len() != self.m {
            return Err(ModelError::Invalid(format!(
                "m = {} but b has {} entries",
                self.m,
                self.b.len()
            )));
        }
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, bd)| {
                let cols = bd.a.first().map_or(0, Vec::len);
                if bd.a.len() != self.m || bd.a.iter().any(|r| r.len() != cols) {
                    return Err(ModelError::Invalid(format!(
                        "block {i}: ragged or mis-sized A"
                    )));
                }
                let a = DMatrix::from_fn(self.m, cols, |r, c| bd.a[r][c]);
                let oracle = oracle_from_descriptor(&BlockDescriptor {
                    app: bd.app.clone(),
                    params: bd.params.clone(),
                })
                .map_err(|source| ModelError::Oracle { block: i, source })?;
                Ok(BlockSpec::new(a, oracle))
            })
            .collect::<Result<Vec<_>, _>>()?;
        ProblemInstance::new(blocks, self.b.clone())
    }
}

pub fn to_json(inst: &ProblemInstance) -> Result<String, IoError> {
    Ok(serde_json::to_string(&InstanceDoc::from_instance(inst)?)?)
}

pub fn from_json(text: &str) -> Result<ProblemInstance, IoError> {
    let doc: InstanceDoc = serde_json::from_str(text)?;
    Ok(doc.to_instance()?)
}

pub fn save(inst: &ProblemInstance, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, to_json(inst)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ProblemInstance, IoError> {
    from_json(&std::fs::read_to_string(path)?)
}
