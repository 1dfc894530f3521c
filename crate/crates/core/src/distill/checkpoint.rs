//! JSON checkpoints of (architecture, parameters, vocabulary).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Architecture, StudentModel};
use super::vocab::TokenVocab;
use super::DistillError;
use crate::jsonl::Provenance;

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: u32,
    pub provenance: Provenance,
    pub arch: Architecture,
    pub theta: Vec<f64>,
    pub vocab: TokenVocab,
}

impl Checkpoint {
    pub fn new(model: &StudentModel, vocab: &TokenVocab, provenance: Provenance) -> Self {
        Self {
            format: CHECKPOINT_FORMAT,
            provenance,
            arch: model.arch,
            theta: model.theta.clone(),
            vocab: vocab.clone(),
        }
    }

    pub fn model(&self) -> Result<StudentModel, DistillError> {
        StudentModel::from_parts(self.arch, self.theta.clone())
    }

    /// Writes via a temporary file so a crash never leaves a partial checkpoint.
    pub fn save(&self, path: &Path) -> Result<(), DistillError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self).map_err(|e| DistillError::Input(e.to_string()))?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DistillError> {
        let c: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)
            .map_err(|e| DistillError::Input(format!("{}: {e}", path.display())))?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(DistillError::Input(format!("unsupported checkpoint format {}", c.format)));
        }
        if c.arch.vocab_size != c.vocab.len() {
            return Err(DistillError::Input("checkpoint vocabulary does not match architecture".into()));
        }
        c.model()?;
        Ok(c)
    }
}
