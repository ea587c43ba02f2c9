//! JSON checkpoints: the configuration, vocabulary sizes and every parameter
//! by name, with values written as shortest round-trip decimals.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{init_learner, LearnerConfig, Seq2SeqModel};
use crate::error::{Error, Result};
use crate::tensor::Array;
use crate::Scalar;

pub const CHECKPOINT_FORMAT: &str = "seqbias-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: LearnerConfig,
    pub input_vocab: usize,
    pub output_vocab: usize,
    pub params: Vec<StoredParam>,
}

impl<S: Scalar> Seq2SeqModel<S> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            input_vocab: self.input_vocab,
            output_vocab: self.output_vocab,
            params: self
                .store
                .iter()
                .map(|(_, p)| StoredParam {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    values: p.value.to_f64(),
                })
                .collect(),
        }
    }

    /// Rebuilds the architecture from the stored configuration and fills in
    /// every parameter; names and shapes must match exactly.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let mut model = init_learner::<S>(&ckpt.config, ckpt.input_vocab, ckpt.output_vocab, 0)?;
        if model.store.len() != ckpt.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, architecture has {}",
                ckpt.params.len(),
                model.store.len()
            )));
        }
        for stored in &ckpt.params {
            let id = model
                .store
                .find(&stored.name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {}", stored.name)))?;
            if model.store.value(id).shape() != stored.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    stored.name,
                    stored.shape,
                    model.store.value(id).shape()
                )));
            }
            *model.store.value_mut(id) = Array::from_f64(&stored.shape, &stored.values)?;
        }
        Ok(model)
    }

    pub fn save(&self, out: impl Write) -> Result<()> {
        serde_json::to_writer(out, &self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(input: impl Read) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_reader(input)?;
        Self::from_checkpoint(&ckpt)
    }
}
