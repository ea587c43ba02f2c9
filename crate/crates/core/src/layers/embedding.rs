use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, ParamId, ParamStore, RandomStream};
use crate::Scalar;

use super::normal_table;

/// One row per vocabulary entry, end-of-sequence included.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub vocab_size: usize,
    pub dim: usize,
    pub weight: ParamId,
}

impl EmbeddingTable {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut RandomStream,
        name: &str,
        vocab_size: usize,
        dim: usize,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), normal_table(rng, vocab_size, dim));
        Self {
            vocab_size,
            dim,
            weight,
        }
    }

    /// `tokens.len() x dim` matrix of embeddings.
    pub fn lookup<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        tokens: &[usize],
    ) -> Result<NodeId> {
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.vocab_size) {
            return Err(Error::Token {
                token: t,
                side: "embedding",
                size: self.vocab_size,
            });
        }
        let w = g.param(store, self.weight);
        g.gather(w, tokens)
    }
}
