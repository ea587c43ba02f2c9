use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Array, Graph, Mask, NodeId, ParamId, ParamStore, RandomStream};
use crate::Scalar;

use super::{uniform_weight, Linear};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionVariant {
    Additive,
    MultiHead,
}

/// Additive attention: `score_j = v . tanh([q; k_j] W + b)`, context is the
/// weighted sum of `k_j W_v`.
#[derive(Clone, Debug)]
pub struct AdditiveAttention {
    pub query_dim: usize,
    pub key_dim: usize,
    pub attention_dim: usize,
    /// `(query + key) x attention` joint projection.
    pub joint: ParamId,
    pub bias: ParamId,
    /// `attention x 1` scoring vector.
    pub score: ParamId,
    /// `key x key` value projection.
    pub value: ParamId,
}

/// Key-side projections computed once per source sequence.
#[derive(Clone, Copy, Debug)]
pub struct PreparedKeys {
    keys_projected: NodeId,
    values: NodeId,
    query_weight: NodeId,
    score: NodeId,
    len: usize,
}

impl PreparedKeys {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl AdditiveAttention {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut RandomStream,
        name: &str,
        query_dim: usize,
        key_dim: usize,
        attention_dim: usize,
    ) -> Self {
        let joint = store.add(
            format!("{name}.joint"),
            uniform_weight(rng, query_dim + key_dim, attention_dim),
        );
        let bias = store.add(format!("{name}.bias"), Array::zeros(&[1, attention_dim]));
        let score = store.add(format!("{name}.score"), uniform_weight(rng, attention_dim, 1));
        let value = store.add(format!("{name}.value"), uniform_weight(rng, key_dim, key_dim));
        Self {
            query_dim,
            key_dim,
            attention_dim,
            joint,
            bias,
            score,
            value,
        }
    }

    /// Projects the keys (one `1 x key` node per position).
    pub fn prepare<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        keys: &[NodeId],
    ) -> Result<PreparedKeys> {
        if keys.is_empty() {
            return Err(Error::EmptySequence("attention keys".into()));
        }
        let k = g.concat_rows(keys)?;
        self.prepare_matrix(g, store, k)
    }

    /// Same as [`prepare`](Self::prepare) for keys stacked as `len x key`.
    pub fn prepare_matrix<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        keys: NodeId,
    ) -> Result<PreparedKeys> {
        let shape = g.shape(keys).to_vec();
        if shape.len() != 2 || shape[1] != self.key_dim {
            return Err(Error::Dimension(format!(
                "attention keys have shape {shape:?}, expected [_, {}]",
                self.key_dim
            )));
        }
        let joint = g.param(store, self.joint);
        let query_weight = g.slice_rows(joint, 0, self.query_dim)?;
        let key_weight = g.slice_rows(joint, self.query_dim, self.key_dim)?;
        let bias = g.param(store, self.bias);
        let kw = g.matmul(keys, key_weight)?;
        let keys_projected = g.add(kw, bias)?;
        let wv = g.param(store, self.value);
        let values = g.matmul(keys, wv)?;
        let score = g.param(store, self.score);
        Ok(PreparedKeys {
            keys_projected,
            values,
            query_weight,
            score,
            len: shape[0],
        })
    }

    /// Returns the `1 x key` context and the `1 x len` weights.
    pub fn attend<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        keys: &PreparedKeys,
        query: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        if g.shape(query) != [1, self.query_dim] {
            return Err(Error::Dimension(format!(
                "attention query has shape {:?}, expected [1, {}]",
                g.shape(query),
                self.query_dim
            )));
        }
        let q = g.matmul(query, keys.query_weight)?;
        let pre = g.add(keys.keys_projected, q)?;
        let act = g.tanh(pre)?;
        let scores = g.matmul(act, keys.score)?;
        let scores = g.transpose(scores)?;
        let weights = g.softmax(scores)?;
        let context = g.matmul(weights, keys.values)?;
        Ok((context, weights))
    }

    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        query: NodeId,
        keys: &[NodeId],
    ) -> Result<(NodeId, NodeId)> {
        let prepared = self.prepare(g, store, keys)?;
        self.attend(g, &prepared, query)
    }
}

/// Scaled dot-product attention split over `heads` heads, with input and
/// output projections. The key projection has no bias: a shared shift of
/// every score cancels in the softmax.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub dim: usize,
    pub heads: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl MultiHeadAttention {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut RandomStream,
        name: &str,
        dim: usize,
        heads: usize,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Dimension(format!(
                "model dimension {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            dim,
            heads,
            query: Linear::new(store, rng, &format!("{name}.query"), dim, dim),
            key: Linear::unbiased(store, rng, &format!("{name}.key"), dim, dim),
            value: Linear::new(store, rng, &format!("{name}.value"), dim, dim),
            output: Linear::new(store, rng, &format!("{name}.output"), dim, dim),
        })
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        queries: NodeId,
        keys: NodeId,
        values: NodeId,
        mask: Mask,
    ) -> Result<NodeId> {
        Ok(self.forward_with_weights(g, store, queries, keys, values, mask)?.0)
    }

    /// Also returns each head's `queries x keys` weight matrix.
    pub fn forward_with_weights<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        queries: NodeId,
        keys: NodeId,
        values: NodeId,
        mask: Mask,
    ) -> Result<(NodeId, Vec<NodeId>)> {
        for (what, node) in [("queries", queries), ("keys", keys), ("values", values)] {
            let shape = g.shape(node);
            if shape.len() != 2 || shape[1] != self.dim {
                return Err(Error::Dimension(format!(
                    "attention {what} have shape {shape:?}, expected [_, {}]",
                    self.dim
                )));
            }
        }
        if g.shape(keys)[0] != g.shape(values)[0] {
            return Err(Error::Dimension("keys and values differ in length".into()));
        }
        let q = self.query.forward(g, store, queries)?;
        let k = self.key.forward(g, store, keys)?;
        let v = self.value.forward(g, store, values)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outputs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    g.slice_cols(q, h * dh, dh)?,
                    g.slice_cols(k, h * dh, dh)?,
                    g.slice_cols(v, h * dh, dh)?,
                )
            };
            let scores = g.scaled_dot(qh, kh, scale)?;
            let w = g.masked_softmax(scores, mask)?;
            weights.push(w);
            let w = g.dropout(w)?;
            outputs.push(g.matmul(w, vh)?);
        }
        let joined = g.concat_cols(&outputs)?;
        let out = self.output.forward(g, store, joined)?;
        Ok((out, weights))
    }
}
