use crate::error::Result;
use crate::tensor::{Array, Graph, NodeId, ParamId, ParamStore, RandomStream};
use crate::Scalar;

use super::Linear;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `relu(x W1 + b1) W2 + b2`.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut RandomStream,
        name: &str,
        dim: usize,
        hidden: usize,
    ) -> Self {
        Self {
            inner: Linear::new(store, rng, &format!("{name}.inner"), dim, hidden),
            outer: Linear::new(store, rng, &format!("{name}.outer"), hidden, dim),
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        x: NodeId,
    ) -> Result<NodeId> {
        let h = self.inner.forward(g, store, x)?;
        let h = g.relu(h)?;
        let h = g.dropout(h)?;
        self.outer.forward(g, store, h)
    }
}

/// Row standardization followed by a learned gain and shift.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub dim: usize,
    pub gain: ParamId,
    pub shift: ParamId,
}

impl LayerNorm {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, dim: usize) -> Self {
        Self {
            dim,
            gain: store.add(format!("{name}.gain"), Array::filled(&[1, dim], S::one())),
            shift: store.add(format!("{name}.shift"), Array::zeros(&[1, dim])),
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        x: NodeId,
    ) -> Result<NodeId> {
        let n = g.layer_norm(x, LAYER_NORM_EPS)?;
        let gain = g.param(store, self.gain);
        let shift = g.param(store, self.shift);
        let y = g.mul(n, gain)?;
        g.add(y, shift)
    }
}
