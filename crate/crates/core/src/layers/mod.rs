//! Parameterized layers composed by the learners.
//!
//! Layers are plain containers of [`ParamId`]s. Construction registers the
//! parameters in a [`ParamStore`] and draws their initial values; forward
//! methods append nodes to a [`Graph`] and never mutate the store.
//!
//! Initialization: weight matrices uniform in `±1/sqrt(fan_in)`, biases zero,
//! embedding and learned position tables normal with mean 0 and standard
//! deviation 0.1, layer-norm gains one.

mod attention;
mod conv;
mod embedding;
mod feedforward;
mod lstm;
mod positional;

pub use attention::{AdditiveAttention, AttentionVariant, MultiHeadAttention, PreparedKeys};
pub use conv::{glu, ConvBlock};
pub use embedding::EmbeddingTable;
pub use feedforward::{FeedForward, LayerNorm};
pub use lstm::{lstm_cell_step, LstmCell, LstmState, PreparedCell};
pub use positional::{positions, sinusoidal, PositionKind, PositionalEncoding, LEARNED_MAX_LEN};

use crate::error::Result;
use crate::tensor::{Array, Graph, NodeId, ParamId, ParamStore, RandomStream};
use crate::Scalar;

pub(crate) const EMBEDDING_STD: f64 = 0.1;

pub(crate) fn uniform_weight<S: Scalar>(rng: &mut RandomStream, rows: usize, cols: usize) -> Array<S> {
    let bound = 1.0 / (rows as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| S::of(rng.uniform_range(-bound, bound)))
        .collect();
    Array::matrix(rows, cols, data).expect("positive extents")
}

pub(crate) fn normal_table<S: Scalar>(rng: &mut RandomStream, rows: usize, cols: usize) -> Array<S> {
    let data = (0..rows * cols)
        .map(|_| S::of(rng.normal(0.0, EMBEDDING_STD)))
        .collect();
    Array::matrix(rows, cols, data).expect("positive extents")
}

/// Affine map `x W + b`, or `x W` without a bias.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Linear {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut RandomStream,
        name: &str,
        input_dim: usize,
        output_dim: usize,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            uniform_weight(rng, input_dim, output_dim),
        );
        let bias = Some(store.add(format!("{name}.bias"), Array::zeros(&[1, output_dim])));
        Self {
            weight,
            bias,
            input_dim,
            output_dim,
        }
    }

    pub fn unbiased<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut RandomStream,
        name: &str,
        input_dim: usize,
        output_dim: usize,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            uniform_weight(rng, input_dim, output_dim),
        );
        Self {
            weight,
            bias: None,
            input_dim,
            output_dim,
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        x: NodeId,
    ) -> Result<NodeId> {
        let w = g.param(store, self.weight);
        let xw = g.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(store, b);
                g.add(xw, b)
            }
            None => Ok(xw),
        }
    }
}
