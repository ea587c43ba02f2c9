use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Array, Graph, NodeId, ParamId, ParamStore, RandomStream};
use crate::Scalar;

use super::normal_table;

pub const LEARNED_MAX_LEN: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionKind {
    Sinusoidal,
    Learned,
}

/// `length x dim` table with `sin(p / 10000^(2i/dim))` in column `2i` and the
/// matching cosine in column `2i + 1`.
pub fn sinusoidal<S: Scalar>(length: usize, dim: usize) -> Result<Array<S>> {
    if length == 0 || dim == 0 {
        return Err(Error::Dimension("positions need positive length and dimension".into()));
    }
    let mut data = Vec::with_capacity(length * dim);
    for p in 0..length {
        for j in 0..dim {
            let i = (j / 2) as f64;
            let angle = p as f64 / 10000f64.powf(2.0 * i / dim as f64);
            data.push(S::of(if j % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Array::matrix(length, dim, data)
}

#[derive(Clone, Debug)]
pub struct PositionalEncoding {
    pub kind: PositionKind,
    pub max_len: usize,
    pub dim: usize,
    /// Present for the learned kind only.
    pub table: Option<ParamId>,
}

impl PositionalEncoding {
    pub fn sinusoidal(dim: usize) -> Self {
        Self {
            kind: PositionKind::Sinusoidal,
            max_len: usize::MAX,
            dim,
            table: None,
        }
    }

    pub fn learned<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut RandomStream,
        name: &str,
        max_len: usize,
        dim: usize,
    ) -> Self {
        let table = store.add(format!("{name}.positions"), normal_table(rng, max_len, dim));
        Self {
            kind: PositionKind::Learned,
            max_len,
            dim,
            table: Some(table),
        }
    }

    /// `length x dim` node of position vectors starting at `offset`.
    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        offset: usize,
        length: usize,
    ) -> Result<NodeId> {
        if offset + length > self.max_len {
            return Err(Error::Dimension(format!(
                "position {} exceeds the table of {} rows",
                offset + length - 1,
                self.max_len
            )));
        }
        match self.table {
            None => {
                let all = sinusoidal::<S>(offset + length, self.dim)?;
                let rows = all.data()[offset * self.dim..].to_vec();
                Ok(g.input(Array::matrix(length, self.dim, rows)?))
            }
            Some(id) => {
                let t = g.param(store, id);
                let idx: Vec<usize> = (offset..offset + length).collect();
                g.gather(t, &idx)
            }
        }
    }
}

/// Position vectors for `length` positions as a graph node.
pub fn positions<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParamStore<S>,
    encoding: &PositionalEncoding,
    length: usize,
) -> Result<NodeId> {
    encoding.forward(g, store, 0, length)
}
