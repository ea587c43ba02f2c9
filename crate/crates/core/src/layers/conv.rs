use crate::error::{Error, Result};
use crate::tensor::{Array, Graph, NodeId, ParamId, ParamStore, RandomStream};
use crate::Scalar;

use super::uniform_weight;

/// Gated linear unit over columns: the first half gated by the sigmoid of
/// the second half.
pub fn glu<S: Scalar>(g: &mut Graph<S>, x: NodeId) -> Result<NodeId> {
    let cols = *g.shape(x).last().unwrap_or(&0);
    if cols % 2 != 0 {
        return Err(Error::Dimension(format!("glu needs an even channel count, got {cols}")));
    }
    let half = cols / 2;
    let value = g.slice_cols(x, 0, half)?;
    let gate = g.slice_cols(x, half, half)?;
    let gate = g.sigmoid(gate)?;
    g.mul(value, gate)
}

/// Convolution producing `2 * filters` channels followed by [`glu`].
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub in_channels: usize,
    pub filters: usize,
    pub width: usize,
    /// `(width * in_channels) x (2 * filters)`.
    pub kernel: ParamId,
    pub bias: ParamId,
}

impl ConvBlock {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut RandomStream,
        name: &str,
        in_channels: usize,
        filters: usize,
        width: usize,
    ) -> Result<Self> {
        if width == 0 || filters == 0 {
            return Err(Error::Config("convolution needs positive width and filters".into()));
        }
        let kernel = store.add(
            format!("{name}.kernel"),
            uniform_weight(rng, width * in_channels, 2 * filters),
        );
        let bias = store.add(format!("{name}.bias"), Array::zeros(&[1, 2 * filters]));
        Ok(Self {
            in_channels,
            filters,
            width,
            kernel,
            bias,
        })
    }

    /// `causal` pads only on the left so position `t` sees `t - width + 1 ..= t`;
    /// otherwise the padding is split around the window.
    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        x: NodeId,
        causal: bool,
    ) -> Result<NodeId> {
        let (left, right) = if causal {
            (self.width - 1, 0)
        } else {
            ((self.width - 1) / 2, self.width / 2)
        };
        let k = g.param(store, self.kernel);
        let b = g.param(store, self.bias);
        let y = g.conv1d(x, k, self.width, left, right)?;
        let y = g.add(y, b)?;
        glu(g, y)
    }
}
