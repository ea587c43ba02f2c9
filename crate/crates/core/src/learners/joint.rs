use crate::error::Result;
use crate::layers::{EmbeddingTable, Linear, PositionalEncoding};
use crate::tensor::{Graph, Mask, NodeId, ParamStore, RandomStream};
use crate::Scalar;

use super::transformer::{embed, EncoderLayer};
use super::LearnerConfig;

/// Joint source-target self-attention: source and target rows pass through
/// the same layers, stacked as one sequence. Each layer's mixed attention
/// lets source rows see the whole source and target rows see the whole
/// source plus the target prefix up to themselves, so the target attends to
/// the source representation of the same layer.
#[derive(Clone, Debug)]
pub(crate) struct JointS2s {
    src_emb: EmbeddingTable,
    tgt_emb: EmbeddingTable,
    pos: PositionalEncoding,
    layers: Vec<EncoderLayer>,
    out: Linear,
}

impl JointS2s {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut RandomStream,
        config: &LearnerConfig,
        input_vocab: usize,
        output_vocab: usize,
    ) -> Result<Self> {
        let (d, h, ff) = (config.embedding, config.heads, config.hidden);
        let src_emb = EmbeddingTable::new(store, rng, "source.embedding", input_vocab, d);
        let tgt_emb = EmbeddingTable::new(store, rng, "target.embedding", output_vocab + 1, d);
        let layers = (0..config.layers)
            .map(|l| EncoderLayer::new(store, rng, &format!("layer{l}"), d, h, ff))
            .collect::<Result<Vec<_>>>()?;
        let out = Linear::new(store, rng, "output", d, output_vocab);
        Ok(Self {
            src_emb,
            tgt_emb,
            pos: PositionalEncoding::sinusoidal(d),
            layers,
            out,
        })
    }

    pub fn logits<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        x: &[usize],
        decoder_inputs: &[usize],
    ) -> Result<NodeId> {
        let src = embed(g, store, &self.src_emb, &self.pos, x)?;
        let tgt = embed(g, store, &self.tgt_emb, &self.pos, decoder_inputs)?;
        let mut h = g.concat_rows(&[src, tgt])?;
        let mask = Mask::Prefix(x.len());
        for layer in &self.layers {
            h = layer.forward(g, store, h, mask)?;
        }
        let target = g.slice_rows(h, x.len(), decoder_inputs.len())?;
        self.out.forward(g, store, target)
    }
}
