use crate::error::Result;
use crate::layers::{EmbeddingTable, FeedForward, LayerNorm, Linear, MultiHeadAttention, PositionalEncoding};
use crate::tensor::{Graph, Mask, NodeId, ParamStore, RandomStream};
use crate::Scalar;

use super::LearnerConfig;

/// Self-attention and feed-forward sublayers, each wrapped as
/// `norm(x + dropout(sublayer(x)))`.
#[derive(Clone, Debug)]
pub(crate) struct EncoderLayer {
    attention: MultiHeadAttention,
    norm1: LayerNorm,
    ff: FeedForward,
    norm2: LayerNorm,
}

impl EncoderLayer {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut RandomStream,
        name: &str,
        dim: usize,
        heads: usize,
        ff: usize,
    ) -> Result<Self> {
        Ok(Self {
            attention: MultiHeadAttention::new(store, rng, &format!("{name}.attention"), dim, heads)?,
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim),
            ff: FeedForward::new(store, rng, &format!("{name}.ff"), dim, ff),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim),
        })
    }

    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        x: NodeId,
        mask: Mask,
    ) -> Result<NodeId> {
        let a = self.attention.forward(g, store, x, x, x, mask)?;
        let x = residual(g, store, &self.norm1, x, a)?;
        let f = self.ff.forward(g, store, x)?;
        residual(g, store, &self.norm2, x, f)
    }
}

#[derive(Clone, Debug)]
struct DecoderLayer {
    self_attention: MultiHeadAttention,
    norm1: LayerNorm,
    cross_attention: MultiHeadAttention,
    norm2: LayerNorm,
    ff: FeedForward,
    norm3: LayerNorm,
}

impl DecoderLayer {
    fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut RandomStream,
        name: &str,
        dim: usize,
        heads: usize,
        ff: usize,
    ) -> Result<Self> {
        Ok(Self {
            self_attention: MultiHeadAttention::new(
                store,
                rng,
                &format!("{name}.self_attention"),
                dim,
                heads,
            )?,
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim),
            cross_attention: MultiHeadAttention::new(
                store,
                rng,
                &format!("{name}.cross_attention"),
                dim,
                heads,
            )?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim),
            ff: FeedForward::new(store, rng, &format!("{name}.ff"), dim, ff),
            norm3: LayerNorm::new(store, &format!("{name}.norm3"), dim),
        })
    }

    fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        x: NodeId,
        memory: NodeId,
    ) -> Result<NodeId> {
        let a = self.self_attention.forward(g, store, x, x, x, Mask::Causal)?;
        let x = residual(g, store, &self.norm1, x, a)?;
        let c = self
            .cross_attention
            .forward(g, store, x, memory, memory, Mask::None)?;
        let x = residual(g, store, &self.norm2, x, c)?;
        let f = self.ff.forward(g, store, x)?;
        residual(g, store, &self.norm3, x, f)
    }
}

fn residual<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParamStore<S>,
    norm: &LayerNorm,
    x: NodeId,
    sub: NodeId,
) -> Result<NodeId> {
    let sub = g.dropout(sub)?;
    let s = g.add(x, sub)?;
    norm.forward(g, store, s)
}

/// Token embedding plus sinusoidal positions, with dropout.
pub(crate) fn embed<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParamStore<S>,
    table: &EmbeddingTable,
    pos: &PositionalEncoding,
    tokens: &[usize],
) -> Result<NodeId> {
    let e = table.lookup(g, store, tokens)?;
    let p = pos.forward(g, store, 0, tokens.len())?;
    let s = g.add(e, p)?;
    g.dropout(s)
}

/// Post-norm encoder-decoder transformer with sinusoidal positions.
#[derive(Clone, Debug)]
pub(crate) struct TransformerS2s {
    enc_emb: EmbeddingTable,
    dec_emb: EmbeddingTable,
    pos: PositionalEncoding,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
    out: Linear,
}

impl TransformerS2s {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut RandomStream,
        config: &LearnerConfig,
        input_vocab: usize,
        output_vocab: usize,
    ) -> Result<Self> {
        let (d, h, ff) = (config.embedding, config.heads, config.hidden);
        let enc_emb = EmbeddingTable::new(store, rng, "encoder.embedding", input_vocab, d);
        let dec_emb = EmbeddingTable::new(store, rng, "decoder.embedding", output_vocab + 1, d);
        let encoder = (0..config.layers)
            .map(|l| EncoderLayer::new(store, rng, &format!("encoder.layer{l}"), d, h, ff))
            .collect::<Result<Vec<_>>>()?;
        let decoder = (0..config.layers)
            .map(|l| DecoderLayer::new(store, rng, &format!("decoder.layer{l}"), d, h, ff))
            .collect::<Result<Vec<_>>>()?;
        let out = Linear::new(store, rng, "output", d, output_vocab);
        Ok(Self {
            enc_emb,
            dec_emb,
            pos: PositionalEncoding::sinusoidal(d),
            encoder,
            decoder,
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
        let mut memory = embed(g, store, &self.enc_emb, &self.pos, x)?;
        for layer in &self.encoder {
            memory = layer.forward(g, store, memory, Mask::None)?;
        }
        let mut h = embed(g, store, &self.dec_emb, &self.pos, decoder_inputs)?;
        for layer in &self.decoder {
            h = layer.forward(g, store, h, memory)?;
        }
        self.out.forward(g, store, h)
    }
}
