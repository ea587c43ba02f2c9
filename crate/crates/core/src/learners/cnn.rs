use crate::error::Result;
use crate::layers::{ConvBlock, EmbeddingTable, Linear, PositionalEncoding, LEARNED_MAX_LEN};
use crate::tensor::{Graph, NodeId, ParamStore, RandomStream};
use crate::Scalar;

use super::LearnerConfig;

const RESIDUAL_SCALE: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Convolutional encoder and causal convolutional decoder with GLU gates and
/// learned positions, followed by one dot-product attention layer from the
/// decoder states onto the encoder states.
#[derive(Clone, Debug)]
pub(crate) struct CnnS2s {
    enc_emb: EmbeddingTable,
    dec_emb: EmbeddingTable,
    enc_pos: PositionalEncoding,
    dec_pos: PositionalEncoding,
    encoder: Vec<ConvBlock>,
    decoder: Vec<ConvBlock>,
    filters: usize,
    out: Linear,
}

impl CnnS2s {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut RandomStream,
        config: &LearnerConfig,
        input_vocab: usize,
        output_vocab: usize,
    ) -> Result<Self> {
        let (e, f, k) = (config.embedding, config.hidden, config.kernel);
        let enc_emb = EmbeddingTable::new(store, rng, "encoder.embedding", input_vocab, e);
        let dec_emb = EmbeddingTable::new(store, rng, "decoder.embedding", output_vocab + 1, e);
        let enc_pos = PositionalEncoding::learned(store, rng, "encoder", LEARNED_MAX_LEN, e);
        let dec_pos = PositionalEncoding::learned(store, rng, "decoder", LEARNED_MAX_LEN, e);
        let mut stack = |store: &mut ParamStore<S>, side: &str| {
            (0..config.layers)
                .map(|l| {
                    let input = if l == 0 { e } else { f };
                    ConvBlock::new(store, rng, &format!("{side}.conv{l}"), input, f, k)
                })
                .collect::<Result<Vec<_>>>()
        };
        let encoder = stack(store, "encoder")?;
        let decoder = stack(store, "decoder")?;
        let out = Linear::new(store, rng, "output", 2 * f, output_vocab);
        Ok(Self {
            enc_emb,
            dec_emb,
            enc_pos,
            dec_pos,
            encoder,
            decoder,
            filters: f,
            out,
        })
    }

    fn embed<S: Scalar>(
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

    fn convolve<S: Scalar>(
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        blocks: &[ConvBlock],
        mut x: NodeId,
        causal: bool,
    ) -> Result<NodeId> {
        for (l, block) in blocks.iter().enumerate() {
            let y = block.forward(g, store, x, causal)?;
            let y = if l > 0 {
                let s = g.add(y, x)?;
                g.scale(s, RESIDUAL_SCALE)?
            } else {
                y
            };
            x = g.dropout(y)?;
        }
        Ok(x)
    }

    pub fn logits<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        x: &[usize],
        decoder_inputs: &[usize],
    ) -> Result<NodeId> {
        let src = Self::embed(g, store, &self.enc_emb, &self.enc_pos, x)?;
        let enc = Self::convolve(g, store, &self.encoder, src, false)?;
        let tgt = Self::embed(g, store, &self.dec_emb, &self.dec_pos, decoder_inputs)?;
        let dec = Self::convolve(g, store, &self.decoder, tgt, true)?;
        let scores = g.scaled_dot(dec, enc, 1.0 / (self.filters as f64).sqrt())?;
        let weights = g.softmax(scores)?;
        let weights = g.dropout(weights)?;
        let ctx = g.matmul(weights, enc)?;
        let feats = g.concat_cols(&[dec, ctx])?;
        let feats = g.dropout(feats)?;
        self.out.forward(g, store, feats)
    }
}
