use crate::error::Result;
use crate::layers::{AdditiveAttention, EmbeddingTable, Linear, LstmCell, LstmState, PreparedCell, PreparedKeys};
use crate::tensor::{Graph, NodeId, ParamStore, RandomStream};
use crate::Scalar;

use super::{LearnerConfig, LearnerKind};

/// Stacked LSTM encoder and decoder. The decoder starts from the encoder's
/// final states; with attention, each decoder output is concatenated with an
/// additive-attention context over the top encoder states before the output
/// projection.
#[derive(Clone, Debug)]
pub(crate) struct LstmS2s {
    enc_emb: EmbeddingTable,
    dec_emb: EmbeddingTable,
    encoder: Vec<LstmCell>,
    decoder: Vec<LstmCell>,
    attention: Option<AdditiveAttention>,
    out: Linear,
}

/// Encoder pass results shared by teacher forcing and incremental decoding.
struct Encoded {
    finals: Vec<LstmState>,
    keys: Option<PreparedKeys>,
}

/// Incremental greedy decoding state.
pub(crate) struct LstmSession<'m, S> {
    model: &'m LstmS2s,
    store: &'m ParamStore<S>,
    graph: Graph<S>,
    cells: Vec<PreparedCell>,
    states: Vec<LstmState>,
    keys: Option<PreparedKeys>,
}

impl LstmS2s {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut RandomStream,
        config: &LearnerConfig,
        input_vocab: usize,
        output_vocab: usize,
    ) -> Self {
        let (e, h) = (config.embedding, config.hidden);
        let enc_emb = EmbeddingTable::new(store, rng, "encoder.embedding", input_vocab, e);
        let dec_emb = EmbeddingTable::new(store, rng, "decoder.embedding", output_vocab + 1, e);
        let stack = |store: &mut ParamStore<S>, rng: &mut RandomStream, side: &str| {
            (0..config.layers)
                .map(|l| {
                    let input = if l == 0 { e } else { h };
                    LstmCell::new(store, rng, &format!("{side}.lstm{l}"), input, h)
                })
                .collect::<Vec<_>>()
        };
        let encoder = stack(store, rng, "encoder");
        let decoder = stack(store, rng, "decoder");
        let attention = (config.kind == LearnerKind::LstmAttention)
            .then(|| AdditiveAttention::new(store, rng, "attention", h, h, h));
        let features = if attention.is_some() { 2 * h } else { h };
        let out = Linear::new(store, rng, "output", features, output_vocab);
        Self {
            enc_emb,
            dec_emb,
            encoder,
            decoder,
            attention,
            out,
        }
    }

    fn encode<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        x: &[usize],
    ) -> Result<Encoded> {
        let emb = self.enc_emb.lookup(g, store, x)?;
        let mut input = g.dropout(emb)?;
        let mut finals = Vec::with_capacity(self.encoder.len());
        for cell in &self.encoder {
            let (outs, last) = cell.run(g, store, input, None)?;
            finals.push(last);
            let all = g.concat_rows(&outs)?;
            input = g.dropout(all)?;
        }
        let keys = match &self.attention {
            Some(att) => Some(att.prepare_matrix(g, store, input)?),
            None => None,
        };
        Ok(Encoded { finals, keys })
    }

    /// `1 x features` rows for each decoder output.
    fn features<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        keys: Option<&PreparedKeys>,
        outputs: &[NodeId],
    ) -> Result<NodeId> {
        match (&self.attention, keys) {
            (Some(att), Some(keys)) => {
                let mut rows = Vec::with_capacity(outputs.len());
                for &h in outputs {
                    let (ctx, _) = att.attend(g, keys, h)?;
                    rows.push(g.concat_cols(&[h, ctx])?);
                }
                g.concat_rows(&rows)
            }
            _ => g.concat_rows(outputs),
        }
    }

    pub fn logits<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        x: &[usize],
        decoder_inputs: &[usize],
    ) -> Result<NodeId> {
        let enc = self.encode(g, store, x)?;
        let emb = self.dec_emb.lookup(g, store, decoder_inputs)?;
        let mut input = g.dropout(emb)?;
        let mut outs = Vec::new();
        for (l, cell) in self.decoder.iter().enumerate() {
            let (o, _) = cell.run(g, store, input, Some(enc.finals[l]))?;
            outs = o;
            if l + 1 < self.decoder.len() {
                let all = g.concat_rows(&outs)?;
                input = g.dropout(all)?;
            }
        }
        let feats = self.features(g, enc.keys.as_ref(), &outs)?;
        let feats = g.dropout(feats)?;
        self.out.forward(g, store, feats)
    }

    pub fn session<'m, S: Scalar>(
        &'m self,
        store: &'m ParamStore<S>,
        x: &[usize],
    ) -> Result<LstmSession<'m, S>> {
        let mut graph = Graph::new();
        let enc = self.encode(&mut graph, store, x)?;
        let cells = self
            .decoder
            .iter()
            .map(|c| c.prepare(&mut graph, store))
            .collect::<Result<Vec<_>>>()?;
        Ok(LstmSession {
            model: self,
            store,
            graph,
            cells,
            states: enc.finals,
            keys: enc.keys,
        })
    }
}

impl<S: Scalar> LstmSession<'_, S> {
    /// Feeds one decoder token and returns the output scores.
    pub fn step(&mut self, token: usize) -> Result<Vec<S>> {
        let g = &mut self.graph;
        let mut input = self.model.dec_emb.lookup(g, self.store, &[token])?;
        for (l, cell) in self.cells.iter().enumerate() {
            self.states[l] = cell.step(g, input, self.states[l])?;
            input = self.states[l].h;
        }
        let feats = self.model.features(g, self.keys.as_ref(), &[input])?;
        let logits = self.model.out.forward(g, self.store, feats)?;
        Ok(g.value(logits).data().to_vec())
    }
}
