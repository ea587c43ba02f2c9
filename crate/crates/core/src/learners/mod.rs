//! The five encoder-decoder learners.
//!
//! Every learner maps an input token sequence to a distribution over output
//! sequences, factorized left to right. The decoder reads a dedicated
//! beginning-of-sequence token at step 0, stored as the extra last row of the
//! decoder embedding table, then the gold (teacher forcing) or previously
//! predicted tokens.

mod checkpoint;
mod cnn;
mod config;
mod decode;
mod joint;
mod lstm;
mod transformer;

pub use checkpoint::{Checkpoint, StoredParam, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{LearnerConfig, LearnerKind};
pub use decode::Decoded;

use crate::error::{Error, Result};
use crate::tensor::{Array, Graph, NodeId, ParamStore, RandomStream};
use crate::tensor::rng::domain;
use crate::Scalar;

use cnn::CnnS2s;
use joint::JointS2s;
use lstm::LstmS2s;
use transformer::TransformerS2s;

#[derive(Clone, Debug)]
pub(crate) enum Architecture {
    Lstm(LstmS2s),
    Cnn(CnnS2s),
    Transformer(TransformerS2s),
    Joint(JointS2s),
}

/// A learner instance: configuration, vocabulary sizes and parameters.
#[derive(Clone, Debug)]
pub struct Seq2SeqModel<S> {
    config: LearnerConfig,
    input_vocab: usize,
    output_vocab: usize,
    store: ParamStore<S>,
    arch: Architecture,
}

/// Draws a fresh learner from the seed's initialization stream.
///
/// Vocabulary sizes include the end-of-sequence token.
pub fn init_learner<S: Scalar>(
    config: &LearnerConfig,
    input_vocab: usize,
    output_vocab: usize,
    seed: u64,
) -> Result<Seq2SeqModel<S>> {
    config.validate()?;
    if input_vocab == 0 || output_vocab == 0 {
        return Err(Error::Config("vocabularies must be nonempty".into()));
    }
    let mut rng = RandomStream::derived(seed, domain::INIT);
    let mut store = ParamStore::new();
    let arch = match config.kind {
        LearnerKind::LstmNoAttention | LearnerKind::LstmAttention => Architecture::Lstm(
            LstmS2s::new(&mut store, &mut rng, config, input_vocab, output_vocab),
        ),
        LearnerKind::Cnn => Architecture::Cnn(CnnS2s::new(
            &mut store,
            &mut rng,
            config,
            input_vocab,
            output_vocab,
        )?),
        LearnerKind::Transformer => Architecture::Transformer(TransformerS2s::new(
            &mut store,
            &mut rng,
            config,
            input_vocab,
            output_vocab,
        )?),
        LearnerKind::JointSourceTargetAttention => Architecture::Joint(JointS2s::new(
            &mut store,
            &mut rng,
            config,
            input_vocab,
            output_vocab,
        )?),
    };
    Ok(Seq2SeqModel {
        config: config.clone(),
        input_vocab,
        output_vocab,
        store,
        arch,
    })
}

impl<S: Scalar> Seq2SeqModel<S> {
    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn kind(&self) -> LearnerKind {
        self.config.kind
    }

    pub fn input_vocab_size(&self) -> usize {
        self.input_vocab
    }

    pub fn output_vocab_size(&self) -> usize {
        self.output_vocab
    }

    /// Index of the beginning-of-sequence row in the decoder embedding.
    pub fn bos(&self) -> usize {
        self.output_vocab
    }

    pub fn params(&self) -> &ParamStore<S> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.store
    }

    pub fn parameter_count(&self) -> usize {
        self.store.count()
    }

    fn check_input(&self, x: &[usize]) -> Result<()> {
        if x.is_empty() {
            return Err(Error::EmptySequence("input sequence".into()));
        }
        if let Some(&t) = x.iter().find(|&&t| t >= self.input_vocab) {
            return Err(Error::Token {
                token: t,
                side: "input",
                size: self.input_vocab,
            });
        }
        Ok(())
    }

    fn check_output(&self, y: &[usize]) -> Result<()> {
        if y.is_empty() {
            return Err(Error::EmptySequence("output sequence".into()));
        }
        if let Some(&t) = y.iter().find(|&&t| t >= self.output_vocab) {
            return Err(Error::Token {
                token: t,
                side: "output",
                size: self.output_vocab,
            });
        }
        Ok(())
    }

    /// Decoder inputs for target `y`: BOS followed by `y` without its last token.
    fn shifted(&self, y: &[usize]) -> Vec<usize> {
        let mut v = Vec::with_capacity(y.len());
        v.push(self.bos());
        v.extend_from_slice(&y[..y.len() - 1]);
        v
    }

    /// `decoder_inputs.len() x output_vocab` unnormalized scores.
    pub(crate) fn logits(
        &self,
        g: &mut Graph<S>,
        x: &[usize],
        decoder_inputs: &[usize],
    ) -> Result<NodeId> {
        let store = &self.store;
        match &self.arch {
            Architecture::Lstm(a) => a.logits(g, store, x, decoder_inputs),
            Architecture::Cnn(a) => a.logits(g, store, x, decoder_inputs),
            Architecture::Transformer(a) => a.logits(g, store, x, decoder_inputs),
            Architecture::Joint(a) => a.logits(g, store, x, decoder_inputs),
        }
    }

    /// Teacher-forced log-distributions, one row per target position.
    pub fn log_distributions_in(&self, g: &mut Graph<S>, x: &[usize], y: &[usize]) -> Result<NodeId> {
        self.check_input(x)?;
        self.check_output(y)?;
        let dec = self.shifted(y);
        let logits = self.logits(g, x, &dec)?;
        g.log_softmax(logits)
    }

    /// Scalar node holding `-sum_t log p(y_t | x, y_<t)`.
    pub fn nll(&self, g: &mut Graph<S>, x: &[usize], y: &[usize]) -> Result<NodeId> {
        let logp = self.log_distributions_in(g, x, y)?;
        let picked = g.pick_cols(logp, y)?;
        let total = g.sum(picked)?;
        g.scale(total, -1.0)
    }

    /// Full teacher-forced log-distributions as a `|y| x output_vocab` array.
    pub fn teacher_forced_distributions(&self, x: &[usize], y: &[usize]) -> Result<Array<S>> {
        let mut g = Graph::new();
        let logp = self.log_distributions_in(&mut g, x, y)?;
        Ok(g.value(logp).clone())
    }

    /// Natural-log probability of each target token given the input and the
    /// gold prefix.
    pub fn teacher_forced_logprobs(&self, x: &[usize], y: &[usize]) -> Result<Vec<f64>> {
        let logp = self.teacher_forced_distributions(x, y)?;
        Ok(y.iter()
            .enumerate()
            .map(|(t, &tok)| logp.get(t, tok).f64())
            .collect())
    }

    /// `-log p(y | x)` in nats.
    pub fn sequence_nll(&self, x: &[usize], y: &[usize]) -> Result<f64> {
        Ok(-self.teacher_forced_logprobs(x, y)?.iter().sum::<f64>())
    }

    /// Emits the argmax token at each step until end-of-sequence or `max_len`.
    pub fn greedy_decode(&self, x: &[usize], max_len: usize) -> Result<Decoded> {
        decode::greedy(self, x, max_len)
    }
}

#[cfg(test)]
mod tests;
