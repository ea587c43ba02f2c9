use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::LEARNED_MAX_LEN;
use crate::tensor::Graph;
use crate::Scalar;

use super::{Architecture, Seq2SeqModel};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoded {
    /// Emitted tokens, ending with end-of-sequence unless truncated.
    pub tokens: Vec<usize>,
    /// The length limit was reached before end-of-sequence.
    pub truncated: bool,
}

/// Index of the largest score; ties go to the lowest index.
fn argmax<S: Scalar>(scores: &[S]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub(super) fn greedy<S: Scalar>(model: &Seq2SeqModel<S>, x: &[usize], max_len: usize) -> Result<Decoded> {
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    model.check_input(x)?;
    let eos = 0;
    let mut tokens = Vec::new();
    match &model.arch {
        Architecture::Lstm(lstm) => {
            let mut session = lstm.session(&model.store, x)?;
            let mut prev = model.bos();
            while tokens.len() < max_len {
                let scores = session.step(prev)?;
                prev = argmax(&scores);
                tokens.push(prev);
                if prev == eos {
                    break;
                }
            }
        }
        arch => {
            // Prefix recomputation; learned positions bound the decoder length.
            let limit = match arch {
                Architecture::Cnn(_) => max_len.min(LEARNED_MAX_LEN),
                _ => max_len,
            };
            let mut inputs = vec![model.bos()];
            while tokens.len() < limit {
                let mut g = Graph::new();
                let logits = model.logits(&mut g, x, &inputs)?;
                let value = g.value(logits);
                let next = argmax(value.row_slice(value.rows() - 1));
                tokens.push(next);
                if next == eos {
                    break;
                }
                inputs.push(next);
            }
        }
    }
    let truncated = tokens.last() != Some(&eos);
    Ok(Decoded { tokens, truncated })
}
