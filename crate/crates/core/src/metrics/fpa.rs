use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::Seq2SeqModel;
use crate::tasks::{CandidateRule, TaskData};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FPAResult {
    pub rule: CandidateRule,
    pub seeds: usize,
    /// Seeds whose decodes match the rule on every holdout input.
    pub agreeing: usize,
    pub fraction: f64,
}

/// Greedy decodes of every holdout input, in holdout order.
pub fn decode_holdout<S: Scalar>(model: &Seq2SeqModel<S>, data: &TaskData) -> Result<Vec<Vec<usize>>> {
    let max_len = data.default_max_len();
    data.holdout
        .iter()
        .map(|x| Ok(model.greedy_decode(x, max_len)?.tokens))
        .collect()
}

/// Fraction of seeds whose decodes (`decodes[seed][holdout index]`) agree
/// token for token with `rule` on every holdout input the rule covers.
pub fn fpa(decodes: &[Vec<Vec<usize>>], rule: CandidateRule, data: &TaskData) -> Result<FPAResult> {
    if decodes.is_empty() {
        return Err(Error::MissingDecode("no seeds".into()));
    }
    let labeled = data.labeled_holdout(rule)?;
    let mut agreeing = 0;
    for (seed, d) in decodes.iter().enumerate() {
        if d.len() != data.holdout.len() {
            return Err(Error::MissingDecode(format!(
                "seed {seed} has {} decodes for {} holdout inputs",
                d.len(),
                data.holdout.len()
            )));
        }
        if labeled.iter().all(|(i, e)| d[*i] == e.output) {
            agreeing += 1;
        }
    }
    Ok(FPAResult {
        rule,
        seeds: decodes.len(),
        agreeing,
        fraction: agreeing as f64 / decodes.len() as f64,
    })
}
