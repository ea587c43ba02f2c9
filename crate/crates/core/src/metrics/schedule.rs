use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::{CandidateRule, Example, TaskData};
use crate::tensor::rng::domain;
use crate::tensor::RandomStream;

/// Order in which a rule-labelled dataset is transmitted: the training set
/// first, then the holdout in shuffled blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmissionSchedule {
    pub rule: CandidateRule,
    pub blocks: Vec<Vec<Example>>,
    /// Holdout index of every example, per block; empty for block 0.
    pub indices: Vec<Vec<usize>>,
    pub order_seed: u64,
}

impl TransmissionSchedule {
    /// Shuffles the holdout labelled by `rule` with the order stream of
    /// `seed` and cuts it into blocks of `block_size` (the last may be shorter).
    pub fn new(data: &TaskData, rule: CandidateRule, block_size: usize, seed: u64) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::Schedule("block size must be at least 1".into()));
        }
        let mut labeled = data.labeled_holdout(rule)?;
        RandomStream::derived(seed, domain::ORDER).shuffle(&mut labeled);
        Ok(Self::from_labeled(data, rule, labeled, block_size, seed))
    }

    /// The whole holdout, in its natural order, as one block.
    pub fn single_block(data: &TaskData, rule: CandidateRule) -> Result<Self> {
        let labeled = data.labeled_holdout(rule)?;
        let size = labeled.len().max(1);
        Ok(Self::from_labeled(data, rule, labeled, size, 0))
    }

    fn from_labeled(
        data: &TaskData,
        rule: CandidateRule,
        labeled: Vec<(usize, Example)>,
        block_size: usize,
        seed: u64,
    ) -> Self {
        let mut blocks = vec![data.train.clone()];
        let mut indices = vec![Vec::new()];
        for chunk in labeled.chunks(block_size) {
            indices.push(chunk.iter().map(|(i, _)| *i).collect());
            blocks.push(chunk.iter().map(|(_, e)| e.clone()).collect());
        }
        Self {
            rule,
            blocks,
            indices,
            order_seed: seed,
        }
    }

    pub fn holdout_size(&self) -> usize {
        self.indices.iter().map(Vec::len).sum()
    }

    /// Checks that block 0 is the training set and the remaining blocks
    /// partition the rule-labelled holdout.
    pub fn validate(&self, data: &TaskData) -> Result<()> {
        let fail = |msg: String| Err(Error::Schedule(msg));
        if self.blocks.is_empty() || self.blocks[0] != data.train {
            return fail("block 0 must be the training set".into());
        }
        if self.indices.len() != self.blocks.len() || !self.indices[0].is_empty() {
            return fail("block indices do not match the blocks".into());
        }
        let labeled = data.labeled_holdout(self.rule)?;
        let mut seen = BTreeSet::new();
        for (t, (block, idx)) in self.blocks.iter().zip(&self.indices).enumerate().skip(1) {
            if block.is_empty() || block.len() != idx.len() {
                return fail(format!("block {t} is empty or mislabelled"));
            }
            for (e, &i) in block.iter().zip(idx) {
                if !seen.insert(i) {
                    return fail(format!("holdout example {i} is sent twice"));
                }
                match labeled.iter().find(|(j, _)| *j == i) {
                    Some((_, expected)) if expected == e => {}
                    _ => return fail(format!("block {t} does not carry the {} label of example {i}", self.rule)),
                }
            }
        }
        if seen.len() != labeled.len() {
            return fail(format!(
                "{} of {} holdout examples are transmitted",
                seen.len(),
                labeled.len()
            ));
        }
        Ok(())
    }
}
