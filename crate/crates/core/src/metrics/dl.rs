use serde::{Deserialize, Serialize};

use super::schedule::TransmissionSchedule;
use crate::error::{Error, Result};
use crate::learners::{init_learner, LearnerConfig, Seq2SeqModel};
use crate::tasks::{CandidateRule, Example, TaskData, TaskInstance};
use crate::training::{train, TrainHyper, TrainOutcome};
use crate::Scalar;

/// A learner that can be fitted to a transmitted prefix and then assigns
/// code lengths to the examples that follow.
pub trait Prequential {
    type Fitted;

    fn fit(&self, examples: &[Example]) -> Result<Self::Fitted>;

    /// `-ln p(output | input)` under the fitted learner.
    fn cost(&self, fitted: &Self::Fitted, example: &Example) -> Result<f64>;
}

/// A neural learner retrained from one fixed initialization with one fixed
/// dropout seed every time it is fitted.
#[derive(Clone, Debug)]
pub struct NeuralLearner<S> {
    pub init: Seq2SeqModel<S>,
    pub hyper: TrainHyper,
    pub seed: u64,
}

impl<S: Scalar> Prequential for NeuralLearner<S> {
    type Fitted = TrainOutcome<S>;

    fn fit(&self, examples: &[Example]) -> Result<TrainOutcome<S>> {
        train(self.init.clone(), examples, &self.hyper, self.seed)
    }

    fn cost(&self, fitted: &TrainOutcome<S>, example: &Example) -> Result<f64> {
        fitted.model.sequence_nll(&example.input, &example.output)
    }
}

/// Puts probability 1 on the outputs of one rule and 0 elsewhere.
#[derive(Clone, Debug)]
pub struct RuleOracle {
    pub data: TaskData,
    pub rule: CandidateRule,
}

impl Prequential for RuleOracle {
    type Fitted = ();

    fn fit(&self, _: &[Example]) -> Result<()> {
        Ok(())
    }

    fn cost(&self, _: &(), example: &Example) -> Result<f64> {
        if self.data.apply(self.rule, &example.input)? == example.output {
            Ok(0.0)
        } else {
            Ok(f64::INFINITY)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCost {
    /// Index of the transmitted block, at least 1.
    pub block: usize,
    /// Holdout index and cost of every example in the block.
    pub examples: Vec<(usize, f64)>,
    pub nats: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DLResult {
    pub rule: CandidateRule,
    pub steps: Vec<StepCost>,
    pub total: f64,
    pub holdout_size: usize,
    /// `total / holdout_size`.
    pub mean_per_example: f64,
    /// Uniform code length of the training outputs, `|y_1| ln |V|`, which
    /// every rule shares and which is left out of `total`.
    pub naive_constant: f64,
}

impl DLResult {
    /// Per-example costs sorted by holdout index.
    pub fn per_example(&self) -> Vec<(usize, f64)> {
        let mut all: Vec<_> = self.steps.iter().flat_map(|s| s.examples.iter().copied()).collect();
        all.sort_by_key(|&(i, _)| i);
        all
    }
}

fn naive_constant(data: &TaskData) -> f64 {
    let tokens: usize = data.train.iter().map(|e| e.output.len()).sum();
    tokens as f64 * (data.output_vocab.len() as f64).ln()
}

/// Prequential code length of `schedule`, fitting the learner afresh on
/// every prefix of blocks.
pub fn prequential_code<L: Prequential>(
    learner: &L,
    data: &TaskData,
    schedule: &TransmissionSchedule,
) -> Result<DLResult> {
    schedule.validate(data)?;
    let base = learner.fit(&schedule.blocks[0])?;
    code_blocks(learner, data, schedule, &base)
}

/// As [`prequential_code`], with the learner already fitted to block 0.
pub fn prequential_code_from<L: Prequential>(
    learner: &L,
    data: &TaskData,
    schedule: &TransmissionSchedule,
    base: &L::Fitted,
) -> Result<DLResult> {
    schedule.validate(data)?;
    code_blocks(learner, data, schedule, base)
}

fn code_blocks<L: Prequential>(
    learner: &L,
    data: &TaskData,
    schedule: &TransmissionSchedule,
    base: &L::Fitted,
) -> Result<DLResult> {
    let mut steps = Vec::with_capacity(schedule.blocks.len().saturating_sub(1));
    let mut refit = None;
    for t in 1..schedule.blocks.len() {
        if t > 1 {
            let prefix: Vec<Example> = schedule.blocks[..t].concat();
            refit = Some(learner.fit(&prefix)?);
        }
        let fitted = refit.as_ref().unwrap_or(base);
        let mut examples = Vec::with_capacity(schedule.blocks[t].len());
        for (e, &i) in schedule.blocks[t].iter().zip(&schedule.indices[t]) {
            examples.push((i, learner.cost(fitted, e)?));
        }
        let nats = examples.iter().map(|(_, c)| c).sum();
        steps.push(StepCost { block: t, examples, nats });
    }
    let total: f64 = steps.iter().map(|s| s.nats).sum();
    let holdout_size = schedule.holdout_size();
    Ok(DLResult {
        rule: schedule.rule,
        steps,
        total,
        holdout_size,
        mean_per_example: if holdout_size == 0 { 0.0 } else { total / holdout_size as f64 },
        naive_constant: naive_constant(data),
    })
}

/// Description length of `schedule` for a learner drawn from `config` with
/// `seed` and trained with `hyper`.
pub fn description_length(
    data: &TaskData,
    config: &LearnerConfig,
    hyper: &TrainHyper,
    schedule: &TransmissionSchedule,
    seed: u64,
) -> Result<DLResult> {
    let init = init_learner::<f64>(config, data.input_vocab.len(), data.output_vocab.len(), seed)?;
    let learner = NeuralLearner {
        init,
        hyper: hyper.clone(),
        seed,
    };
    prequential_code(&learner, data, schedule)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub m: usize,
    /// Number of holdout examples coded at this point.
    pub remaining: usize,
    /// Mean nats per remaining example, per seed.
    pub per_seed: Vec<f64>,
    pub mean: f64,
}

/// Normalized description length over the composition family with `n`
/// primitives: for each `m`, the DL of the remaining `n - m` compositional
/// examples divided by their count, averaged over seeds. `make` builds the
/// learner for one task and seed.
pub fn normalized_dl_with<L, F>(
    n: usize,
    ms: &[usize],
    rule: CandidateRule,
    seeds: &[u64],
    mut make: F,
) -> Result<Vec<CurvePoint>>
where
    L: Prequential,
    F: FnMut(&TaskData, u64) -> Result<L>,
{
    if ms.is_empty() || ms.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("M values {ms:?} must be strictly increasing")));
    }
    if seeds.is_empty() {
        return Err(Error::Config("no seeds".into()));
    }
    if let Some(&m) = ms.iter().find(|&&m| m >= n) {
        return Err(Error::Schedule(format!("no compositional examples remain at M={m}, N={n}")));
    }
    let mut curve = Vec::with_capacity(ms.len());
    for &m in ms {
        let data = TaskInstance::CompMem { n, m }.data()?;
        let block = data.instance.kind().default_block_size();
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let learner = make(&data, seed)?;
            let schedule = TransmissionSchedule::new(&data, rule, block, seed)?;
            per_seed.push(prequential_code(&learner, &data, &schedule)?.mean_per_example);
        }
        curve.push(CurvePoint {
            m,
            remaining: n - m,
            mean: per_seed.iter().sum::<f64>() / per_seed.len() as f64,
            per_seed,
        });
    }
    Ok(curve)
}

/// [`normalized_dl_with`] for neural learners drawn from `config`.
pub fn normalized_dl(
    n: usize,
    ms: &[usize],
    rule: CandidateRule,
    config: &LearnerConfig,
    hyper: &TrainHyper,
    seeds: &[u64],
) -> Result<Vec<CurvePoint>> {
    normalized_dl_with(n, ms, rule, seeds, |data, seed| {
        Ok(NeuralLearner {
            init: init_learner::<f64>(config, data.input_vocab.len(), data.output_vocab.len(), seed)?,
            hyper: hyper.clone(),
            seed,
        })
    })
}
