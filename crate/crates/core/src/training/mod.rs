//! Adam with linear warmup, full-batch teacher forcing and a fixed epoch
//! budget.
//!
//! Every epoch is a single update on the summed negative log-likelihood of
//! all training examples, so update and epoch counts coincide.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::Seq2SeqModel;
use crate::tasks::Example;
use crate::tensor::rng::domain;
use crate::tensor::{Array, Graph, ParamStore, RandomStream};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub epochs: usize,
    pub warmup: usize,
    pub lr_floor: f64,
    pub lr_peak: f64,
    /// Dropout probability; `None` uses the learner configuration's value.
    pub dropout: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 3000,
            warmup: 1000,
            lr_floor: 1e-5,
            lr_peak: 1e-3,
            dropout: None,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.lr_floor > 0.0 && self.lr_floor <= self.lr_peak && self.lr_peak.is_finite()) {
            return fail(format!(
                "need 0 < lr floor <= lr peak, got {} and {}",
                self.lr_floor, self.lr_peak
            ));
        }
        if self.warmup > self.epochs {
            return fail(format!("warmup {} exceeds {} epochs", self.warmup, self.epochs));
        }
        for (name, p) in [("beta1", self.beta1), ("beta2", self.beta2)]
            .into_iter()
            .chain(self.dropout.map(|p| ("dropout", p)))
        {
            if !(0.0..1.0).contains(&p) {
                return fail(format!("{name} {p} outside [0, 1)"));
            }
        }
        if !(self.epsilon > 0.0) {
            return fail(format!("epsilon {} must be positive", self.epsilon));
        }
        Ok(())
    }
}

/// Learning rate of the update with 0-based index `update`: linear from the
/// floor at update 0 to the peak at `warmup`, constant afterwards.
pub fn lr_at(update: usize, hyper: &TrainHyper) -> f64 {
    if update >= hyper.warmup {
        return hyper.lr_peak;
    }
    let frac = update as f64 / hyper.warmup as f64;
    hyper.lr_floor + (hyper.lr_peak - hyper.lr_floor) * frac
}

/// Adam moments, one pair per parameter of a store.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<S> {
    pub first: Vec<Array<S>>,
    pub second: Vec<Array<S>>,
    pub updates: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(store: &ParamStore<S>, hyper: &TrainHyper) -> Self {
        let zeros = || store.iter().map(|(_, p)| Array::zeros(p.value.shape())).collect();
        Self {
            first: zeros(),
            second: zeros(),
            updates: 0,
            beta1: hyper.beta1,
            beta2: hyper.beta2,
            epsilon: hyper.epsilon,
        }
    }
}

/// One bias-corrected Adam update from the gradients held in the store.
/// Parameters without a gradient are treated as having a zero gradient.
/// Nothing is modified when any gradient is non-finite.
pub fn adam_step<S: Scalar>(store: &mut ParamStore<S>, state: &mut OptimizerState<S>, lr: f64) -> Result<()> {
    if state.first.len() != store.len() {
        return Err(Error::Dimension(format!(
            "optimizer tracks {} parameters, store has {}",
            state.first.len(),
            store.len()
        )));
    }
    for (id, p) in store.iter() {
        if p.grad.as_ref().is_some_and(|g| !g.all_finite()) {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
        if state.first[id.0].shape() != p.value.shape() {
            return Err(Error::Dimension(format!("optimizer moments do not match {}", p.name)));
        }
    }
    state.updates += 1;
    let t = state.updates as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let grad = store
            .grad(id)
            .cloned()
            .unwrap_or_else(|| Array::zeros(store.value(id).shape()));
        let (m, v) = (&mut state.first[id.0], &mut state.second[id.0]);
        for ((mi, vi), &gi) in m.data_mut().iter_mut().zip(v.data_mut()).zip(grad.data()) {
            *mi = S::of(b1) * *mi + S::of(1.0 - b1) * gi;
            *vi = S::of(b2) * *vi + S::of(1.0 - b2) * gi * gi;
        }
        apply(store.value_mut(id), m, v, lr, c1, c2, state.epsilon);
    }
    Ok(())
}

fn apply<S: Scalar>(value: &mut Array<S>, m: &Array<S>, v: &Array<S>, lr: f64, c1: f64, c2: f64, eps: f64) {
    for ((p, &mi), &vi) in value.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
        let mhat = mi.f64() / c1;
        let vhat = vi.f64() / c2;
        *p -= S::of(lr * mhat / (vhat.sqrt() + eps));
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<S> {
    pub model: Seq2SeqModel<S>,
    /// Summed NLL of the training set under the final model, dropout off.
    pub final_loss: f64,
    /// Greedy decodes reproduce every training output exactly.
    pub success: bool,
    /// Training loss (with dropout) before each update.
    pub loss_trace: Vec<f64>,
    pub updates: u64,
}

/// Summed NLL of `examples`, dropout off.
pub fn dataset_nll<S: Scalar>(model: &Seq2SeqModel<S>, examples: &[Example]) -> Result<f64> {
    examples
        .iter()
        .map(|e| model.sequence_nll(&e.input, &e.output))
        .sum()
}

/// Whether greedy decoding reproduces every output of `examples`.
pub fn fits_exactly<S: Scalar>(model: &Seq2SeqModel<S>, examples: &[Example]) -> Result<bool> {
    for e in examples {
        if model.greedy_decode(&e.input, e.output.len())?.tokens != e.output {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Trains `model` for `hyper.epochs` full-batch updates. Dropout masks come
/// from the stream of `seed`, so the result is a pure function of the
/// arguments.
pub fn train<S: Scalar>(
    mut model: Seq2SeqModel<S>,
    examples: &[Example],
    hyper: &TrainHyper,
    seed: u64,
) -> Result<TrainOutcome<S>> {
    hyper.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptySequence("training set".into()));
    }
    let p = hyper.dropout.unwrap_or(model.config().dropout);
    let mut rng = RandomStream::derived(seed, domain::DROPOUT);
    let mut state = OptimizerState::new(model.params(), hyper);
    let mut trace = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let mut g = Graph::with_dropout(p, rng);
        let mut total = None;
        for e in examples {
            let nll = model.nll(&mut g, &e.input, &e.output)?;
            total = Some(match total {
                None => nll,
                Some(t) => g.add(t, nll)?,
            });
        }
        let loss = total.expect("nonempty training set");
        let value = g.value(loss).item().f64();
        if !value.is_finite() {
            return Err(Error::Diverged { epoch, loss: value });
        }
        trace.push(value);
        g.backpropagate(loss, model.params_mut())?;
        rng = g.into_rng().unwrap_or_else(|| RandomStream::new(0));
        adam_step(model.params_mut(), &mut state, lr_at(epoch, hyper))?;
    }
    model.params_mut().zero_grads();
    let final_loss = dataset_nll(&model, examples)?;
    let success = fits_exactly(&model, examples)?;
    Ok(TrainOutcome {
        model,
        final_loss,
        success,
        loss_trace: trace,
        updates: state.updates,
    })
}
