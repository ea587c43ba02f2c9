//! Measuring the inductive biases of sequence-to-sequence learners.
//!
//! A learner is trained on an ambiguous training set that several candidate
//! rules explain equally well. Its preference between the rules is then
//! measured in two ways:
//!
//! * **FPA** (fraction of perfect agreement): the fraction of random seeds
//!   whose greedy decodes agree exactly with a rule on every holdout input.
//! * **Description length**: the prequential (online) code length, in nats,
//!   of the holdout outputs labelled by a rule, transmitted block by block
//!   after the training set, with the learner retrained from the same
//!   initialization after each block.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`]: a small reverse-mode automatic differentiation engine.
//! * [`layers`]: LSTM cells, attention, gated convolutions, positions.
//! * [`learners`]: the five encoder/decoder architectures.
//! * [`tasks`]: the ambiguous tasks and their candidate-rule oracles.
//! * [`training`]: Adam with linear warmup, full-batch teacher forcing.
//! * [`metrics`]: FPA, description length, normalized curves, t-tests.
//!
//! All numeric code is generic over [`Scalar`]; the aliases at the crate
//! root fix the scalar to `f64`, which is what every measurement uses.

pub mod checks;
pub mod error;
pub mod layers;
pub mod learners;
pub mod metrics;
pub mod scalar;
pub mod tasks;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Dense array of `f64` values.
pub type Array = tensor::Array<f64>;
/// Computation graph over `f64` values.
pub type Graph = tensor::Graph<f64>;
/// Parameter collection over `f64` values.
pub type ParamStore = tensor::ParamStore<f64>;
/// A learner instance over `f64` parameters.
pub type Model = learners::Seq2SeqModel<f64>;
/// Training result over `f64` parameters.
pub type Outcome = training::TrainOutcome<f64>;
