//! Bias measures: fraction of perfect agreement, prequential description
//! length, its normalized variant over a growing family, and paired t-tests.

mod dl;
mod fpa;
mod schedule;
mod stats;

pub use dl::{
    description_length, normalized_dl, normalized_dl_with, prequential_code, prequential_code_from,
    CurvePoint, DLResult, NeuralLearner, Prequential, RuleOracle, StepCost,
};
pub use fpa::{decode_holdout, fpa, FPAResult};
pub use schedule::TransmissionSchedule;
pub use stats::{confidence_half_width, paired_t_test, TTestResult};

#[cfg(test)]
mod tests;
