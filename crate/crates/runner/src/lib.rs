//! Experiment orchestration for measuring sequence-to-sequence inductive
//! biases: TOML experiment specs expanded into (task, learner, seed) jobs,
//! a worker pool, aggregation into rows with significance annotations,
//! reports, curves, and replayable manifests.
//!
//! The worker count is taken from the `SEQBIAS_WORKERS` environment
//! variable unless given explicitly; by default every core is used.

pub mod error;
pub mod manifest;
pub mod report;
pub mod run;
pub mod spec;

pub use error::{Result, RunnerError};
pub use manifest::RunManifest;
pub use report::{emit_curve, emit_report, write_outputs, ReportFormat, ReportRow};
pub use run::{aggregate, execute, replay, run_experiment, ResultRow, RunOutput, SeedRecord};
pub use spec::{CurveSpec, ExperimentSpec, LearnerGrid, Metric, TaskGrid};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use seqbias::learners::init_learner;
use seqbias::metrics::{normalized_dl_with, CurvePoint, NeuralLearner};

pub const WORKERS_ENV: &str = "SEQBIAS_WORKERS";

pub(crate) fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Worker count: the explicit value, else `SEQBIAS_WORKERS`, else all cores.
pub fn worker_count(explicit: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = explicit {
        return Ok(Some(n));
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| RunnerError::Spec(format!("{WORKERS_ENV}={v:?} is not a count"))),
        Err(_) => Ok(None),
    }
}

pub(crate) fn worker_pool(explicit: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count(explicit)? {
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| RunnerError::Pool(e.to_string()))
}

/// Serializes non-finite floats as strings so they survive JSON.
pub(crate) mod float_text {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            Repr::Number(*v)
        } else {
            Repr::Text(v.to_string())
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Normalized description-length curve of every learner configuration in
/// `spec`, seeds run in parallel. Returns one point list per configuration.
pub fn run_curves(spec: &ExperimentSpec, workers: Option<usize>) -> Result<Vec<(String, Vec<CurvePoint>)>> {
    spec.validate()?;
    let curve = spec
        .curve
        .as_ref()
        .ok_or_else(|| RunnerError::Spec("no [curve] section".into()))?;
    let pool = worker_pool(workers)?;
    let mut out = Vec::new();
    for config in spec.learner_configs() {
        let per_seed: Vec<Vec<CurvePoint>> = pool.install(|| {
            spec.seed_list()
                .par_iter()
                .map(|&seed| {
                    normalized_dl_with(curve.n, &curve.m, curve.rule, &[seed], |data, seed| {
                        Ok(NeuralLearner {
                            init: init_learner::<f64>(
                                &config,
                                data.input_vocab.len(),
                                data.output_vocab.len(),
                                seed,
                            )?,
                            hyper: spec.train.clone(),
                            seed,
                        })
                    })
                })
                .collect::<seqbias::Result<Vec<_>>>()
        })?;
        let points = (0..curve.m.len())
            .map(|i| {
                let values: Vec<f64> = per_seed.iter().map(|c| c[i].per_seed[0]).collect();
                CurvePoint {
                    m: curve.m[i],
                    remaining: curve.n - curve.m[i],
                    mean: values.iter().sum::<f64>() / values.len() as f64,
                    per_seed: values,
                }
            })
            .collect();
        out.push((run::learner_label(&config), points));
    }
    Ok(out)
}
