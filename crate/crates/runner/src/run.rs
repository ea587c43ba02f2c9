//! Job execution and aggregation.
//!
//! One job trains one (task, learner, seed) on the training set, decodes the
//! holdout from that model for FPA, and computes the description length of
//! every requested rule, reusing the train-only model as the first step of
//! each prequential code. Jobs run on a rayon pool; their records are
//! sorted before aggregation, so the worker count never changes a number.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use seqbias::learners::{init_learner, LearnerConfig};
use seqbias::metrics::{
    decode_holdout, fpa, paired_t_test, prequential_code_from, DLResult, NeuralLearner, Prequential,
    TransmissionSchedule,
};
use seqbias::tasks::{CandidateRule, TaskInstance};

use crate::error::{Result, RunnerError};
use crate::manifest::RunManifest;
use crate::spec::{ExperimentSpec, Metric};

/// Settings whose success rate falls below this are excluded from tables.
pub const SUCCESS_THRESHOLD: f64 = 0.7;
/// Significance level for the star annotation.
pub const STAR_LEVEL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub task: TaskInstance,
    /// Index into [`ExperimentSpec::learner_configs`].
    pub learner: usize,
    pub seed: u64,
    /// Set when the job failed (divergence, panic); the other fields are
    /// then empty.
    pub failure: Option<String>,
    pub success: bool,
    pub final_loss: Option<f64>,
    pub decodes: Vec<Vec<usize>>,
    pub dl: Vec<DLResult>,
}

/// Paired t-test of one rule's per-example costs against another rule's.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub against: CandidateRule,
    pub pairs: usize,
    #[serde(with = "crate::float_text")]
    pub t: f64,
    pub p: f64,
    pub zero_variance: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: String,
    pub params: String,
    pub learner: String,
    pub config: LearnerConfig,
    pub rule: CandidateRule,
    pub fpa: Option<f64>,
    /// Mean nats per holdout example over seeds and examples.
    pub l_mean: Option<f64>,
    /// This rule has the smallest mean description length of its setting.
    pub minimal: bool,
    /// Comparisons against every other rule of the setting.
    pub comparisons: Vec<Comparison>,
    /// The comparison behind the star: against the minimal rule, or for the
    /// minimal rule against the runner-up.
    pub selected: Option<Comparison>,
    pub star: bool,
    pub success_rate: f64,
    pub seeds: usize,
    pub failed_seeds: usize,
    pub excluded: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub records: Vec<SeedRecord>,
    pub manifest: RunManifest,
}

/// Short learner name with every non-default setting appended.
pub fn learner_label(config: &LearnerConfig) -> String {
    let d = LearnerConfig::new(config.kind);
    let mut parts = Vec::new();
    if config.layers != d.layers {
        parts.push(format!("layers={}", config.layers));
    }
    if config.hidden != d.hidden {
        parts.push(format!("hidden={}", config.hidden));
    }
    if config.embedding != d.embedding {
        parts.push(format!("embedding={}", config.embedding));
    }
    if config.kind.uses_heads() && config.heads != d.heads {
        parts.push(format!("heads={}", config.heads));
    }
    if config.kind == seqbias::learners::LearnerKind::Cnn && config.kernel != d.kernel {
        parts.push(format!("kernel={}", config.kernel));
    }
    if config.dropout != d.dropout {
        parts.push(format!("dropout={}", config.dropout));
    }
    if parts.is_empty() {
        config.kind.to_string()
    } else {
        format!("{}({})", config.kind, parts.join(","))
    }
}

fn run_job(
    spec: &ExperimentSpec,
    task: TaskInstance,
    rules: &[CandidateRule],
    config: &LearnerConfig,
    seed: u64,
) -> seqbias::Result<(bool, f64, Vec<Vec<usize>>, Vec<DLResult>)> {
    let data = task.data()?;
    let init = init_learner::<f64>(config, data.input_vocab.len(), data.output_vocab.len(), seed)?;
    let learner = NeuralLearner {
        init,
        hyper: spec.train.clone(),
        seed,
    };
    let base = learner.fit(&data.train)?;
    let decodes = if spec.wants(Metric::Fpa) {
        decode_holdout(&base.model, &data)?
    } else {
        Vec::new()
    };
    let dl = if spec.wants(Metric::Dl) {
        let block = spec.block_size(task.kind());
        rules
            .par_iter()
            .map(|&rule| {
                let schedule = TransmissionSchedule::new(&data, rule, block, seed)?;
                prequential_code_from(&learner, &data, &schedule, &base)
            })
            .collect::<seqbias::Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok((base.success, base.final_loss, decodes, dl))
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Runs every job of `spec` on `workers` threads (all cores when `None`).
pub fn execute(spec: &ExperimentSpec, workers: Option<usize>) -> Result<Vec<SeedRecord>> {
    spec.validate()?;
    let tasks = spec.task_instances()?;
    let configs = spec.learner_configs();
    let mut jobs = Vec::new();
    for (t, _) in tasks.iter().enumerate() {
        for c in 0..configs.len() {
            for seed in spec.seed_list() {
                jobs.push((t, c, seed));
            }
        }
    }
    let pool = crate::worker_pool(workers)?;
    let mut records: Vec<SeedRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(t, c, seed)| {
                let (task, rules) = &tasks[t];
                let outcome = catch_unwind(AssertUnwindSafe(|| run_job(spec, *task, rules, &configs[c], seed)));
                let mut record = SeedRecord {
                    task: *task,
                    learner: c,
                    seed,
                    failure: None,
                    success: false,
                    final_loss: None,
                    decodes: Vec::new(),
                    dl: Vec::new(),
                };
                match outcome {
                    Ok(Ok((success, loss, decodes, dl))) => {
                        record.success = success;
                        record.final_loss = Some(loss);
                        record.decodes = decodes;
                        record.dl = dl;
                    }
                    Ok(Err(e)) => record.failure = Some(e.to_string()),
                    Err(payload) => record.failure = Some(format!("panic: {}", panic_message(payload))),
                }
                record
            })
            .collect()
    });
    let order: BTreeMap<TaskInstance, usize> = tasks.iter().enumerate().map(|(i, (t, _))| (*t, i)).collect();
    records.sort_by_key(|r| (order[&r.task], r.learner, r.seed));
    Ok(records)
}

/// Costs of `rule` keyed by (seed, holdout index).
fn costs(records: &[&SeedRecord], rule: CandidateRule) -> BTreeMap<(u64, usize), f64> {
    let mut out = BTreeMap::new();
    for r in records {
        if let Some(dl) = r.dl.iter().find(|d| d.rule == rule) {
            for (i, c) in dl.per_example() {
                out.insert((r.seed, i), c);
            }
        }
    }
    out
}

fn compare(
    a: &BTreeMap<(u64, usize), f64>,
    b: &BTreeMap<(u64, usize), f64>,
    against: CandidateRule,
) -> Result<Option<Comparison>> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .iter()
        .filter_map(|(k, &x)| b.get(k).map(|&y| (x, y)))
        .unzip();
    if xs.len() < 2 {
        return Ok(None);
    }
    let r = paired_t_test(&xs, &ys)?;
    Ok(Some(Comparison {
        against,
        pairs: xs.len(),
        t: r.t,
        p: r.p,
        zero_variance: r.zero_variance,
    }))
}

/// Aggregates seed records into one row per (task, learner, rule).
pub fn aggregate(spec: &ExperimentSpec, records: &[SeedRecord]) -> Result<Vec<ResultRow>> {
    let configs = spec.learner_configs();
    let mut rows = Vec::new();
    for (task, rules) in spec.task_instances()? {
        let data = task.data()?;
        for (c, config) in configs.iter().enumerate() {
            let all: Vec<&SeedRecord> = records.iter().filter(|r| r.task == task && r.learner == c).collect();
            let done: Vec<&SeedRecord> = all.iter().copied().filter(|r| r.failure.is_none()).collect();
            let seeds = all.len();
            let success_rate = if seeds == 0 {
                0.0
            } else {
                done.iter().filter(|r| r.success).count() as f64 / seeds as f64
            };
            let per_rule: Vec<BTreeMap<(u64, usize), f64>> = rules.iter().map(|&r| costs(&done, r)).collect();
            let means: Vec<Option<f64>> = per_rule
                .iter()
                .map(|m| (!m.is_empty()).then(|| m.values().sum::<f64>() / m.len() as f64))
                .collect();
            let mut ranked: Vec<usize> = (0..rules.len()).filter(|&i| means[i].is_some()).collect();
            ranked.sort_by(|&a, &b| means[a].unwrap().total_cmp(&means[b].unwrap()).then(a.cmp(&b)));
            for (i, &rule) in rules.iter().enumerate() {
                let fpa = if spec.wants(Metric::Fpa) && seeds > 0 {
                    // Failed seeds count as not agreeing.
                    let decodes: Vec<Vec<Vec<usize>>> = done.iter().map(|r| r.decodes.clone()).collect();
                    let agreeing = if decodes.is_empty() {
                        0
                    } else {
                        fpa(&decodes, rule, &data)?.agreeing
                    };
                    Some(agreeing as f64 / seeds as f64)
                } else {
                    None
                };
                let mut comparisons = Vec::new();
                for (j, &other) in rules.iter().enumerate() {
                    if j != i {
                        if let Some(cmp) = compare(&per_rule[i], &per_rule[j], other)? {
                            comparisons.push(cmp);
                        }
                    }
                }
                let minimal = ranked.first() == Some(&i);
                let reference = if minimal { ranked.get(1) } else { ranked.first() };
                let selected = reference.and_then(|&j| comparisons.iter().find(|c| c.against == rules[j]).cloned());
                let star = selected.as_ref().is_some_and(|c| c.p < STAR_LEVEL);
                rows.push(ResultRow {
                    task: task.kind().to_string(),
                    params: task.params_label(),
                    learner: learner_label(config),
                    config: config.clone(),
                    rule,
                    fpa,
                    l_mean: means[i],
                    minimal,
                    comparisons,
                    selected,
                    star,
                    success_rate,
                    seeds,
                    failed_seeds: seeds - done.len(),
                    excluded: success_rate < SUCCESS_THRESHOLD,
                });
            }
        }
    }
    Ok(rows)
}

/// Executes and aggregates `spec`, producing rows and the manifest.
pub fn run_experiment(spec: &ExperimentSpec, workers: Option<usize>) -> Result<RunOutput> {
    let records = execute(spec, workers)?;
    let rows = aggregate(spec, &records)?;
    let manifest = RunManifest::new(spec, &rows)?;
    Ok(RunOutput {
        rows,
        records,
        manifest,
    })
}

/// Reruns the spec stored in `manifest` and checks that every row matches.
pub fn replay(manifest: &RunManifest, workers: Option<usize>) -> Result<RunOutput> {
    let hash = manifest.spec.hash()?;
    if hash != manifest.spec_hash {
        return Err(RunnerError::Replay(format!(
            "spec hash {hash} differs from recorded {}",
            manifest.spec_hash
        )));
    }
    let out = run_experiment(&manifest.spec, workers)?;
    if out.manifest.rows_hash != manifest.rows_hash {
        return Err(RunnerError::Replay(format!(
            "rows hash {} differs from recorded {}",
            out.manifest.rows_hash, manifest.rows_hash
        )));
    }
    Ok(out)
}
