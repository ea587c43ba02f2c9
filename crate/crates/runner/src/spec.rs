//! Experiment specifications: grids of tasks and learners, seeds, metrics
//! and training settings, read from TOML.
//!
//! ```toml
//! name = "count-mem"
//! seeds = 20
//! output = "out/count-mem"
//!
//! [[tasks]]
//! task = "count-mem"
//! l = [10, 20, 30, 40]
//!
//! [[learners]]
//! kind = "lstm-no-attention"
//! hidden = [512]
//!
//! [train]
//! epochs = 3000
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seqbias::learners::{LearnerConfig, LearnerKind};
use seqbias::tasks::{CandidateRule, TaskInstance, TaskKind};
use seqbias::training::TrainHyper;

use crate::error::{Result, RunnerError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Fpa,
    Dl,
}

/// Parameter grid of one task; the parameters a task does not take must
/// stay empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskGrid {
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub l: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub d: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub m: Vec<usize>,
    /// Rules to measure; empty means every candidate rule of the task.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<CandidateRule>,
}

impl TaskGrid {
    pub fn instances(&self) -> Result<Vec<TaskInstance>> {
        let opt = |v: &[usize]| -> Vec<Option<usize>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        };
        let mut out = Vec::new();
        for &l in &opt(&self.l) {
            for &d in &opt(&self.d) {
                for &n in &opt(&self.n) {
                    for &m in &opt(&self.m) {
                        out.push(TaskInstance::from_params(self.task, l, d, n, m)?);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn rules_for(&self, instance: &TaskInstance) -> Vec<CandidateRule> {
        if self.rules.is_empty() {
            instance.rules()
        } else {
            self.rules.clone()
        }
    }
}

mod defaults {
    pub fn one() -> Vec<usize> {
        vec![1]
    }
    pub fn hidden() -> Vec<usize> {
        vec![512]
    }
    pub fn embedding() -> Vec<usize> {
        vec![16]
    }
    pub fn heads() -> Vec<usize> {
        vec![8]
    }
    pub fn kernel() -> Vec<usize> {
        vec![3]
    }
    pub fn dropout() -> Vec<f64> {
        vec![0.5]
    }
    pub fn name() -> String {
        "experiment".into()
    }
    pub fn seeds() -> u64 {
        20
    }
    pub fn metrics() -> Vec<super::Metric> {
        vec![super::Metric::Fpa, super::Metric::Dl]
    }
    pub fn output() -> std::path::PathBuf {
        "out".into()
    }
}

/// Sweep axes of one learner kind; the grid is their Cartesian product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerGrid {
    pub kind: LearnerKind,
    #[serde(default = "defaults::one")]
    pub layers: Vec<usize>,
    #[serde(default = "defaults::hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "defaults::embedding")]
    pub embedding: Vec<usize>,
    #[serde(default = "defaults::heads")]
    pub heads: Vec<usize>,
    #[serde(default = "defaults::kernel")]
    pub kernel: Vec<usize>,
    #[serde(default = "defaults::dropout")]
    pub dropout: Vec<f64>,
}

impl LearnerGrid {
    pub fn new(kind: LearnerKind) -> Self {
        Self {
            kind,
            layers: defaults::one(),
            hidden: defaults::hidden(),
            embedding: defaults::embedding(),
            heads: defaults::heads(),
            kernel: defaults::kernel(),
            dropout: defaults::dropout(),
        }
    }

    pub fn configs(&self) -> Vec<LearnerConfig> {
        let mut out = Vec::new();
        for &layers in &self.layers {
            for &hidden in &self.hidden {
                for &embedding in &self.embedding {
                    for &heads in &self.heads {
                        for &kernel in &self.kernel {
                            for &dropout in &self.dropout {
                                out.push(LearnerConfig {
                                    kind: self.kind,
                                    layers,
                                    hidden,
                                    embedding,
                                    heads,
                                    kernel,
                                    dropout,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Normalized description length over the composition family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub n: usize,
    pub m: Vec<usize>,
    #[serde(default = "curve_rule")]
    pub rule: CandidateRule,
}

fn curve_rule() -> CandidateRule {
    CandidateRule::Comp
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "defaults::name")]
    pub name: String,
    #[serde(default)]
    pub tasks: Vec<TaskGrid>,
    pub learners: Vec<LearnerGrid>,
    #[serde(default = "defaults::seeds")]
    pub seeds: u64,
    #[serde(default)]
    pub first_seed: u64,
    #[serde(default = "defaults::metrics")]
    pub metrics: Vec<Metric>,
    /// Holdout block size per task, overriding the task defaults.
    #[serde(default)]
    pub block_sizes: BTreeMap<TaskKind, usize>,
    #[serde(default)]
    pub train: TrainHyper,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveSpec>,
    #[serde(default = "defaults::output")]
    pub output: PathBuf,
}

impl ExperimentSpec {
    pub fn new(tasks: Vec<TaskGrid>, learners: Vec<LearnerGrid>) -> Self {
        Self {
            name: defaults::name(),
            tasks,
            learners,
            seeds: defaults::seeds(),
            first_seed: 0,
            metrics: defaults::metrics(),
            block_sizes: BTreeMap::new(),
            train: TrainHyper::default(),
            curve: None,
            output: defaults::output(),
        }
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|source| RunnerError::Toml {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(RunnerError::io(path))?;
        Self::from_toml(&text, path)
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (self.first_seed..self.first_seed + self.seeds).collect()
    }

    pub fn block_size(&self, kind: TaskKind) -> usize {
        self.block_sizes
            .get(&kind)
            .copied()
            .unwrap_or_else(|| kind.default_block_size())
    }

    pub fn wants(&self, metric: Metric) -> bool {
        self.metrics.contains(&metric)
    }

    /// Every learner configuration of the grid, in spec order.
    pub fn learner_configs(&self) -> Vec<LearnerConfig> {
        self.learners.iter().flat_map(LearnerGrid::configs).collect()
    }

    /// Task instances paired with the rules measured on them, in spec order.
    pub fn task_instances(&self) -> Result<Vec<(TaskInstance, Vec<CandidateRule>)>> {
        let mut out = Vec::new();
        for grid in &self.tasks {
            for inst in grid.instances()? {
                let rules = grid.rules_for(&inst);
                out.push((inst, rules));
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(RunnerError::Spec(msg));
        if self.tasks.is_empty() && self.curve.is_none() {
            return fail("no tasks".into());
        }
        if self.learners.is_empty() {
            return fail("no learners".into());
        }
        if self.seeds == 0 {
            return fail("seed count must be at least 1".into());
        }
        if self.metrics.is_empty() {
            return fail("no metrics".into());
        }
        for (i, grid) in self.learners.iter().enumerate() {
            let axes = [
                grid.layers.is_empty(),
                grid.hidden.is_empty(),
                grid.embedding.is_empty(),
                grid.heads.is_empty(),
                grid.kernel.is_empty(),
                grid.dropout.is_empty(),
            ];
            if axes.contains(&true) {
                return fail(format!("learner grid {i} ({}) has an empty axis", grid.kind));
            }
        }
        for config in self.learner_configs() {
            config.validate()?;
        }
        for (inst, rules) in self.task_instances()? {
            let known = inst.rules();
            if rules.is_empty() {
                return fail(format!("{inst} has no rules"));
            }
            if let Some(r) = rules.iter().find(|r| !known.contains(r)) {
                return fail(format!("rule {r} is not a candidate rule of {inst}"));
            }
        }
        if let Some(&size) = self.block_sizes.values().find(|&&s| s == 0) {
            return fail(format!("block size {size} must be at least 1"));
        }
        if let Some(curve) = &self.curve {
            TaskInstance::CompMem { n: curve.n, m: 0 }.validate()?;
            if curve.m.is_empty() || curve.m.windows(2).any(|w| w[0] >= w[1]) {
                return fail(format!("curve M values {:?} must be strictly increasing", curve.m));
            }
            if let Some(m) = curve.m.iter().find(|&&m| m >= curve.n) {
                return fail(format!("curve M={m} leaves no examples for N={}", curve.n));
            }
        }
        self.train.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> Result<String> {
        Ok(crate::hex_sha256(serde_json::to_string(self)?.as_bytes()))
    }
}
