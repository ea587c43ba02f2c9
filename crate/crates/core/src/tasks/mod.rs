//! Ambiguous training sets, holdout inputs and candidate-rule oracles.
//!
//! Each task has a training set that every one of its candidate rules
//! reproduces exactly, while any two rules disagree somewhere on the
//! holdout inputs. Writing `a^k` for `k` repetitions of `a`:
//!
//! | task          | train                                  | holdout                  |
//! |---------------|----------------------------------------|--------------------------|
//! | `count-mem`   | `a^l -> b^l`                           | `a^m`, `m in [l-10, l+10]` |
//! | `add-mul`     | `a^l -> b^2l`                          | `a^m`, `m in [l-3, l+3]`   |
//! | `mult3`       | `a^l -> b^3l`                          | `a^m`, `m in [l-3, l+3]`   |
//! | `hier-linear` | `x^d y x^d -> y`, `x, y in {a, b}`     | `x^m y x^m`, `m in [d-2, d+2]` |
//! | `comp-mem`    | `a_i -> b_i` for all `i`, `thrice a_i -> b_i b_i b_i` for `i <= M` | `thrice a_i`, `i > M` |
//!
//! Repetition counts below zero are dropped from the intervals.

mod export;
mod rules;
mod vocab;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use export::{format_example, parse_example, write_dump};
pub use rules::CandidateRule;
pub use vocab::{Side, Vocab, EOS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    CountMem,
    AddMul,
    Mult3,
    HierLinear,
    CompMem,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::CountMem,
        TaskKind::AddMul,
        TaskKind::Mult3,
        TaskKind::HierLinear,
        TaskKind::CompMem,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::CountMem => "count-mem",
            TaskKind::AddMul => "add-mul",
            TaskKind::Mult3 => "mult3",
            TaskKind::HierLinear => "hier-linear",
            TaskKind::CompMem => "comp-mem",
        }
    }

    /// Holdout block size used for prequential transmission.
    pub fn default_block_size(self) -> usize {
        match self {
            TaskKind::HierLinear => 4,
            _ => 1,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Task(format!("unknown task {s:?}")))
    }
}

/// A task kind together with its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum TaskInstance {
    CountMem { l: usize },
    AddMul { l: usize },
    Mult3 { l: usize },
    HierLinear { d: usize },
    CompMem { n: usize, m: usize },
}

impl TaskInstance {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskInstance::CountMem { .. } => TaskKind::CountMem,
            TaskInstance::AddMul { .. } => TaskKind::AddMul,
            TaskInstance::Mult3 { .. } => TaskKind::Mult3,
            TaskInstance::HierLinear { .. } => TaskKind::HierLinear,
            TaskInstance::CompMem { .. } => TaskKind::CompMem,
        }
    }

    /// Builds an instance from optional parameters, rejecting missing or foreign ones.
    pub fn from_params(
        kind: TaskKind,
        l: Option<usize>,
        d: Option<usize>,
        n: Option<usize>,
        m: Option<usize>,
    ) -> Result<Self> {
        let need = |v: Option<usize>, name: &str| {
            v.ok_or_else(|| Error::Task(format!("{kind} needs parameter {name}")))
        };
        let forbid = |v: Option<usize>, name: &str| match v {
            Some(_) => Err(Error::Task(format!("{kind} does not take parameter {name}"))),
            None => Ok(()),
        };
        let inst = match kind {
            TaskKind::CountMem | TaskKind::AddMul | TaskKind::Mult3 => {
                forbid(d, "d")?;
                forbid(n, "N")?;
                forbid(m, "M")?;
                let l = need(l, "l")?;
                match kind {
                    TaskKind::CountMem => TaskInstance::CountMem { l },
                    TaskKind::AddMul => TaskInstance::AddMul { l },
                    _ => TaskInstance::Mult3 { l },
                }
            }
            TaskKind::HierLinear => {
                forbid(l, "l")?;
                forbid(n, "N")?;
                forbid(m, "M")?;
                TaskInstance::HierLinear { d: need(d, "d")? }
            }
            TaskKind::CompMem => {
                forbid(l, "l")?;
                forbid(d, "d")?;
                TaskInstance::CompMem {
                    n: need(n, "N")?,
                    m: need(m, "M")?,
                }
            }
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TaskInstance::CountMem { l } | TaskInstance::AddMul { l } | TaskInstance::Mult3 { l } => {
                if l == 0 {
                    return Err(Error::Task("l must be at least 1".into()));
                }
            }
            TaskInstance::HierLinear { d } => {
                if d == 0 {
                    return Err(Error::Task("d must be at least 1".into()));
                }
            }
            TaskInstance::CompMem { n, m } => {
                if n == 0 || m >= n {
                    return Err(Error::Task(format!("need 0 <= M < N, got N={n}, M={m}")));
                }
            }
        }
        Ok(())
    }

    /// Compact parameter string, e.g. `l=40` or `N=40,M=36`.
    pub fn params_label(&self) -> String {
        match *self {
            TaskInstance::CountMem { l } | TaskInstance::AddMul { l } | TaskInstance::Mult3 { l } => {
                format!("l={l}")
            }
            TaskInstance::HierLinear { d } => format!("d={d}"),
            TaskInstance::CompMem { n, m } => format!("N={n},M={m}"),
        }
    }

    /// Candidate rules of this task, in the order they are reported.
    pub fn rules(&self) -> Vec<CandidateRule> {
        use CandidateRule::*;
        match self.kind() {
            TaskKind::CountMem => vec![Count, Mem],
            TaskKind::AddMul => vec![Add, Mul, Mem],
            TaskKind::Mult3 => vec![Mul1, Mul2, Mul3, Mem],
            TaskKind::HierLinear => vec![Hierar, Linear],
            TaskKind::CompMem => vec![Comp, Mem],
        }
    }

    pub fn data(&self) -> Result<TaskData> {
        make_task_data(self)
    }
}

impl fmt::Display for TaskInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind(), self.params_label())
    }
}

/// Candidate rules of a task; see [`TaskInstance::rules`].
pub fn rules_for(instance: &TaskInstance) -> Vec<CandidateRule> {
    instance.rules()
}

/// An input/output pair of token ids, both terminated by end-of-sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Example {
    pub input: Vec<usize>,
    pub output: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct TaskData {
    pub instance: TaskInstance,
    pub train: Vec<Example>,
    pub holdout: Vec<Vec<usize>>,
    pub input_vocab: Vocab,
    pub output_vocab: Vocab,
}

impl TaskData {
    pub fn apply(&self, rule: CandidateRule, input: &[usize]) -> Result<Vec<usize>> {
        rules::apply(self, rule, input)
    }

    /// Whether `rule` is defined on `input`.
    pub fn applicable(&self, rule: CandidateRule, input: &[usize]) -> bool {
        !matches!(self.apply(rule, input), Err(Error::Inapplicable { .. }))
    }

    /// Holdout inputs on which `rule` is undefined (only `linear` at small depths).
    pub fn flagged_holdout(&self, rule: CandidateRule) -> Vec<usize> {
        (0..self.holdout.len())
            .filter(|&i| !self.applicable(rule, &self.holdout[i]))
            .collect()
    }

    /// Holdout examples labelled by `rule`, skipping inputs it does not cover.
    /// Each example carries its index into [`TaskData::holdout`].
    pub fn labeled_holdout(&self, rule: CandidateRule) -> Result<Vec<(usize, Example)>> {
        let mut out = Vec::new();
        for (i, x) in self.holdout.iter().enumerate() {
            match self.apply(rule, x) {
                Ok(y) => out.push((
                    i,
                    Example {
                        input: x.clone(),
                        output: y,
                    },
                )),
                Err(Error::Inapplicable { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    /// Longest output any candidate rule assigns to a train or holdout input.
    pub fn longest_output(&self) -> usize {
        let mut longest = self.train.iter().map(|e| e.output.len()).max().unwrap_or(1);
        for rule in self.instance.rules() {
            for x in &self.holdout {
                if let Ok(y) = self.apply(rule, x) {
                    longest = longest.max(y.len());
                }
            }
        }
        longest
    }

    /// Decoding cap: three times the longest candidate output, plus two.
    pub fn default_max_len(&self) -> usize {
        3 * self.longest_output() + 2
    }
}

fn repeat(token: usize, count: usize, eos: usize) -> Vec<usize> {
    let mut v = vec![token; count];
    v.push(eos);
    v
}

fn interval(center: usize, radius: usize) -> std::ops::RangeInclusive<usize> {
    center.saturating_sub(radius)..=center + radius
}

/// Generates the training set, holdout inputs and vocabularies of a task.
pub fn make_task_data(instance: &TaskInstance) -> Result<TaskData> {
    instance.validate()?;
    let data = match *instance {
        TaskInstance::CountMem { l } | TaskInstance::AddMul { l } | TaskInstance::Mult3 { l } => {
            let (factor, radius) = match instance.kind() {
                TaskKind::CountMem => (1, 10),
                TaskKind::AddMul => (2, 3),
                _ => (3, 3),
            };
            let iv = Vocab::new(Side::Input, ["a".to_string()]);
            let ov = Vocab::new(Side::Output, ["b".to_string()]);
            let (a, b) = (iv.id("a").unwrap(), ov.id("b").unwrap());
            TaskData {
                instance: *instance,
                train: vec![Example {
                    input: repeat(a, l, iv.eos()),
                    output: repeat(b, factor * l, ov.eos()),
                }],
                holdout: interval(l, radius).map(|m| repeat(a, m, iv.eos())).collect(),
                input_vocab: iv,
                output_vocab: ov,
            }
        }
        TaskInstance::HierLinear { d } => {
            let ab = || ["a".to_string(), "b".to_string()];
            let iv = Vocab::new(Side::Input, ab());
            let ov = Vocab::new(Side::Output, ab());
            let nested = |x: usize, y: usize, m: usize| {
                let mut s = vec![x; m];
                s.push(y);
                s.extend(std::iter::repeat(x).take(m));
                s.push(iv.eos());
                s
            };
            let (ia, ib) = (iv.id("a").unwrap(), iv.id("b").unwrap());
            let pairs = [(ia, ib), (ia, ia), (ib, ia), (ib, ib)];
            let train = pairs
                .iter()
                .map(|&(x, y)| Example {
                    input: nested(x, y, d),
                    output: vec![y, ov.eos()],
                })
                .collect();
            let mut holdout = Vec::new();
            for m in interval(d, 2) {
                for x in [ia, ib] {
                    for y in [ia, ib] {
                        holdout.push(nested(x, y, m));
                    }
                }
            }
            TaskData {
                instance: *instance,
                train,
                holdout,
                input_vocab: iv,
                output_vocab: ov,
            }
        }
        TaskInstance::CompMem { n, m } => {
            let iv = Vocab::new(
                Side::Input,
                std::iter::once("thrice".to_string()).chain((1..=n).map(|i| format!("a{i}"))),
            );
            let ov = Vocab::new(Side::Output, (1..=n).map(|i| format!("b{i}")));
            let thrice = iv.id("thrice").unwrap();
            let a = |i: usize| iv.id(&format!("a{i}")).unwrap();
            let b = |i: usize| ov.id(&format!("b{i}")).unwrap();
            let mut train: Vec<Example> = (1..=n)
                .map(|i| Example {
                    input: vec![a(i), iv.eos()],
                    output: vec![b(i), ov.eos()],
                })
                .collect();
            train.extend((1..=m).map(|i| Example {
                input: vec![thrice, a(i), iv.eos()],
                output: vec![b(i), b(i), b(i), ov.eos()],
            }));
            let holdout = (m + 1..=n).map(|i| vec![thrice, a(i), iv.eos()]).collect();
            TaskData {
                instance: *instance,
                train,
                holdout,
                input_vocab: iv,
                output_vocab: ov,
            }
        }
    };
    Ok(data)
}

/// Output the rule predicts for `input`.
pub fn apply_rule(data: &TaskData, rule: CandidateRule, input: &[usize]) -> Result<Vec<usize>> {
    data.apply(rule, input)
}
