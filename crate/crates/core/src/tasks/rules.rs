use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{TaskData, TaskInstance};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateRule {
    Count,
    Mem,
    Add,
    Mul,
    Mul1,
    Mul2,
    Mul3,
    Hierar,
    Linear,
    Comp,
}

impl CandidateRule {
    pub const ALL: [CandidateRule; 10] = [
        CandidateRule::Count,
        CandidateRule::Mem,
        CandidateRule::Add,
        CandidateRule::Mul,
        CandidateRule::Mul1,
        CandidateRule::Mul2,
        CandidateRule::Mul3,
        CandidateRule::Hierar,
        CandidateRule::Linear,
        CandidateRule::Comp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CandidateRule::Count => "count",
            CandidateRule::Mem => "mem",
            CandidateRule::Add => "add",
            CandidateRule::Mul => "mul",
            CandidateRule::Mul1 => "mul1",
            CandidateRule::Mul2 => "mul2",
            CandidateRule::Mul3 => "mul3",
            CandidateRule::Hierar => "hierar",
            CandidateRule::Linear => "linear",
            CandidateRule::Comp => "comp",
        }
    }
}

impl fmt::Display for CandidateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CandidateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CandidateRule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Task(format!("unknown rule {s:?}")))
    }
}

fn malformed(data: &TaskData, input: &[usize]) -> Error {
    Error::Task(format!(
        "input {:?} is not a {} input",
        data.input_vocab.render(input),
        data.instance.kind()
    ))
}

/// Body of an end-of-sequence-terminated input.
fn body<'a>(data: &TaskData, input: &'a [usize]) -> Result<&'a [usize]> {
    data.input_vocab.check(input)?;
    match input.split_last() {
        Some((&last, rest)) if last == data.input_vocab.eos() => Ok(rest),
        _ => Err(malformed(data, input)),
    }
}

fn b_run(data: &TaskData, count: usize) -> Vec<usize> {
    let b = data.output_vocab.id("b").expect("arithmetic tasks output b");
    let mut v = vec![b; count];
    v.push(data.output_vocab.eos());
    v
}

pub(super) fn apply(data: &TaskData, rule: CandidateRule, input: &[usize]) -> Result<Vec<usize>> {
    use CandidateRule::*;
    let instance = data.instance;
    if !instance.rules().contains(&rule) {
        return Err(Error::Task(format!(
            "rule {rule} does not belong to task {}",
            instance.kind()
        )));
    }
    let tokens = body(data, input)?;
    match instance {
        TaskInstance::CountMem { l } | TaskInstance::AddMul { l } | TaskInstance::Mult3 { l } => {
            let a = data.input_vocab.id("a").expect("arithmetic tasks read a");
            if tokens.iter().any(|&t| t != a) {
                return Err(malformed(data, input));
            }
            let m = tokens.len();
            let count = match rule {
                Count => m,
                Add => m + l,
                Mul => 2 * m,
                Mul1 => 2 * l + m,
                Mul2 => l + 2 * m,
                Mul3 => 3 * m,
                Mem => match instance {
                    TaskInstance::CountMem { .. } => l,
                    TaskInstance::AddMul { .. } => 2 * l,
                    _ => 3 * l,
                },
                Hierar | Linear | Comp => unreachable!("filtered above"),
            };
            Ok(b_run(data, count))
        }
        TaskInstance::HierLinear { d } => {
            // x^m y x^m
            if tokens.len() % 2 == 0 {
                return Err(malformed(data, input));
            }
            let m = tokens.len() / 2;
            let x = tokens[0];
            if (0..m).any(|i| tokens[i] != x || tokens[tokens.len() - 1 - i] != x) {
                return Err(malformed(data, input));
            }
            let symbol = match rule {
                Hierar => tokens[m],
                Linear => {
                    if 2 * m < d {
                        return Err(Error::Inapplicable {
                            rule: rule.to_string(),
                            reason: format!("depth {m} is below d/2 for d={d}"),
                        });
                    }
                    tokens[d]
                }
                _ => unreachable!("filtered above"),
            };
            // Input and output vocabularies list a, b in the same order.
            let name = data.input_vocab.symbol(symbol).expect("checked");
            Ok(vec![
                data.output_vocab.id(name).expect("a and b on both sides"),
                data.output_vocab.eos(),
            ])
        }
        TaskInstance::CompMem { n, .. } => {
            let thrice = data.input_vocab.id("thrice").expect("comp-mem has thrice");
            let (modified, prim) = match tokens {
                [p] if *p != thrice => (false, *p),
                [t, p] if *t == thrice && *p != thrice => (true, *p),
                _ => return Err(malformed(data, input)),
            };
            let name = data.input_vocab.symbol(prim).expect("checked");
            let i: usize = name[1..].parse().map_err(|_| malformed(data, input))?;
            debug_assert!((1..=n).contains(&i));
            let b = data
                .output_vocab
                .id(&format!("b{i}"))
                .expect("one output per primitive");
            let eos = data.output_vocab.eos();
            if !modified {
                return Ok(vec![b, eos]);
            }
            match rule {
                Comp => Ok(vec![b, b, b, eos]),
                Mem => {
                    // Memorized pairs first, then the primitive's own output.
                    if let Some(ex) = data.train.iter().find(|e| e.input == input) {
                        Ok(ex.output.clone())
                    } else {
                        Ok(vec![b, eos])
                    }
                }
                _ => unreachable!("filtered above"),
            }
        }
    }
}
