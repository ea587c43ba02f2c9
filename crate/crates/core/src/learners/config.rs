use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    LstmNoAttention,
    LstmAttention,
    Cnn,
    Transformer,
    JointSourceTargetAttention,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 5] = [
        LearnerKind::LstmNoAttention,
        LearnerKind::LstmAttention,
        LearnerKind::Cnn,
        LearnerKind::Transformer,
        LearnerKind::JointSourceTargetAttention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::LstmNoAttention => "lstm-no-attention",
            LearnerKind::LstmAttention => "lstm-attention",
            LearnerKind::Cnn => "cnn",
            LearnerKind::Transformer => "transformer",
            LearnerKind::JointSourceTargetAttention => "joint-source-target-attention",
        }
    }

    pub fn uses_heads(self) -> bool {
        matches!(
            self,
            LearnerKind::Transformer | LearnerKind::JointSourceTargetAttention
        )
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LearnerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = LearnerKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown learner {s:?}; expected one of {}", known.join(", ")))
            })
    }
}

/// Architecture hyperparameters.
///
/// `hidden` is the LSTM state size, the number of convolution filters, or
/// the transformer feed-forward width depending on `kind`. For the attention
/// models the model dimension is `embedding`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    #[serde(default = "defaults::layers")]
    pub layers: usize,
    #[serde(default = "defaults::hidden")]
    pub hidden: usize,
    #[serde(default = "defaults::embedding")]
    pub embedding: usize,
    #[serde(default = "defaults::heads")]
    pub heads: usize,
    #[serde(default = "defaults::kernel")]
    pub kernel: usize,
    #[serde(default = "defaults::dropout")]
    pub dropout: f64,
}

mod defaults {
    pub fn layers() -> usize {
        1
    }
    pub fn hidden() -> usize {
        512
    }
    pub fn embedding() -> usize {
        16
    }
    pub fn heads() -> usize {
        8
    }
    pub fn kernel() -> usize {
        3
    }
    pub fn dropout() -> f64 {
        0.5
    }
}

impl LearnerConfig {
    pub fn new(kind: LearnerKind) -> Self {
        Self {
            kind,
            layers: defaults::layers(),
            hidden: defaults::hidden(),
            embedding: defaults::embedding(),
            heads: defaults::heads(),
            kernel: defaults::kernel(),
            dropout: defaults::dropout(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("embedding", self.embedding),
            ("heads", self.heads),
            ("kernel", self.kernel),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.kind.uses_heads() && self.embedding % self.heads != 0 {
            return Err(Error::Config(format!(
                "{} heads do not divide model dimension {}",
                self.heads, self.embedding
            )));
        }
        Ok(())
    }
}
