use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RunnerError};
use crate::run::{ResultRow, STAR_LEVEL, SUCCESS_THRESHOLD};
use crate::spec::ExperimentSpec;

pub const MANIFEST_FORMAT: &str = "seqbias-manifest";

/// Everything needed to rerun an experiment and check the result: the
/// resolved spec, the seeds, the protocol choices the code makes, and
/// hashes of the spec and of the rows it produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub software_version: String,
    pub spec_hash: String,
    pub rows_hash: String,
    pub seeds: Vec<u64>,
    pub decisions: BTreeMap<String, String>,
    pub spec: ExperimentSpec,
}

fn decisions(spec: &ExperimentSpec) -> BTreeMap<String, String> {
    let t = &spec.train;
    let entries = [
        ("rng", "ChaCha8 keyed by splitmix64(seed, domain); domains init, dropout, order".to_string()),
        (
            "init",
            "weights uniform(+-1/sqrt(fan_in)), biases 0, embeddings and learned positions normal(0, 0.1), layer-norm gain 1".into(),
        ),
        ("decoder_start", "dedicated beginning-of-sequence row appended to the decoder embedding".into()),
        ("warmup", format!("linear from {} to {} over {} updates", t.lr_floor, t.lr_peak, t.warmup)),
        ("optimizer", format!("adam beta1={} beta2={} eps={}", t.beta1, t.beta2, t.epsilon)),
        ("batch", "full batch; one update per epoch".into()),
        ("loss", "summed token negative log-likelihood (nats), teacher forcing".into()),
        (
            "dropout",
            match t.dropout {
                Some(p) => format!("{p} for every learner"),
                None => "learner configuration value".into(),
            },
        ),
        ("dl_retraining", "same initialization and dropout seed; dropout on while training, off while scoring".into()),
        ("dl_block_order", "holdout shuffled per seed with the order stream".into()),
        ("dl_constant", "|y_1| ln |V| with V including end-of-sequence; excluded from totals".into()),
        ("decode_max_len", "3 * longest candidate output + 2".into()),
        ("t_test_pairing", "per (seed, holdout example), matched across rules".into()),
        (
            "star",
            format!("p < {STAR_LEVEL} against the minimal-L rule (runner-up for the minimal rule)"),
        ),
        (
            "success_filter",
            format!("settings with train success below {SUCCESS_THRESHOLD} are marked excluded"),
        ),
        ("failed_seeds", "count toward seeds and against FPA; contribute no DL".into()),
    ];
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

impl RunManifest {
    pub fn new(spec: &ExperimentSpec, rows: &[ResultRow]) -> Result<Self> {
        Ok(Self {
            format: MANIFEST_FORMAT.into(),
            software_version: env!("CARGO_PKG_VERSION").into(),
            spec_hash: spec.hash()?,
            rows_hash: crate::hex_sha256(serde_json::to_string(rows)?.as_bytes()),
            seeds: spec.seed_list(),
            decisions: decisions(spec),
            spec: spec.clone(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(RunnerError::io(path))?;
        let m: RunManifest = serde_json::from_str(&text)?;
        if m.format != MANIFEST_FORMAT {
            return Err(RunnerError::Replay(format!("{} is not a run manifest", path.display())));
        }
        Ok(m)
    }
}
