//! Row and curve emission: CSV, JSON, a markdown table in the layout of the
//! results tables, and the raw per-step dump.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seqbias::metrics::{confidence_half_width, CurvePoint};

use crate::error::{Result, RunnerError};
use crate::run::{learner_label, ResultRow, RunOutput};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Csv => "rows.csv",
            ReportFormat::Json => "rows.json",
            ReportFormat::Markdown => "table.md",
        }
    }
}

/// Flat form of a row, in the fixed column order of every tabular output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub task: String,
    pub params: String,
    pub learner: String,
    pub rule: String,
    #[serde(rename = "FPA")]
    pub fpa: Option<f64>,
    #[serde(rename = "L_mean")]
    pub l_mean: Option<f64>,
    pub significance: String,
    pub success_rate: f64,
    pub seeds: usize,
}

/// `min` for the minimal rule, the selected comparison, and `*` when it is
/// significant, separated by `;`.
pub fn significance_label(row: &ResultRow) -> String {
    let mut parts = Vec::new();
    if row.minimal {
        parts.push("min".to_string());
    }
    if let Some(c) = &row.selected {
        parts.push(format!("vs={}", c.against));
        parts.push(format!("p={:e}", c.p));
    }
    if row.star {
        parts.push("*".into());
    }
    parts.join(";")
}

impl From<&ResultRow> for ReportRow {
    fn from(row: &ResultRow) -> Self {
        Self {
            task: row.task.clone(),
            params: row.params.clone(),
            learner: row.learner.clone(),
            rule: row.rule.to_string(),
            fpa: row.fpa,
            l_mean: row.l_mean,
            significance: significance_label(row),
            success_rate: row.success_rate,
            seeds: row.seeds,
        }
    }
}

pub fn write_csv(rows: &[ReportRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv(input: impl Read) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

fn cell(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.2}")).unwrap_or_default()
}

/// One table per task setting: a line per learner, FPA then L per rule.
/// The minimal L is bold, a star marks a significant difference, and
/// excluded learners show `-`.
pub fn markdown(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    let mut settings: Vec<(&str, &str)> = Vec::new();
    for r in rows {
        if !settings.contains(&(r.task.as_str(), r.params.as_str())) {
            settings.push((&r.task, &r.params));
        }
    }
    for (task, params) in settings {
        let group: Vec<&ResultRow> = rows.iter().filter(|r| r.task == task && r.params == params).collect();
        let mut rules = Vec::new();
        let mut learners: Vec<&str> = Vec::new();
        for r in &group {
            if !rules.contains(&r.rule) {
                rules.push(r.rule);
            }
            if !learners.contains(&r.learner.as_str()) {
                learners.push(&r.learner);
            }
        }
        out.push_str(&format!("### {task} {params}\n\n| learner |"));
        for r in &rules {
            out.push_str(&format!(" FPA-{r} |"));
        }
        for r in &rules {
            out.push_str(&format!(" L-{r} |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(2 * rules.len()));
        out.push('\n');
        for learner in learners {
            out.push_str(&format!("| {learner} |"));
            let find = |rule| group.iter().find(|r| r.learner == learner && r.rule == rule);
            let excluded = group.iter().any(|r| r.learner == learner && r.excluded);
            for &rule in &rules {
                let text = match find(rule) {
                    _ if excluded => "-".to_string(),
                    Some(r) => cell(r.fpa),
                    None => String::new(),
                };
                out.push_str(&format!(" {text} |"));
            }
            for &rule in &rules {
                let text = match find(rule) {
                    _ if excluded => "-".to_string(),
                    Some(r) => {
                        let mut t = cell(r.l_mean);
                        if r.minimal && !t.is_empty() {
                            t = format!("**{t}**");
                        }
                        if r.star {
                            t.push_str("\\*");
                        }
                        t
                    }
                    None => String::new(),
                };
                out.push_str(&format!(" {text} |"));
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(RunnerError::io(path))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(RunnerError::io(dir))
}

/// Writes `rows` to `dir` in `format` and returns the file path.
pub fn emit_report(rows: &[ResultRow], format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    if rows.is_empty() {
        return Err(RunnerError::EmptyReport);
    }
    ensure_dir(dir)?;
    let path = dir.join(format.file_name());
    let bytes = match format {
        ReportFormat::Csv => {
            let mut buf = Vec::new();
            let flat: Vec<ReportRow> = rows.iter().map(ReportRow::from).collect();
            write_csv(&flat, &mut buf)?;
            buf
        }
        ReportFormat::Json => serde_json::to_vec_pretty(rows)?,
        ReportFormat::Markdown => markdown(rows).into_bytes(),
    };
    write_file(&path, &bytes)?;
    Ok(path)
}

#[derive(Serialize)]
struct StepLine<'a> {
    kind: &'static str,
    task: String,
    params: String,
    learner: String,
    rule: String,
    seed: u64,
    step: usize,
    holdout: Vec<usize>,
    nats: f64,
    manifest: &'a str,
}

#[derive(Serialize)]
struct SeedLine<'a> {
    kind: &'static str,
    task: String,
    params: String,
    learner: String,
    seed: u64,
    success: bool,
    final_loss: Option<f64>,
    failure: Option<&'a str>,
    manifest: &'a str,
}

/// Line-delimited JSON: one `seed` line per job and one `step` line per
/// transmitted block.
pub fn write_raw(output: &RunOutput, mut out: impl Write) -> Result<()> {
    let configs = output.manifest.spec.learner_configs();
    let hash = output.manifest.spec_hash.as_str();
    let io = |e| RunnerError::io("raw dump")(e);
    for r in &output.records {
        let learner = learner_label(&configs[r.learner]);
        let seed_line = SeedLine {
            kind: "seed",
            task: r.task.kind().to_string(),
            params: r.task.params_label(),
            learner: learner.clone(),
            seed: r.seed,
            success: r.success,
            final_loss: r.final_loss,
            failure: r.failure.as_deref(),
            manifest: hash,
        };
        writeln!(out, "{}", serde_json::to_string(&seed_line)?).map_err(io)?;
        for dl in &r.dl {
            for step in &dl.steps {
                let line = StepLine {
                    kind: "step",
                    task: r.task.kind().to_string(),
                    params: r.task.params_label(),
                    learner: learner.clone(),
                    rule: dl.rule.to_string(),
                    seed: r.seed,
                    step: step.block,
                    holdout: step.examples.iter().map(|e| e.0).collect(),
                    nats: step.nats,
                    manifest: hash,
                };
                writeln!(out, "{}", serde_json::to_string(&line)?).map_err(io)?;
            }
        }
    }
    Ok(())
}

/// Writes the manifest, rows in every format, and the raw dump to `dir`.
pub fn write_outputs(output: &RunOutput, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write_file(&dir.join("manifest.json"), &serde_json::to_vec_pretty(&output.manifest)?)?;
    if !output.rows.is_empty() {
        for format in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown] {
            emit_report(&output.rows, format, dir)?;
        }
    }
    let mut raw = Vec::new();
    write_raw(output, &mut raw)?;
    write_file(&dir.join("raw.jsonl"), &raw)
}

/// One line of a normalized description-length curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    #[serde(rename = "M")]
    pub m: usize,
    pub learner: String,
    pub mean_nats: f64,
    /// Half-width of the 90% confidence interval across seeds.
    pub half_width_90: f64,
}

pub fn curve_rows(learner: &str, points: &[CurvePoint]) -> Result<Vec<CurveRow>> {
    points
        .iter()
        .map(|p| {
            Ok(CurveRow {
                m: p.m,
                learner: learner.to_string(),
                mean_nats: p.mean,
                half_width_90: confidence_half_width(&p.per_seed, 0.9)?,
            })
        })
        .collect()
}

/// Tab-separated curve data with a header line.
pub fn emit_curve(rows: &[CurveRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(RunnerError::EmptyReport);
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    write_file(path, &bytes)
}
