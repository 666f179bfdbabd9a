//! Comparison tables and reward series from evaluation and training CSVs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::{MetricsRow, METRICS_SCHEMA_VERSION};

/// One line of `evaluation.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRow {
    pub input: String,
    pub reference: String,
    pub output: String,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub bleu: f64,
    #[serde(default)]
    pub reward: Option<f64>,
}

pub const MEAN_LABEL: &str = "MEAN";

const EVAL_REQUIRED: [&str; 7] = ["input", "reference", "output", "rouge1", "rouge2", "rougeL", "bleu"];
const EVAL_OPTIONAL: [&str; 1] = ["reward"];

/// Column means; the reward mean is present only when every row has one.
pub fn mean_row(rows: &[EvalRow]) -> EvalRow {
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let rewards: Option<Vec<f64>> = rows.iter().map(|r| r.reward).collect();
    EvalRow {
        input: MEAN_LABEL.into(),
        reference: String::new(),
        output: String::new(),
        rouge1: mean(|r| r.rouge1),
        rouge2: mean(|r| r.rouge2),
        rouge_l: mean(|r| r.rouge_l),
        bleu: mean(|r| r.bleu),
        reward: rewards.filter(|r| !r.is_empty()).map(|r| r.iter().sum::<f64>() / n),
    }
}

/// Per-pair rows followed by the mean row.
pub fn write_evaluation(path: &Path, rows: &[EvalRow], mean: &EvalRow) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows.iter().chain([mean]) {
        w.serialize(r)?;
    }
    Ok(w.flush()?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Evaluation,
    Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub model: String,
    pub source: Source,
    /// Sentences averaged; empty for rows taken from training metrics.
    pub sentences: Option<usize>,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub bleu: f64,
    pub reward: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub model: String,
    pub phase: String,
    pub epoch: usize,
    pub step: u64,
    pub mean_raw_reward: Option<f64>,
    pub mean_rescaled_reward: Option<f64>,
    pub heldout_reward: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub table: Vec<TableRow>,
    pub series: Vec<SeriesPoint>,
}

fn metrics_columns() -> Vec<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(MetricsRow::default()).expect("in-memory csv");
    let bytes = w.into_inner().expect("in-memory csv");
    let text = String::from_utf8(bytes).expect("ascii header");
    text.lines().next().unwrap_or("").split(',').map(String::from).collect()
}

/// Name a model after the directory holding its CSV, else the file stem.
fn model_name(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn schema_error(path: &Path, columns: Vec<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        columns,
    }
}

fn read_evaluation(path: &Path, header: &[String]) -> Result<TableRow> {
    let mut offending: Vec<String> = EVAL_REQUIRED
        .iter()
        .filter(|c| !header.iter().any(|h| h == *c))
        .map(|c| format!("missing {c}"))
        .collect();
    offending.extend(
        header
            .iter()
            .filter(|h| !EVAL_REQUIRED.contains(&h.as_str()) && !EVAL_OPTIONAL.contains(&h.as_str()))
            .map(|h| format!("unexpected {h}")),
    );
    if !offending.is_empty() {
        return Err(schema_error(path, offending));
    }
    let mut rows = Vec::new();
    for r in csv::Reader::from_path(path)?.deserialize::<EvalRow>() {
        let r = r?;
        if r.input != MEAN_LABEL {
            rows.push(r);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("evaluation rows"));
    }
    let m = mean_row(&rows);
    Ok(TableRow {
        model: model_name(path),
        source: Source::Evaluation,
        sentences: Some(rows.len()),
        rouge1: m.rouge1,
        rouge2: m.rouge2,
        rouge_l: m.rouge_l,
        bleu: m.bleu,
        reward: m.reward,
    })
}

fn read_metrics(path: &Path, header: &[String], report: &mut Report) -> Result<()> {
    let expected = metrics_columns();
    let mut offending: Vec<String> = expected
        .iter()
        .filter(|c| !header.contains(c))
        .map(|c| format!("missing {c}"))
        .collect();
    offending.extend(header.iter().filter(|h| !expected.contains(h)).map(|h| format!("unexpected {h}")));
    if !offending.is_empty() {
        return Err(schema_error(path, offending));
    }
    let model = model_name(path);
    let mut last_heldout = None;
    for r in csv::Reader::from_path(path)?.deserialize::<MetricsRow>() {
        let r = r?;
        if r.schema_version != METRICS_SCHEMA_VERSION {
            return Err(schema_error(
                path,
                vec![format!("schema_version {} (expected {METRICS_SCHEMA_VERSION})", r.schema_version)],
            ));
        }
        if r.mean_raw_reward.is_some() || r.heldout_reward.is_some() {
            report.series.push(SeriesPoint {
                model: model.clone(),
                phase: r.phase.clone(),
                epoch: r.epoch,
                step: r.step,
                mean_raw_reward: r.mean_raw_reward,
                mean_rescaled_reward: r.mean_rescaled_reward,
                heldout_reward: r.heldout_reward,
            });
        }
        if r.heldout_rouge1.is_some() {
            last_heldout = Some(r);
        }
    }
    if let Some(r) = last_heldout {
        report.table.push(TableRow {
            model,
            source: Source::Metrics,
            sentences: None,
            rouge1: r.heldout_rouge1.unwrap_or(0.0),
            rouge2: r.heldout_rouge2.unwrap_or(0.0),
            rouge_l: r.heldout_rouge_l.unwrap_or(0.0),
            bleu: r.heldout_bleu.unwrap_or(0.0),
            reward: r.heldout_reward,
        });
    }
    Ok(())
}

/// Evaluation CSVs give one table row each (column means over sentences);
/// training metrics CSVs give their last held-out row plus a reward series.
pub fn build(paths: &[PathBuf]) -> Result<Report> {
    if paths.is_empty() {
        return Err(Error::EmptyInput("report inputs"));
    }
    let mut report = Report::default();
    for path in paths {
        let header: Vec<String> = csv::Reader::from_path(path)?.headers()?.iter().map(String::from).collect();
        if header.iter().any(|h| h == "schema_version") {
            read_metrics(path, &header, &mut report)?;
        } else if header.iter().any(|h| h == "input") {
            report.table.push(read_evaluation(path, &header)?);
        } else {
            return Err(schema_error(path, header.iter().map(|h| format!("unexpected {h}")).collect()));
        }
    }
    Ok(report)
}

impl Report {
    pub fn write(&self, table: &Path, series: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(table)?;
        if self.table.is_empty() {
            w.write_record(["model", "source", "sentences", "rouge1", "rouge2", "rougeL", "bleu", "reward"])?;
        }
        for r in &self.table {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(series)?;
        if self.series.is_empty() {
            w.write_record(["model", "phase", "epoch", "step", "mean_raw_reward", "mean_rescaled_reward", "heldout_reward"])?;
        }
        for p in &self.series {
            w.serialize(p)?;
        }
        Ok(w.flush()?)
    }
}
