//! Report documents and the files they are written to.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use conntra::domain::MemoryComparison;
use conntra::model::ModelSpec;
use conntra::pretrain::PretrainReport;
use conntra::search::{CurvePoint, TrainReport};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::pipeline::{DatasetSummary, Evaluation};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const PRETRAINED_WEIGHTS: &str = "pretrained.wts";
pub const PRETRAIN_REPORT: &str = "pretrain_report.json";
pub const PRETRAIN_CURVE: &str = "pretrain_curve.csv";
pub const PACKED_WEIGHTS: &str = "weights.cntrapk";
pub const TRAIN_REPORT: &str = "train_report.json";
pub const CURVE: &str = "curve.csv";
pub const EVALUATE_REPORT: &str = "evaluate_report.json";
pub const TRAINING_INSTANCE: &str = "training_instance.txt";
pub const QUBO_REPORT: &str = "qubo_report.json";
pub const REPORT: &str = "report.json";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const COMPARISON_TABLE: &str = "comparison.md";
pub const CURVES_CSV: &str = "curves.csv";

/// Storage of one parameter vector as 64-bit floats and as packed codes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemorySummary {
    pub param_count: u64,
    pub float64_bits: u32,
    pub packed_bits: u32,
    pub float64_kb: f64,
    pub packed_kb: f64,
    pub float64_kb_rounded: f64,
    pub packed_kb_rounded: f64,
    pub ratio: f64,
}

impl From<&MemoryComparison> for MemorySummary {
    fn from(m: &MemoryComparison) -> Self {
        Self {
            param_count: m.float64.param_count,
            float64_bits: m.float64.bits_per_param,
            packed_bits: m.packed.bits_per_param,
            float64_kb: m.float64.kilobytes,
            packed_kb: m.packed.kilobytes,
            float64_kb_rounded: m.float64.kilobytes_rounded(),
            packed_kb_rounded: m.packed.kilobytes_rounded(),
            ratio: m.ratio,
        }
    }
}

/// Headline numbers of one training method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub training_error_pct: f64,
    pub validation_error_pct: Option<f64>,
    pub memory_kb: f64,
    pub wall_seconds: f64,
}

pub type Outputs = BTreeMap<&'static str, String>;

#[derive(Debug, Serialize)]
pub struct PretrainDocument<'a> {
    pub command: &'static str,
    pub version: &'static str,
    pub config: &'a RunConfig,
    pub seed: u64,
    pub model: &'a ModelSpec,
    pub dataset: DatasetSummary,
    pub result: Evaluation,
    pub pretrain: &'a PretrainReport,
    pub memory: MemorySummary,
    pub outputs: Outputs,
    pub wall_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct TrainDocument<'a> {
    pub command: &'static str,
    pub version: &'static str,
    pub config: &'a RunConfig,
    pub seed: u64,
    pub model: &'a ModelSpec,
    pub dataset: DatasetSummary,
    /// Present when this run pretrained its own starting weights.
    pub backprop: Option<MethodResult>,
    pub conntra: MethodResult,
    /// Pretrained weights right after snapping, before the search.
    pub discretized: Evaluation,
    pub result: Evaluation,
    pub pretrain: Option<&'a PretrainReport>,
    pub search: &'a TrainReport,
    pub memory: MemorySummary,
    pub outputs: Outputs,
    pub wall_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct WeightsSource {
    pub path: Option<PathBuf>,
    /// `float64`, `packed` or `zero`.
    pub format: &'static str,
}

#[derive(Debug, Serialize)]
pub struct EvaluateDocument<'a> {
    pub command: &'static str,
    pub version: &'static str,
    pub config: &'a RunConfig,
    pub seed: u64,
    pub model: &'a ModelSpec,
    pub dataset: DatasetSummary,
    pub weights: WeightsSource,
    pub result: Evaluation,
    pub memory: MemorySummary,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuboConfig {
    pub input: PathBuf,
    pub out: PathBuf,
    pub tolerance: f64,
}

#[derive(Debug, Serialize)]
pub struct QuboDocument<'a> {
    pub command: &'static str,
    pub version: &'static str,
    pub config: &'a QuboConfig,
    pub seed: Option<u64>,
    pub dimension: usize,
    pub qubo_argmin: Vec<Vec<u8>>,
    pub training_argmin: Vec<Vec<u8>>,
    pub argmin_match: bool,
    /// Largest `|qubo(z) - (training(z) + c'/N)|` over all assignments.
    pub max_value_gap: f64,
    pub verdict: String,
    pub outputs: Outputs,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportConfig {
    pub runs: Vec<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub run: String,
    pub model: String,
    pub dataset: String,
    pub method: &'static str,
    pub seed: u64,
    pub training_error_pct: f64,
    pub validation_error_pct: Option<f64>,
    pub memory_kb: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct ReportDocument<'a> {
    pub command: &'static str,
    pub version: &'static str,
    pub config: &'a ReportConfig,
    pub seed: Option<u64>,
    pub rows: Vec<ComparisonRow>,
    pub outputs: Outputs,
    pub wall_seconds: f64,
}

/// One row of a curve CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub percent_training_complete: f64,
    pub training_error_pct: f64,
    pub validation_error_pct: Option<f64>,
}

impl From<&CurvePoint> for CurveRow {
    fn from(p: &CurvePoint) -> Self {
        Self {
            percent_training_complete: p.percent_training_complete,
            training_error_pct: p.training_error_pct,
            validation_error_pct: p.validation_error_pct,
        }
    }
}

/// Per-epoch rows of a pretraining run; epoch 0 is 0%.
pub fn pretrain_curve(r: &PretrainReport) -> Vec<CurveRow> {
    let total = r.config.epochs.max(1) as f64;
    r.epochs
        .iter()
        .map(|e| CurveRow {
            percent_training_complete: 100.0 * e.epoch as f64 / total,
            training_error_pct: e.training_error_pct,
            validation_error_pct: e.validation_error_pct,
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| CliError::Report {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let wrap = |e: csv::Error| CliError::Report {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Markdown table comparing the methods of each run.
pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut s = String::from(
        "| run | model | dataset | method | seed | training error (%) | validation error (%) | memory (KB) | time (s) |\n\
         |---|---|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let val = r.validation_error_pct.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.2} | {} | {} | {:.2} |\n",
            r.run, r.model, r.dataset, r.method, r.seed, r.training_error_pct, val, r.memory_kb, r.wall_seconds
        ));
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).and_then(|()| f.flush()).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use conntra::domain::DiscreteSet;

    #[test]
    fn memory_of_logistic() {
        let m = MemorySummary::from(&MemoryComparison::new(7850, &DiscreteSet::ternary()).unwrap());
        assert_eq!((m.float64_kb_rounded, m.packed_kb_rounded, m.ratio), (62.8, 1.96, 32.0));
    }

    #[test]
    fn curve_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let rows = [
            CurveRow {
                percent_training_complete: 0.0,
                training_error_pct: 50.5,
                validation_error_pct: Some(40.0),
            },
            CurveRow {
                percent_training_complete: 100.0,
                training_error_pct: 1.25,
                validation_error_pct: None,
            },
        ];
        write_csv(&path, &rows).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "percent_training_complete,training_error_pct,validation_error_pct\n0.0,50.5,40.0\n100.0,1.25,\n"
        );
    }

    #[test]
    fn table_has_row_per_method() {
        let row = ComparisonRow {
            run: "r".into(),
            model: "logreg".into(),
            dataset: "mnist".into(),
            method: "conntra",
            seed: 7,
            training_error_pct: 8.451,
            validation_error_pct: None,
            memory_kb: 1.96,
            wall_seconds: 3.0,
        };
        let t = comparison_table(&[row]);
        assert_eq!(t.lines().count(), 3);
        assert!(t.ends_with("| r | logreg | mnist | conntra | 7 | 8.45 | - | 1.96 | 3.00 |\n"));
    }
}
