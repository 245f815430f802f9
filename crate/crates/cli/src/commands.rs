//! The subcommands. Each writes its files under `--out` and returns a one-line
//! summary for stdout.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use conntra::domain::{discretize, DiscreteSet, MemoryComparison, PackedCodes, PACKED_MAGIC};
use conntra::model::ParamVector;
use conntra::qubo;
use conntra::weights::{self, WEIGHTS_MAGIC};
use serde_json::Value;

use crate::config::{RunArgs, RunConfig};
use crate::error::CliError;
use crate::output::{self, *};
use crate::pipeline::{self, Experiment};

#[derive(Debug, Parser)]
#[command(name = "conntra", version, about = "Train networks whose weights come from a small discrete set")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train float weights with minibatch SGD.
    Pretrain(RunArgs),
    /// Pretrain (or load `--weights`), snap onto omega and run the search.
    Train(RunArgs),
    /// Score float or packed weights on the training and validation sets.
    Evaluate(EvaluateArgs),
    /// Turn a QUBO instance into a binary training instance and check that
    /// both share their minimizers.
    ReduceQubo(QuboArgs),
    /// Collect finished runs into a comparison table and curve CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Score an all-zero parameter vector instead of `--weights`.
    #[arg(long, conflicts_with = "weights")]
    pub zero_weights: bool,
}

#[derive(Debug, Args)]
pub struct QuboArgs {
    /// QUBO instance: `d`, `d` rows of `A`, a row `b`, then `c`.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Slack when collecting assignments tied for the minimum.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding a `train` run; repeat for several runs.
    #[arg(long = "run", value_name = "DIR", required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// Parses `args` (program name first) and runs the command. Help and version
/// requests come back as `Ok` with their text.
pub fn run_from<I, T>(args: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => return Ok(e.to_string()),
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    run(cli.command)
}

pub fn run(command: Command) -> Result<String, CliError> {
    match command {
        Command::Pretrain(a) => cmd_pretrain(&RunConfig::resolve(&a)?),
        Command::Train(a) => cmd_train(&RunConfig::resolve(&a)?),
        Command::Evaluate(a) => cmd_evaluate(&RunConfig::resolve(&a.run)?, a.zero_weights),
        Command::ReduceQubo(a) => cmd_reduce_qubo(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn name(p: &str) -> String {
    p.to_string()
}

fn memory(params: usize, omega: &DiscreteSet) -> Result<MemorySummary, CliError> {
    Ok(MemorySummary::from(&MemoryComparison::new(params as u64, omega)?))
}

pub fn cmd_pretrain(cfg: &RunConfig) -> Result<String, CliError> {
    let started = Instant::now();
    let exp = pipeline::load_experiment(cfg)?;
    let omega = pipeline::omega(cfg)?;
    create_out(&cfg.out)?;
    let (w, report) = pipeline::run_pretrain(cfg, &exp)?;
    let weights_path = cfg.out.join(PRETRAINED_WEIGHTS);
    weights::save_weights(&weights_path, w.values()).map_err(|e| CliError::at(&weights_path, e))?;
    write_csv(&cfg.out.join(PRETRAIN_CURVE), &pretrain_curve(&report))?;
    let result = pipeline::evaluate(&exp, w.values(), cfg.search_loss.into())?;
    let doc = PretrainDocument {
        command: "pretrain",
        version: VERSION,
        config: cfg,
        seed: cfg.seed,
        model: &exp.spec,
        dataset: exp.summary(),
        result,
        pretrain: &report,
        memory: memory(w.len(), &omega)?,
        outputs: [("weights", name(PRETRAINED_WEIGHTS)), ("curve", name(PRETRAIN_CURVE))].into(),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&cfg.out.join(PRETRAIN_REPORT), &doc)?;
    Ok(format!(
        "pretrain: training error {:.2}%, validation error {:.2}%, {:.2} KB as float64 -> {}",
        result.training_error_pct,
        result.validation_error_pct,
        doc.memory.float64_kb_rounded,
        cfg.out.display()
    ))
}

fn load_float_weights(exp: &Experiment, path: &Path) -> Result<ParamVector, CliError> {
    let values = weights::load_weights(path).map_err(|e| CliError::at(path, e))?;
    ParamVector::new(&exp.spec, values).map_err(|e| CliError::at(path, e))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String, CliError> {
    let started = Instant::now();
    let exp = pipeline::load_experiment(cfg)?;
    let omega = pipeline::omega(cfg)?;
    let loss = cfg.search_loss.into();
    create_out(&cfg.out)?;
    let mut outputs = Outputs::new();
    let (w_pre, pre_report) = match &cfg.weights {
        Some(p) => (load_float_weights(&exp, p)?, None),
        None => {
            let (w, r) = pipeline::run_pretrain(cfg, &exp)?;
            let path = cfg.out.join(PRETRAINED_WEIGHTS);
            weights::save_weights(&path, w.values()).map_err(|e| CliError::at(&path, e))?;
            write_csv(&cfg.out.join(PRETRAIN_CURVE), &pretrain_curve(&r))?;
            outputs.insert("pretrained_weights", name(PRETRAINED_WEIGHTS));
            outputs.insert("pretrain_curve", name(PRETRAIN_CURVE));
            (w, Some(r))
        }
    };
    let discretized = pipeline::evaluate(&exp, &discretize(w_pre.values(), &omega)?, loss)?;
    let (w, _, search) = pipeline::run_conntra(cfg, &exp, &w_pre)?;

    let packed_path = cfg.out.join(PACKED_WEIGHTS);
    let mut f = BufWriter::new(File::create(&packed_path).map_err(|e| CliError::io(&packed_path, e))?);
    PackedCodes::pack(w.values(), &omega)?.write_to(&mut f).map_err(|e| CliError::at(&packed_path, e))?;
    f.flush().map_err(|e| CliError::io(&packed_path, e))?;
    write_csv(&cfg.out.join(CURVE), &search.curve.iter().map(CurveRow::from).collect::<Vec<_>>())?;
    outputs.insert("weights", name(PACKED_WEIGHTS));
    outputs.insert("curve", name(CURVE));

    let result = pipeline::evaluate(&exp, w.values(), loss)?;
    let mem = MemorySummary::from(&search.memory);
    let backprop = pre_report.as_ref().map(|r| MethodResult {
        training_error_pct: r.last().training_error_pct,
        validation_error_pct: r.last().validation_error_pct,
        memory_kb: mem.float64_kb_rounded,
        wall_seconds: r.wall_seconds,
    });
    let doc = TrainDocument {
        command: "train",
        version: VERSION,
        config: cfg,
        seed: cfg.seed,
        model: &exp.spec,
        dataset: exp.summary(),
        backprop,
        conntra: MethodResult {
            training_error_pct: result.training_error_pct,
            validation_error_pct: Some(result.validation_error_pct),
            memory_kb: mem.packed_kb_rounded,
            wall_seconds: search.wall_seconds,
        },
        discretized,
        result,
        pretrain: pre_report.as_ref(),
        search: &search,
        memory: mem,
        outputs,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&cfg.out.join(TRAIN_REPORT), &doc)?;
    Ok(format!(
        "train: training error {:.2}%, validation error {:.2}%, memory {:.2} KB packed vs {:.2} KB float64 -> {}",
        result.training_error_pct,
        result.validation_error_pct,
        mem.packed_kb_rounded,
        mem.float64_kb_rounded,
        cfg.out.display()
    ))
}

/// Reads float (`CNTRAWTS`) or packed (`CNTRAPK1`) weights, told apart by
/// their magic bytes. Returns the values and the set they are packed over.
pub fn read_any_weights(path: &Path) -> Result<(Vec<f64>, Option<DiscreteSet>), CliError> {
    let all = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    if all.starts_with(WEIGHTS_MAGIC) {
        Ok((weights::read_weights(all.as_slice()).map_err(|e| CliError::at(path, e))?, None))
    } else if all.starts_with(PACKED_MAGIC) {
        let codes = PackedCodes::read_from(all.as_slice()).map_err(|e| CliError::at(path, e))?;
        Ok((codes.unpack()?, Some(codes.domain().clone())))
    } else {
        Err(CliError::at(
            path,
            conntra::Error::Format {
                location: conntra::Location::Byte(0),
                message: "not a float or packed weight file".into(),
            },
        ))
    }
}

pub fn cmd_evaluate(cfg: &RunConfig, zero_weights: bool) -> Result<String, CliError> {
    let started = Instant::now();
    let exp = pipeline::load_experiment(cfg)?;
    let (values, packed_over, source) = match (&cfg.weights, zero_weights) {
        (_, true) => (vec![0.0; exp.spec.param_count()], None, WeightsSource { path: None, format: "zero" }),
        (Some(p), false) => {
            let (v, domain) = read_any_weights(p)?;
            let format = if domain.is_some() { "packed" } else { "float64" };
            (v, domain, WeightsSource { path: Some(p.clone()), format })
        }
        (None, false) => return Err(CliError::Usage("evaluate needs --weights FILE or --zero-weights".into())),
    };
    let params = match &source.path {
        Some(p) => ParamVector::new(&exp.spec, values).map_err(|e| CliError::at(p, e))?,
        None => ParamVector::new(&exp.spec, values)?,
    };
    let omega = match packed_over {
        Some(d) => d,
        None => pipeline::omega(cfg)?,
    };
    let result = pipeline::evaluate(&exp, params.values(), cfg.search_loss.into())?;
    let doc = EvaluateDocument {
        command: "evaluate",
        version: VERSION,
        config: cfg,
        seed: cfg.seed,
        model: &exp.spec,
        dataset: exp.summary(),
        weights: source,
        result,
        memory: memory(params.len(), &omega)?,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    create_out(&cfg.out)?;
    write_json(&cfg.out.join(EVALUATE_REPORT), &doc)?;
    Ok(format!(
        "evaluate: training error {:.2}%, validation error {:.2}%, memory {:.2} KB packed vs {:.2} KB float64",
        result.training_error_pct, result.validation_error_pct, doc.memory.packed_kb_rounded, doc.memory.float64_kb_rounded
    ))
}

fn bits(z: &[bool]) -> Vec<u8> {
    z.iter().map(|&b| u8::from(b)).collect()
}

pub fn cmd_reduce_qubo(a: &QuboArgs) -> Result<String, CliError> {
    let started = Instant::now();
    let text = std::fs::read_to_string(&a.input).map_err(|e| CliError::io(&a.input, e))?;
    let q = qubo::parse_qubo(&text).map_err(|e| CliError::at(&a.input, e))?;
    let t = qubo::reduce_qubo(&q)?;
    let qa = qubo::qubo_argmin_set(&q, a.tolerance)?;
    let ta = qubo::training_argmin_set(&t, a.tolerance)?;
    let d = q.dim();
    let mut z = vec![false; d];
    let mut gap = 0.0f64;
    for m in 0..1u64 << d {
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = (m >> (d - 1 - i)) & 1 == 1;
        }
        gap = gap.max((qubo::qubo_value(&q, &z) - qubo::shifted_training_value(&t, &z)).abs());
    }
    let matched = qa == ta;
    create_out(&a.out)?;
    write_text(&a.out.join(TRAINING_INSTANCE), &qubo::format_training_instance(&t))?;
    let verdict = format!("argmin match: {matched}");
    let cfg = QuboConfig {
        input: a.input.clone(),
        out: a.out.clone(),
        tolerance: a.tolerance,
    };
    let doc = QuboDocument {
        command: "reduce-qubo",
        version: VERSION,
        config: &cfg,
        seed: None,
        dimension: d,
        qubo_argmin: qa.iter().map(|z| bits(z)).collect(),
        training_argmin: ta.iter().map(|z| bits(z)).collect(),
        argmin_match: matched,
        max_value_gap: gap,
        verdict: verdict.clone(),
        outputs: [("training_instance", name(TRAINING_INSTANCE))].into(),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&a.out.join(QUBO_REPORT), &doc)?;
    Ok(verdict)
}

fn field<'a>(doc: &'a Value, pointer: &str, path: &Path) -> Result<&'a Value, CliError> {
    doc.pointer(pointer).ok_or_else(|| CliError::Report {
        path: path.to_path_buf(),
        message: format!("missing field {pointer}"),
    })
}

fn number(doc: &Value, pointer: &str, path: &Path) -> Result<f64, CliError> {
    field(doc, pointer, path)?.as_f64().ok_or_else(|| CliError::Report {
        path: path.to_path_buf(),
        message: format!("field {pointer} is not a number"),
    })
}

fn text(doc: &Value, pointer: &str, path: &Path) -> Result<String, CliError> {
    Ok(match field(doc, pointer, path)? {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    })
}

#[derive(Debug, serde::Serialize)]
struct LabelledCurveRow<'a> {
    run: &'a str,
    method: &'static str,
    percent_training_complete: f64,
    training_error_pct: f64,
    validation_error_pct: Option<f64>,
}

fn method_row(doc: &Value, key: &str, method: &'static str, run: &str, path: &Path) -> Result<Option<ComparisonRow>, CliError> {
    let m = field(doc, &format!("/{key}"), path)?;
    if m.is_null() {
        return Ok(None);
    }
    let p = format!("/{key}");
    Ok(Some(ComparisonRow {
        run: run.to_string(),
        model: text(doc, "/config/model", path)?,
        dataset: text(doc, "/config/dataset", path)?,
        method,
        seed: field(doc, "/seed", path)?.as_u64().unwrap_or(0),
        training_error_pct: number(doc, &format!("{p}/training_error_pct"), path)?,
        validation_error_pct: field(doc, &format!("{p}/validation_error_pct"), path)?.as_f64(),
        memory_kb: number(doc, &format!("{p}/memory_kb"), path)?,
        wall_seconds: number(doc, &format!("{p}/wall_seconds"), path)?,
    }))
}

fn curve_rows<'a>(doc: &Value, pointer: &str, run: &'a str, method: &'static str, path: &Path) -> Result<Vec<LabelledCurveRow<'a>>, CliError> {
    let Some(points) = doc.pointer(pointer).and_then(Value::as_array) else {
        return Ok(Vec::new());
    };
    points
        .iter()
        .map(|p| {
            let pct = match method {
                "backprop" => {
                    let total = number(doc, "/pretrain/config/epochs", path)?.max(1.0);
                    100.0 * number(p, "/epoch", path)? / total
                }
                _ => number(p, "/percent_training_complete", path)?,
            };
            Ok(LabelledCurveRow {
                run,
                method,
                percent_training_complete: pct,
                training_error_pct: number(p, "/training_error_pct", path)?,
                validation_error_pct: p.get("validation_error_pct").and_then(Value::as_f64),
            })
        })
        .collect()
}

pub fn cmd_report(a: &ReportArgs) -> Result<String, CliError> {
    let started = Instant::now();
    let mut docs = Vec::new();
    for dir in &a.runs {
        let path = dir.join(TRAIN_REPORT);
        let raw = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let doc: Value = serde_json::from_str(&raw).map_err(|e| CliError::Report {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let label = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        docs.push((label, path, doc));
    }
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for (label, path, doc) in &docs {
        rows.extend(method_row(doc, "backprop", "backprop", label, path)?);
        rows.extend(method_row(doc, "conntra", "conntra", label, path)?);
        curves.extend(curve_rows(doc, "/pretrain/epochs", label, "backprop", path)?);
        curves.extend(curve_rows(doc, "/search/curve", label, "conntra", path)?);
    }
    create_out(&a.out)?;
    write_csv(&a.out.join(COMPARISON_CSV), &rows)?;
    write_text(&a.out.join(COMPARISON_TABLE), &comparison_table(&rows))?;
    write_csv(&a.out.join(CURVES_CSV), &curves)?;
    let cfg = ReportConfig {
        runs: a.runs.clone(),
        out: a.out.clone(),
    };
    let n = rows.len();
    let doc = ReportDocument {
        command: "report",
        version: VERSION,
        config: &cfg,
        seed: None,
        rows,
        outputs: [
            ("comparison_csv", name(COMPARISON_CSV)),
            ("comparison_table", name(COMPARISON_TABLE)),
            ("curves", name(CURVES_CSV)),
        ]
        .into(),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&a.out.join(output::REPORT), &doc)?;
    Ok(format!("report: {n} rows from {} runs -> {}", docs.len(), a.out.display()))
}
