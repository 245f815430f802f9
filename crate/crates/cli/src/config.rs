//! Run parameters, merged from defaults, an optional TOML file and flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use conntra::model::LossKind;
use conntra::search::EvalMode;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DATA_DIR_VAR: &str = "CONNTRA_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logreg,
    Mlp,
    Cnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Iris,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchLoss {
    Xent,
    Euclid,
}

impl From<SearchLoss> for LossKind {
    fn from(l: SearchLoss) -> Self {
        match l {
            SearchLoss::Xent => LossKind::CrossEntropy,
            SearchLoss::Euclid => LossKind::Euclidean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalModeArg {
    Full,
    Incremental,
}

impl From<EvalModeArg> for EvalMode {
    fn from(m: EvalModeArg) -> Self {
        match m {
            EvalModeArg::Full => EvalMode::Full,
            EvalModeArg::Incremental => EvalMode::Incremental,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainOptions {
    pub epochs: usize,
    /// `None` picks the model default.
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    pub init_scale: Option<f64>,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: None,
            batch_size: 100,
            init_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataOptions {
    /// Dataset root; falls back to `$CONNTRA_DATA_DIR`, then `./data`.
    pub dir: Option<PathBuf>,
    /// Seeds the train/validation split, the CNN subset and the blobs.
    /// Kept apart from `seed` so every run sees the same data.
    pub split_seed: u64,
    pub train_fraction: f64,
    /// Images per digit in the CNN training subset.
    pub cnn_per_class: usize,
    pub synthetic_samples: usize,
    pub synthetic_features: usize,
    pub synthetic_classes: usize,
}

impl Default for DataOptions {
    fn default() -> Self {
        Self {
            dir: None,
            split_seed: 2021,
            train_fraction: 0.8,
            cnn_per_class: 200,
            synthetic_samples: 600,
            synthetic_features: 8,
            synthetic_classes: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub dataset: DatasetKind,
    pub seed: u64,
    pub omega: Vec<f64>,
    pub iterations_t: usize,
    pub search_loss: SearchLoss,
    pub eval_mode: EvalModeArg,
    /// Approximate number of search curve samples.
    pub curve_points: u64,
    /// Hidden widths of the perceptron.
    pub hidden_layers: Vec<usize>,
    /// Pretrained float weights to start from instead of pretraining.
    pub weights: Option<PathBuf>,
    pub out: PathBuf,
    pub pretrain: PretrainOptions,
    pub data: DataOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Logreg,
            dataset: DatasetKind::Iris,
            seed: 0,
            omega: vec![-1.0, 0.0, 1.0],
            iterations_t: 1,
            search_loss: SearchLoss::Xent,
            eval_mode: EvalModeArg::Incremental,
            curve_points: 20,
            hidden_layers: vec![10, 13],
            weights: None,
            out: PathBuf::from("runs/latest"),
            pretrain: PretrainOptions::default(),
            data: DataOptions::default(),
        }
    }
}

/// Comma-separated `--omega` value.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaList(pub Vec<f64>);

impl From<OmegaList> for Vec<f64> {
    fn from(o: OmegaList) -> Self {
        o.0
    }
}

fn parse_omega(s: &str) -> Result<OmegaList, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number")))
        .collect::<Result<_, _>>()
        .map(OmegaList)
}

/// Flags shared by the training commands. Unset flags leave the config
/// file or default value in place.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with any `RunConfig` keys.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    /// Allowed weight values, comma separated.
    #[arg(long, value_parser = parse_omega, allow_hyphen_values = true, value_name = "LIST")]
    pub omega: Option<OmegaList>,
    #[arg(long = "iterations-T", value_name = "T")]
    pub iterations_t: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub search_loss: Option<SearchLoss>,
    #[arg(long, value_enum)]
    pub eval_mode: Option<EvalModeArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub curve_points: Option<u64>,
    /// Float weights (`train`: pretrained start; `evaluate`: float or
    /// packed weights to score).
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
    /// Dataset root, overriding `$CONNTRA_DATA_DIR`.
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// Defaults, then the `--config` file, then flags, with the dataset
    /// root resolved so the echo says where data came from.
    pub fn resolve(args: &RunArgs) -> Result<Self, CliError> {
        let mut cfg = match &args.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = &args.$flag { cfg.$($field).+ = v.clone().into(); })*
            };
        }
        set!(
            model => model,
            dataset => dataset,
            omega => omega,
            iterations_t => iterations_t,
            seed => seed,
            search_loss => search_loss,
            eval_mode => eval_mode,
            epochs => pretrain.epochs,
            learning_rate => pretrain.learning_rate,
            batch_size => pretrain.batch_size,
            curve_points => curve_points,
            weights => weights,
            data_dir => data.dir,
            out => out,
        );
        if cfg.data.dir.is_none() {
            cfg.data.dir = Some(std::env::var_os(DATA_DIR_VAR).map_or_else(|| PathBuf::from("data"), PathBuf::from));
        }
        if cfg.curve_points == 0 {
            return Err(CliError::Usage("curve_points must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn data_dir(&self) -> &Path {
        self.data.dir.as_deref().unwrap_or(Path::new("data"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct Probe {
        #[command(flatten)]
        run: RunArgs,
    }

    fn args(list: &[&str]) -> RunArgs {
        Probe::try_parse_from(std::iter::once("probe").chain(list.iter().copied())).unwrap().run
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "model = \"mlp\"\nseed = 3\niterations_t = 4\n[pretrain]\nepochs = 7\n").unwrap();
        let a = args(&["--config", path.to_str().unwrap(), "--seed", "9", "--omega", "-2,0,2", "--data-dir", "d"]);
        let cfg = RunConfig::resolve(&a).unwrap();
        assert_eq!(cfg.model, ModelKind::Mlp);
        assert_eq!((cfg.seed, cfg.iterations_t, cfg.pretrain.epochs), (9, 4, 7));
        assert_eq!(cfg.omega, vec![-2.0, 0.0, 2.0]);
        assert_eq!(cfg.data_dir(), Path::new("d"));
        assert_eq!(cfg.pretrain.batch_size, 100);
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in ["modle = \"mlp\"", "[pretrain]\nepoch = 3", "[data]\nsplit = 1"] {
            let e = RunConfig::from_toml(text, Path::new("x.toml")).unwrap_err();
            assert_eq!(e.kind(), "config", "{text}");
        }
    }

    #[test]
    fn spec_flag_names() {
        let a = args(&[
            "--model", "cnn", "--dataset", "mnist", "--iterations-T", "2", "--search-loss", "euclid", "--eval-mode", "full",
            "--omega=-1,0,1",
        ]);
        assert_eq!(a.iterations_t, Some(2));
        assert_eq!(a.search_loss, Some(SearchLoss::Euclid));
        assert_eq!(a.eval_mode, Some(EvalModeArg::Full));
        assert!(Probe::try_parse_from(["p", "--omega", "1,x"]).is_err());
    }

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml(&text, Path::new("t")).unwrap(), cfg);
    }
}
