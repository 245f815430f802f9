//! Dataset presets and the pretrain, search and evaluate steps, shared by
//! the binary and the acceptance tests.

use std::path::Path;

use conntra::data::{self, ImageLayout, MnistFiles, SplitSpec};
use conntra::domain::DiscreteSet;
use conntra::model::{LabeledDataset, LossKind, ModelSpec, Network, ParamVector};
use conntra::pretrain::{self, PretrainConfig, PretrainReport};
use conntra::search::{self, ConntraConfig, TrainReport};
use serde::Serialize;

use crate::config::{DatasetKind, ModelKind, RunConfig};
use crate::error::CliError;

pub const FETCH_HINT: &str = " (download MNIST with scripts/fetch-mnist.sh or point CONNTRA_DATA_DIR at it)";

/// Model plus the data it trains and validates on.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: ModelSpec,
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub name: String,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub features: usize,
    pub classes: usize,
}

impl Experiment {
    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            name: self.train.name().to_string(),
            train_samples: self.train.len(),
            validation_samples: self.validation.len(),
            features: self.train.feature_len(),
            classes: self.train.classes(),
        }
    }
}

/// Loads the MNIST training and test sets. Missing files name the fetch
/// script.
pub fn load_mnist(dir: &Path, layout: ImageLayout) -> Result<(LabeledDataset, LabeledDataset), CliError> {
    let files = MnistFiles::in_dir(dir);
    if let Some(p) = files.missing() {
        return Err(CliError::MissingFile {
            path: p.to_path_buf(),
            hint: FETCH_HINT.into(),
        });
    }
    let train = data::load_mnist_idx(&files.train_images, &files.train_labels, layout)
        .map_err(|e| CliError::at(&files.train_images, e))?;
    let test =
        data::load_mnist_idx(&files.test_images, &files.test_labels, layout).map_err(|e| CliError::at(&files.test_images, e))?;
    Ok((train, test))
}

/// Training and validation data for `cfg`.
///
/// MNIST validates on the 10k test set, and the CNN trains on a stratified
/// subset of `cnn_per_class` images per digit. Iris and the blobs are split
/// by `train_fraction`, stratified, with `split_seed`.
pub fn load_data(cfg: &RunConfig) -> Result<(LabeledDataset, LabeledDataset), CliError> {
    let d = &cfg.data;
    let split = SplitSpec {
        train_fraction: d.train_fraction,
        seed: d.split_seed,
        stratified: true,
    };
    match cfg.dataset {
        DatasetKind::Mnist => {
            let layout = match cfg.model {
                ModelKind::Cnn => ImageLayout::Grid,
                _ => ImageLayout::Flat,
            };
            let (train, test) = load_mnist(&cfg.data_dir().join("mnist"), layout)?;
            let train = match cfg.model {
                ModelKind::Cnn => data::stratified_subset(&train, d.cnn_per_class, d.split_seed)?,
                _ => train,
            };
            Ok((train, test))
        }
        DatasetKind::Iris => {
            let path = cfg.data_dir().join("iris").join("iris.csv");
            let all = data::load_iris_csv(&path).map_err(|e| CliError::at(&path, e))?;
            Ok(data::split(&all, &split)?)
        }
        DatasetKind::Synthetic => {
            let all = data::synthetic_blobs(d.synthetic_samples, d.synthetic_features, d.synthetic_classes, d.split_seed)?;
            Ok(data::split(&all, &split)?)
        }
    }
}

/// Architecture for `model` sized to `data`.
pub fn model_spec(model: ModelKind, hidden: &[usize], data: &LabeledDataset) -> Result<ModelSpec, CliError> {
    let k = data.classes();
    let spec = match model {
        ModelKind::Logreg => ModelSpec::logistic(data.feature_len(), k),
        ModelKind::Mlp => {
            let sizes: Vec<usize> = std::iter::once(data.feature_len()).chain(hidden.iter().copied()).chain([k]).collect();
            ModelSpec::mlp(&sizes)
        }
        ModelKind::Cnn => match *data.sample_shape() {
            [h, w, c] => ModelSpec::lenet(h, w, c, k),
            _ => {
                return Err(CliError::Usage(format!(
                    "the cnn model needs image data, `{}` has sample shape {:?}",
                    data.name(),
                    data.sample_shape()
                )))
            }
        },
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load_experiment(cfg: &RunConfig) -> Result<Experiment, CliError> {
    let (train, validation) = load_data(cfg)?;
    let spec = model_spec(cfg.model, &cfg.hidden_layers, &train)?;
    Ok(Experiment { spec, train, validation })
}

pub fn omega(cfg: &RunConfig) -> Result<DiscreteSet, CliError> {
    Ok(DiscreteSet::new(cfg.omega.clone())?)
}

pub fn pretrain_config(cfg: &RunConfig, spec: &ModelSpec) -> PretrainConfig {
    let base = PretrainConfig::for_model(spec);
    PretrainConfig {
        learning_rate: cfg.pretrain.learning_rate.unwrap_or(base.learning_rate),
        epochs: cfg.pretrain.epochs,
        batch_size: cfg.pretrain.batch_size,
        seed: cfg.seed,
        init_scale: cfg.pretrain.init_scale,
    }
}

/// Search settings; curve samples are spaced to give about
/// `cfg.curve_points` of them.
pub fn conntra_config(cfg: &RunConfig, param_count: usize) -> ConntraConfig {
    let total = (cfg.iterations_t * param_count) as u64;
    ConntraConfig {
        iterations_t: cfg.iterations_t,
        seed: cfg.seed,
        search_loss: cfg.search_loss.into(),
        eval_mode: cfg.eval_mode.into(),
        record_every: total.div_ceil(cfg.curve_points).max(1),
    }
}

pub fn run_pretrain(cfg: &RunConfig, exp: &Experiment) -> Result<(ParamVector, PretrainReport), CliError> {
    let pc = pretrain_config(cfg, &exp.spec);
    Ok(pretrain::pretrain(&exp.spec, &exp.train, Some(&exp.validation), &pc)?)
}

pub fn run_conntra(cfg: &RunConfig, exp: &Experiment, w_pre: &ParamVector) -> Result<(ParamVector, f64, TrainReport), CliError> {
    let omega = omega(cfg)?;
    let cc = conntra_config(cfg, w_pre.len());
    Ok(search::conntra_train(&exp.spec, &exp.train, w_pre, &omega, &cc, Some(&exp.validation))?)
}

/// Errors and loss of one parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub training_error_pct: f64,
    pub validation_error_pct: f64,
    pub training_loss: f64,
}

pub fn evaluate(exp: &Experiment, params: &[f64], loss: LossKind) -> Result<Evaluation, CliError> {
    let net = Network::new(&exp.spec)?;
    let error = |d: &LabeledDataset| -> Result<f64, CliError> {
        let p = net.predict(params, d)?;
        Ok(conntra::model::classification_error(&p, d.labels())?)
    };
    Ok(Evaluation {
        training_error_pct: error(&exp.train)?,
        validation_error_pct: error(&exp.validation)?,
        training_loss: net.loss(params, &exp.train, loss)?,
    })
}
