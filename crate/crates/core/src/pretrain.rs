//! Continuous-weight minibatch SGD. Its output is the starting point that
//! gets discretized, and it doubles as the floating-point baseline.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::MemoryAccount;
use crate::error::{Error, Result};
use crate::model::metrics::{self, LossKind};
use crate::model::{LabeledDataset, Layer, ModelSpec, Network, ParamVector};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Half-width of the uniform weight initialization. `None` uses
    /// `sqrt(6 / (fan_in + fan_out))` per layer.
    #[serde(default)]
    pub init_scale: Option<f64>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 100,
            seed: 0,
            init_scale: None,
        }
    }
}

impl PretrainConfig {
    /// Defaults per architecture: learning rate 0.1, or 0.01 for the CNN.
    pub fn for_model(spec: &ModelSpec) -> Self {
        let learning_rate = match spec {
            ModelSpec::CnnLenet { .. } => 0.01,
            _ => 0.1,
        };
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if let Some(s) = self.init_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("init scale must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// Metrics after one pretraining epoch (epoch 0 is the initialization).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub training_loss: f64,
    pub training_error_pct: f64,
    pub validation_error_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub config: PretrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub memory: MemoryAccount,
    pub wall_seconds: f64,
}

impl PretrainReport {
    pub fn last(&self) -> &EpochRecord {
        self.epochs.last().expect("report has the initial epoch")
    }
}

/// Uniform random weights, zero biases.
pub fn init_params(spec: &ModelSpec, cfg: &PretrainConfig) -> Result<ParamVector> {
    let net = Network::new(spec)?;
    let mut rng = rng::seeded(rng::stream_seed(cfg.seed, 1));
    let mut values = vec![0.0; net.param_count()];
    for (l, layer) in net.layers().iter().enumerate() {
        if matches!(layer, Layer::MaxPool { .. }) {
            continue;
        }
        let bound = cfg.init_scale.unwrap_or_else(|| {
            let (fan_in, fan_out) = layer.fans();
            (6.0 / (fan_in + fan_out) as f64).sqrt()
        });
        let start = net.offset(l);
        for w in &mut values[start..start + layer.weight_len()] {
            *w = rng.random_range(-bound..=bound);
        }
    }
    ParamVector::new(spec, values)
}

/// Gradient of the mean cross-entropy over `batch`, laid out like the
/// parameter vector.
pub fn backprop_gradient(spec: &ModelSpec, params: &ParamVector, batch: &LabeledDataset) -> Result<Vec<f64>> {
    if params.spec() != spec {
        return Err(Error::invalid("parameter vector belongs to a different model"));
    }
    let net = Network::new(spec)?;
    net.check_data(batch)?;
    let rows: Vec<usize> = (0..batch.len()).collect();
    let mut grad = vec![0.0; net.param_count()];
    batch_gradient(&net, params.values(), batch, &rows, &mut net.trace(), &mut grad);
    Ok(grad)
}

fn batch_gradient(
    net: &Network,
    params: &[f64],
    data: &LabeledDataset,
    rows: &[usize],
    trace: &mut crate::model::Trace,
    grad: &mut [f64],
) -> f64 {
    grad.fill(0.0);
    let scale = 1.0 / rows.len() as f64;
    let mut loss = 0.0;
    for &n in rows {
        loss += net.accumulate_gradient(params, data.sample(n), data.labels().class_of(n), scale, trace, grad);
    }
    loss * scale
}

/// Trains `spec` on `data` with plain minibatch SGD. Deterministic given
/// `cfg.seed`. Zero epochs returns the initialization.
pub fn pretrain(
    spec: &ModelSpec,
    data: &LabeledDataset,
    validation: Option<&LabeledDataset>,
    cfg: &PretrainConfig,
) -> Result<(ParamVector, PretrainReport)> {
    let init = init_params(spec, cfg)?;
    pretrain_from(init, data, validation, cfg)
}

/// Like [`pretrain`] but starting from given parameters.
pub fn pretrain_from(
    init: ParamVector,
    data: &LabeledDataset,
    validation: Option<&LabeledDataset>,
    cfg: &PretrainConfig,
) -> Result<(ParamVector, PretrainReport)> {
    cfg.validate()?;
    let started = Instant::now();
    let spec = init.spec().clone();
    let net = Network::new(&spec)?;
    net.check_data(data)?;
    if let Some(v) = validation {
        net.check_data(v)?;
    }
    let mut params = init.into_values();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = rng::seeded(rng::stream_seed(cfg.seed, 2));
    let mut trace = net.trace();
    let mut grad = vec![0.0; params.len()];

    let mut epochs = vec![evaluate(&net, &params, data, validation, 0)?];
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for rows in order.chunks(cfg.batch_size) {
            batch_gradient(&net, &params, data, rows, &mut trace, &mut grad);
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::TrainingDiverged { epoch: epoch as u64 });
        }
        epochs.push(evaluate(&net, &params, data, validation, epoch)?);
    }
    let memory = MemoryAccount::new(params.len() as u64, 64)?;
    Ok((
        ParamVector::new(&spec, params)?,
        PretrainReport {
            config: cfg.clone(),
            epochs,
            memory,
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    ))
}

fn evaluate(
    net: &Network,
    params: &[f64],
    data: &LabeledDataset,
    validation: Option<&LabeledDataset>,
    epoch: usize,
) -> Result<EpochRecord> {
    let k = net.classes();
    let logits = net.logits(params, data)?;
    let mut loss = 0.0;
    let mut predicted = Vec::with_capacity(data.len());
    let mut probs = vec![0.0; k];
    for (n, z) in logits.chunks(k).enumerate() {
        loss += metrics::row_loss(LossKind::CrossEntropy, z, data.labels().class_of(n));
        metrics::softmax_into(z, &mut probs);
        predicted.push(metrics::argmax(&probs));
    }
    let training_loss = loss / data.len() as f64;
    if !training_loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch: epoch as u64 });
    }
    let validation_error_pct = validation
        .map(|v| net.predict(params, v).map(|p| metrics::error_pct(p.predicted_class(), v.labels().indices())))
        .transpose()?;
    Ok(EpochRecord {
        epoch,
        training_loss,
        training_error_pct: metrics::error_pct(&predicted, data.labels().indices()),
        validation_error_pct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OneHotLabels;

    fn random_data(n: usize, shape: Vec<usize>, k: usize, seed: u64) -> LabeledDataset {
        let d: usize = shape.iter().product();
        let mut r = rng::seeded(seed);
        let x = (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect();
        let y = (0..n).map(|i| i % k).collect();
        LabeledDataset::new("rand", x, shape, OneHotLabels::from_indices(k, y).unwrap()).unwrap()
    }

    /// Central differences of the mean cross-entropy.
    fn finite_difference(spec: &ModelSpec, params: &[f64], data: &LabeledDataset, h: f64) -> Vec<f64> {
        let net = Network::new(spec).unwrap();
        let mut p = params.to_vec();
        (0..p.len())
            .map(|i| {
                let orig = p[i];
                p[i] = orig + h;
                let up = net.loss(&p, data, LossKind::CrossEntropy).unwrap();
                p[i] = orig - h;
                let down = net.loss(&p, data, LossKind::CrossEntropy).unwrap();
                p[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn agreement(analytic: &[f64], numeric: &[f64]) -> f64 {
        let ok = analytic
            .iter()
            .zip(numeric)
            .filter(|(a, n)| {
                let scale = a.abs().max(n.abs());
                (*a - *n).abs() <= 1e-5 * scale.max(1e-3)
            })
            .count();
        ok as f64 / analytic.len() as f64
    }

    #[test]
    fn zero_input_logistic_gradient() {
        let spec = ModelSpec::logistic(3, 4);
        let labels = OneHotLabels::from_indices(4, vec![0, 1, 1, 3]).unwrap();
        let data = LabeledDataset::new("z", vec![0.0; 12], vec![3], labels).unwrap();
        let mut values = vec![0.0; spec.param_count()];
        values[12..].copy_from_slice(&[0.5, -0.25, 1.0, 0.0]);
        let params = ParamVector::new(&spec, values).unwrap();
        let g = backprop_gradient(&spec, &params, &data).unwrap();
        assert!(g[..12].iter().all(|&v| v == 0.0));
        let mut sm = [0.0; 4];
        metrics::softmax_into(&[0.5, -0.25, 1.0, 0.0], &mut sm);
        let mean_onehot = [0.25, 0.5, 0.0, 0.25];
        for c in 0..4 {
            assert!((g[12 + c] - (sm[c] - mean_onehot[c])).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_check_mlp_2_2_2() {
        let spec = ModelSpec::mlp(&[2, 2, 2]);
        let data = random_data(5, vec![2], 2, 3);
        let params = init_params(&spec, &PretrainConfig { init_scale: Some(1.0), ..Default::default() }).unwrap();
        let g = backprop_gradient(&spec, &params, &data).unwrap();
        let fd = finite_difference(&spec, params.values(), &data, 1e-5);
        assert_eq!(agreement(&g, &fd), 1.0, "{g:?}\n{fd:?}");
    }

    #[test]
    fn gradient_check_every_architecture() {
        let cases = [
            (ModelSpec::logistic(6, 3), vec![6]),
            (ModelSpec::mlp(&[5, 7, 4, 3]), vec![5]),
            (ModelSpec::lenet(12, 12, 2, 3), vec![12, 12, 2]),
        ];
        for (seed, (spec, shape)) in cases.into_iter().enumerate() {
            let data = random_data(4, shape, 3, seed as u64 + 10);
            let cfg = PretrainConfig {
                seed: seed as u64,
                init_scale: Some(0.5),
                ..Default::default()
            };
            let params = init_params(&spec, &cfg).unwrap();
            let g = backprop_gradient(&spec, &params, &data).unwrap();
            let fd = finite_difference(&spec, params.values(), &data, 1e-5);
            let frac = agreement(&g, &fd);
            assert!(frac >= 0.99, "{spec:?}: only {frac} of coordinates agree");
        }
    }

    #[test]
    fn descent_reaches_a_stationary_point() {
        // Two separable points; cross-entropy keeps decreasing towards zero
        // as weights grow, so the gradient norm eventually drops below 1e-6.
        let spec = ModelSpec::logistic(1, 2);
        let labels = OneHotLabels::from_indices(2, vec![0, 1]).unwrap();
        let data = LabeledDataset::new("sep", vec![-1.0, 1.0], vec![1], labels).unwrap();
        let cfg = PretrainConfig {
            learning_rate: 50.0,
            epochs: 4000,
            batch_size: 2,
            seed: 1,
            init_scale: Some(0.1),
        };
        let (params, _) = pretrain(&spec, &data, None, &cfg).unwrap();
        let g = backprop_gradient(&spec, &params, &data).unwrap();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "gradient norm {norm}");
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let spec = ModelSpec::mlp(&[3, 4, 2]);
        let data = random_data(6, vec![3], 2, 1);
        let cfg = PretrainConfig {
            epochs: 0,
            seed: 9,
            ..Default::default()
        };
        let (params, report) = pretrain(&spec, &data, None, &cfg).unwrap();
        assert_eq!(params, init_params(&spec, &cfg).unwrap());
        assert_eq!(report.epochs.len(), 1);
    }

    #[test]
    fn same_seed_same_weights() {
        let spec = ModelSpec::mlp(&[4, 5, 3]);
        let data = random_data(30, vec![4], 3, 2);
        let cfg = PretrainConfig {
            epochs: 5,
            batch_size: 7,
            seed: 42,
            ..Default::default()
        };
        let (a, _) = pretrain(&spec, &data, None, &cfg).unwrap();
        let (b, _) = pretrain(&spec, &data, None, &cfg).unwrap();
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let (c, _) = pretrain(&spec, &data, None, &PretrainConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn full_batch_logistic_loss_is_non_increasing() {
        let spec = ModelSpec::logistic(4, 3);
        let data = random_data(60, vec![4], 3, 6);
        let cfg = PretrainConfig {
            learning_rate: 0.05,
            epochs: 40,
            batch_size: 60,
            seed: 3,
            init_scale: None,
        };
        let (_, report) = pretrain(&spec, &data, None, &cfg).unwrap();
        for w in report.epochs.windows(2) {
            assert!(w[1].training_loss <= w[0].training_loss, "{:?}", w);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let spec = ModelSpec::logistic(4, 3);
        let mut data = random_data(20, vec![4], 3, 6);
        data = LabeledDataset::new(
            "big",
            data.features().iter().map(|v| v * 1e150).collect(),
            vec![4],
            data.labels().clone(),
        )
        .unwrap();
        let cfg = PretrainConfig {
            learning_rate: 1e150,
            epochs: 5,
            batch_size: 5,
            seed: 1,
            init_scale: Some(1e-160),
        };
        let err = pretrain(&spec, &data, None, &cfg).unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged { .. }), "{err}");
    }

    #[test]
    fn config_validation() {
        assert!(PretrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(PretrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(PretrainConfig { init_scale: Some(-1.0), ..Default::default() }.validate().is_err());
        assert_eq!(PretrainConfig::for_model(&ModelSpec::mnist_lenet()).learning_rate, 0.01);
    }
}
