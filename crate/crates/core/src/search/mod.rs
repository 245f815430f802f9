//! Randomized coordinate-wise global search over a discrete value set.
//!
//! After snapping the pretrained weights onto the set, each epoch picks one
//! parameter uniformly at random (with replacement), tries every member of
//! the set in ascending order, and keeps the value with the lowest loss.
//! A candidate is accepted when its loss is *at most* the best so far, so
//! among equal losses the largest value wins. One iteration is `|W|`
//! epochs; a run of `T` iterations costs exactly `T * |W| * |omega|` loss
//! evaluations.
//!
//! ```
//! use conntra::domain::DiscreteSet;
//! use conntra::search::{search, FnObjective};
//!
//! // Minimize (w0 - 1)^2 + (w1 + 1)^2 over {-1, 0, 1}^2.
//! let mut obj = FnObjective::new(vec![0.0, 0.0], |w: &[f64]| (w[0] - 1.0).powi(2) + (w[1] + 1.0).powi(2));
//! let outcome = search(&mut obj, &DiscreteSet::ternary(), 10, 7, 1, |_, _, _| Ok(())).unwrap();
//! assert_eq!(outcome.loss, 0.0);
//! assert_eq!(outcome.evaluations, 10 * 2 * 3);
//! ```

mod incremental;
mod objective;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use incremental::{param_checksum, IncrementalObjective};
pub use objective::{FnObjective, FullObjective, SearchObjective};

use crate::domain::{discretize, DiscreteSet, MemoryComparison};
use crate::error::{Error, Result};
use crate::model::metrics;
use crate::model::{LabeledDataset, LossKind, ModelSpec, Network, ParamVector};
use crate::rng;

/// How candidate losses are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Every candidate re-runs the model over all samples.
    Full,
    /// Candidates are scored from cached activations.
    Incremental,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConntraConfig {
    /// Number of iterations `T`; each is `|W|` epochs.
    pub iterations_t: usize,
    pub seed: u64,
    pub search_loss: LossKind,
    pub eval_mode: EvalMode,
    /// Epochs between curve samples. The first and last epoch are always
    /// recorded.
    pub record_every: u64,
}

impl Default for ConntraConfig {
    fn default() -> Self {
        Self {
            iterations_t: 1,
            seed: 0,
            search_loss: LossKind::CrossEntropy,
            eval_mode: EvalMode::Incremental,
            record_every: 1000,
        }
    }
}

impl ConntraConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations_t == 0 {
            return Err(Error::invalid("iterations T must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every must be at least 1"));
        }
        Ok(())
    }
}

/// Counters of a finished search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOutcome {
    /// Final best loss.
    pub loss: f64,
    pub epochs: u64,
    pub evaluations: u64,
}

/// Runs the search on `objective`, whose parameters must already lie in
/// `omega`. `observe(epoch, params, best_loss)` is called before the first
/// epoch, every `record_every` epochs and after the last one.
pub fn search<O, F>(
    objective: &mut O,
    omega: &DiscreteSet,
    iterations_t: usize,
    seed: u64,
    record_every: u64,
    mut observe: F,
) -> Result<SearchOutcome>
where
    O: SearchObjective + ?Sized,
    F: FnMut(u64, &[f64], f64) -> Result<()>,
{
    let n = objective.param_count();
    if n == 0 {
        return Err(Error::invalid("nothing to search: zero parameters"));
    }
    if iterations_t == 0 || record_every == 0 {
        return Err(Error::invalid("iterations and record interval must be at least 1"));
    }
    if let Some(i) = objective.params().iter().position(|&w| !omega.contains(w)) {
        return Err(Error::Domain(format!(
            "parameter {i} = {} is not a member of the discrete set",
            objective.params()[i]
        )));
    }
    let total = (iterations_t as u64)
        .checked_mul(n as u64)
        .ok_or_else(|| Error::invalid("T x |W| overflows"))?;
    let mut rng = rng::seeded(rng::stream_seed(seed, 3));
    let mut best_loss = objective.current_loss();
    if !best_loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch: 0 });
    }
    observe(0, objective.params(), best_loss)?;
    let mut evaluations = 0u64;
    for epoch in 1..=total {
        let i = rng::index_below(&mut rng, n);
        let mut best = objective.params()[i];
        for &v in omega.values() {
            let loss = objective.trial_loss(i, v);
            evaluations += 1;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            if loss <= best_loss {
                best_loss = loss;
                best = v;
            }
        }
        objective.commit(i, best);
        if epoch % record_every == 0 || epoch == total {
            observe(epoch, objective.params(), best_loss)?;
        }
    }
    Ok(SearchOutcome {
        loss: best_loss,
        epochs: total,
        evaluations,
    })
}

/// One sample of the training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: u64,
    pub percent_training_complete: f64,
    pub training_error_pct: f64,
    pub validation_error_pct: Option<f64>,
    pub optimal_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub config: ConntraConfig,
    pub seed: u64,
    pub omega: Vec<f64>,
    pub param_count: usize,
    /// Starts at epoch 0, the snapped pretrained weights.
    pub curve: Vec<CurvePoint>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs: u64,
    pub loss_evaluations: u64,
    pub memory: MemoryComparison,
    pub wall_seconds: f64,
    #[serde(skip)]
    pub final_params: ParamVector,
}

impl TrainReport {
    pub fn initial(&self) -> &CurvePoint {
        &self.curve[0]
    }

    pub fn last(&self) -> &CurvePoint {
        self.curve.last().expect("curve has the initial point")
    }
}

/// Snaps `w_pre` onto `omega` and runs the search on the training data.
/// Returns the best parameters, their loss, and the report. The validation
/// set, when given, only feeds the curve.
pub fn conntra_train(
    spec: &ModelSpec,
    data: &LabeledDataset,
    w_pre: &ParamVector,
    omega: &DiscreteSet,
    cfg: &ConntraConfig,
    validation: Option<&LabeledDataset>,
) -> Result<(ParamVector, f64, TrainReport)> {
    let started = Instant::now();
    if w_pre.spec() != spec {
        return Err(Error::invalid("pretrained weights belong to a different model"));
    }
    cfg.validate()?;
    let net = Network::new(spec)?;
    net.check_data(data)?;
    if let Some(v) = validation {
        net.check_data(v)?;
    }
    let snapped = ParamVector::new(spec, discretize(w_pre.values(), omega)?)?;
    let total_epochs = (cfg.iterations_t * snapped.len()) as u64;
    let mut curve = Vec::new();
    let observe = |epoch: u64, params: &[f64], loss: f64| -> Result<()> {
        let train = net.predict(params, data)?;
        let validation_error_pct = validation
            .map(|v| net.predict(params, v).map(|p| metrics::error_pct(p.predicted_class(), v.labels().indices())))
            .transpose()?;
        curve.push(CurvePoint {
            epoch,
            percent_training_complete: 100.0 * epoch as f64 / total_epochs as f64,
            training_error_pct: metrics::error_pct(train.predicted_class(), data.labels().indices()),
            validation_error_pct,
            optimal_loss: loss,
        });
        Ok(())
    };
    let (outcome, initial_loss, params) = match cfg.eval_mode {
        EvalMode::Full => {
            let mut obj = FullObjective::new(&snapped, data, cfg.search_loss)?;
            let initial = obj.current_loss();
            let out = search(&mut obj, omega, cfg.iterations_t, cfg.seed, cfg.record_every, observe)?;
            (out, initial, obj.params().to_vec())
        }
        EvalMode::Incremental => {
            let mut obj = IncrementalObjective::new(&snapped, data, cfg.search_loss)?;
            let initial = obj.current_loss();
            let out = search(&mut obj, omega, cfg.iterations_t, cfg.seed, cfg.record_every, observe)?;
            (out, initial, obj.params().to_vec())
        }
    };
    let final_params = ParamVector::new(spec, params)?;
    let report = TrainReport {
        config: cfg.clone(),
        seed: cfg.seed,
        omega: omega.values().to_vec(),
        param_count: final_params.len(),
        curve,
        initial_loss,
        final_loss: outcome.loss,
        epochs: outcome.epochs,
        loss_evaluations: outcome.evaluations,
        memory: MemoryComparison::new(final_params.len() as u64, omega)?,
        wall_seconds: started.elapsed().as_secs_f64(),
        final_params: final_params.clone(),
    };
    Ok((final_params, outcome.loss, report))
}

/// Finite differences of the loss towards the neighbouring set members of
/// one parameter. `None` where the parameter sits at the end of the set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteGradient {
    pub left: Option<f64>,
    pub right: Option<f64>,
}

/// Discrete gradients of parameter `index` of `objective`. The objective is
/// left unchanged.
pub fn discrete_gradients_of<O: SearchObjective + ?Sized>(
    objective: &mut O,
    omega: &DiscreteSet,
    index: usize,
) -> Result<DiscreteGradient> {
    let w = *objective
        .params()
        .get(index)
        .ok_or_else(|| Error::invalid(format!("index {index} out of range for {} parameters", objective.param_count())))?;
    let j = omega
        .code_of(w)
        .ok_or_else(|| Error::Domain(format!("parameter {index} = {w} is not a member of the discrete set")))?;
    let values = omega.values();
    let here = objective.current_loss();
    let left = (j > 0).then(|| (here - objective.trial_loss(index, values[j - 1])) / (values[j] - values[j - 1]));
    let right = (j + 1 < values.len())
        .then(|| (objective.trial_loss(index, values[j + 1]) - here) / (values[j + 1] - values[j]));
    Ok(DiscreteGradient { left, right })
}

/// Discrete gradients of one parameter of a model on a dataset.
pub fn discrete_gradients(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &LabeledDataset,
    omega: &DiscreteSet,
    index: usize,
    loss: LossKind,
) -> Result<DiscreteGradient> {
    if params.spec() != spec {
        return Err(Error::invalid("parameters belong to a different model"));
    }
    let mut obj = FullObjective::new(params, data, loss)?;
    discrete_gradients_of(&mut obj, omega, index)
}
