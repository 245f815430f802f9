use crate::error::Result;
use crate::model::{LabeledDataset, LossKind, Network, ParamVector};

/// A loss over a flat parameter vector that the search can probe one
/// coordinate at a time.
///
/// `trial_loss` must leave the objective unchanged; `commit` makes the
/// substitution permanent. Implementations agree on the loss of the current
/// parameters bit for bit whenever two trials leave the model output
/// unchanged, which keeps tie-breaking in the search stable.
pub trait SearchObjective {
    fn params(&self) -> &[f64];

    fn param_count(&self) -> usize {
        self.params().len()
    }

    /// Loss of the current parameters.
    fn current_loss(&self) -> f64;

    /// Loss with `params[index]` replaced by `value`.
    fn trial_loss(&mut self, index: usize, value: f64) -> f64;

    fn commit(&mut self, index: usize, value: f64);
}

/// Recomputes the loss over every sample for each trial.
#[derive(Debug, Clone)]
pub struct FullObjective<'a> {
    net: Network,
    data: &'a LabeledDataset,
    kind: LossKind,
    params: Vec<f64>,
    loss: f64,
}

impl<'a> FullObjective<'a> {
    pub fn new(params: &ParamVector, data: &'a LabeledDataset, kind: LossKind) -> Result<Self> {
        let net = Network::new(params.spec())?;
        let loss = net.loss(params.values(), data, kind)?;
        Ok(Self {
            net,
            data,
            kind,
            params: params.values().to_vec(),
            loss,
        })
    }

    fn evaluate(&self) -> f64 {
        self.net
            .loss(&self.params, self.data, self.kind)
            .expect("shapes checked at construction")
    }
}

impl SearchObjective for FullObjective<'_> {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn current_loss(&self) -> f64 {
        self.loss
    }

    fn trial_loss(&mut self, index: usize, value: f64) -> f64 {
        let old = std::mem::replace(&mut self.params[index], value);
        let loss = self.evaluate();
        self.params[index] = old;
        loss
    }

    fn commit(&mut self, index: usize, value: f64) {
        if self.params[index] != value {
            self.params[index] = value;
            self.loss = self.evaluate();
        }
    }
}

/// Any function of the parameter vector, evaluated in full for each trial.
pub struct FnObjective<F> {
    f: F,
    params: Vec<f64>,
    loss: f64,
}

impl<F: FnMut(&[f64]) -> f64> FnObjective<F> {
    pub fn new(params: Vec<f64>, mut f: F) -> Self {
        let loss = f(&params);
        Self { f, params, loss }
    }
}

impl<F: FnMut(&[f64]) -> f64> SearchObjective for FnObjective<F> {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn current_loss(&self) -> f64 {
        self.loss
    }

    fn trial_loss(&mut self, index: usize, value: f64) -> f64 {
        let old = std::mem::replace(&mut self.params[index], value);
        let loss = (self.f)(&self.params);
        self.params[index] = old;
        loss
    }

    fn commit(&mut self, index: usize, value: f64) {
        if self.params[index] != value {
            self.params[index] = value;
            self.loss = (self.f)(&self.params);
        }
    }
}
