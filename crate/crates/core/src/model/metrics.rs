use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::OneHotLabels;

/// Smallest probability cross-entropy will take the log of. Discrete
/// weights can drive a class probability to exactly zero.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Per-row error function driving a search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean of `-ln max(p_true, 1e-12)`.
    CrossEntropy,
    /// Mean over rows of `||p - y||^2`, i.e. `(1/N) ||P - Y||^2`.
    Euclidean,
}

/// Writes `softmax(logits)` into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - m).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Loss of one sample computed straight from its logits.
pub fn row_loss(kind: LossKind, logits: &[f64], label: usize) -> f64 {
    match kind {
        LossKind::CrossEntropy => {
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logits.iter().map(|&z| (z - m).exp()).sum();
            let neg_log_p = m + sum.ln() - logits[label];
            neg_log_p.min(-PROBABILITY_FLOOR.ln())
        }
        LossKind::Euclidean => {
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logits.iter().map(|&z| (z - m).exp()).sum();
            logits
                .iter()
                .enumerate()
                .map(|(c, &z)| {
                    let p = (z - m).exp() / sum;
                    let y = if c == label { 1.0 } else { 0.0 };
                    (p - y) * (p - y)
                })
                .sum()
        }
    }
}

/// Class probabilities of N samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    classes: usize,
    probabilities: Vec<f64>,
    predicted: Vec<usize>,
}

impl Prediction {
    /// Applies a row-wise softmax to N x `classes` logits.
    pub fn from_logits(classes: usize, logits: &[f64]) -> Self {
        let mut probabilities = vec![0.0; logits.len()];
        for (z, p) in logits.chunks(classes).zip(probabilities.chunks_mut(classes)) {
            softmax_into(z, p);
        }
        let predicted = probabilities.chunks(classes).map(argmax).collect();
        Self {
            classes,
            probabilities,
            predicted,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probabilities[i * self.classes..(i + 1) * self.classes]
    }

    pub fn predicted_class(&self) -> &[usize] {
        &self.predicted
    }

    fn check(&self, labels: &OneHotLabels) -> Result<()> {
        if labels.classes() != self.classes || labels.len() != self.len() {
            return Err(Error::invalid(format!(
                "prediction is {} x {}, labels are {} x {}",
                self.len(),
                self.classes,
                labels.len(),
                labels.classes()
            )));
        }
        Ok(())
    }
}

/// Mean of `-ln max(p_true, 1e-12)` over rows.
pub fn cross_entropy(pred: &Prediction, labels: &OneHotLabels) -> Result<f64> {
    pred.check(labels)?;
    if pred.is_empty() {
        return Err(Error::invalid("cross-entropy of zero rows"));
    }
    let total: f64 = (0..pred.len())
        .map(|i| -pred.row(i)[labels.class_of(i)].max(PROBABILITY_FLOOR).ln())
        .sum();
    Ok(total / pred.len() as f64)
}

/// Percentage of rows whose predicted class differs from the label.
pub fn classification_error(pred: &Prediction, labels: &OneHotLabels) -> Result<f64> {
    pred.check(labels)?;
    if pred.is_empty() {
        return Err(Error::invalid("classification error of zero rows"));
    }
    Ok(error_pct(pred.predicted_class(), labels.indices()))
}

pub(crate) fn error_pct(predicted: &[usize], truth: &[usize]) -> f64 {
    let wrong = predicted.iter().zip(truth).filter(|(p, t)| p != t).count();
    100.0 * wrong as f64 / truth.len() as f64
}

/// `(1/n) ||pred - truth||^2`.
pub fn euclidean_error(pred: &[f64], truth: &[f64], n: usize) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "euclidean error of vectors with lengths {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("euclidean error normalized by zero"));
    }
    let sq: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sq / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(k: usize, idx: &[usize]) -> OneHotLabels {
        OneHotLabels::from_indices(k, idx.to_vec()).unwrap()
    }

    #[test]
    fn uniform_cross_entropy_is_ln_k() {
        let pred = Prediction::from_logits(10, &[0.0; 30]);
        let ce = cross_entropy(&pred, &labels(10, &[0, 4, 9])).unwrap();
        assert!((ce - 10f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions_have_zero_loss() {
        let pred = Prediction::from_logits(3, &[800.0, 0.0, 0.0, 0.0, 0.0, 800.0]);
        let ce = cross_entropy(&pred, &labels(3, &[0, 2])).unwrap();
        assert!(ce.abs() < 1e-300);
        // Confidently wrong rows stop at the floor.
        let ce_wrong = cross_entropy(&pred, &labels(3, &[1, 1])).unwrap();
        assert!((ce_wrong - (-PROBABILITY_FLOOR.ln())).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_hand_computed() {
        // Probabilities given directly through log-space logits.
        let probs = [[0.7, 0.2, 0.1], [0.1, 0.8, 0.1], [0.25, 0.25, 0.5]];
        let logits: Vec<f64> = probs.iter().flatten().map(|p: &f64| p.ln()).collect();
        let pred = Prediction::from_logits(3, &logits);
        let ce = cross_entropy(&pred, &labels(3, &[0, 2, 2])).unwrap();
        // -(ln 0.7 + ln 0.1 + ln 0.5) / 3
        let expected = (0.356_674_943_938_732_4 + std::f64::consts::LN_10 + std::f64::consts::LN_2) / 3.0;
        assert!((ce - expected).abs() < 1e-12, "{ce} vs {expected}");
    }

    #[test]
    fn row_loss_agrees_with_prediction_path() {
        let logits = [0.3, -1.2, 2.5, 0.0];
        let pred = Prediction::from_logits(4, &logits);
        for label in 0..4 {
            let direct = row_loss(LossKind::CrossEntropy, &logits, label);
            let via = cross_entropy(&pred, &labels(4, &[label])).unwrap();
            assert!((direct - via).abs() < 1e-12);
            let mut y = [0.0; 4];
            y[label] = 1.0;
            let e = euclidean_error(pred.row(0), &y, 1).unwrap();
            assert!((row_loss(LossKind::Euclidean, &logits, label) - e).abs() < 1e-15);
        }
    }

    #[test]
    fn classification_error_examples() {
        let pred = Prediction::from_logits(2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(classification_error(&pred, &labels(2, &[0, 1, 0, 0])).unwrap(), 0.0);
        assert_eq!(classification_error(&pred, &labels(2, &[1, 0, 1, 1])).unwrap(), 100.0);
        assert_eq!(classification_error(&pred, &labels(2, &[0, 1, 0, 1])).unwrap(), 25.0);
        assert!(classification_error(&pred, &labels(2, &[0, 1])).is_err());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let pred = Prediction::from_logits(3, &[0.0, 0.0, 0.0, 1.0, 2.0, 2.0]);
        assert_eq!(pred.predicted_class(), &[0, 1]);
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(euclidean_error(&[1.0, 2.0], &[1.0, 2.0], 2).unwrap(), 0.0);
        assert_eq!(euclidean_error(&[1.0, 0.0], &[0.0, 0.0], 2).unwrap(), 0.5);
        assert!(euclidean_error(&[1.0], &[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn euclidean_matches_summation_oracle() {
        let mut rng = crate::rng::seeded(5);
        use rand::Rng;
        for _ in 0..100 {
            let p: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut acc = 0.0;
            for i in 0..5 {
                let d = p[i] - y[i];
                acc += d * d;
            }
            assert!((euclidean_error(&p, &y, 5).unwrap() - acc / 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = crate::rng::seeded(9);
        use rand::Rng;
        for _ in 0..1000 {
            let z: Vec<f64> = (0..7).map(|_| rng.random_range(-50.0..50.0)).collect();
            let mut p = vec![0.0; 7];
            softmax_into(&z, &mut p);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| v >= 0.0));
        }
    }
}
