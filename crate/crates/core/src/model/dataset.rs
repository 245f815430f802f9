use crate::error::{Error, Result};

/// Class labels of a dataset, one class per row.
///
/// Stored as class indices, so every row has exactly one hot entry by
/// construction; [`OneHotLabels::from_matrix`] checks that property when
/// starting from an explicit N x k matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneHotLabels {
    classes: usize,
    indices: Vec<usize>,
}

impl OneHotLabels {
    pub fn from_indices(classes: usize, indices: Vec<usize>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::invalid("labels need at least two classes"));
        }
        if let Some((row, &c)) = indices.iter().enumerate().find(|(_, &c)| c >= classes) {
            return Err(Error::invalid(format!("label {c} in row {row} is not below class count {classes}")));
        }
        Ok(Self { classes, indices })
    }

    /// Builds labels from a row-major N x `classes` 0/1 matrix.
    pub fn from_matrix(classes: usize, matrix: &[f64]) -> Result<Self> {
        if classes == 0 || matrix.len() % classes != 0 {
            return Err(Error::invalid("one-hot matrix size is not a multiple of the class count"));
        }
        let indices = matrix
            .chunks(classes)
            .enumerate()
            .map(|(row, r)| {
                let ones: Vec<usize> = r.iter().enumerate().filter(|(_, &v)| v == 1.0).map(|(c, _)| c).collect();
                let zeros = r.iter().filter(|&&v| v == 0.0).count();
                if ones.len() == 1 && zeros == classes - 1 {
                    Ok(ones[0])
                } else {
                    Err(Error::invalid(format!("row {row} is not a one-hot vector")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_indices(classes, indices)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn class_of(&self, row: usize) -> usize {
        self.indices[row]
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Row-major N x k matrix of 0.0 / 1.0.
    pub fn to_matrix(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.indices.len() * self.classes];
        for (row, &c) in self.indices.iter().enumerate() {
            m[row * self.classes + c] = 1.0;
        }
        m
    }

    /// Number of rows per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &c in &self.indices {
            counts[c] += 1;
        }
        counts
    }
}

/// Features plus labels. Features are row-major, one row of
/// `sample_shape.iter().product()` values per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    name: String,
    features: Vec<f64>,
    sample_shape: Vec<usize>,
    labels: OneHotLabels,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, features: Vec<f64>, sample_shape: Vec<usize>, labels: OneHotLabels) -> Result<Self> {
        let d: usize = sample_shape.iter().product();
        if labels.is_empty() {
            return Err(Error::invalid("dataset has no samples"));
        }
        if d == 0 {
            return Err(Error::invalid("samples have zero features"));
        }
        if features.len() != labels.len() * d {
            return Err(Error::invalid(format!(
                "feature buffer has {} values, expected {} samples x {d}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("feature {} of sample {} is not finite", pos % d, pos / d)));
        }
        Ok(Self {
            name: name.into(),
            features,
            sample_shape,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn feature_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn sample(&self, row: usize) -> &[f64] {
        let d = self.feature_len();
        &self.features[row * d..(row + 1) * d]
    }

    pub fn labels(&self) -> &OneHotLabels {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.labels.classes()
    }

    /// Rows `indices`, in the given order.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Result<Self> {
        let d = self.feature_len();
        let mut features = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("row {i} out of range for {} samples", self.len())));
            }
            features.extend_from_slice(self.sample(i));
            labels.push(self.labels.class_of(i));
        }
        let labels = OneHotLabels::from_indices(self.classes(), labels)?;
        Self::new(name, features, self.sample_shape.clone(), labels)
    }

    /// Same data under a different sample shape with the same element count.
    pub fn reshaped(mut self, sample_shape: Vec<usize>) -> Result<Self> {
        if sample_shape.iter().product::<usize>() != self.feature_len() {
            return Err(Error::invalid("reshape changes the number of features"));
        }
        self.sample_shape = sample_shape;
        Ok(self)
    }
}
