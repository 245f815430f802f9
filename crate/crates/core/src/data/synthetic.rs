use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{LabeledDataset, OneHotLabels};
use crate::rng;

/// Distance between neighbouring cluster centres, in standard deviations.
pub const BLOB_SEPARATION: f64 = 8.0;

/// `n` points in `d` dimensions from `k` unit-variance Gaussian clusters.
///
/// Class `c` is centred at `BLOB_SEPARATION` along axis `c % d`, offset by
/// a further multiple of the separation when `k > d`, so centres are at
/// least eight standard deviations apart. Rows cycle through the classes.
pub fn synthetic_blobs(n: usize, d: usize, k: usize, seed: u64) -> Result<LabeledDataset> {
    if k < 2 {
        return Err(Error::invalid(format!("synthetic blobs need at least two classes, got {k}")));
    }
    if n == 0 || d == 0 {
        return Err(Error::invalid("synthetic blobs need at least one sample and one feature"));
    }
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = rng::seeded(rng::stream_seed(seed, 6));
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        for j in 0..d {
            let centre = if j == c % d { BLOB_SEPARATION * (1 + c / d) as f64 } else { 0.0 };
            features.push(centre + noise.sample(&mut rng));
        }
        labels.push(c);
    }
    // Shuffle rows so minibatches are not class-ordered.
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let x = order.iter().flat_map(|&r| features[r * d..(r + 1) * d].iter().copied()).collect();
    let y = order.iter().map(|&r| labels[r]).collect();
    LabeledDataset::new(
        format!("blobs-{n}x{d}-k{k}"),
        x,
        vec![d],
        OneHotLabels::from_indices(k, y)?,
    )
}
