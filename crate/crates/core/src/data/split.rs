use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LabeledDataset;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    /// Share of samples going to the training part, in `(0, 1)`.
    pub train_fraction: f64,
    pub seed: u64,
    /// Split each class separately so both parts keep the class mix.
    pub stratified: bool,
}

/// Training and validation row indices, each ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Chooses the rows of each part. `round(f * N)` rows go to training; a
/// stratified split hands out per-class quotas by largest remainder.
pub fn split_indices(data: &LabeledDataset, spec: &SplitSpec) -> Result<SplitIndices> {
    let f = spec.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::invalid(format!("train fraction must lie strictly between 0 and 1, got {f}")));
    }
    let n = data.len();
    let n_train = (f * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::invalid(format!(
            "train fraction {f} of {n} samples leaves one part empty"
        )));
    }
    let mut rng = rng::seeded(rng::stream_seed(spec.seed, 4));
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let mut g = vec![Vec::new(); data.classes()];
        for (i, &c) in data.labels().indices().iter().enumerate() {
            g[c].push(i);
        }
        g
    } else {
        vec![(0..n).collect()]
    };
    let quotas = largest_remainder(&groups.iter().map(Vec::len).collect::<Vec<_>>(), f, n_train);
    let mut train = Vec::with_capacity(n_train);
    let mut validation = Vec::with_capacity(n - n_train);
    for (mut g, q) in groups.into_iter().zip(quotas) {
        g.shuffle(&mut rng);
        validation.extend_from_slice(&g[q..]);
        g.truncate(q);
        train.extend(g);
    }
    train.sort_unstable();
    validation.sort_unstable();
    Ok(SplitIndices { train, validation })
}

fn largest_remainder(sizes: &[usize], f: f64, total: usize) -> Vec<usize> {
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| (f * s as f64).floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    let rem = |i: usize| f * sizes[i] as f64 - quotas[i] as f64;
    order.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)).then(a.cmp(&b)));
    let mut missing = total.saturating_sub(quotas.iter().sum());
    for i in order.into_iter().cycle().take(sizes.len() * 2) {
        if missing == 0 {
            break;
        }
        if quotas[i] < sizes[i] {
            quotas[i] += 1;
            missing -= 1;
        }
    }
    quotas
}

/// Splits `data` into training and validation datasets.
pub fn split(data: &LabeledDataset, spec: &SplitSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    let idx = split_indices(data, spec)?;
    Ok((
        data.subset(&idx.train, format!("{}-train", data.name()))?,
        data.subset(&idx.validation, format!("{}-validation", data.name()))?,
    ))
}

/// `per_class` rows of each class, chosen at random, in ascending order.
pub fn stratified_subset(data: &LabeledDataset, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    let mut rng = rng::seeded(rng::stream_seed(seed, 5));
    let mut groups = vec![Vec::new(); data.classes()];
    for (i, &c) in data.labels().indices().iter().enumerate() {
        groups[c].push(i);
    }
    let mut rows = Vec::with_capacity(per_class * groups.len());
    for (c, mut g) in groups.into_iter().enumerate() {
        if g.len() < per_class {
            return Err(Error::invalid(format!("class {c} has {} rows, {per_class} requested", g.len())));
        }
        g.shuffle(&mut rng);
        rows.extend_from_slice(&g[..per_class]);
    }
    rows.sort_unstable();
    data.subset(&rows, format!("{}-subset{}", data.name(), rows.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OneHotLabels;
    use proptest::prelude::*;

    fn labelled(classes: &[usize], k: usize) -> LabeledDataset {
        let x = (0..classes.len()).map(|i| i as f64).collect();
        LabeledDataset::new("l", x, vec![1], OneHotLabels::from_indices(k, classes.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn iris_like_80_20() {
        let classes: Vec<usize> = (0..150).map(|i| i / 50).collect();
        let d = labelled(&classes, 3);
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 1,
            stratified: true,
        };
        let (tr, va) = split(&d, &spec).unwrap();
        assert_eq!((tr.len(), va.len()), (120, 30));
        assert_eq!(tr.labels().class_counts(), vec![40, 40, 40]);
        assert_eq!(va.labels().class_counts(), vec![10, 10, 10]);
    }

    #[test]
    fn two_samples_half() {
        let d = labelled(&[0, 1], 2);
        for stratified in [false, true] {
            let (tr, va) = split(
                &d,
                &SplitSpec {
                    train_fraction: 0.5,
                    seed: 3,
                    stratified,
                },
            )
            .unwrap();
            assert_eq!((tr.len(), va.len()), (1, 1));
        }
    }

    #[test]
    fn degenerate_fractions() {
        let d = labelled(&[0, 1, 0], 2);
        for f in [0.0, 1.0, -0.5, f64::NAN, 0.1, 0.9] {
            let spec = SplitSpec {
                train_fraction: f,
                seed: 0,
                stratified: false,
            };
            assert!(split_indices(&d, &spec).is_err(), "{f}");
        }
    }

    #[test]
    fn stratified_subset_counts() {
        let classes: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let d = labelled(&classes, 4);
        let s = stratified_subset(&d, 5, 2).unwrap();
        assert_eq!(s.labels().class_counts(), vec![5; 4]);
        assert_eq!(s, stratified_subset(&d, 5, 2).unwrap());
        assert!(stratified_subset(&d, 26, 2).is_err());
    }

    proptest! {
        #[test]
        fn splits_partition_rows(
            seed in any::<u64>(),
            n in 4usize..120,
            k in 2usize..5,
            f in 0.2f64..0.8,
            stratified in any::<bool>(),
        ) {
            let mut r = crate::rng::seeded(seed);
            use rand::Rng;
            let classes: Vec<usize> = (0..n).map(|i| if i < k { i } else { r.random_range(0..k) }).collect();
            let d = labelled(&classes, k);
            let spec = SplitSpec { train_fraction: f, seed, stratified };
            let Ok(a) = split_indices(&d, &spec) else { return Ok(()); };
            prop_assert_eq!(&a, &split_indices(&d, &spec).unwrap());
            let mut all: Vec<usize> = a.train.iter().chain(&a.validation).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(a.train.len(), (f * n as f64).round() as usize);
            if stratified {
                let counts = d.labels().class_counts();
                let tr = d.subset(&a.train, "t").unwrap().labels().class_counts();
                for c in 0..k {
                    prop_assert!((tr[c] as f64 - f * counts[c] as f64).abs() <= 1.0);
                }
            }
        }
    }
}
