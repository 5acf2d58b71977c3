use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledSet;
use crate::error::{Error, Result};

/// Disjoint train/validation ids covering a set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Stratified shuffle split. Per-class train counts follow largest-remainder
/// rounding so the total is `round(ratio·n)` and each class is within one
/// sample of `ratio·n_c`. Classes with fewer than two samples go wholly to
/// train.
pub fn split_source(set: &LabeledSet, ratio: f64, seed: u64) -> Result<SplitIndices> {
    if set.len() < 5 {
        return Err(Error::config(format!("need at least 5 samples to split, got {}", set.len())));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in set.labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut eligible = Vec::new();
    for (&c, ids) in by_class.iter_mut() {
        ids.shuffle(&mut rng);
        if ids.len() < 2 {
            log::warn!("class {c} has {} sample(s); assigning it to train", ids.len());
            train.extend_from_slice(ids);
        } else {
            eligible.push(c);
        }
    }

    let n_elig: usize = eligible.iter().map(|c| by_class[c].len()).sum();
    let target_total = (ratio * n_elig as f64).round() as usize;
    let mut counts: Vec<(usize, usize, f64)> = eligible
        .iter()
        .map(|&c| {
            let exact = ratio * by_class[&c].len() as f64;
            (c, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = counts.iter().map(|c| c.1).sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].2.total_cmp(&counts[a].2).then(a.cmp(&b)));
    for &i in order.iter().take(target_total.saturating_sub(assigned)) {
        counts[i].1 += 1;
    }
    for (c, k, _) in counts {
        let ids = &by_class[&c];
        train.extend_from_slice(&ids[..k]);
        val.extend_from_slice(&ids[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok(SplitIndices { train, val })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Domain;
    use crate::diffcore::Tensor;
    use proptest::prelude::*;

    fn set_with_labels(labels: Vec<usize>) -> LabeledSet {
        let k = labels.iter().max().unwrap() + 1;
        let n = labels.len();
        LabeledSet::new(Tensor::zeros(&[n, 2]), labels, Domain::Source, k).unwrap()
    }

    #[test]
    fn hundred_samples_split_80_20() {
        let set = set_with_labels((0..100).map(|i| i % 7).collect());
        let s = split_source(&set, 0.8, 2020).unwrap();
        assert_eq!((s.train.len(), s.val.len()), (80, 20));
    }

    #[test]
    fn singleton_class_goes_to_train() {
        let mut labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        labels.push(2);
        let set = set_with_labels(labels);
        let s = split_source(&set, 0.8, 1).unwrap();
        assert!(s.train.contains(&20));
    }

    #[test]
    fn too_small() {
        let set = set_with_labels(vec![0, 1, 0, 1]);
        assert!(split_source(&set, 0.8, 1).is_err());
    }

    proptest! {
        #[test]
        fn partition_and_class_proportions(
            sizes in proptest::collection::vec(2usize..40, 1..8),
            seed in 0u64..1000,
        ) {
            let labels: Vec<usize> = sizes.iter().enumerate()
                .flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
            prop_assume!(labels.len() >= 5);
            let set = set_with_labels(labels.clone());
            let s = split_source(&set, 0.8, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            let total = labels.len() as f64;
            prop_assert!((s.train.len() as f64 - 0.8 * total).abs() <= 1.0);
            for (c, &n) in sizes.iter().enumerate() {
                let k = s.train.iter().filter(|&&i| labels[i] == c).count() as f64;
                prop_assert!((k - 0.8 * n as f64).abs() <= 1.0);
            }
            prop_assert_eq!(s.clone(), split_source(&set, 0.8, seed).unwrap());
        }
    }
}
