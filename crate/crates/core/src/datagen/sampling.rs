use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

/// `batch` distinct indices in `0..n`, drawn uniformly.
pub fn sample_uniform_batch(n: usize, batch: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if batch > n {
        return Err(Error::config(format!("batch size {batch} exceeds set size {n}")));
    }
    Ok(index::sample(rng, n, batch).into_vec())
}

/// Class-balanced batch over the positions of `labels`.
///
/// Every present class receives `batch / K` samples; the `batch % K` extra
/// slots go to consecutive classes (in ascending label order) starting at a
/// class drawn from `rng`, so per-class counts differ by at most one. Within a
/// class, samples are drawn without replacement while the class is large
/// enough, and with replacement otherwise.
pub fn sample_stratified_batch(labels: &[usize], batch: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let k = by_class.len();
    if k == 0 || batch < k {
        return Err(Error::config(format!(
            "stratified batch of {batch} cannot cover {k} classes"
        )));
    }
    let base = batch / k;
    let extra = batch % k;
    let start = if extra > 0 { rng.random_range(0..k) } else { 0 };
    let mut out = Vec::with_capacity(batch);
    for (pos, ids) in by_class.values().enumerate() {
        let slot = (pos + k - start) % k;
        let count = base + usize::from(slot < extra);
        if count <= ids.len() {
            out.extend(index::sample(rng, ids.len(), count).into_iter().map(|j| ids[j]));
        } else {
            out.extend((0..count).map(|_| ids[rng.random_range(0..ids.len())]));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn counts(labels: &[usize], idx: &[usize], k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        for &i in idx {
            c[labels[i]] += 1;
        }
        c
    }

    #[test]
    fn uniform_full_batch_is_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = sample_uniform_batch(36, 36, &mut rng).unwrap();
        b.sort_unstable();
        assert_eq!(b, (0..36).collect::<Vec<_>>());
    }

    #[test]
    fn uniform_replay_and_errors() {
        let a = sample_uniform_batch(100, 36, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_uniform_batch(100, 36, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        let mut s = a.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 36);
        assert!(sample_uniform_batch(10, 11, &mut ChaCha8Rng::seed_from_u64(5)).is_err());
    }

    #[test]
    fn stratified_exact_division() {
        let labels: Vec<usize> = (0..100).map(|i| i % 5).collect();
        let b = sample_stratified_batch(&labels, 10, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(counts(&labels, &b, 5), vec![2; 5]);
    }

    #[test]
    fn stratified_remainder() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let b = sample_stratified_batch(&labels, 7, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut c = counts(&labels, &b, 3);
        c.sort_unstable();
        assert_eq!(c, vec![2, 2, 3]);
        let again = sample_stratified_batch(&labels, 7, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(b, again);
    }

    #[test]
    fn stratified_office_home_size() {
        let labels: Vec<usize> = (0..500).map(|i| i % 25).collect();
        let b = sample_stratified_batch(&labels, 65, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(b.len(), 65);
        let c = counts(&labels, &b, 25);
        assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
    }

    #[test]
    fn stratified_too_small() {
        let labels: Vec<usize> = (0..30).map(|i| i % 5).collect();
        assert!(sample_stratified_batch(&labels, 4, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn stratified_balance(k in 1usize..12, extra in 0usize..40, seed in 0u64..500) {
            let labels: Vec<usize> = (0..(k * 7)).map(|i| i % k).collect();
            let batch = k + extra;
            let b = sample_stratified_batch(&labels, batch, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            proptest::prop_assert_eq!(b.len(), batch);
            let c = counts(&labels, &b, k);
            proptest::prop_assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
        }
    }
}
