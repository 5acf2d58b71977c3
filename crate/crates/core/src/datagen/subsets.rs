use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetMode {
    /// One labeled sample per target class.
    OneShot,
    /// `k` samples drawn uniformly without replacement.
    Random(usize),
}

/// Labeled target subsets, fixed once per (dataset, seed) and shared by every
/// method so scorer comparisons stay paired.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSubsets {
    pub one_shot: Vec<usize>,
    pub rnd_50: Vec<usize>,
    pub rnd_100: Vec<usize>,
}

impl LabeledSubsets {
    /// Draws all three subsets. Random subsets are capped at the target size.
    pub fn draw(target: &LabeledSet, seed: u64) -> Result<Self> {
        let n = target.len();
        Ok(Self {
            one_shot: pick_labeled_subset(target, SubsetMode::OneShot, seed)?,
            rnd_50: pick_labeled_subset(target, SubsetMode::Random(50.min(n)), seed.wrapping_add(1))?,
            rnd_100: pick_labeled_subset(target, SubsetMode::Random(100.min(n)), seed.wrapping_add(2))?,
        })
    }
}

pub fn pick_labeled_subset(target: &LabeledSet, mode: SubsetMode, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        SubsetMode::OneShot => {
            let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, &y) in target.labels.iter().enumerate() {
                by_class.entry(y).or_default().push(i);
            }
            Ok(by_class
                .values()
                .map(|ids| ids[index::sample(&mut rng, ids.len(), 1).index(0)])
                .collect())
        }
        SubsetMode::Random(k) => {
            if k > target.len() {
                return Err(Error::config(format!(
                    "cannot draw {k} labeled samples from {}",
                    target.len()
                )));
            }
            if k == 0 {
                return Err(Error::config("labeled subset size must be positive"));
            }
            let mut ids = index::sample(&mut rng, target.len(), k).into_vec();
            ids.sort_unstable();
            Ok(ids)
        }
    }
}

pub fn save_subsets(path: &Path, subsets: &LabeledSubsets) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(subsets)?).map_err(|e| Error::io(path, e))
}

pub fn load_subsets(path: &Path) -> Result<LabeledSubsets> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
