//! Synthetic partial-shift data, embedding files, splits, batch samplers and
//! labeled target subsets.

mod embeddings;
mod sampling;
mod split;
mod subsets;
mod synth;

pub use embeddings::{
    load_embeddings, read_embedding_file, save_embeddings, EmbeddingFile, EmbeddingManifest,
    EMBEDDING_MAGIC,
};
pub use sampling::{sample_stratified_batch, sample_uniform_batch};
pub use split::{split_source, SplitIndices};
pub use subsets::{load_subsets, pick_labeled_subset, save_subsets, LabeledSubsets, SubsetMode};
pub use synth::{gen_partial_blobs, PartialShiftSpec};

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

/// Samples of one domain: an `n × d` feature matrix and integer labels in
/// `[0, k_universe)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub domain: Domain,
    pub k_universe: usize,
}

impl LabeledSet {
    pub fn new(features: Tensor, labels: Vec<usize>, domain: Domain, k_universe: usize) -> Result<Self> {
        let (n, _) = features.dims2();
        if features.shape().len() != 2 {
            return Err(Error::config("features must be a 2-D matrix"));
        }
        if n == 0 {
            return Err(Error::config("a labeled set needs at least one sample"));
        }
        if labels.len() != n {
            return Err(Error::config(format!("{} labels for {n} samples", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k_universe) {
            return Err(Error::config(format!("label {bad} outside universe of {k_universe}")));
        }
        if !features.is_finite() {
            return Err(Error::config("features contain NaN or infinity"));
        }
        Ok(Self {
            features,
            labels,
            domain,
            k_universe,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<usize> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Copy of the samples at `ids`, in that order.
    pub fn subset(&self, ids: &[usize]) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::config("empty subset"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.len()) {
            return Err(Error::config(format!("index {bad} out of range {}", self.len())));
        }
        Ok(Self {
            features: self.features.select_rows(ids),
            labels: ids.iter().map(|&i| self.labels[i]).collect(),
            domain: self.domain,
            k_universe: self.k_universe,
        })
    }
}
