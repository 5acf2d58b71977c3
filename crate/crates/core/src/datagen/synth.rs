use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Domain, LabeledSet};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Recipe for a synthetic source/target pair where the target only contains
/// the first `k_target` source classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartialShiftSpec {
    pub dim: usize,
    pub k_source: usize,
    pub k_target: usize,
    pub n_per_class_source: usize,
    pub n_per_class_target: usize,
    /// Standard deviation of the class means around the origin.
    pub class_spread: f64,
    /// Within-class noise σ.
    pub noise: f64,
    /// Angle (radians) of the Givens rotations applied to coordinate pairs.
    pub rotation: f64,
    /// Norm of the shared target translation.
    pub translation: f64,
    /// Per-class radial scale jitter: cluster centres are scaled by
    /// `1 + jitter·U(−1, 1)`.
    pub scale_jitter: f64,
    /// Optional bend `x_j += warp · sin(x_{j+1})`.
    pub warp: Option<f64>,
}

impl Default for PartialShiftSpec {
    fn default() -> Self {
        Self {
            dim: 32,
            k_source: 10,
            k_target: 6,
            n_per_class_source: 60,
            n_per_class_target: 50,
            class_spread: 1.0,
            noise: 0.6,
            rotation: 0.9,
            translation: 3.0,
            scale_jitter: 0.2,
            warp: None,
        }
    }
}

impl PartialShiftSpec {
    /// Office-Home-like variant with 25 source and 10 target classes.
    pub fn office_home_like() -> Self {
        Self {
            k_source: 25,
            k_target: 10,
            n_per_class_source: 40,
            n_per_class_target: 30,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_target >= self.k_source {
            return Err(Error::config(format!(
                "target classes ({}) must be fewer than source classes ({})",
                self.k_target, self.k_source
            )));
        }
        if self.k_target == 0 || self.dim == 0 {
            return Err(Error::config("dim and k_target must be positive"));
        }
        if self.n_per_class_source == 0 || self.n_per_class_target == 0 {
            return Err(Error::config("per-class counts must be >= 1"));
        }
        if !(self.noise > 0.0) {
            return Err(Error::config("noise sigma must be > 0"));
        }
        Ok(())
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

fn rotate(x: &mut [f64], cos: f64, sin: f64) {
    for pair in x.chunks_exact_mut(2) {
        let (a, b) = (pair[0], pair[1]);
        pair[0] = cos * a - sin * b;
        pair[1] = sin * a + cos * b;
    }
}

/// Generates a source set with `k_source` Gaussian clusters and a shifted
/// target set containing only classes `0..k_target`.
pub fn gen_partial_blobs(spec: &PartialShiftSpec, seed: u64) -> Result<(LabeledSet, LabeledSet)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim;
    let means: Vec<Vec<f64>> = (0..spec.k_source)
        .map(|_| normal_vec(&mut rng, d, spec.class_spread))
        .collect();

    let mut translation = normal_vec(&mut rng, d, 1.0);
    let tn = translation.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    translation.iter_mut().for_each(|v| *v *= spec.translation / tn);
    let class_scale: Vec<f64> = (0..spec.k_source)
        .map(|_| 1.0 + spec.scale_jitter * rng.random_range(-1.0..1.0))
        .collect();

    let mut src = Vec::with_capacity(spec.k_source * spec.n_per_class_source * d);
    let mut src_y = Vec::new();
    for (k, mu) in means.iter().enumerate() {
        for _ in 0..spec.n_per_class_source {
            let eps = normal_vec(&mut rng, d, spec.noise);
            src.extend(mu.iter().zip(&eps).map(|(m, e)| m + e));
            src_y.push(k);
        }
    }

    let (cos, sin) = (spec.rotation.cos(), spec.rotation.sin());
    let mut tgt = Vec::with_capacity(spec.k_target * spec.n_per_class_target * d);
    let mut tgt_y = Vec::new();
    for (k, mu) in means.iter().enumerate().take(spec.k_target) {
        for _ in 0..spec.n_per_class_target {
            let eps = normal_vec(&mut rng, d, spec.noise);
            let mut x: Vec<f64> = mu.iter().zip(&eps).map(|(m, e)| m * class_scale[k] + e).collect();
            rotate(&mut x, cos, sin);
            x.iter_mut().zip(&translation).for_each(|(v, t)| *v += t);
            if let Some(w) = spec.warp {
                let orig = x.clone();
                for j in 0..d {
                    x[j] += w * orig[(j + 1) % d].sin();
                }
            }
            tgt.extend(x);
            tgt_y.push(k);
        }
    }

    let source = LabeledSet::new(
        Tensor::matrix(src_y.len(), d, src)?,
        src_y,
        Domain::Source,
        spec.k_source,
    )?;
    let target = LabeledSet::new(
        Tensor::matrix(tgt_y.len(), d, tgt)?,
        tgt_y,
        Domain::Target,
        spec.k_source,
    )?;
    Ok((source, target))
}
