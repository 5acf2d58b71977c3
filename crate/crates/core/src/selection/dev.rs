//! Deep embedded validation: a linear domain discriminator on bottleneck
//! features supplies density-ratio weights for a control-variate risk
//! estimate on the source validation set.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::derive_seed;
use crate::diffcore::{stable_sigmoid, Tensor};
use crate::error::{Error, Result};

/// Regularisation constants tried for the discriminator: five values evenly
/// spaced in log space between 1e-2 and 1e4.
pub const DEV_DECAYS: [f64; 5] = [1e-2, 0.316_227_766_016_837_94, 10.0, 316.227_766_016_837_9, 1e4];

const POOL_CAP: usize = 3000;
const TRAIN_FRACTION: f64 = 0.8;
const MAX_ITERS: usize = 4000;
const BATCH: usize = 64;
const PROB_CLAMP: f64 = 1e-12;

/// Linear max-margin source/target separator. Positive margins mean target.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDiscriminatorModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Per-feature standardisation fitted on the training split.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub decay: f64,
    pub test_accuracy: f64,
    /// Pool sizes used for training; their ratio corrects the class prior.
    pub n_source: usize,
    pub n_target: usize,
}

impl DomainDiscriminatorModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.bias
            + x.iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .zip(&self.weights)
                .map(|(((v, m), s), w)| (v - m) / s * w)
                .sum::<f64>()
    }

    /// `P(target | x)` as the logistic of the margin, kept inside `(0, 1)`.
    pub fn prob_target(&self, x: &[f64]) -> f64 {
        stable_sigmoid(self.margin(x)).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    }

    /// Density-ratio weight `(N_s/N_t) · d/(1 − d)`.
    pub fn importance_weight(&self, x: &[f64]) -> f64 {
        let d = self.prob_target(x);
        self.n_source as f64 / self.n_target as f64 * d / (1.0 - d)
    }
}

fn cap(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= POOL_CAP {
        (0..n).collect()
    } else {
        let mut ids = index::sample(rng, n, POOL_CAP).into_vec();
        ids.sort_unstable();
        ids
    }
}

/// Mini-batch Pegasos on the hinge loss with `λ = 1/(C·n)`; the bias is an
/// extra constant feature. Returns the average of the second-half iterates.
fn pegasos(x: &[Vec<f64>], y: &[f64], c: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
    let n = x.len();
    let d = x[0].len();
    let lambda = 1.0 / (c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let mut w = vec![0.0; d + 1];
    let mut avg = vec![0.0; d + 1];
    let mut n_avg = 0usize;
    let k = BATCH.min(n);
    let mut grad = vec![0.0; d + 1];
    for t in 1..=MAX_ITERS {
        let eta = 1.0 / (lambda * t as f64);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in index::sample(rng, n, k) {
            let xi = &x[i];
            let m = w[d] + xi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            if y[i] * m < 1.0 {
                for (g, v) in grad.iter_mut().zip(xi) {
                    *g += y[i] * v;
                }
                grad[d] += y[i];
            }
        }
        let shrink = 1.0 - eta * lambda;
        for (wv, g) in w.iter_mut().zip(&grad) {
            *wv = shrink * *wv + eta / k as f64 * g;
        }
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius {
            let s = radius / norm;
            w.iter_mut().for_each(|v| *v *= s);
        }
        if t > MAX_ITERS / 2 {
            n_avg += 1;
            for (a, v) in avg.iter_mut().zip(&w) {
                *a += (v - *a) / n_avg as f64;
            }
        }
    }
    let bias = avg.pop().unwrap_or(0.0);
    (avg, bias)
}

/// Trains linear source/target separators for every value in [`DEV_DECAYS`]
/// on an 80/20 split of (at most 3000 per domain) pooled features and returns
/// the one with the best held-out accuracy (earliest on ties).
pub fn train_domain_discriminator(src: &Tensor, tgt: &Tensor, seed: u64) -> Result<DomainDiscriminatorModel> {
    if src.rows() == 0 || tgt.rows() == 0 {
        return Err(Error::Selection("domain discriminator needs samples from both domains".into()));
    }
    if src.cols() != tgt.cols() {
        return Err(Error::shape("train_domain_discriminator", "feature widths differ"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sid = cap(src.rows(), &mut rng);
    let tid = cap(tgt.rows(), &mut rng);
    let mut pool: Vec<(Vec<f64>, f64)> = sid
        .iter()
        .map(|&i| (src.row(i).to_vec(), -1.0))
        .chain(tid.iter().map(|&i| (tgt.row(i).to_vec(), 1.0)))
        .collect();
    if pool.len() < 5 {
        return Err(Error::Selection(format!("only {} samples for the domain discriminator", pool.len())));
    }
    pool.shuffle(&mut rng);
    let n_train = ((pool.len() as f64 * TRAIN_FRACTION).round() as usize).clamp(1, pool.len() - 1);
    let (train, test) = pool.split_at(n_train);

    let d = src.cols();
    let mut mean = vec![0.0; d];
    for (x, _) in train {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n_train as f64;
        }
    }
    let mut scale = vec![0.0; d];
    for (x, _) in train {
        for ((s, v), m) in scale.iter_mut().zip(x).zip(&mean) {
            *s += (v - m).powi(2) / n_train as f64;
        }
    }
    scale.iter_mut().for_each(|s| *s = s.sqrt().max(1e-8));
    let standardize = |x: &[f64]| -> Vec<f64> { x.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect() };
    let xtr: Vec<Vec<f64>> = train.iter().map(|(x, _)| standardize(x)).collect();
    let ytr: Vec<f64> = train.iter().map(|(_, y)| *y).collect();

    let mut best: Option<DomainDiscriminatorModel> = None;
    for (ci, &c) in DEV_DECAYS.iter().enumerate() {
        let mut crng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("pegasos-{ci}")));
        let (weights, bias) = pegasos(&xtr, &ytr, c, &mut crng);
        let mut model = DomainDiscriminatorModel {
            weights,
            bias,
            mean: mean.clone(),
            scale: scale.clone(),
            decay: c,
            test_accuracy: 0.0,
            n_source: sid.len(),
            n_target: tid.len(),
        };
        let hits = test.iter().filter(|(x, y)| model.margin(x) * y > 0.0).count();
        model.test_accuracy = hits as f64 / test.len() as f64;
        if best.as_ref().is_none_or(|b| model.test_accuracy > b.test_accuracy) {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one decay"))
}

/// Control-variate weighted risk: with `L_i = w_i ℓ_i`, `W_i = w_i` and
/// `η = −Cov(L, W)/Var(W)` (0 when `Var(W) < 1e-12`), returns
/// `mean(L) + η·mean(W) − η`. Moments use population normalisation.
pub fn dev_risk(losses: &[f64], weights: &[f64]) -> Result<f64> {
    let n = losses.len();
    if n == 0 || weights.len() != n {
        return Err(Error::Selection("risk needs matching, nonempty losses and weights".into()));
    }
    let nf = n as f64;
    let l: Vec<f64> = losses.iter().zip(weights).map(|(a, b)| a * b).collect();
    let ml = l.iter().sum::<f64>() / nf;
    let mw = weights.iter().sum::<f64>() / nf;
    let var = weights.iter().map(|w| (w - mw).powi(2)).sum::<f64>() / nf;
    let eta = if var < 1e-12 {
        0.0
    } else {
        let cov = l.iter().zip(weights).map(|(a, w)| (a - ml) * (w - mw)).sum::<f64>() / nf;
        -cov / var
    };
    Ok(ml + eta * mw - eta)
}

/// DEV risk of a model on the source validation set with 0/1 loss.
pub fn score_dev(
    val_features: &Tensor,
    val_logits: &Tensor,
    val_labels: &[usize],
    disc: &DomainDiscriminatorModel,
) -> Result<f64> {
    let pred = val_logits.argmax_rows();
    let losses: Vec<f64> = pred.iter().zip(val_labels).map(|(p, y)| f64::from(u8::from(p != y))).collect();
    let weights: Vec<f64> = (0..val_features.rows()).map(|r| disc.importance_weight(val_features.row(r))).collect();
    dev_risk(&losses, &weights)
}
