use crate::diffcore::{matmul_bt_raw, softmax_in_place, Tensor};
use crate::error::{Error, Result};

/// Softmax temperature of the neighbourhood-density scorer.
pub const SND_TEMPERATURE: f64 = 0.05;
const SND_BLOCK: usize = 64;

/// Fraction of argmax-correct rows, optionally restricted to `subset`.
pub fn accuracy(logits: &Tensor, labels: &[usize], subset: Option<&[usize]>) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::shape("accuracy", format!("{} rows for {} labels", logits.rows(), labels.len())));
    }
    let pred = logits.argmax_rows();
    let ids: Vec<usize> = match subset {
        Some(s) => s.to_vec(),
        None => (0..labels.len()).collect(),
    };
    if ids.is_empty() {
        return Err(Error::Selection("accuracy over an empty set".into()));
    }
    if let Some(&bad) = ids.iter().find(|&&i| i >= labels.len()) {
        return Err(Error::Selection(format!("subset index {bad} out of range")));
    }
    let hits = ids.iter().filter(|&&i| pred[i] == labels[i]).count();
    Ok(hits as f64 / ids.len() as f64)
}

pub fn score_s_acc(val_logits: &Tensor, val_labels: &[usize]) -> Result<f64> {
    accuracy(val_logits, val_labels, None)
}

pub fn score_labeled_subset(target_logits: &Tensor, target_labels: &[usize], subset: &[usize]) -> Result<f64> {
    accuracy(target_logits, target_labels, Some(subset))
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// Mean prediction entropy (nats) over target rows.
pub fn score_ent(target_logits: &Tensor) -> f64 {
    let p = target_logits.softmax_rows();
    let n = p.rows();
    (0..n).map(|r| entropy(p.row(r))).sum::<f64>() / n as f64
}

fn normalized(features: &Tensor) -> Tensor {
    let (n, d) = features.dims2();
    let mut out = features.clone();
    for r in 0..n {
        let row = &mut out.data_mut()[r * d..(r + 1) * d];
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        row.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

fn check_snd(features: &Tensor) -> Result<()> {
    if features.rows() < 2 {
        return Err(Error::Selection("neighbourhood density needs at least 2 samples".into()));
    }
    Ok(())
}

/// Neighbourhood density computed block by block: for `B` rows at a time the
/// similarity block `Z_B Zᵀ` is formed, the self-similarity masked, and the
/// row entropies of the tempered softmax accumulated.
pub fn snd_blocked(features: &Tensor, temperature: f64) -> Result<f64> {
    check_snd(features)?;
    let z = normalized(features);
    let (n, d) = z.dims2();
    let mut total = 0.0;
    for start in (0..n).step_by(SND_BLOCK) {
        let end = (start + SND_BLOCK).min(n);
        let block = &z.data()[start * d..end * d];
        let mut sim = matmul_bt_raw(block, z.data(), end - start, d, n);
        for (b, row) in sim.chunks_mut(n).enumerate() {
            row.iter_mut().for_each(|v| *v /= temperature);
            row[start + b] = f64::NEG_INFINITY;
            softmax_in_place(row);
            total += entropy(row);
        }
    }
    Ok(total / n as f64)
}

/// Reference dense computation of [`snd_blocked`].
pub fn snd_dense(features: &Tensor, temperature: f64) -> Result<f64> {
    check_snd(features)?;
    let z = normalized(features);
    let n = z.rows();
    let mut total = 0.0;
    for i in 0..n {
        let logits: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| z.row(i).iter().zip(z.row(j)).map(|(a, b)| a * b).sum::<f64>() / temperature)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let h: f64 = logits
            .iter()
            .map(|l| {
                let p = (l - max).exp() / denom;
                if p > 0.0 {
                    -p * p.ln()
                } else {
                    0.0
                }
            })
            .sum();
        total += h;
    }
    Ok(total / n as f64)
}

/// Neighbourhood density of bottleneck features; higher is better.
pub fn score_snd(target_features: &Tensor, temperature: f64) -> Result<f64> {
    snd_blocked(target_features, temperature)
}
