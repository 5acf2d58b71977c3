use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Weighted mean of `−Σ_k label_k · log softmax(logits)_k`.
///
/// `labels` holds one probability row per sample (one-hot or soft). With
/// weights, the mean is `Σ w_i ℓ_i / Σ w_i`, so the gradient of row `i` is
/// `w_i (softmax − label) / Σ w`.
pub fn softmax_cross_entropy(
    g: &mut Graph,
    logits: Var,
    labels: &Tensor,
    weights: Option<&[f64]>,
) -> Result<Var> {
    let (n, k) = g.value(logits).dims2();
    if labels.dims2() != (n, k) {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("logits {n}x{k} vs labels {:?}", labels.shape()),
        ));
    }
    for r in 0..n {
        let s: f64 = labels.row(r).iter().sum();
        if (s - 1.0).abs() > 1e-9 || labels.row(r).iter().any(|&v| v < 0.0) {
            return Err(Error::config(format!("label row {r} is not a distribution")));
        }
    }
    let w = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::shape("softmax_cross_entropy", "weight length"));
            }
            if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                return Err(Error::config("negative sample weight"));
            }
            w.to_vec()
        }
        None => vec![1.0; n],
    };
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::config("sample weights sum to zero"));
    }
    let ls = g.log_softmax_rows(logits)?;
    let lab = g.constant(labels.clone())?;
    let prod = g.mul(ls, lab)?;
    let per = g.sum_rows(prod)?;
    let wv = g.constant(Tensor::matrix(n, 1, w)?)?;
    let weighted = g.mul(per, wv)?;
    let s = g.sum(weighted)?;
    g.scale(s, -1.0 / total)
}

/// One-hot rows for integer labels.
pub fn one_hot(labels: &[usize], k: usize) -> Tensor {
    let mut t = Tensor::zeros(&[labels.len(), k]);
    for (i, &y) in labels.iter().enumerate() {
        t.data_mut()[i * k + y] = 1.0;
    }
    t
}

/// Mean Shannon entropy (nats) of the row-softmax of `logits`.
pub fn mean_prediction_entropy(g: &mut Graph, logits: Var) -> Result<Var> {
    let p = g.softmax_rows(logits)?;
    let lp = g.log_softmax_rows(logits)?;
    let plp = g.mul(p, lp)?;
    let per = g.sum_rows(plp)?;
    let m = g.mean(per)?;
    g.scale(m, -1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln2() {
        let mut g = Graph::new();
        let l = g.param(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap()).unwrap();
        let y = one_hot(&[0], 2);
        let loss = softmax_cross_entropy(&mut g, l, &y, None).unwrap();
        assert!((g.value(loss).item() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn saturated_correct_is_zero() {
        let mut g = Graph::new();
        let l = g.param(Tensor::matrix(1, 2, vec![100.0, 0.0]).unwrap()).unwrap();
        let loss = softmax_cross_entropy(&mut g, l, &one_hot(&[0], 2), None).unwrap();
        assert!(g.value(loss).item() < 1e-40);
    }

    #[test]
    fn zero_weight_masks_row() {
        let logits = Tensor::matrix(2, 3, vec![0.3, -1.0, 2.0, 1.5, 0.2, -0.7]).unwrap();
        let y = one_hot(&[2, 0], 3);
        let mut g = Graph::new();
        let l = g.param(logits.clone()).unwrap();
        let masked = softmax_cross_entropy(&mut g, l, &y, Some(&[0.0, 1.0])).unwrap();
        let mut g2 = Graph::new();
        let l2 = g2.param(logits.select_rows(&[1])).unwrap();
        let single = softmax_cross_entropy(&mut g2, l2, &one_hot(&[0], 3), None).unwrap();
        assert!((g.value(masked).item() - g2.value(single).item()).abs() < 1e-15);
    }

    #[test]
    fn gradient_is_weighted_softmax_minus_label() {
        let logits = Tensor::matrix(2, 3, vec![0.3, -1.0, 2.0, 1.5, 0.2, -0.7]).unwrap();
        let y = one_hot(&[2, 0], 3);
        let w = [0.25, 0.75];
        let mut g = Graph::new();
        let l = g.param(logits.clone()).unwrap();
        let loss = softmax_cross_entropy(&mut g, l, &y, Some(&w)).unwrap();
        let grads = g.backward(loss).unwrap();
        let gl = grads.get(l).unwrap();
        let p = logits.softmax_rows();
        for r in 0..2 {
            for c in 0..3 {
                let expect = w[r] * (p.get(r, c) - y.get(r, c)) / 1.0;
                assert!((gl.get(r, c) - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn class_count_mismatch() {
        let mut g = Graph::new();
        let l = g.param(Tensor::zeros(&[2, 3])).unwrap();
        assert!(softmax_cross_entropy(&mut g, l, &one_hot(&[0, 1], 2), None).is_err());
    }
}
