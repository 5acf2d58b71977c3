use serde::{Deserialize, Serialize};

use super::ClassWeights;
use crate::diffcore::{mean_prediction_entropy, one_hot, softmax_cross_entropy, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::nets::{BoundBundle, BoundScalarHead, Critic};
use crate::ot::{partial_ot_entropic, sinkhorn_uot, uniform, TransportPlan};

const PROB_FLOOR: f64 = 1e-12;

/// Inputs and labels of one mini-batch. Target batches carry labels only for
/// bookkeeping; no loss reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub y: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Iteration budget of the transport solvers called inside training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for OtOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

fn features(g: &mut Graph, net: &BoundBundle, x: &Tensor) -> Result<Var> {
    let xv = g.constant(x.clone())?;
    net.features(g, xv)
}

fn ce(g: &mut Graph, logits: Var, y: &[usize], weights: Option<&[f64]>) -> Result<Var> {
    let k = g.value(logits).cols();
    if let Some(&bad) = y.iter().find(|&&c| c >= k) {
        return Err(Error::config(format!("label {bad} outside {k} classes")));
    }
    softmax_cross_entropy(g, logits, &one_hot(y, k), weights)
}

fn add_term(g: &mut Graph, total: Var, coeff: f64, term: Var) -> Result<Var> {
    let t = g.scale(term, coeff)?;
    g.add(total, t)
}

fn column(values: Vec<f64>) -> Result<Tensor> {
    let n = values.len();
    Tensor::matrix(n, 1, values)
}

/// Plain softmax cross-entropy on the source batch.
pub fn loss_source_only(g: &mut Graph, net: &BoundBundle, src: &Batch) -> Result<Var> {
    let zs = features(g, net, &src.x)?;
    let ls = net.logits_from_features(g, zs)?;
    ce(g, ls, &src.y, None)
}

/// Class weights from averaged target predictions: column mean of `probs`,
/// divided by its largest entry.
pub fn pada_class_weights(probs: &Tensor) -> Result<ClassWeights> {
    let (n, k) = probs.dims2();
    if n == 0 {
        return Err(Error::config("class weights need at least one target prediction"));
    }
    let mut mean = vec![0.0; k];
    for r in 0..n {
        for (m, p) in mean.iter_mut().zip(probs.row(r)) {
            *m += p / n as f64;
        }
    }
    let max = mean.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::Numeric { op: "pada_class_weights" });
    }
    Ok(ClassWeights {
        gamma: mean.into_iter().map(|m| m / max).collect(),
    })
}

/// Weighted binary cross-entropy of the discriminator, reading its sigmoid as
/// P(source): `Σ w_i bce_i / Σ w_i` over `z_src` (label 1, weights `w_src`)
/// and `z_tgt` (label 0, weight 1). Features reach the discriminator through
/// gradient reversal with `coeff`.
fn domain_bce(
    g: &mut Graph,
    disc: &BoundScalarHead,
    z_src: Var,
    w_src: &[f64],
    z_tgt: Var,
    coeff: f64,
) -> Result<Var> {
    let (ns, nt) = (g.value(z_src).rows(), g.value(z_tgt).rows());
    let z = g.concat_rows(&[z_src, z_tgt])?;
    let zr = g.grad_reverse(z, coeff)?;
    let raw = disc.raw(g, zr)?;
    let sign: Vec<f64> = (0..ns + nt).map(|i| if i < ns { -1.0 } else { 1.0 }).collect();
    let weights: Vec<f64> = w_src.iter().copied().chain(std::iter::repeat_n(1.0, nt)).collect();
    let total: f64 = weights.iter().sum();
    let sv = g.constant(column(sign)?)?;
    let signed = g.mul(raw, sv)?;
    let per = g.softplus(signed)?;
    let wv = g.constant(column(weights)?)?;
    let weighted = g.mul(per, wv)?;
    let s = g.sum(weighted)?;
    g.scale(s, 1.0 / total)
}

/// `γ`-weighted source cross-entropy plus `lambda` times the `γ`-weighted
/// domain-adversarial loss.
#[allow(clippy::too_many_arguments)]
pub fn loss_pada(
    g: &mut Graph,
    net: &BoundBundle,
    disc: &BoundScalarHead,
    src: &Batch,
    tgt: &Batch,
    gamma: &ClassWeights,
    lambda: f64,
    grl: f64,
) -> Result<Var> {
    let w = gamma.for_labels(&src.y);
    let zs = features(g, net, &src.x)?;
    let zt = features(g, net, &tgt.x)?;
    let ls = net.logits_from_features(g, zs)?;
    let loss = ce(g, ls, &src.y, Some(&w))?;
    if lambda == 0.0 {
        return Ok(loss);
    }
    let adv = domain_bce(g, disc, zs, &w, zt, grl)?;
    add_term(g, loss, lambda, adv)
}

/// Source cross-entropy plus `lambda` times the stepwise feature-norm
/// enlargement term `mean (sg(‖z‖) + delta_r − ‖z‖)²` over both batches.
pub fn loss_safn(g: &mut Graph, net: &BoundBundle, src: &Batch, tgt: &Batch, lambda: f64, delta_r: f64) -> Result<Var> {
    let zs = features(g, net, &src.x)?;
    let zt = features(g, net, &tgt.x)?;
    let ls = net.logits_from_features(g, zs)?;
    let loss = ce(g, ls, &src.y, None)?;
    if lambda == 0.0 {
        return Ok(loss);
    }
    let z = g.concat_rows(&[zs, zt])?;
    let norms = g.row_l2_norm(z)?;
    let goal = g.stop_gradient(norms)?;
    let goal = g.add_scalar(goal, delta_r)?;
    let diff = g.sub(goal, norms)?;
    let sq = g.square(diff)?;
    let term = g.mean(sq)?;
    add_term(g, loss, lambda, term)
}

/// Number of source samples appended to the target batch at `iter`:
/// `ceil(b_t · max(0, 1 − iter/total))`.
pub fn ba3us_aug_count(b_t: usize, iter: usize, total: usize) -> usize {
    if total == 0 {
        return 0;
    }
    let frac = (1.0 - iter as f64 / total as f64).max(0.0);
    (b_t as f64 * frac).ceil() as usize
}

/// Mean over rows of `Σ_{k≠y} p̂_k log p̂_k` with `p̂_k = p_k / (1 − p_y)`.
fn complement_entropy(g: &mut Graph, logits: Var, y: &[usize]) -> Result<Var> {
    let (n, k) = g.value(logits).dims2();
    let mut mask = Tensor::ones(&[n, k]);
    for (i, &c) in y.iter().enumerate() {
        mask.data_mut()[i * k + c] = 0.0;
    }
    let p = g.softmax_rows(logits)?;
    let mv = g.constant(mask)?;
    let pm = g.mul(p, mv)?;
    let denom = g.sum_rows(pm)?;
    let denom = g.clamp_min(denom, PROB_FLOOR)?;
    let phat = g.div(pm, denom)?;
    let safe = g.clamp_min(phat, PROB_FLOOR)?;
    let lp = g.log(safe)?;
    let t = g.mul(phat, lp)?;
    let s = g.sum(t)?;
    g.scale(s, 1.0 / n as f64)
}

/// BA3US objective. The target side of the adversarial loss is the target
/// batch plus `aug` (source samples); the complement-entropy term acts on
/// `aug` with weight `lambda_wce · iter/total`. `adv_weight` scales the
/// adversarial term (1 in training).
#[allow(clippy::too_many_arguments)]
pub fn loss_ba3us(
    g: &mut Graph,
    net: &BoundBundle,
    disc: &BoundScalarHead,
    src: &Batch,
    tgt: &Batch,
    aug: &Batch,
    gamma: &ClassWeights,
    lambda_wce: f64,
    lambda_ent: f64,
    iter: usize,
    total: usize,
    adv_weight: f64,
    grl: f64,
) -> Result<Var> {
    let w = gamma.for_labels(&src.y);
    let zs = features(g, net, &src.x)?;
    let zt = features(g, net, &tgt.x)?;
    let ls = net.logits_from_features(g, zs)?;
    let mut loss = ce(g, ls, &src.y, Some(&w))?;
    let za = if aug.is_empty() { None } else { Some(features(g, net, &aug.x)?) };
    if adv_weight != 0.0 {
        let tside = match za {
            Some(za) => g.concat_rows(&[zt, za])?,
            None => zt,
        };
        let ones = vec![1.0; src.len()];
        let adv = domain_bce(g, disc, zs, &ones, tside, grl)?;
        loss = add_term(g, loss, adv_weight, adv)?;
    }
    let wce = if total == 0 { 0.0 } else { lambda_wce * iter as f64 / total as f64 };
    if let (Some(za), true) = (za, wce != 0.0) {
        let la = net.logits_from_features(g, za)?;
        let comp = complement_entropy(g, la, &aug.y)?;
        loss = add_term(g, loss, wce, comp)?;
    }
    if lambda_ent != 0.0 {
        let lt = net.logits_from_features(g, zt)?;
        let ent = mean_prediction_entropy(g, lt)?;
        loss = add_term(g, loss, lambda_ent, ent)?;
    }
    Ok(loss)
}

/// `mean_t φ(z_t) − Σ_s w_i φ(z_s) / Σ_s w_i` with the critic clamped to its
/// bounds.
fn critic_gap(g: &mut Graph, critic: &Critic, cb: &BoundScalarHead, zs: Var, w: &[f64], zt: Var) -> Result<Var> {
    let ps = critic.forward(g, cb, zs)?;
    let pt = critic.forward(g, cb, zt)?;
    let wsum: f64 = w.iter().sum();
    let scale = if wsum > 0.0 { 1.0 / wsum } else { 0.0 };
    let wv = g.constant(column(w.iter().map(|v| v * scale).collect())?)?;
    let wps = g.mul(ps, wv)?;
    let ms = g.sum(wps)?;
    let mt = g.mean(pt)?;
    g.sub(mt, ms)
}

/// AR objective of the main network: `w`-weighted source cross-entropy
/// (`Σ w_i ℓ_i / Σ w_i`), `align` times the critic gap (minimised through the
/// features), and `lambda_ent` times the target prediction entropy. Critic
/// parameters are bound but not meant to be updated from this loss.
#[allow(clippy::too_many_arguments)]
pub fn ar_main_loss(
    g: &mut Graph,
    net: &BoundBundle,
    critic: &Critic,
    cb: &BoundScalarHead,
    src: &Batch,
    tgt: &Batch,
    w: &[f64],
    lambda_ent: f64,
    align: f64,
) -> Result<Var> {
    if w.len() != src.len() {
        return Err(Error::shape("ar_main_loss", format!("{} weights for {} samples", w.len(), src.len())));
    }
    let zs = features(g, net, &src.x)?;
    let zt = features(g, net, &tgt.x)?;
    let ls = net.logits_from_features(g, zs)?;
    let mut loss = if w.iter().sum::<f64>() > 0.0 {
        ce(g, ls, &src.y, Some(w))?
    } else {
        g.constant(Tensor::scalar(0.0))?
    };
    if align != 0.0 {
        let gap = critic_gap(g, critic, cb, zs, w, zt)?;
        loss = add_term(g, loss, align, gap)?;
    }
    if lambda_ent != 0.0 {
        let lt = net.logits_from_features(g, zt)?;
        let ent = mean_prediction_entropy(g, lt)?;
        loss = add_term(g, loss, lambda_ent, ent)?;
    }
    Ok(loss)
}

/// AR critic objective on fixed features: `−gap + gp · mean (‖∇φ(ẑ)‖ − 1)²`
/// at interpolates `ẑ_i = α_i zs_i + (1 − α_i) zt_i`. The input gradient of
/// the one-hidden-layer critic is written out explicitly,
/// `∇φ = (1[h_i > 0] ⊙ W2ᵀ) W1ᵀ`, so the penalty is differentiable in the
/// critic weights. The penalty sees the unclamped network, which keeps it
/// informative when the output saturates.
#[allow(clippy::too_many_arguments)]
pub fn ar_critic_loss(
    g: &mut Graph,
    critic: &Critic,
    cb: &BoundScalarHead,
    zs: &Tensor,
    zt: &Tensor,
    w: &[f64],
    alpha: &[f64],
    gp: f64,
) -> Result<Var> {
    let zsv = g.constant(zs.clone())?;
    let ztv = g.constant(zt.clone())?;
    let gap = critic_gap(g, critic, cb, zsv, w, ztv)?;
    let mut loss = g.scale(gap, -1.0)?;
    if gp == 0.0 {
        return Ok(loss);
    }
    let n = zs.rows().min(zt.rows());
    if alpha.len() != n {
        return Err(Error::shape("ar_critic_loss", format!("{} mixing weights for {n} pairs", alpha.len())));
    }
    let d = zs.cols();
    let mut mix = Vec::with_capacity(n * d);
    for i in 0..n {
        let a = alpha[i];
        mix.extend(zs.row(i).iter().zip(zt.row(i)).map(|(s, t)| a * s + (1.0 - a) * t));
    }
    let zhat = g.constant(Tensor::matrix(n, d, mix)?)?;
    let pre = cb.hidden.forward(g, zhat)?;
    let active = g.value(pre).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let mv = g.constant(active)?;
    let w2t = g.transpose(cb.out.weight)?;
    let gate = g.mul(mv, w2t)?;
    let w1t = g.transpose(cb.hidden.weight)?;
    let grad = g.matmul(gate, w1t)?;
    let norm = g.row_l2_norm(grad)?;
    let dev = g.add_scalar(norm, -1.0)?;
    let sq = g.square(dev)?;
    let pen = g.mean(sq)?;
    loss = add_term(g, loss, gp, pen)?;
    Ok(loss)
}

/// Joint feature/label ground cost
/// `C_ij = eta1 ‖zs_i − zt_j‖² + eta2 · CE(ys_i, softmax(lt_j))`.
pub fn jumbot_cost(
    g: &mut Graph,
    zs: Var,
    ys_onehot: &Tensor,
    zt: Var,
    logits_t: Var,
    eta1: f64,
    eta2: f64,
) -> Result<Var> {
    let (n, m) = (g.value(zs).rows(), g.value(zt).rows());
    if ys_onehot.rows() != n || g.value(logits_t).rows() != m || ys_onehot.cols() != g.value(logits_t).cols() {
        return Err(Error::shape("jumbot_cost", "batch or class counts disagree"));
    }
    let sqs = g.square(zs)?;
    let ns = g.sum_rows(sqs)?;
    let sqt = g.square(zt)?;
    let nt = g.sum_rows(sqt)?;
    let nt = g.transpose(nt)?;
    let ztt = g.transpose(zt)?;
    let cross = g.matmul(zs, ztt)?;
    let dist = g.scale(cross, -2.0)?;
    let dist = g.add(dist, ns)?;
    let dist = g.add(dist, nt)?;
    let dist = g.scale(dist, eta1)?;
    let lp = g.log_softmax_rows(logits_t)?;
    let lpt = g.transpose(lp)?;
    let yv = g.constant(ys_onehot.clone())?;
    let xent = g.matmul(yv, lpt)?;
    let xent = g.scale(xent, -eta2)?;
    g.add(dist, xent)
}

struct OtParts {
    ce: Var,
    cost: Var,
}

fn ot_parts(g: &mut Graph, net: &BoundBundle, src: &Batch, tgt: &Batch, eta1: f64, eta2: f64) -> Result<OtParts> {
    let zs = features(g, net, &src.x)?;
    let zt = features(g, net, &tgt.x)?;
    let ls = net.logits_from_features(g, zs)?;
    let lt = net.logits_from_features(g, zt)?;
    let ce = ce(g, ls, &src.y, None)?;
    let k = g.value(ls).cols();
    let cost = jumbot_cost(g, zs, &one_hot(&src.y, k), zt, lt, eta1, eta2)?;
    Ok(OtParts { ce, cost })
}

fn with_plan(g: &mut Graph, parts: &OtParts, plan: &Tensor) -> Result<Var> {
    if g.value(parts.cost).shape() != plan.shape() {
        return Err(Error::shape("transport term", "plan and cost shapes differ"));
    }
    let pv = g.constant(plan.clone())?;
    let prod = g.mul(parts.cost, pv)?;
    let ot = g.sum(prod)?;
    g.add(parts.ce, ot)
}

fn note_convergence(plan: &TransportPlan, what: &str) {
    if !plan.converged {
        log::debug!("{what} plan not converged after {} iterations", plan.iterations_used);
    }
}

/// Source cross-entropy plus `⟨π, C⟩` for a fixed plan `π`.
#[allow(clippy::too_many_arguments)]
pub fn loss_jumbot_with_plan(
    g: &mut Graph,
    net: &BoundBundle,
    src: &Batch,
    tgt: &Batch,
    eta1: f64,
    eta2: f64,
    plan: &Tensor,
) -> Result<Var> {
    let parts = ot_parts(g, net, src, tgt, eta1, eta2)?;
    with_plan(g, &parts, plan)
}

/// JUMBOT: the plan is the unbalanced Sinkhorn solution on the detached cost,
/// so gradients flow through the cost only.
#[allow(clippy::too_many_arguments)]
pub fn loss_jumbot(
    g: &mut Graph,
    net: &BoundBundle,
    src: &Batch,
    tgt: &Batch,
    tau: f64,
    eta1: f64,
    eta2: f64,
    eta3: f64,
    ot: &OtOptions,
) -> Result<(Var, TransportPlan)> {
    let parts = ot_parts(g, net, src, tgt, eta1, eta2)?;
    let c = g.value(parts.cost).clone();
    let plan = sinkhorn_uot(&c, &uniform(c.rows()), &uniform(c.cols()), tau, eta3, ot.max_iter, ot.tol)?;
    note_convergence(&plan, "unbalanced");
    let loss = with_plan(g, &parts, &plan.pi)?;
    Ok((loss, plan))
}

pub fn loss_mpot_with_plan(
    g: &mut Graph,
    net: &BoundBundle,
    src: &Batch,
    tgt: &Batch,
    eta1: f64,
    eta2: f64,
    plan: &Tensor,
) -> Result<Var> {
    loss_jumbot_with_plan(g, net, src, tgt, eta1, eta2, plan)
}

/// M-POT: same cost as JUMBOT, plan from entropic partial transport of mass `m`.
#[allow(clippy::too_many_arguments)]
pub fn loss_mpot(
    g: &mut Graph,
    net: &BoundBundle,
    src: &Batch,
    tgt: &Batch,
    eps: f64,
    eta1: f64,
    eta2: f64,
    m: f64,
    ot: &OtOptions,
) -> Result<(Var, TransportPlan)> {
    let parts = ot_parts(g, net, src, tgt, eta1, eta2)?;
    let c = g.value(parts.cost).clone();
    let plan = partial_ot_entropic(&c, &uniform(c.rows()), &uniform(c.cols()), m, eps, ot.max_iter, ot.tol)?;
    note_convergence(&plan, "partial");
    let loss = with_plan(g, &parts, &plan.pi)?;
    Ok((loss, plan))
}
