//! Entropic transport solvers in the log domain: balanced Sinkhorn,
//! unbalanced Sinkhorn with KL marginal penalties, and partial transport via
//! a dummy point. [`oracle`] holds the slow convex reference solvers used to
//! validate them.

pub mod oracle;
mod sinkhorn;

pub use sinkhorn::{
    balanced_dual, partial_ot_entropic, sinkhorn, sinkhorn_trace, sinkhorn_uot, sinkhorn_uot_trace, uot_dual,
};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Result of a transport solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// `n × m` nonnegative coupling.
    pub pi: Tensor,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub transported_mass: f64,
    pub converged: bool,
    pub iterations_used: usize,
    /// Dual potentials at the returned plan (empty for oracle plans).
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl TransportPlan {
    pub(crate) fn from_pi(pi: Tensor, a: &[f64], b: &[f64], converged: bool, iterations_used: usize) -> Self {
        let transported_mass = pi.data().iter().sum();
        Self {
            pi,
            a: a.to_vec(),
            b: b.to_vec(),
            transported_mass,
            converged,
            iterations_used,
            f: Vec::new(),
            g: Vec::new(),
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.pi.rows()).map(|i| self.pi.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let (n, m) = self.pi.dims2();
        let mut out = vec![0.0; m];
        for i in 0..n {
            for (o, v) in out.iter_mut().zip(self.pi.row(i)) {
                *o += v;
            }
        }
        out
    }
}

/// `Σ π (log π − 1)` with `0 log 0 = 0`.
pub(crate) fn neg_entropy(pi: &[f64]) -> f64 {
    pi.iter().map(|&p| if p > 0.0 { p * (p.ln() - 1.0) } else { 0.0 }).sum()
}

/// Generalised KL `Σ p log(p/q) − p + q`.
pub(crate) fn gen_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&p, &q)| if p > 0.0 { p * (p / q).ln() - p + q } else { q })
        .sum()
}

/// Balanced entropic objective `⟨C,π⟩ + eps Σ π(log π − 1)`.
pub fn entropic_objective(c: &Tensor, pi: &Tensor, eps: f64) -> f64 {
    let lin: f64 = c.data().iter().zip(pi.data()).map(|(c, p)| c * p).sum();
    lin + eps * neg_entropy(pi.data())
}

/// Unbalanced objective: entropic objective with coefficient `tau` plus
/// `eta · [KL(π1 ‖ a) + KL(πᵀ1 ‖ b)]`.
pub fn uot_objective(c: &Tensor, pi: &Tensor, a: &[f64], b: &[f64], tau: f64, eta: f64) -> f64 {
    let plan = TransportPlan::from_pi(pi.clone(), a, b, true, 0);
    entropic_objective(c, pi, tau) + eta * (gen_kl(&plan.row_sums(), a) + gen_kl(&plan.col_sums(), b))
}

pub(crate) fn check_problem(op: &'static str, c: &Tensor, a: &[f64], b: &[f64]) -> Result<()> {
    let (n, m) = c.dims2();
    if c.shape().len() != 2 || n == 0 || m == 0 {
        return Err(Error::shape(op, format!("cost must be a non-empty matrix, got {:?}", c.shape())));
    }
    if a.len() != n || b.len() != m {
        return Err(Error::shape(op, format!("cost {n}×{m} with masses {} and {}", a.len(), b.len())));
    }
    if !c.is_finite() {
        return Err(Error::config(format!("{op}: cost contains NaN or infinity")));
    }
    if a.iter().chain(b).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::config(format!("{op}: masses must be positive and finite")));
    }
    Ok(())
}

pub(crate) fn check_unit_mass(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (sa - 1.0).abs() > 1e-9 || (sb - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("{op}: masses must sum to 1, got {sa} and {sb}")));
    }
    Ok(())
}

pub(crate) fn check_positive(op: &'static str, name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::config(format!("{op}: {name} must be positive, got {v}")));
    }
    Ok(())
}

/// Uniform mass vector of length `n`.
pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}
