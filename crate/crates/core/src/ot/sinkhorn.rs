use super::{check_positive, check_problem, check_unit_mass, TransportPlan};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Log-sum-exp of `(pot_j − C_ij)/eps` over `j` for every row `i`, or over
/// rows when `by_col` is set. Entries with infinite cost contribute nothing.
fn soft_min(c: &[f64], n: usize, m: usize, pot: &[f64], eps: f64, by_col: bool, out: &mut [f64]) {
    let (outer, inner) = if by_col { (m, n) } else { (n, m) };
    let mut buf = vec![0.0; inner];
    for o in 0..outer {
        let mut mx = f64::NEG_INFINITY;
        for (k, slot) in buf.iter_mut().enumerate() {
            let cij = if by_col { c[k * m + o] } else { c[o * m + k] };
            let v = (pot[k] - cij) / eps;
            *slot = v;
            if v > mx {
                mx = v;
            }
        }
        out[o] = if mx == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            mx + buf.iter().map(|&v| (v - mx).exp()).sum::<f64>().ln()
        };
    }
}

fn plan_from_potentials(c: &[f64], n: usize, m: usize, f: &[f64], g: &[f64], eps: f64) -> Vec<f64> {
    let mut pi = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            pi[i * m + j] = ((f[i] + g[j] - c[i * m + j]) / eps).exp();
        }
    }
    pi
}

/// Balanced dual `⟨f,a⟩ + ⟨g,b⟩ − eps Σ exp((f_i + g_j − C_ij)/eps)`.
/// Each Sinkhorn half-step maximises it exactly in one block.
pub fn balanced_dual(c: &Tensor, a: &[f64], b: &[f64], f: &[f64], g: &[f64], eps: f64) -> f64 {
    let (n, m) = c.dims2();
    let pi = plan_from_potentials(c.data(), n, m, f, g, eps);
    dot(f, a) + dot(g, b) - eps * pi.iter().sum::<f64>()
}

/// Unbalanced dual `−η Σ a(e^{−f/η} − 1) − η Σ b(e^{−g/η} − 1) − τ Σ exp((f_i + g_j − C_ij)/τ)`.
pub fn uot_dual(c: &Tensor, a: &[f64], b: &[f64], f: &[f64], g: &[f64], tau: f64, eta: f64) -> f64 {
    let (n, m) = c.dims2();
    let pi = plan_from_potentials(c.data(), n, m, f, g, tau);
    let side = |p: &[f64], w: &[f64]| -> f64 { p.iter().zip(w).map(|(&p, &w)| w * ((-p / eta).exp() - 1.0)).sum() };
    -eta * side(f, a) - eta * side(g, b) - tau * pi.iter().sum::<f64>()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

struct Solve {
    f: Vec<f64>,
    g: Vec<f64>,
    pi: Vec<f64>,
    converged: bool,
    iters: usize,
    trace: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
/// Core balanced loop. Masses need not sum to one and `c` may hold `+∞`.
fn balanced_core(
    c: &[f64],
    n: usize,
    m: usize,
    a: &[f64],
    b: &[f64],
    eps: f64,
    max_iter: usize,
    tol: f64,
    trace: bool,
) -> Solve {
    let la: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let lb: Vec<f64> = b.iter().map(|v| v.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut lse_r = vec![0.0; n];
    let mut lse_c = vec![0.0; m];
    let mut values = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    while iters < max_iter {
        iters += 1;
        soft_min(c, n, m, &g, eps, false, &mut lse_r);
        for i in 0..n {
            f[i] = eps * (la[i] - lse_r[i]);
        }
        soft_min(c, n, m, &f, eps, true, &mut lse_c);
        for j in 0..m {
            g[j] = eps * (lb[j] - lse_c[j]);
        }
        if trace {
            let pi = plan_from_potentials(c, n, m, &f, &g, eps);
            values.push(dot(&f, a) + dot(&g, b) - eps * pi.iter().sum::<f64>());
        }
        // Columns are exact after the g step; rows carry the violation.
        soft_min(c, n, m, &g, eps, false, &mut lse_r);
        let viol = (0..n)
            .map(|i| (((f[i] / eps) + lse_r[i]).exp() - a[i]).abs())
            .fold(0.0, f64::max);
        if viol <= tol {
            converged = true;
            break;
        }
    }
    Solve {
        pi: plan_from_potentials(c, n, m, &f, &g, eps),
        f,
        g,
        converged,
        iters,
        trace: values,
    }
}

fn finish(s: Solve, n: usize, m: usize, a: &[f64], b: &[f64]) -> Result<TransportPlan> {
    let pi = Tensor::matrix(n, m, s.pi)?;
    if !pi.is_finite() {
        return Err(Error::Numeric { op: "sinkhorn" });
    }
    let mut plan = TransportPlan::from_pi(pi, a, b, s.converged, s.iters);
    plan.f = s.f;
    plan.g = s.g;
    Ok(plan)
}

/// Balanced entropic OT: minimises `⟨C,π⟩ + eps Σ π(log π − 1)` subject to
/// `π1 = a`, `πᵀ1 = b`. Converged when the row-marginal violation (columns are
/// exact after each sweep) is at most `tol`.
pub fn sinkhorn(c: &Tensor, a: &[f64], b: &[f64], eps: f64, max_iter: usize, tol: f64) -> Result<TransportPlan> {
    Ok(balanced_impl(c, a, b, eps, max_iter, tol, false)?.0)
}

/// [`sinkhorn`] that also returns the dual objective after every sweep.
pub fn sinkhorn_trace(
    c: &Tensor,
    a: &[f64],
    b: &[f64],
    eps: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(TransportPlan, Vec<f64>)> {
    balanced_impl(c, a, b, eps, max_iter, tol, true)
}

fn balanced_impl(
    c: &Tensor,
    a: &[f64],
    b: &[f64],
    eps: f64,
    max_iter: usize,
    tol: f64,
    trace: bool,
) -> Result<(TransportPlan, Vec<f64>)> {
    check_problem("sinkhorn", c, a, b)?;
    check_unit_mass("sinkhorn", a, b)?;
    check_positive("sinkhorn", "eps", eps)?;
    let (n, m) = c.dims2();
    let mut s = balanced_core(c.data(), n, m, a, b, eps, max_iter, tol, trace);
    let trace = std::mem::take(&mut s.trace);
    Ok((finish(s, n, m, a, b)?, trace))
}

/// Unbalanced entropic OT with generalised-KL marginal penalties of weight
/// `eta`. Potentials are updated with the damped exponent `eta/(eta + tau)`;
/// converged when the largest relative change of the scalings `exp(f/tau)`,
/// `exp(g/tau)` over one sweep is at most `tol`.
pub fn sinkhorn_uot(
    c: &Tensor,
    a: &[f64],
    b: &[f64],
    tau: f64,
    eta: f64,
    max_iter: usize,
    tol: f64,
) -> Result<TransportPlan> {
    Ok(uot_impl(c, a, b, tau, eta, max_iter, tol, false)?.0)
}

/// [`sinkhorn_uot`] that also returns the dual objective after every sweep.
pub fn sinkhorn_uot_trace(
    c: &Tensor,
    a: &[f64],
    b: &[f64],
    tau: f64,
    eta: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(TransportPlan, Vec<f64>)> {
    uot_impl(c, a, b, tau, eta, max_iter, tol, true)
}

#[allow(clippy::too_many_arguments)]
fn uot_impl(
    c: &Tensor,
    a: &[f64],
    b: &[f64],
    tau: f64,
    eta: f64,
    max_iter: usize,
    tol: f64,
    trace: bool,
) -> Result<(TransportPlan, Vec<f64>)> {
    check_problem("sinkhorn_uot", c, a, b)?;
    check_positive("sinkhorn_uot", "tau", tau)?;
    check_positive("sinkhorn_uot", "eta3", eta)?;
    let (n, m) = c.dims2();
    let cd = c.data();
    let k = eta * tau / (eta + tau);
    let la: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let lb: Vec<f64> = b.iter().map(|v| v.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut lse_r = vec![0.0; n];
    let mut lse_c = vec![0.0; m];
    let mut values = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    while iters < max_iter {
        iters += 1;
        let mut change: f64 = 0.0;
        soft_min(cd, n, m, &g, tau, false, &mut lse_r);
        for i in 0..n {
            let nf = k * (la[i] - lse_r[i]);
            change = change.max((((nf - f[i]) / tau).exp() - 1.0).abs());
            f[i] = nf;
        }
        soft_min(cd, n, m, &f, tau, true, &mut lse_c);
        for j in 0..m {
            let ng = k * (lb[j] - lse_c[j]);
            change = change.max((((ng - g[j]) / tau).exp() - 1.0).abs());
            g[j] = ng;
        }
        if trace {
            values.push(uot_dual(c, a, b, &f, &g, tau, eta));
        }
        if change <= tol {
            converged = true;
            break;
        }
    }
    let s = Solve {
        pi: plan_from_potentials(cd, n, m, &f, &g, tau),
        f,
        g,
        converged,
        iters,
        trace: Vec::new(),
    };
    Ok((finish(s, n, m, a, b)?, values))
}

/// Entropic partial OT moving exactly `mass` units. Both sides are extended
/// with a dummy point of mass `1 − mass` at zero cost to every real point; the
/// dummy–dummy pair is forbidden, so all dummy mass must pair with real mass.
/// The extended balanced problem is solved and the real block returned.
pub fn partial_ot_entropic(
    c: &Tensor,
    a: &[f64],
    b: &[f64],
    mass: f64,
    eps: f64,
    max_iter: usize,
    tol: f64,
) -> Result<TransportPlan> {
    check_problem("partial_ot_entropic", c, a, b)?;
    check_unit_mass("partial_ot_entropic", a, b)?;
    check_positive("partial_ot_entropic", "eps", eps)?;
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(Error::config(format!("partial_ot_entropic: mass fraction {mass} outside (0, 1]")));
    }
    let (n, m) = c.dims2();
    let slack = 1.0 - mass;
    if slack <= 1e-15 {
        return sinkhorn(c, a, b, eps, max_iter, tol);
    }
    let (ne, me) = (n + 1, m + 1);
    let mut ce = vec![0.0; ne * me];
    for i in 0..n {
        ce[i * me..i * me + m].copy_from_slice(c.row(i));
    }
    ce[ne * me - 1] = f64::INFINITY;
    let mut ae = a.to_vec();
    ae.push(slack);
    let mut be = b.to_vec();
    be.push(slack);
    let s = balanced_core(&ce, ne, me, &ae, &be, eps, max_iter, tol, false);
    let mut pi = Vec::with_capacity(n * m);
    for i in 0..n {
        pi.extend_from_slice(&s.pi[i * me..i * me + m]);
    }
    let cropped = Solve {
        pi,
        f: s.f[..n].to_vec(),
        g: s.g[..m].to_vec(),
        converged: s.converged,
        iters: s.iters,
        trace: Vec::new(),
    };
    finish(cropped, n, m, a, b)
}
