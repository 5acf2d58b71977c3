//! Slow reference solvers for tiny transport problems (`n·m ≤ 25`).
//!
//! Both minimise the primal objective directly over the coupling with damped
//! Newton steps, stopping once the (projected) gradient norm drops below
//! `1e-8`. They share no code with the Sinkhorn solvers and exist to produce
//! ground truth for tests.

use super::{check_positive, check_problem, entropic_objective, uot_objective, TransportPlan};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

const MAX_CELLS: usize = 25;
const GRAD_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 500;

/// Solves `A x = rhs` by Gaussian elimination with partial pivoting.
pub(crate) fn solve_dense(mut a: Vec<f64>, mut rhs: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
            .unwrap();
        if a[piv * n + col].abs() < 1e-300 {
            return Err(Error::Numeric { op: "solve_dense" });
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            rhs.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r * n + k] * x[k]).sum();
        x[r] = (rhs[r] - s) / a[r * n + r];
    }
    Ok(x)
}

fn check_size(c: &Tensor) -> Result<()> {
    if c.len() > MAX_CELLS {
        return Err(Error::config(format!(
            "convex oracle is limited to {MAX_CELLS} cells, got {:?}",
            c.shape()
        )));
    }
    Ok(())
}

fn sums(pi: &[f64], n: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut r = vec![0.0; n];
    let mut c = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            r[i] += pi[i * m + j];
            c[j] += pi[i * m + j];
        }
    }
    (r, c)
}

/// Largest step in `(0, 1]` along `d` keeping `π > 0`, halving from one.
fn positive_step(pi: &[f64], d: &[f64]) -> f64 {
    let mut t = 1.0;
    while pi.iter().zip(d).any(|(&p, &dv)| p + t * dv <= 0.0) {
        t *= 0.5;
    }
    t
}

/// Minimiser of the unbalanced objective (see [`uot_objective`]).
pub fn uot_convex_oracle(c: &Tensor, a: &[f64], b: &[f64], tau: f64, eta: f64) -> Result<TransportPlan> {
    check_problem("uot_convex_oracle", c, a, b)?;
    check_size(c)?;
    check_positive("uot_convex_oracle", "tau", tau)?;
    check_positive("uot_convex_oracle", "eta3", eta)?;
    let (n, m) = c.dims2();
    let nm = n * m;
    let cd = c.data();
    let obj = |pi: &[f64]| uot_objective(c, &Tensor::matrix(n, m, pi.to_vec()).unwrap(), a, b, tau, eta);
    let grad = |pi: &[f64]| -> Vec<f64> {
        let (r, cs) = sums(pi, n, m);
        (0..nm)
            .map(|k| {
                let (i, j) = (k / m, k % m);
                cd[k] + tau * pi[k].ln() + eta * (r[i] / a[i]).ln() + eta * (cs[j] / b[j]).ln()
            })
            .collect()
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut pi: Vec<f64> = (0..nm).map(|k| a[k / m] * b[k % m]).collect();
    let mut gr = grad(&pi);
    let mut converged = false;
    let mut it = 0;
    while it < MAX_NEWTON {
        if norm(&gr) < GRAD_TOL {
            converged = true;
            break;
        }
        it += 1;
        let (r, cs) = sums(&pi, n, m);
        let mut h = vec![0.0; nm * nm];
        for p in 0..nm {
            for q in 0..nm {
                let (i, j, k, l) = (p / m, p % m, q / m, q % m);
                let mut v = 0.0;
                if p == q {
                    v += tau / pi[p];
                }
                if i == k {
                    v += eta / r[i];
                }
                if j == l {
                    v += eta / cs[j];
                }
                h[p * nm + q] = v;
            }
        }
        let d = solve_dense(h, gr.iter().map(|v| -v).collect(), nm)?;
        let slope: f64 = gr.iter().zip(&d).map(|(g, d)| g * d).sum();
        let f0 = obj(&pi);
        let mut t = positive_step(&pi, &d);
        let mut next;
        loop {
            next = pi.iter().zip(&d).map(|(p, d)| p + t * d).collect::<Vec<_>>();
            if obj(&next) <= f0 + 1e-4 * t * slope || t < 1e-14 {
                break;
            }
            // Rounding can hide a genuine decrease near the optimum; fall back
            // on the gradient norm.
            if norm(&grad(&next)) < norm(&gr) {
                break;
            }
            t *= 0.5;
        }
        pi = next;
        gr = grad(&pi);
    }
    Ok(TransportPlan::from_pi(Tensor::matrix(n, m, pi)?, a, b, converged, it))
}

/// Minimiser of the balanced entropic objective (see
/// [`entropic_objective`]) under exact marginals. Newton steps are taken in
/// the null space of the marginal constraints starting from `a bᵀ`, so every
/// iterate stays feasible.
pub fn balanced_convex_oracle(c: &Tensor, a: &[f64], b: &[f64], eps: f64) -> Result<TransportPlan> {
    check_problem("balanced_convex_oracle", c, a, b)?;
    check_size(c)?;
    super::check_unit_mass("balanced_convex_oracle", a, b)?;
    check_positive("balanced_convex_oracle", "eps", eps)?;
    let (n, m) = c.dims2();
    let nm = n * m;
    let cd = c.data();
    // Row constraints plus all but the last column constraint (the dropped
    // one is implied by total mass).
    let nc = n + m - 1;
    let size = nm + nc;
    let obj = |pi: &[f64]| entropic_objective(c, &Tensor::matrix(n, m, pi.to_vec()).unwrap(), eps);
    let mut pi: Vec<f64> = (0..nm).map(|k| a[k / m] * b[k % m]).collect();
    let mut converged = false;
    let mut it = 0;
    while it < MAX_NEWTON {
        let gr: Vec<f64> = (0..nm).map(|k| cd[k] + eps * pi[k].ln()).collect();
        let mut kkt = vec![0.0; size * size];
        for p in 0..nm {
            kkt[p * size + p] = eps / pi[p];
            let (i, j) = (p / m, p % m);
            kkt[p * size + nm + i] = 1.0;
            kkt[(nm + i) * size + p] = 1.0;
            if j + 1 < m {
                kkt[p * size + nm + n + j] = 1.0;
                kkt[(nm + n + j) * size + p] = 1.0;
            }
        }
        let mut rhs = vec![0.0; size];
        for p in 0..nm {
            rhs[p] = -gr[p];
        }
        let sol = solve_dense(kkt, rhs, size)?;
        let d = &sol[..nm];
        // Reduced gradient: grad + Aᵀν = −H d.
        let red = d
            .iter()
            .zip(&pi)
            .map(|(dv, p)| (eps / p * dv).powi(2))
            .sum::<f64>()
            .sqrt();
        if red < GRAD_TOL {
            converged = true;
            break;
        }
        it += 1;
        let slope: f64 = gr.iter().zip(d).map(|(g, d)| g * d).sum();
        let f0 = obj(&pi);
        let mut t = positive_step(&pi, d);
        let mut next;
        loop {
            next = pi.iter().zip(d).map(|(p, d)| p + t * d).collect::<Vec<_>>();
            if obj(&next) <= f0 + 1e-4 * t * slope || t < 1e-14 || slope.abs() < 1e-12 {
                break;
            }
            t *= 0.5;
        }
        pi = next;
    }
    Ok(TransportPlan::from_pi(Tensor::matrix(n, m, pi)?, a, b, converged, it))
}
