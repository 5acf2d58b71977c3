//! Source re-weighting for AR: minimise `Σ w_i φ_i` over
//! `{w ≥ 0, mean(w) = 1, ‖w − 1‖² ≤ ρ0² n}`.

use crate::error::{Error, Result};

const STEP_TOL: f64 = 1e-8;
const MAX_STEPS: usize = 5000;
const DYKSTRA_TOL: f64 = 1e-12;
const MAX_DYKSTRA: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ArWeightSolve {
    pub weights: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Euclidean projection onto `{w ≥ 0, Σ w = total}` (sort-and-threshold).
fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in s.iter().enumerate() {
        cum += x;
        let t = (cum - total) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn project_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let d = v.iter().map(|x| (x - 1.0).powi(2)).sum::<f64>().sqrt();
    if d <= radius {
        return v.to_vec();
    }
    let s = radius / d;
    v.iter().map(|x| 1.0 + (x - 1.0) * s).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Projection onto the feasible set by Dykstra's alternating projections
/// between the scaled simplex and the ball around the all-ones vector.
pub fn project_feasible(v: &[f64], rho0: f64) -> Vec<f64> {
    let n = v.len();
    let radius = rho0 * (n as f64).sqrt();
    let mut x = v.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for _ in 0..MAX_DYKSTRA {
        let xp: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
        let y = project_simplex(&xp, n as f64);
        p = xp.iter().zip(&y).map(|(a, b)| a - b).collect();
        let yq: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
        let nx = project_ball(&yq, radius);
        q = yq.iter().zip(&nx).map(|(a, b)| a - b).collect();
        let done = max_abs_diff(&nx, &x) < DYKSTRA_TOL && max_abs_diff(&nx, &y) < DYKSTRA_TOL;
        x = nx;
        if done {
            break;
        }
    }
    x
}

/// Projected-gradient solve. The step is scaled so one step moves at most the
/// ball radius; iteration stops when no weight changes by more than `1e-8`.
/// Without convergence the weights fall back to all ones.
pub fn ar_solve_weights(phi: &[f64], rho0: f64) -> Result<ArWeightSolve> {
    let n = phi.len();
    if n < 2 {
        return Err(Error::config(format!("weight solve needs at least 2 samples, got {n}")));
    }
    if !(rho0 >= 0.0 && rho0.is_finite()) || phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("weight solve needs finite inputs and rho0 >= 0"));
    }
    let ones = ArWeightSolve {
        weights: vec![1.0; n],
        converged: true,
        iterations: 0,
    };
    let mean = phi.iter().sum::<f64>() / n as f64;
    let spread = phi.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt();
    if rho0 == 0.0 || spread < 1e-15 {
        return Ok(ones);
    }
    let step = rho0 * (n as f64).sqrt() / spread;
    let mut w = vec![1.0; n];
    for it in 1..=MAX_STEPS {
        let moved: Vec<f64> = w.iter().zip(phi).map(|(w, p)| w - step * p).collect();
        let nw = project_feasible(&moved, rho0);
        let change = max_abs_diff(&nw, &w);
        w = nw;
        if change < STEP_TOL {
            return Ok(ArWeightSolve {
                weights: w,
                converged: true,
                iterations: it,
            });
        }
    }
    log::warn!("source weight solve did not converge in {MAX_STEPS} steps; using uniform weights");
    Ok(ArWeightSolve {
        converged: false,
        iterations: MAX_STEPS,
        ..ones
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objective(w: &[f64], phi: &[f64]) -> f64 {
        w.iter().zip(phi).map(|(a, b)| a * b).sum()
    }

    /// Coarse-to-fine polar grid search over the feasible set for n = 3,
    /// `w = 1 + s (cos θ u + sin θ v)` with `u, v` spanning the sum-zero plane.
    fn grid_oracle(phi: &[f64; 3], rho0: f64) -> [f64; 3] {
        let r = rho0 * 3f64.sqrt();
        let u = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0];
        let v = [1.0 / 6f64.sqrt(), 1.0 / 6f64.sqrt(), -2.0 / 6f64.sqrt()];
        let point = |t: f64, s: f64| -> [f64; 3] { std::array::from_fn(|k| 1.0 + s * (t.cos() * u[k] + t.sin() * v[k])) };
        let (mut tc, mut th) = (std::f64::consts::PI, std::f64::consts::PI);
        let (mut sc, mut sh) = (r / 2.0, r / 2.0);
        let mut best = [1.0; 3];
        for _ in 0..10 {
            let mut best_val = f64::INFINITY;
            let (mut bt, mut bs) = (tc, sc);
            let steps = 200;
            for i in 0..=steps {
                let t = tc - th + 2.0 * th * i as f64 / steps as f64;
                for j in 0..=steps {
                    let s = (sc - sh + 2.0 * sh * j as f64 / steps as f64).clamp(0.0, r);
                    let w = point(t, s);
                    if w.iter().all(|&x| x >= 0.0) {
                        let val = objective(&w, phi);
                        if val < best_val {
                            best_val = val;
                            best = w;
                            (bt, bs) = (t, s);
                        }
                    }
                }
            }
            (tc, sc) = (bt, bs);
            th /= 10.0;
            sh /= 10.0;
        }
        best
    }

    #[test]
    fn degenerate_cases_give_ones() {
        assert_eq!(ar_solve_weights(&[1.0, 0.0, -1.0], 0.0).unwrap().weights, vec![1.0; 3]);
        assert_eq!(ar_solve_weights(&[0.3; 5], 2.0).unwrap().weights, vec![1.0; 5]);
        assert!(ar_solve_weights(&[1.0], 1.0).is_err());
    }

    #[test]
    fn matches_grid_oracle() {
        let phi = [1.0, 0.0, -1.0];
        for rho0 in [0.3, 0.7, 1.0, 10.0] {
            let s = ar_solve_weights(&phi, rho0).unwrap();
            assert!(s.converged, "rho0 {rho0}");
            let o = grid_oracle(&phi, rho0);
            assert!(max_abs_diff(&s.weights, &o) < 1e-3, "rho0 {rho0}: {:?} vs {o:?}", s.weights);
            assert!(s.weights[2] >= s.weights[1] && s.weights[1] >= s.weights[0]);
        }
        let s = ar_solve_weights(&phi, 10.0).unwrap();
        assert!(max_abs_diff(&s.weights, &[0.0, 0.0, 3.0]) < 1e-6);
    }

    #[test]
    fn solution_is_feasible() {
        let phi: Vec<f64> = (0..40).map(|i| ((i * 7919) % 97) as f64 / 50.0 - 1.0).collect();
        for rho0 in [0.5, 2.5, 10.0] {
            let w = ar_solve_weights(&phi, rho0).unwrap().weights;
            assert!(w.iter().all(|&v| v >= -1e-12));
            assert!((w.iter().sum::<f64>() - 40.0).abs() < 1e-8);
            let d2: f64 = w.iter().map(|v| (v - 1.0).powi(2)).sum();
            assert!(d2 <= rho0 * rho0 * 40.0 * (1.0 + 1e-9));
            assert!(objective(&w, &phi) <= objective(&[1.0; 40], &phi) + 1e-12);
        }
    }
}
