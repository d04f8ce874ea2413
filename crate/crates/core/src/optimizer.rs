//! Derivative-free quasi-Newton minimisation and finite-difference derivatives.
//!
//! No objective in this crate comes with an analytic gradient, so BFGS runs on
//! central-difference gradients. The line search is plain Armijo backtracking
//! and the best point visited is always what gets returned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// Per-coordinate step factor for second differences, `ε^(1/4)`.
pub const HESSIAN_STEP: f64 = 1.220_703_125e-4;

const ARMIJO_C1: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimSettings {
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Relative central-difference step for gradients.
    pub fd_step: f64,
}

impl Default for OptimSettings {
    fn default() -> Self {
        Self { grad_tol: 1e-6, max_iters: 200, fd_step: f64::EPSILON.cbrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub n_evals: usize,
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: Fn(&[f64]) -> f64> Counted<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        (self.f)(x)
    }
}

#[inline]
fn step_for(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

pub fn numerical_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], fd_step: f64) -> Result<Vec<f64>> {
    let mut c = Counted { f, evals: 0 };
    gradient(&mut c, x, fd_step)
}

fn gradient<F: Fn(&[f64]) -> f64>(f: &mut Counted<F>, x: &[f64], fd_step: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let h = step_for(x[j], fd_step);
        probe[j] = x[j] + h;
        let up = f.call(&probe);
        probe[j] = x[j] - h;
        let down = f.call(&probe);
        probe[j] = x[j];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFiniteProbe(j));
        }
        g.push((up - down) / (2.0 * h));
    }
    Ok(g)
}

/// Central second differences with step `step · max(1, |x_j|)` per coordinate.
pub fn numerical_hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], step: f64) -> Result<SymMatrix> {
    let d = x.len();
    let f0 = f(x);
    if !f0.is_finite() {
        return Err(Error::NonFiniteProbePair(0, 0));
    }
    let h: Vec<f64> = x.iter().map(|&v| step_for(v, step)).collect();
    let mut probe = x.to_vec();
    let mut raw = vec![0.0; d * d];
    let eval = |probe: &[f64], i: usize, j: usize| -> Result<f64> {
        let v = f(probe);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteProbePair(i, j))
        }
    };
    for i in 0..d {
        probe[i] = x[i] + h[i];
        let up = eval(&probe, i, i)?;
        probe[i] = x[i] - h[i];
        let down = eval(&probe, i, i)?;
        probe[i] = x[i];
        raw[i * d + i] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                probe[i] = x[i] + si * h[i];
                probe[j] = x[j] + sj * h[j];
                let v = eval(&probe, i, j);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let pp = corner(1.0, 1.0)?;
            let pm = corner(1.0, -1.0)?;
            let mp = corner(-1.0, 1.0)?;
            let mm = corner(-1.0, -1.0)?;
            raw[i * d + j] = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            raw[j * d + i] = raw[i * d + j];
        }
    }
    Ok(SymMatrix::symmetrize(d, &raw))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `f` from `x0` by BFGS on numerical gradients.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], s: &OptimSettings) -> Result<OptimResult> {
    let d = x0.len();
    let mut f = Counted { f, evals: 0 };
    let mut x = x0.to_vec();
    let mut fx = f.call(&x);
    if !fx.is_finite() {
        return Err(Error::NonFiniteStart);
    }
    let mut g = match gradient(&mut f, &x, s.fd_step) {
        Ok(g) => g,
        Err(_) => return Ok(OptimResult { argmin: x, value: fx, converged: false, n_evals: f.evals }),
    };
    let identity = |scale: f64| -> Vec<f64> {
        let mut h = vec![0.0; d * d];
        for i in 0..d {
            h[i * d + i] = scale;
        }
        h
    };
    let mut hinv = identity(1.0);
    let mut fresh = true;
    let mut converged = false;

    for _ in 0..s.max_iters {
        if inf_norm(&g) <= s.grad_tol {
            converged = true;
            break;
        }
        let mut accepted = None;
        for attempt in 0..2 {
            let mut p: Vec<f64> = (0..d).map(|i| -dot(&hinv[i * d..(i + 1) * d], &g)).collect();
            let mut slope = dot(&g, &p);
            if !(slope < 0.0) {
                hinv = identity(1.0);
                fresh = true;
                p = g.iter().map(|v| -v).collect();
                slope = -dot(&g, &g);
            }
            let mut step = 1.0;
            for _ in 0..MAX_HALVINGS {
                let xn: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + step * b).collect();
                let fnew = f.call(&xn);
                let fnew = if fnew.is_finite() { fnew } else { f64::INFINITY };
                if fnew <= fx + ARMIJO_C1 * step * slope && xn != x {
                    accepted = Some((xn, fnew));
                    break;
                }
                step *= 0.5;
            }
            if accepted.is_some() || fresh || attempt == 1 {
                break;
            }
            hinv = identity(1.0);
            fresh = true;
        }
        let Some((xn, fnew)) = accepted else {
            // line search stalled
            converged = true;
            break;
        };
        let gn = match gradient(&mut f, &xn, s.fd_step) {
            Ok(gn) => gn,
            Err(_) => {
                x = xn;
                fx = fnew;
                break;
            }
        };
        let sv: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&sv, &yv);
        let yy = dot(&yv, &yv);
        if sy > 1e-12 * dot(&sv, &sv).sqrt() * yy.sqrt() && sy > 0.0 {
            if fresh {
                hinv = identity(sy / yy);
                fresh = false;
            }
            bfgs_update(&mut hinv, &sv, &yv, 1.0 / sy);
        }
        x = xn;
        fx = fnew;
        g = gn;
    }
    Ok(OptimResult { argmin: x, value: fx, converged, n_evals: f.evals })
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], rho: f64) {
    let d = s.len();
    let hy: Vec<f64> = (0..d).map(|i| dot(&h[i * d..(i + 1) * d], y)).collect();
    let yhy = dot(y, &hy);
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..d {
        for j in 0..d {
            h[i * d + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
