//! Local-level dynamic linear model with the latent walk integrated out.
//!
//! `y_t = x_t + v_t`, `x_t = x_{t−1} + u_t`, with Gamma priors on the two
//! precisions. The walk has an intrinsic (rank `n − 1`) Gaussian prior, so
//! the marginal of `(λ_u, λ_v)` only needs the factorisation of
//! `Q' = λ_u R + λ_v I`, which is tridiagonal.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TargetDensity;
use crate::linalg::SymMatrix;
use crate::optimizer::{minimize, numerical_hessian, OptimSettings, HESSIAN_STEP};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Standard deviation of the first latent state when simulating data.
const INITIAL_STATE_SD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlmInstance {
    pub n: usize,
    pub seed: u64,
    /// Gamma shape and rate for `λ_u`.
    pub a: f64,
    pub b: f64,
    /// Gamma shape and rate for `λ_v`.
    pub c: f64,
    pub d: f64,
    pub lambda_u: f64,
    pub lambda_v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_obs: Option<Vec<f64>>,
}

impl Default for DlmInstance {
    fn default() -> Self {
        Self { n: 100, seed: 7, a: 1.0, b: 0.5, c: 1.0, d: 0.5, lambda_u: 0.25, lambda_v: 1.0, y_obs: None }
    }
}

impl DlmInstance {
    pub fn validate(&self) -> Result<(), String> {
        if self.n < 2 {
            return Err(format!("DLM series length must be at least 2, got {}", self.n));
        }
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c), ("d", self.d)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("DLM hyperparameter {name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("lambda_u", self.lambda_u), ("lambda_v", self.lambda_v)] {
            if !(v > 0.0) {
                return Err(format!("DLM {name} must be positive, got {v}"));
            }
        }
        if let Some(y) = &self.y_obs {
            if y.len() != self.n {
                return Err(format!("y_obs has {} entries, expected {}", y.len(), self.n));
            }
        }
        Ok(())
    }
}

/// Simulates the series from the instance's true precisions; an existing `y_obs` is kept.
pub fn dlm_generate(mut inst: DlmInstance) -> DlmInstance {
    if inst.y_obs.is_some() {
        return inst;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(inst.seed);
    let sd_u = inst.lambda_u.powf(-0.5);
    let sd_v = inst.lambda_v.powf(-0.5);
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut x = INITIAL_STATE_SD * z();
    let mut y = Vec::with_capacity(inst.n);
    for t in 0..inst.n {
        if t > 0 {
            x += sd_u * z();
        }
        y.push(x + sd_v * z());
    }
    inst.y_obs = Some(y);
    inst
}

fn log_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - libm::lgamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// `log q(λ_u, λ_v | y)` in the precision parametrisation, without any Jacobian.
pub(crate) fn log_marginal_lambda(inst: &DlmInstance, y: &[f64], lambda_u: f64, lambda_v: f64) -> f64 {
    if !(lambda_u > 0.0 && lambda_v > 0.0) || !lambda_u.is_finite() || !lambda_v.is_finite() {
        return f64::NEG_INFINITY;
    }
    let n = y.len();
    let nm1 = (n - 1) as f64;
    // Tridiagonal Cholesky of Q' = λ_u R + λ_v I, with the forward solve of L u = λ_v y fused in.
    let mut log_det = 0.0;
    let mut u_sq = 0.0;
    let mut prev_l = 0.0;
    let mut prev_u = 0.0;
    for i in 0..n {
        let r = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
        let mut pivot = lambda_u * r + lambda_v;
        let mut sub = 0.0;
        if i > 0 {
            sub = -lambda_u / prev_l;
            pivot -= sub * sub;
        }
        if !(pivot > 0.0) {
            return f64::NEG_INFINITY;
        }
        let l = pivot.sqrt();
        let u = (lambda_v * y[i] - sub * prev_u) / l;
        log_det += 2.0 * l.ln();
        u_sq += u * u;
        prev_l = l;
        prev_u = u;
    }
    let y_sq: f64 = y.iter().map(|v| v * v).sum();
    let v = log_gamma_pdf(lambda_u, inst.a, inst.b) + log_gamma_pdf(lambda_v, inst.c, inst.d) - 0.5 * nm1 * LN_2PI
        + 0.5 * nm1 * lambda_u.ln()
        - 0.5 * log_det
        + 0.5 * n as f64 * lambda_v.ln()
        + 0.5 * (u_sq - lambda_v * y_sq);
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// `log q(τ_u, τ_v | y)` with `λ = exp(τ)`, including the `λ_u λ_v` Jacobian.
///
/// # Panics
/// If the instance has no `y_obs`.
pub fn dlm_log_marginal(inst: &DlmInstance, tau_u: f64, tau_v: f64) -> f64 {
    let y = inst.y_obs.as_deref().expect("DLM instance has no observations; call dlm_generate first");
    log_marginal_lambda(inst, y, tau_u.exp(), tau_v.exp()) + tau_u + tau_v
}

/// The DLM marginal posterior on `(τ_u, τ_v) = (log λ_u, log λ_v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DlmTarget {
    inst: DlmInstance,
    bounds: Vec<(f64, f64)>,
}

impl DlmTarget {
    /// # Panics
    /// If the instance has no `y_obs`.
    pub fn new(inst: DlmInstance) -> Self {
        assert!(inst.y_obs.is_some(), "DLM instance has no observations; call dlm_generate first");
        let mut t = Self { inst, bounds: vec![(-8.0, 8.0); 2] };
        t.bounds = t.laplace_box(7.0).unwrap_or_else(|| vec![(-8.0, 8.0); 2]);
        t
    }

    pub fn instance(&self) -> &DlmInstance {
        &self.inst
    }

    /// Density in the precision parametrisation, evaluated directly.
    pub fn log_q_lambda(&self, lambda: &[f64]) -> f64 {
        log_marginal_lambda(&self.inst, self.inst.y_obs.as_deref().unwrap_or_default(), lambda[0], lambda[1])
    }

    /// Mode ± `k` marginal standard deviations of a Laplace fit in τ-space.
    fn laplace_box(&self, k: f64) -> Option<Vec<(f64, f64)>> {
        let g = |x: &[f64]| -self.log_q(x);
        let start = [self.inst.lambda_u.ln(), self.inst.lambda_v.ln()];
        let r = minimize(g, &start, &OptimSettings::default()).ok()?;
        let h = numerical_hessian(g, &r.argmin, HESSIAN_STEP).ok()?;
        let det = h.get(0, 0) * h.get(1, 1) - h.get(0, 1) * h.get(1, 0);
        if !(det > 0.0 && h.get(0, 0) > 0.0) {
            return None;
        }
        let cov = SymMatrix::from_rows(&[
            vec![h.get(1, 1) / det, -h.get(0, 1) / det],
            vec![-h.get(0, 1) / det, h.get(0, 0) / det],
        ])
        .ok()?;
        Some(
            (0..2)
                .map(|j| {
                    let sd = cov.get(j, j).sqrt();
                    (r.argmin[j] - k * sd, r.argmin[j] + k * sd)
                })
                .collect(),
        )
    }
}

impl TargetDensity for DlmTarget {
    fn name(&self) -> &str {
        "dlm"
    }

    fn dim(&self) -> usize {
        2
    }

    fn log_q(&self, x: &[f64]) -> f64 {
        dlm_log_marginal(&self.inst, x[0], x[1])
    }

    fn reference_box(&self) -> Vec<(f64, f64)> {
        self.bounds.clone()
    }
}
