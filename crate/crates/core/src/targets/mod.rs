//! Benchmark target densities and the name-based catalogue.

mod benchmarks;
mod dlm;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, SymMatrix};

pub use benchmarks::{
    ex6, ex7, ex8, ex9, intro_banana, skewed_1d, ConditionalChain, Ex7Bimodal, ScaledBanana, SkewedDensity,
};
pub use dlm::{dlm_generate, dlm_log_marginal, DlmInstance, DlmTarget};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// A non-normalised log density `log q(x)` on `R^d`.
///
/// Implementations return `-∞` for points outside the support and never
/// `+∞` or NaN.
pub trait TargetDensity: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn log_q(&self, x: &[f64]) -> f64;

    /// Extra exploration points to add next to a freshly accepted component mean.
    fn manual_points(&self, _mean: &[f64]) -> Vec<Vec<f64>> {
        Vec::new()
    }

    /// Per-axis `(lo, hi)` box holding essentially all of the mass; `log_q` is finite on it.
    fn reference_box(&self) -> Vec<(f64, f64)>;

    /// Exact draws from the normalised target, when the target can produce them.
    fn exact_sample(&self, _n: usize, _seed: u64) -> Option<Vec<Vec<f64>>> {
        None
    }
}

impl fmt::Debug for dyn TargetDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TargetDensity({}, d={})", self.name(), self.dim())
    }
}

pub(crate) fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -HALF_LN_2PI - 0.5 * var.ln() - 0.5 * r * r / var
}

type LogQFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type ManualPointsFn = Arc<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>;

/// A closure-backed target, mostly for tests and ad-hoc densities.
#[derive(Clone)]
pub struct FnTarget {
    name: String,
    dim: usize,
    log_q: LogQFn,
    bounds: Vec<(f64, f64)>,
    manual: Option<ManualPointsFn>,
}

impl FnTarget {
    pub fn new(
        name: impl Into<String>,
        bounds: Vec<(f64, f64)>,
        log_q: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), dim: bounds.len(), log_q: Arc::new(log_q), bounds, manual: None }
    }

    pub fn with_manual_points(mut self, f: impl Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync + 'static) -> Self {
        self.manual = Some(Arc::new(f));
        self
    }
}

impl TargetDensity for FnTarget {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn log_q(&self, x: &[f64]) -> f64 {
        let v = (self.log_q)(x);
        if v.is_nan() || v == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    fn manual_points(&self, mean: &[f64]) -> Vec<Vec<f64>> {
        self.manual.as_ref().map_or_else(Vec::new, |f| f(mean))
    }

    fn reference_box(&self) -> Vec<(f64, f64)> {
        self.bounds.clone()
    }
}

/// Normalised Gaussian `N(mean, precision⁻¹)` as a target, with a ±8 sd box.
pub fn gaussian(mean: Vec<f64>, precision: SymMatrix) -> Result<FnTarget> {
    let chol = cholesky(&precision)?;
    if mean.len() != precision.dim() {
        return Err(Error::DimensionMismatch { expected: precision.dim(), actual: mean.len() });
    }
    let d = mean.len();
    let cov_diag: Vec<f64> = (0..d)
        .map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            chol.solve(&e)[j]
        })
        .collect();
    let bounds = mean.iter().zip(&cov_diag).map(|(m, v)| (m - 8.0 * v.sqrt(), m + 8.0 * v.sqrt())).collect();
    let log_norm = 0.5 * chol.log_det() - d as f64 * HALF_LN_2PI;
    Ok(FnTarget::new(format!("gaussian{d}d"), bounds, move |x| {
        let diff: Vec<f64> = x.iter().zip(&mean).map(|(a, b)| a - b).collect();
        log_norm - 0.5 * precision.quad_form(&diff)
    }))
}

/// Names accepted by [`by_name`], in catalogue order.
pub const TARGET_NAMES: [&str; 7] = ["intro_banana", "skewed1d", "ex6", "ex7", "ex8", "ex9", "dlm"];

/// Dimension of each catalogue entry without constructing it.
pub fn catalogue() -> Vec<(&'static str, usize)> {
    TARGET_NAMES
        .iter()
        .map(|&n| {
            let d = match n {
                "skewed1d" => 1,
                "ex8" => 6,
                "ex9" => 9,
                _ => 2,
            };
            (n, d)
        })
        .collect()
}

/// Builds a catalogue target. `dlm` uses `dlm_instance` or the default instance.
pub fn by_name(name: &str, dlm_instance: Option<DlmInstance>) -> Result<Box<dyn TargetDensity>> {
    Ok(match name {
        "intro_banana" => Box::new(intro_banana()),
        "skewed1d" => Box::new(skewed_1d()),
        "ex6" => Box::new(ex6()),
        "ex7" => Box::new(ex7()),
        "ex8" => Box::new(ex8()),
        "ex9" => Box::new(ex9()),
        "dlm" => Box::new(DlmTarget::new(dlm_generate(dlm_instance.unwrap_or_default()))),
        _ => {
            return Err(Error::UnknownTarget { name: name.to_string(), valid: TARGET_NAMES.join(", ") });
        }
    })
}
