//! Grid standardisation of target and approximation, the `s` statistic and
//! plot-ready exports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::eval_log_q;
use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::targets::{DlmTarget, TargetDensity};

/// Grid points beyond which the lattice gets coarser.
const LATTICE_BUDGET: usize = 20_000;
const EXTRA_POINTS: usize = 20_000;
const EXTRA_SEED: u64 = 20_240_101;
/// Points per axis of the uniform λ-grid used by [`lambda_space_comparison`].
pub const LAMBDA_GRID_COUNT: usize = 1601;
const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSource {
    /// Exact draws from the target; falls back to `Halton` for targets without a sampler.
    ExactSample,
    /// Halton points in the axis box.
    Halton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtraPoints {
    pub source: PointSource,
    pub count: usize,
    pub seed: u64,
}

/// A lattice (last axis fastest) optionally followed by an unstructured point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<ExtraPoints>,
}

impl GridSpec {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn lattice_size(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::InvalidGrid("grid needs at least one axis".into()));
        }
        for (j, a) in self.axes.iter().enumerate() {
            if a.count < 2 || !(a.lo < a.hi) || !a.lo.is_finite() || !a.hi.is_finite() {
                return Err(Error::InvalidGrid(format!("axis {j} needs lo < hi and count ≥ 2, got {a:?}")));
            }
        }
        Ok(())
    }
}

/// The documented default grid for a target.
///
/// 1D: 1201 points over the reference box. 2D: 201 × 201. Higher: a lattice
/// of at most 5 points per axis within a 20 000-point budget, plus 20 000
/// exact draws from the target (Halton box points if it has no sampler).
pub fn default_grid_spec(t: &dyn TargetDensity) -> GridSpec {
    let bounds = t.reference_box();
    let d = bounds.len();
    let axis = |count: usize| bounds.iter().map(|&(lo, hi)| Axis { lo, hi, count }).collect();
    match d {
        1 => GridSpec { axes: axis(1201), extra: None },
        2 => GridSpec { axes: axis(201), extra: None },
        _ => {
            let k =
                (2usize..=5).rev().find(|&k| k.checked_pow(d as u32).is_some_and(|n| n <= LATTICE_BUDGET)).unwrap_or(2);
            let source = if t.exact_sample(1, 0).is_some() { PointSource::ExactSample } else { PointSource::Halton };
            GridSpec { axes: axis(k), extra: Some(ExtraPoints { source, count: EXTRA_POINTS, seed: EXTRA_SEED }) }
        }
    }
}

pub fn axis_values(a: &Axis) -> Vec<f64> {
    let step = (a.hi - a.lo) / (a.count - 1) as f64;
    (0..a.count).map(|i| if i + 1 == a.count { a.hi } else { a.lo + step * i as f64 }).collect()
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationGrid {
    pub spec: GridSpec,
    pub points: Vec<Vec<f64>>,
}

impl EvaluationGrid {
    pub fn build(spec: &GridSpec, t: &dyn TargetDensity) -> Result<Self> {
        spec.validate()?;
        if spec.dim() != t.dim() {
            return Err(Error::DimensionMismatch { expected: t.dim(), actual: spec.dim() });
        }
        let values: Vec<Vec<f64>> = spec.axes.iter().map(axis_values).collect();
        let mut points = Vec::with_capacity(spec.lattice_size());
        let mut idx = vec![0usize; spec.dim()];
        'outer: loop {
            points.push(idx.iter().zip(&values).map(|(&i, v)| v[i]).collect());
            for j in (0..idx.len()).rev() {
                idx[j] += 1;
                if idx[j] < values[j].len() {
                    continue 'outer;
                }
                idx[j] = 0;
            }
            break;
        }
        if let Some(extra) = spec.extra {
            let sampled = match extra.source {
                PointSource::ExactSample => t.exact_sample(extra.count, extra.seed),
                PointSource::Halton => None,
            };
            match sampled {
                Some(s) => points.extend(s),
                None => {
                    if spec.dim() > PRIMES.len() {
                        return Err(Error::InvalidGrid(format!("Halton points support at most {} axes", PRIMES.len())));
                    }
                    for i in 0..extra.count as u64 {
                        let k = i + 1 + extra.seed;
                        points.push(
                            spec.axes
                                .iter()
                                .zip(PRIMES)
                                .map(|(a, p)| a.lo + (a.hi - a.lo) * radical_inverse(k, p as u64))
                                .collect(),
                        );
                    }
                }
            }
        }
        Ok(Self { spec: spec.clone(), points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Normalises non-negative values to sum to one.
pub fn standardize(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NonFiniteInput("values to standardise must be finite and non-negative"));
    }
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::VanishingDensity);
    }
    Ok(values.iter().map(|v| v / total).collect())
}

/// Normalises `exp(log_values)` to sum to one, subtracting the maximum first.
pub fn standardize_log(log_values: &[f64]) -> Result<Vec<f64>> {
    if log_values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::NonFiniteInput("log values must not be NaN or +inf"));
    }
    let max = log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::VanishingDensity);
    }
    let e: Vec<f64> = log_values.iter().map(|v| (v - max).exp()).collect();
    standardize(&e)
}

/// `Σ |r − r̃|`.
pub fn s_statistic(r: &[f64], r_tilde: &[f64]) -> Result<f64> {
    if r.len() != r_tilde.len() {
        return Err(Error::DimensionMismatch { expected: r.len(), actual: r_tilde.len() });
    }
    Ok(r.iter().zip(r_tilde).map(|(a, b)| (a - b).abs()).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub grid: GridSpec,
    pub r: Vec<f64>,
    pub r_tilde: Vec<f64>,
    pub s_stat: f64,
    /// Grid indices sorted by `r` descending, ties by index.
    pub order: Vec<usize>,
}

impl ComparisonReport {
    pub fn from_logs(grid: GridSpec, log_q: &[f64], log_q_tilde: &[f64]) -> Result<Self> {
        let r = standardize_log(log_q)?;
        let r_tilde = standardize_log(log_q_tilde)?;
        let s_stat = s_statistic(&r, &r_tilde)?;
        let mut order: Vec<usize> = (0..r.len()).collect();
        order.sort_by(|&i, &j| r[j].total_cmp(&r[i]).then(i.cmp(&j)));
        Ok(Self { grid, r, r_tilde, s_stat, order })
    }

    pub fn ordered_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.order.iter().map(|&k| (self.r[k], self.r_tilde[k]))
    }

    /// `rank,r,r_tilde`, rank starting at 1.
    pub fn ordered_csv(&self) -> String {
        let mut out = String::from("rank,r,r_tilde\n");
        for (rank, (r, rt)) in self.ordered_pairs().enumerate() {
            let _ = writeln!(out, "{},{:e},{:e}", rank + 1, r, rt);
        }
        out
    }

    /// `x1,x2,r,r_tilde` over the grid points, for 2D grids.
    pub fn contour_csv(&self, grid: &EvaluationGrid) -> Option<String> {
        if grid.spec.dim() != 2 {
            return None;
        }
        let mut out = String::from("x1,x2,r,r_tilde\n");
        for ((p, r), rt) in grid.points.iter().zip(&self.r).zip(&self.r_tilde) {
            let _ = writeln!(out, "{},{},{:e},{:e}", p[0], p[1], r, rt);
        }
        Some(out)
    }
}

pub fn mixture_log_values(mix: &GaussianMixture, points: &[Vec<f64>]) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        points.par_iter().map(|x| mix.log_value(x)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        points.iter().map(|x| mix.log_value(x)).collect()
    }
}

/// Standardises target and mixture on `grid` and compares them.
pub fn compare(t: &dyn TargetDensity, mix: &GaussianMixture, grid: &EvaluationGrid) -> Result<ComparisonReport> {
    if mix.is_empty() {
        return Err(Error::EmptyMixture);
    }
    if mix.dim() != t.dim() || grid.spec.dim() != t.dim() {
        return Err(Error::DimensionMismatch { expected: t.dim(), actual: mix.dim().min(grid.spec.dim()) });
    }
    let lq = eval_log_q(t, &grid.points);
    let lqt = mixture_log_values(mix, &grid.points);
    ComparisonReport::from_logs(grid.spec.clone(), &lq, &lqt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSpaceReport {
    /// `s` on the image of the τ-grid under `λ = exp τ`, densities mapped by the Jacobian.
    pub s_jacobian: f64,
    /// `s` on a uniform λ-grid over the same box, target evaluated directly in λ.
    pub s_direct: f64,
}

impl LambdaSpaceReport {
    pub fn relative_gap(&self) -> f64 {
        (self.s_jacobian - self.s_direct).abs() / self.s_direct
    }
}

/// `s` in the precision parametrisation for a mixture fitted on `(log λ_u, log λ_v)`.
///
/// The Jacobian route keeps the τ-grid and weights each λ-density value by
/// the cell volume `λ_u λ_v`, so it approximates the same integral as the
/// direct route. The direct route evaluates the target in λ on a uniform
/// grid over `exp` of the τ box with `lambda_count` points per axis.
pub fn lambda_space_comparison(
    t: &DlmTarget,
    mix: &GaussianMixture,
    tau_grid: &EvaluationGrid,
    lambda_count: usize,
) -> Result<LambdaSpaceReport> {
    let log_jac = |tau: &[f64]| -> f64 { tau[0] + tau[1] };
    let lam = |tau: &[f64]| -> Vec<f64> { vec![tau[0].exp(), tau[1].exp()] };
    // Densities in λ, then the cell weight.
    let lq: Vec<f64> = tau_grid.points.iter().map(|p| t.log_q_lambda(&lam(p)) + log_jac(p)).collect();
    let mix_lambda: Vec<f64> =
        mixture_log_values(mix, &tau_grid.points).iter().zip(&tau_grid.points).map(|(v, p)| v - log_jac(p)).collect();
    let lqt: Vec<f64> = mix_lambda.iter().zip(&tau_grid.points).map(|(v, p)| v + log_jac(p)).collect();
    let s_jacobian = ComparisonReport::from_logs(tau_grid.spec.clone(), &lq, &lqt)?.s_stat;

    let lambda_spec = GridSpec {
        axes: tau_grid.spec.axes.iter().map(|a| Axis { lo: a.lo.exp(), hi: a.hi.exp(), count: lambda_count }).collect(),
        extra: None,
    };
    let lam_grid = EvaluationGrid::build(&lambda_spec, t)?;
    let direct: Vec<f64> = lam_grid.points.iter().map(|l| t.log_q_lambda(l)).collect();
    let tau_pts: Vec<Vec<f64>> = lam_grid.points.iter().map(|l| vec![l[0].ln(), l[1].ln()]).collect();
    let approx: Vec<f64> =
        mixture_log_values(mix, &tau_pts).iter().zip(&tau_pts).map(|(v, p)| v - log_jac(p)).collect();
    let s_direct = ComparisonReport::from_logs(lambda_spec, &direct, &approx)?.s_stat;
    Ok(LambdaSpaceReport { s_jacobian, s_direct })
}
