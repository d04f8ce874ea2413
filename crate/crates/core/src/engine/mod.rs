//! The iterated Laplace loop: initial modes, exploration, weight fits and new
//! components placed at optima of a residual surface.

mod config;
mod residual;
mod state;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{make_positive_definite, symmetric_eigen};
use crate::mixture::{GaussianComponent, GaussianMixture};
use crate::optimizer::{minimize, numerical_hessian, HESSIAN_STEP};
use crate::targets::TargetDensity;

pub use config::{IterLapConfig, Variant};
pub use residual::{
    g_a_from_z, g_b_from_z, propose_component, residual, residual_g_a, residual_g_b, select_starts,
    select_starts_absdiff, select_starts_original, should_stop, zeta_stagnated, Proposal, Rejection, StopReason,
};
pub use state::ExplorationState;

/// Evaluates `log q` at every point, in point order; NaN and `+∞` become `−∞`.
pub fn eval_log_q(t: &dyn TargetDensity, points: &[Vec<f64>]) -> Vec<f64> {
    let clean = |v: f64| if v.is_nan() || v == f64::INFINITY { f64::NEG_INFINITY } else { v };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        points.par_iter().map(|x| clean(t.log_q(x))).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        points.iter().map(|x| clean(t.log_q(x))).collect()
    }
}

/// Per-coordinate scale: mean over components of `1/√Q_jj`.
pub fn coordinate_scale(components: &[GaussianComponent]) -> Vec<f64> {
    let d = components[0].dim();
    (0..d)
        .map(|j| components.iter().map(|c| c.precision().get(j, j).powf(-0.5)).sum::<f64>() / components.len() as f64)
        .collect()
}

/// Local modes of `q` with their repaired Hessians of `−log q`, scaled by `κ_a`, best first.
///
/// Starts are the origin, `cfg.initial_points`, then `n_starts_initial − 1`
/// normal draws with standard deviation `start_spread`. Modes closer than
/// `start_min_separation` scale units to a better one are dropped.
pub fn initial_components<R: Rng + ?Sized>(
    t: &dyn TargetDensity,
    cfg: &IterLapConfig,
    rng: &mut R,
) -> Result<Vec<GaussianComponent>> {
    let d = t.dim();
    let mut starts = vec![vec![0.0; d]];
    starts.extend(cfg.initial_points.iter().cloned());
    for _ in 1..cfg.n_starts_initial {
        starts.push((0..d).map(|_| cfg.start_spread * rng.sample::<f64, _>(StandardNormal)).collect());
    }
    if let Some(p) = starts.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, actual: p.len() });
    }
    let g = |x: &[f64]| -t.log_q(x);
    let finite: Vec<&Vec<f64>> = starts.iter().filter(|x| t.log_q(x).is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::NoFiniteStart);
    }

    let mut found = Vec::new();
    for x0 in finite {
        let Ok(r) = minimize(g, x0, &cfg.optim) else { continue };
        let Ok(h) = numerical_hessian(g, &r.argmin, HESSIAN_STEP) else { continue };
        if h.as_slice().iter().any(|v| !v.is_finite()) || r.argmin.iter().any(|v| !v.is_finite()) {
            continue;
        }
        // Saddles and flat spots (e.g. the centre of a symmetric bimodal target) are not modes.
        let is_mode = r.converged && symmetric_eigen(&h).0.iter().all(|&v| v > 0.0);
        let q = make_positive_definite(&h, cfg.hessian_floor).scaled(cfg.kappa_a);
        if let Ok(c) = GaussianComponent::new(r.argmin, q, 1.0) {
            found.push((r.value, is_mode, c));
        }
    }
    if found.iter().any(|f| f.1) {
        found.retain(|f| f.1);
    }
    if found.is_empty() {
        return Err(Error::InitialSearchFailed);
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let all: Vec<GaussianComponent> = found.into_iter().map(|f| f.2).collect();
    let scale = coordinate_scale(&all);
    let dist =
        |a: &[f64], b: &[f64]| a.iter().zip(b).zip(&scale).map(|((x, y), s)| ((x - y) / s).powi(2)).sum::<f64>().sqrt();
    let mut kept: Vec<GaussianComponent> = Vec::new();
    for c in all {
        if kept.iter().all(|k| dist(k.mean(), c.mean()) >= cfg.start_min_separation) {
            kept.push(c);
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub n_components: usize,
    /// Total fitted weight on the target's own scale.
    pub zeta: f64,
    /// `max |q − q̃|` over explored points, relative to the peak.
    pub max_abs_error: f64,
    pub n_points: usize,
    pub start: Option<Vec<f64>>,
    pub accepted_mean: Option<Vec<f64>>,
    pub scaled: bool,
    pub duplicate_of: Option<usize>,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub target: String,
    pub variant: Variant,
    pub mixture: GaussianMixture,
    pub n_components: usize,
    pub stop_reason: StopReason,
    pub iterations: Vec<IterationRecord>,
    /// Components removed by the final prune.
    pub pruned: usize,
    pub degenerate_prune: bool,
    /// `log q` value used as the unit for internal densities.
    pub log_offset: f64,
    pub n_points: usize,
    pub wall_time_seconds: f64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Runs the configured variant on `t`.
pub fn run(t: &dyn TargetDensity, cfg: &IterLapConfig) -> Result<RunReport> {
    run_with_observer(t, cfg, |_| {})
}

/// As [`run`], calling `observe` after every iteration.
pub fn run_with_observer(
    t: &dyn TargetDensity,
    cfg: &IterLapConfig,
    mut observe: impl FnMut(&IterationRecord),
) -> Result<RunReport> {
    cfg.validate()?;
    let started = web_time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut initial = initial_components(t, cfg, &mut rng)?;
    initial.truncate(cfg.n_c_max);
    let scale = coordinate_scale(&initial);
    let offset = initial.iter().map(|c| t.log_q(c.mean())).fold(f64::NEG_INFINITY, f64::max);
    let mut state = ExplorationState::new(t.dim(), offset, scale);
    for c in initial {
        state.explore(c, None, t, cfg, &mut rng)?;
    }
    state.fit_weights()?;

    let record = |state: &ExplorationState, iteration: usize| IterationRecord {
        iteration,
        n_components: state.n_components(),
        zeta: *state.zeta_history().last().unwrap_or(&0.0),
        max_abs_error: state.max_abs_error(),
        n_points: state.points().len(),
        start: None,
        accepted_mean: None,
        scaled: false,
        duplicate_of: None,
        rejected: Vec::new(),
    };
    let mut iterations = vec![record(&state, 0)];
    observe(&iterations[0]);

    let mut added = true;
    let stop_reason = loop {
        if let Some(reason) = should_stop(&state, cfg, added) {
            break reason;
        }
        let mut rec = record(&state, iterations.len());
        added = false;
        for start in select_starts(&state, cfg) {
            match propose_component(&start, &state, t, cfg) {
                Ok(p) => {
                    rec.start = Some(start);
                    rec.accepted_mean = Some(p.component.mean().to_vec());
                    rec.scaled = p.scaled;
                    rec.duplicate_of = p.duplicate_of;
                    state.explore(p.component, p.duplicate_of, t, cfg, &mut rng)?;
                    state.fit_weights()?;
                    added = true;
                    break;
                }
                Err(why) => rec.rejected.push(why),
            }
        }
        if added {
            let after = record(&state, rec.iteration);
            rec.n_components = after.n_components;
            rec.zeta = after.zeta;
            rec.max_abs_error = after.max_abs_error;
            rec.n_points = after.n_points;
        }
        observe(&rec);
        iterations.push(rec);
    };

    let (mixture, pruned, degenerate_prune) = match cfg.variant {
        Variant::Modified => state.pruned_mixture(cfg.prune_threshold, cfg.refit_after_prune)?,
        Variant::Original => (state.unscaled_mixture()?, 0, false),
    };
    Ok(RunReport {
        target: t.name().to_string(),
        variant: cfg.variant,
        n_components: mixture.len(),
        mixture,
        stop_reason,
        iterations,
        pruned,
        degenerate_prune,
        log_offset: offset,
        n_points: state.points().len(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests;
