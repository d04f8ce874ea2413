use serde::{Deserialize, Serialize};

use super::config::{IterLapConfig, Variant};
use super::state::ExplorationState;
use crate::linalg::{make_positive_definite, symmetric_eigen};
use crate::mixture::GaussianComponent;
use crate::optimizer::{minimize, numerical_hessian, HESSIAN_STEP};
use crate::targets::TargetDensity;

/// Means farther than this many scale units from the origin are runaways.
const RUNAWAY_SCALE: f64 = 1e6;

/// Underestimate-only residual as a function of `z = q − q̃`.
pub fn g_a_from_z(z: f64, z_l: f64) -> f64 {
    if z >= z_l {
        -z.ln()
    } else {
        z_l - z - z_l.ln()
    }
}

/// Two-sided residual as a function of `z = q − q̃` and `log q − lq_max`.
pub fn g_b_from_z(z: f64, epsilon_z: f64, alpha: f64, rel_log_q: f64) -> f64 {
    if z >= 0.0 {
        return -(z + epsilon_z).ln();
    }
    let pull = if alpha == 0.0 { 0.0 } else { alpha * rel_log_q };
    -((-z + epsilon_z).ln() + pull) / (1.0 + alpha)
}

pub fn residual_g_a(x: &[f64], state: &ExplorationState, t: &dyn TargetDensity, cfg: &IterLapConfig) -> f64 {
    g_a_from_z(state.discrepancy(x, t.log_q(x)), cfg.z_l)
}

pub fn residual_g_b(x: &[f64], state: &ExplorationState, t: &dyn TargetDensity, cfg: &IterLapConfig) -> f64 {
    let lq = t.log_q(x);
    g_b_from_z(state.discrepancy(x, lq), cfg.epsilon_z, cfg.alpha, lq - state.lq_max())
}

/// The residual the configured variant minimises.
pub fn residual(x: &[f64], state: &ExplorationState, t: &dyn TargetDensity, cfg: &IterLapConfig) -> f64 {
    match cfg.variant {
        Variant::Original => residual_g_a(x, state, t, cfg),
        Variant::Modified => residual_g_b(x, state, t, cfg),
    }
}

fn greedy_separated(state: &ExplorationState, order: &[usize], cfg: &IterLapConfig) -> Vec<Vec<f64>> {
    let pts = state.points();
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for &k in order {
        if kept.len() == cfg.n_starts_per_iter {
            break;
        }
        if kept.iter().all(|p| state.scaled_distance(p, &pts[k]) >= cfg.start_min_separation) {
            kept.push(pts[k].clone());
        }
    }
    kept
}

/// Starts ranked by `q / q̃`, largest first; rows with `q̃ = 0 < q` come first.
pub fn select_starts_original(state: &ExplorationState, cfg: &IterLapConfig) -> Vec<Vec<f64>> {
    let ratio: Vec<f64> = state
        .y()
        .iter()
        .zip(state.approx())
        .map(|(&y, &a)| {
            if y <= 0.0 {
                0.0
            } else if a <= 0.0 {
                f64::INFINITY
            } else {
                y / a
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..ratio.len()).filter(|&k| ratio[k] > 0.0).collect();
    order.sort_by(|&i, &j| ratio[j].total_cmp(&ratio[i]).then(i.cmp(&j)));
    greedy_separated(state, &order, cfg)
}

/// Starts ranked by `|q − q̃|` among rows within `δ_lq` of the highest log density.
pub fn select_starts_absdiff(state: &ExplorationState, cfg: &IterLapConfig) -> Vec<Vec<f64>> {
    let lq_max = state.lq_max();
    let diff: Vec<f64> = state.y().iter().zip(state.approx()).map(|(y, a)| (y - a).abs()).collect();
    let mut order: Vec<usize> = (0..diff.len()).filter(|&k| state.log_q()[k] - lq_max >= cfg.delta_lq).collect();
    order.sort_by(|&i, &j| diff[j].total_cmp(&diff[i]).then(i.cmp(&j)));
    greedy_separated(state, &order, cfg)
}

pub fn select_starts(state: &ExplorationState, cfg: &IterLapConfig) -> Vec<Vec<f64>> {
    match cfg.variant {
        Variant::Original => select_starts_original(state, cfg),
        Variant::Modified => select_starts_absdiff(state, cfg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    NonFiniteStart,
    Runaway,
    /// The optimum does not improve on the current fit.
    NoDiscrepancy,
    Duplicate,
    FlatResidual,
}

#[derive(Debug, Clone)]
pub struct Proposal {
    pub component: GaussianComponent,
    /// First existing component at the same location.
    pub duplicate_of: Option<usize>,
    /// Set when `κ_a` or `κ_b^j` changed the precision.
    pub scaled: bool,
    /// `q − q̃` at the new mean, in offset units.
    pub discrepancy: f64,
}

/// Minimises the variant's residual from `start` and turns the optimum into a component.
pub fn propose_component(
    start: &[f64],
    state: &ExplorationState,
    t: &dyn TargetDensity,
    cfg: &IterLapConfig,
) -> Result<Proposal, Rejection> {
    let g = |x: &[f64]| residual(x, state, t, cfg);
    let opt = minimize(g, start, &cfg.optim).map_err(|_| Rejection::NonFiniteStart)?;
    let mu = opt.argmin;
    if mu.iter().zip(state.scale()).any(|(m, s)| !m.is_finite() || m.abs() > RUNAWAY_SCALE * s) {
        return Err(Rejection::Runaway);
    }
    let z = state.discrepancy(&mu, t.log_q(&mu));
    let enough = match cfg.variant {
        Variant::Original => z >= cfg.z_l,
        Variant::Modified => z.abs() >= cfg.min_discrepancy,
    };
    if !enough {
        return Err(Rejection::NoDiscrepancy);
    }

    let near: Vec<usize> = (0..state.n_components())
        .filter(|&i| state.scaled_distance(state.mixture().components()[i].mean(), &mu) < cfg.dup_radius)
        .collect();
    if let Some(&first) = near.first() {
        let j = near.len();
        if cfg.variant == Variant::Original || j >= cfg.n_dup {
            return Err(Rejection::Duplicate);
        }
        let first = state.group_of(first);
        let base = state.mixture().components()[first].precision();
        let precision = base.scaled(cfg.kappa_b.powi(j as i32));
        let component = GaussianComponent::new(mu, precision, 0.0).map_err(|_| Rejection::FlatResidual)?;
        return Ok(Proposal { component, duplicate_of: Some(first), scaled: cfg.kappa_b != 1.0, discrepancy: z });
    }

    let h = numerical_hessian(g, &mu, HESSIAN_STEP).map_err(|_| Rejection::FlatResidual)?;
    let (eig, _) = symmetric_eigen(&h);
    if !eig.iter().all(|v| v.is_finite()) || eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max) <= 0.0 {
        return Err(Rejection::FlatResidual);
    }
    let precision = make_positive_definite(&h, cfg.hessian_floor).scaled(cfg.kappa_a);
    let component = GaussianComponent::new(mu, precision, 0.0).map_err(|_| Rejection::FlatResidual)?;
    Ok(Proposal { component, duplicate_of: None, scaled: cfg.kappa_a != 1.0, discrepancy: z })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxComponents,
    ErrorThreshold,
    ZetaStagnation,
    NoNewComponent,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::MaxComponents => "max_components",
            StopReason::ErrorThreshold => "error_threshold",
            StopReason::ZetaStagnation => "zeta_stagnation",
            StopReason::NoNewComponent => "no_new_component",
        }
    }
}

/// `|ζ̃_n − (ζ̃_{n−1} + ζ̃_{n−2})/2| / ζ̃_n < δ_ζ` on the last three entries.
pub fn zeta_stagnated(history: &[f64], delta_zeta: f64) -> bool {
    match history {
        [.., a, b, c] => (c - 0.5 * (a + b)).abs() / c < delta_zeta,
        _ => false,
    }
}

/// Decides whether to stop after an iteration; `added` is false when every start was rejected.
pub fn should_stop(state: &ExplorationState, cfg: &IterLapConfig, added: bool) -> Option<StopReason> {
    if !added {
        return Some(StopReason::NoNewComponent);
    }
    if state.n_components() >= cfg.n_c_max {
        return Some(StopReason::MaxComponents);
    }
    if cfg.delta_err > 0.0 && state.max_abs_error() <= cfg.delta_err {
        return Some(StopReason::ErrorThreshold);
    }
    if cfg.variant == Variant::Original && zeta_stagnated(state.zeta_history(), cfg.delta_zeta) {
        return Some(StopReason::ZetaStagnation);
    }
    None
}
