//! Browser bindings. Every export takes and returns JSON text so the page
//! needs no generated type glue.

use mixlap::engine::{g_a_from_z, g_b_from_z, run, IterLapConfig, Variant};
use mixlap::eval::{compare, default_grid_spec, Axis, EvaluationGrid, GridSpec};
use mixlap::targets::{by_name, catalogue};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Display raster per axis for 2D targets, and curve length for 1D ones.
const VIEW_COUNT: usize = 81;
const CURVE_COUNT: usize = 401;
/// Ordered-density plots are thinned to at most this many points.
const ORDERED_POINTS: usize = 400;

#[derive(Debug, Clone, Serialize)]
pub struct TargetInfo {
    pub name: &'static str,
    pub dim: usize,
}

/// Catalogue entries the demo can draw (d ≤ 2).
pub fn demo_targets() -> Vec<TargetInfo> {
    catalogue().into_iter().filter(|(_, d)| *d <= 2).map(|(name, dim)| TargetInfo { name, dim }).collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxOptions {
    pub variant: Variant,
    pub n_c_max: usize,
    pub seed: u64,
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub n_dup: usize,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        let cfg = IterLapConfig::modified();
        Self {
            variant: cfg.variant,
            n_c_max: 30,
            seed: 0,
            kappa_a: cfg.kappa_a,
            kappa_b: cfg.kappa_b,
            n_dup: cfg.n_dup,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentView {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub precision: Vec<Vec<f64>>,
}

/// Target and mixture on a display raster, each scaled to a peak of 1.
#[derive(Debug, Clone, Serialize)]
pub struct View {
    pub axes: Vec<Vec<f64>>,
    pub target: Vec<f64>,
    pub approx: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Approximation {
    pub target: String,
    pub variant: Variant,
    pub n_components: usize,
    pub stop_reason: String,
    pub s_stat: f64,
    pub grid_points: usize,
    pub wall_time_seconds: f64,
    pub components: Vec<ComponentView>,
    pub view: View,
    /// `(r, r̃)` pairs in decreasing order of `r`, thinned.
    pub ordered: Vec<[f64; 2]>,
}

fn peak_scaled(logs: &[f64]) -> Vec<f64> {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logs.iter().map(|v| if m.is_finite() { (v - m).exp() } else { 0.0 }).collect()
}

/// Fits `target` with `options` and evaluates it on the default grid.
pub fn approximate_json(target: &str, options: &str) -> Result<String, String> {
    let opts: ApproxOptions = if options.trim().is_empty() {
        ApproxOptions::default()
    } else {
        serde_json::from_str(options).map_err(|e| format!("options: {e}"))?
    };
    let t = by_name(target, None).map_err(|e| e.to_string())?;
    if t.dim() > 2 {
        return Err(format!("the demo draws 1D and 2D targets only; {target} has d = {}", t.dim()));
    }
    let mut cfg = IterLapConfig::for_variant(opts.variant);
    cfg.n_c_max = opts.n_c_max;
    cfg.rng_seed = opts.seed;
    cfg.kappa_a = opts.kappa_a;
    cfg.kappa_b = opts.kappa_b;
    cfg.n_dup = opts.n_dup;
    cfg.validate().map_err(|e| e.to_string())?;
    let rep = run(t.as_ref(), &cfg).map_err(|e| e.to_string())?;

    let grid = EvaluationGrid::build(&default_grid_spec(t.as_ref()), t.as_ref()).map_err(|e| e.to_string())?;
    let cmp = compare(t.as_ref(), &rep.mixture, &grid).map_err(|e| e.to_string())?;
    let stride = cmp.order.len().div_ceil(ORDERED_POINTS).max(1);
    let ordered = cmp.ordered_pairs().step_by(stride).map(|(r, rt)| [r, rt]).collect();

    let count = if t.dim() == 1 { CURVE_COUNT } else { VIEW_COUNT };
    let view_spec =
        GridSpec { axes: t.reference_box().iter().map(|&(lo, hi)| Axis { lo, hi, count }).collect(), extra: None };
    let view_grid = EvaluationGrid::build(&view_spec, t.as_ref()).map_err(|e| e.to_string())?;
    let lq: Vec<f64> = view_grid.points.iter().map(|p| t.log_q(p)).collect();
    let lqt: Vec<f64> = view_grid.points.iter().map(|p| rep.mixture.log_value(p)).collect();
    let view = View {
        axes: view_spec.axes.iter().map(mixlap::eval::axis_values).collect(),
        target: peak_scaled(&lq),
        approx: peak_scaled(&lqt),
    };

    let out = Approximation {
        target: rep.target.clone(),
        variant: rep.variant,
        n_components: rep.n_components,
        stop_reason: rep.stop_reason.as_str().into(),
        s_stat: cmp.s_stat,
        grid_points: grid.len(),
        wall_time_seconds: rep.wall_time_seconds,
        components: rep
            .mixture
            .components()
            .iter()
            .map(|c| ComponentView { weight: c.weight(), mean: c.mean().to_vec(), precision: c.precision().to_rows() })
            .collect(),
        view,
        ordered,
    };
    Ok(serde_json::to_string(&out).expect("approximation serialises"))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileOptions {
    pub z_min: f64,
    pub z_max: f64,
    pub count: usize,
    pub z_l: f64,
    pub epsilon_z: f64,
    pub alpha: f64,
    /// `log q − lq_max` fed to the pull term of g_b.
    pub rel_log_q: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        let cfg = IterLapConfig::modified();
        Self {
            z_min: -1.0,
            z_max: 1.0,
            count: 401,
            z_l: cfg.z_l,
            epsilon_z: cfg.epsilon_z,
            alpha: cfg.alpha,
            rel_log_q: -2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Profile {
    pub z: Vec<f64>,
    pub g_a: Vec<f64>,
    pub g_b: Vec<f64>,
}

/// Both residual functions over a range of discrepancies `z = q − q̃`.
pub fn residual_profile_json(options: &str) -> Result<String, String> {
    let o: ProfileOptions = if options.trim().is_empty() {
        ProfileOptions::default()
    } else {
        serde_json::from_str(options).map_err(|e| format!("options: {e}"))?
    };
    if o.count < 2 || !(o.z_min < o.z_max) {
        return Err("need count ≥ 2 and z_min < z_max".into());
    }
    if !(o.z_l > 0.0 && o.epsilon_z > 0.0 && o.alpha >= 0.0) {
        return Err("need z_l > 0, epsilon_z > 0 and alpha ≥ 0".into());
    }
    let step = (o.z_max - o.z_min) / (o.count - 1) as f64;
    let z: Vec<f64> = (0..o.count).map(|i| o.z_min + step * i as f64).collect();
    let g_a = z.iter().map(|&v| g_a_from_z(v, o.z_l)).collect();
    let g_b = z.iter().map(|&v| g_b_from_z(v, o.epsilon_z, o.alpha, o.rel_log_q)).collect();
    Ok(serde_json::to_string(&Profile { z, g_a, g_b }).expect("profile serialises"))
}

#[wasm_bindgen]
pub fn targets() -> String {
    serde_json::to_string(&demo_targets()).expect("catalogue serialises")
}

#[wasm_bindgen]
pub fn approximate(target: &str, options: &str) -> Result<String, JsValue> {
    approximate_json(target, options).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn residual_profile(options: &str) -> Result<String, JsValue> {
    residual_profile_json(options).map_err(|e| JsValue::from_str(&e))
}
