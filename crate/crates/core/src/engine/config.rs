use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::DEFAULT_PRUNE_THRESHOLD;
use crate::optimizer::OptimSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Underestimate-only residual, ratio-ranked starts, ζ stopping rule.
    Original,
    /// Two-sided residual, |q − q̃|-ranked starts, weighted fit, final prune.
    Modified,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Modified => "modified",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Variant::Original),
            "modified" => Ok(Variant::Modified),
            other => Err(Error::InvalidConfig(format!("unknown variant `{other}`; expected original or modified"))),
        }
    }
}

/// Every tunable of a run. Density thresholds (`z_l`, `epsilon_z`,
/// `delta_err`, `min_discrepancy`) are relative to the target's peak, because
/// the engine works on `q / max q` internally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterLapConfig {
    pub variant: Variant,
    pub n_c_max: usize,
    pub n_starts_initial: usize,
    /// Draws per new component; `None` means `50·d`.
    pub n_x: Option<usize>,
    pub z_l: f64,
    pub epsilon_z: f64,
    pub alpha: f64,
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub n_dup: usize,
    /// Closeness of two means, in units of the per-coordinate scale.
    pub dup_radius: f64,
    /// Stop once `max |q − q̃|` over explored points is at most this; 0 disables.
    pub delta_err: f64,
    pub delta_zeta: f64,
    pub delta_lq: f64,
    pub n_starts_per_iter: usize,
    /// Minimum distance between starts, in units of the per-coordinate scale.
    pub start_min_separation: f64,
    pub prune_threshold: f64,
    /// Re-estimate the weights of the components that survive the prune.
    pub refit_after_prune: bool,
    pub rng_seed: u64,
    /// Least-squares weight of rows that are component means; `None` means
    /// 10 for the modified variant and 1 for the original.
    pub mean_point_weight: Option<f64>,
    /// Modified variant: reject a proposal whose `|q − q̃|` at the optimum is below this.
    pub min_discrepancy: f64,
    /// Eigenvalue floor, relative to the largest, when repairing Hessians.
    pub hessian_floor: f64,
    /// Standard deviation of the random initial starts around the origin.
    pub start_spread: f64,
    /// Extra initial starts, tried after the origin and before the random ones.
    pub initial_points: Vec<Vec<f64>>,
    pub optim: OptimSettings,
}

impl IterLapConfig {
    pub fn original() -> Self {
        Self {
            variant: Variant::Original,
            n_c_max: 50,
            n_starts_initial: 5,
            n_x: None,
            z_l: 1e-4,
            epsilon_z: (-10.0f64).exp(),
            alpha: 0.0,
            kappa_a: 1.0,
            kappa_b: 1.25,
            n_dup: 1,
            dup_radius: 1e-2,
            delta_err: 0.0,
            delta_zeta: 0.01,
            delta_lq: -10.0,
            n_starts_per_iter: 5,
            start_min_separation: 0.5,
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
            refit_after_prune: true,
            rng_seed: 0,
            mean_point_weight: None,
            min_discrepancy: 1e-4,
            hessian_floor: 1e-3,
            start_spread: 1.0,
            initial_points: Vec::new(),
            optim: OptimSettings::default(),
        }
    }

    pub fn modified() -> Self {
        Self { variant: Variant::Modified, ..Self::original() }
    }

    pub fn for_variant(v: Variant) -> Self {
        match v {
            Variant::Original => Self::original(),
            Variant::Modified => Self::modified(),
        }
    }

    pub fn mean_weight(&self) -> f64 {
        self.mean_point_weight.unwrap_or(match self.variant {
            Variant::Original => 1.0,
            Variant::Modified => 10.0,
        })
    }

    pub fn n_x_for(&self, dim: usize) -> usize {
        self.n_x.unwrap_or(50 * dim)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if self.n_c_max == 0 {
            return bad("n_c_max must be at least 1");
        }
        if self.n_starts_initial == 0 || self.n_starts_per_iter == 0 {
            return bad("start counts must be at least 1");
        }
        if self.n_dup == 0 {
            return bad("n_dup must be at least 1");
        }
        let positive = [
            ("z_l", self.z_l),
            ("epsilon_z", self.epsilon_z),
            ("kappa_a", self.kappa_a),
            ("kappa_b", self.kappa_b),
            ("dup_radius", self.dup_radius),
            ("delta_zeta", self.delta_zeta),
            ("start_min_separation", self.start_min_separation),
            ("mean_point_weight", self.mean_weight()),
            ("hessian_floor", self.hessian_floor),
            ("start_spread", self.start_spread),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.hessian_floor > 1.0 {
            return bad("hessian_floor must lie in (0, 1]");
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad("alpha must be non-negative");
        }
        if !(self.delta_err >= 0.0) || !(self.min_discrepancy >= 0.0) || !(self.prune_threshold >= 0.0) {
            return bad("delta_err, min_discrepancy and prune_threshold must be non-negative");
        }
        if !(self.delta_lq < 0.0) {
            return bad("delta_lq must be negative");
        }
        if self.n_x == Some(0) {
            return bad("n_x must be at least 1");
        }
        Ok(())
    }
}

impl Default for IterLapConfig {
    fn default() -> Self {
        Self::modified()
    }
}
