//! Weighted Gaussian components in precision form and their mixtures.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, Cholesky, SymMatrix};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Normalised weight below which a component is considered insignificant (e⁻⁵).
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.006_737_946_999_085_467;

/// One term `w N(x | μ, Q⁻¹)` of a mixture, parametrised by its precision `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    mean: Vec<f64>,
    precision: SymMatrix,
    weight: f64,
    chol: Cholesky,
    log_norm_const: f64,
}

impl GaussianComponent {
    pub fn new(mean: Vec<f64>, precision: SymMatrix, weight: f64) -> Result<Self> {
        if mean.len() != precision.dim() {
            return Err(Error::DimensionMismatch { expected: precision.dim(), actual: mean.len() });
        }
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::InvalidWeights);
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("component mean"));
        }
        let chol = cholesky(&precision)?;
        let d = mean.len() as f64;
        let log_norm_const = 0.5 * chol.log_det() - d * HALF_LN_2PI;
        Ok(Self { mean, precision, weight, chol, log_norm_const })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn precision(&self) -> &SymMatrix {
        &self.precision
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    /// `½ log det Q − (d/2) log 2π`.
    pub fn log_norm_const(&self) -> f64 {
        self.log_norm_const
    }

    pub fn with_weight(&self, weight: f64) -> Self {
        assert!(weight >= 0.0 && weight.is_finite(), "weight must be finite and non-negative");
        Self { weight, ..self.clone() }
    }

    /// `log N(x | μ, Q⁻¹)`, ignoring the weight.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let u = self.chol.mul_upper(&diff);
        self.log_norm_const - 0.5 * u.iter().map(|v| v * v).sum::<f64>()
    }

    /// Draws `μ + L⁻ᵀ z` with `z` standard normal.
    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| StandardNormal.sample(rng)).collect();
        let offset = self.chol.solve_upper(&z);
        self.mean.iter().zip(offset).map(|(m, o)| m + o).collect()
    }
}

/// `q̃(x) = Σ w_i N(x | μ_i, Q_i⁻¹)`, components kept in creation order.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<GaussianComponent>,
}

/// Result of [`GaussianMixture::prune`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pruned {
    pub mixture: GaussianMixture,
    /// Set when every component fell below the threshold and only the largest was kept.
    pub degenerate: bool,
    pub removed: usize,
}

impl GaussianMixture {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "mixture dimension must be positive");
        Self { dim, components: Vec::new() }
    }

    pub fn from_components(dim: usize, components: Vec<GaussianComponent>) -> Result<Self> {
        let mut mix = Self::new(dim);
        for c in components {
            mix.push(c)?;
        }
        Ok(mix)
    }

    pub fn push(&mut self, c: GaussianComponent) -> Result<()> {
        if c.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: c.dim() });
        }
        self.components.push(c);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// Σ w_i, the mixture's estimate of the target's normalising constant.
    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Replaces all weights at once.
    pub fn set_weights(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), actual: weights.len() });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidWeights);
        }
        for (c, &w) in self.components.iter_mut().zip(weights) {
            c.weight = w;
        }
        Ok(())
    }

    /// `log q̃(x)` via log-sum-exp; `-∞` for an empty or all-zero-weight mixture.
    pub fn log_value(&self, x: &[f64]) -> f64 {
        let mut terms = Vec::with_capacity(self.len());
        for c in &self.components {
            if c.weight > 0.0 {
                terms.push(c.weight.ln() + c.log_density(x));
            }
        }
        log_sum_exp(&terms)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.log_value(x).exp()
    }

    /// Draws `n` points with a ChaCha8 stream seeded by `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        if self.is_empty() {
            return Err(Error::EmptyMixture);
        }
        let weights = self.weights();
        if weights.iter().any(|w| !w.is_finite()) || !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::InvalidWeights);
        }
        let index = WeightedIndex::new(&weights).map_err(|_| Error::InvalidWeights)?;
        Ok((0..n).map(|_| self.components[index.sample(rng)].draw(rng)).collect())
    }

    /// Removes components whose normalised weight is below `min_normalised_weight`.
    ///
    /// Remaining weights are not renormalised.
    pub fn prune(&self, min_normalised_weight: f64) -> Result<Pruned> {
        let total = self.total_weight();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidWeights);
        }
        let kept: Vec<GaussianComponent> =
            self.components.iter().filter(|c| c.weight / total >= min_normalised_weight).cloned().collect();
        if kept.is_empty() {
            let largest = self.components.iter().enumerate().fold(0, |best, (i, c)| {
                if c.weight > self.components[best].weight {
                    i
                } else {
                    best
                }
            });
            let mixture = Self { dim: self.dim, components: vec![self.components[largest].clone()] };
            return Ok(Pruned { mixture, degenerate: true, removed: self.len() - 1 });
        }
        let removed = self.len() - kept.len();
        Ok(Pruned { mixture: Self { dim: self.dim, components: kept }, degenerate: false, removed })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MixtureRecord::from(self)).expect("mixture serialises")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let rec: MixtureRecord = serde_json::from_str(text).map_err(|e| e.to_string())?;
        Self::try_from(rec).map_err(|e| e.to_string())
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub precision: SymMatrix,
}

/// On-disk form of a mixture: `{dim, components: [{weight, mean, precision}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureRecord {
    pub dim: usize,
    pub components: Vec<ComponentRecord>,
}

impl From<&GaussianMixture> for MixtureRecord {
    fn from(m: &GaussianMixture) -> Self {
        Self {
            dim: m.dim,
            components: m
                .components
                .iter()
                .map(|c| ComponentRecord { weight: c.weight, mean: c.mean.clone(), precision: c.precision.clone() })
                .collect(),
        }
    }
}

impl TryFrom<MixtureRecord> for GaussianMixture {
    type Error = Error;

    fn try_from(rec: MixtureRecord) -> Result<Self> {
        if rec.dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, actual: 0 });
        }
        let comps = rec
            .components
            .into_iter()
            .map(|c| GaussianComponent::new(c.mean, c.precision, c.weight))
            .collect::<Result<Vec<_>>>()?;
        Self::from_components(rec.dim, comps)
    }
}

impl Serialize for GaussianMixture {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MixtureRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianMixture {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = MixtureRecord::deserialize(d)?;
        Self::try_from(rec).map_err(serde::de::Error::custom)
    }
}
