use rand::Rng;

use super::config::IterLapConfig;
use super::eval_log_q;
use crate::error::{Error, Result};
use crate::mixture::{GaussianComponent, GaussianMixture};
use crate::nnls::solve_nnls_gram;
use crate::targets::TargetDensity;

/// Explored points, target and component densities there, and the current fit.
///
/// Target values are stored relative to `exp(log_offset)`, so `y` is about 1
/// at the highest initial mode and the mixture weights are in the same units.
#[derive(Debug, Clone)]
pub struct ExplorationState {
    dim: usize,
    points: Vec<Vec<f64>>,
    log_q: Vec<f64>,
    y: Vec<f64>,
    point_weights: Vec<f64>,
    z: Vec<Vec<f64>>,
    mixture: GaussianMixture,
    approx: Vec<f64>,
    lq_max: f64,
    zeta_history: Vec<f64>,
    groups: Vec<usize>,
    scale: Vec<f64>,
    log_offset: f64,
    // ZᵀΩZ (row-major) and ZᵀΩy, grown with every new row and column.
    gram: Vec<f64>,
    rhs: Vec<f64>,
}

impl ExplorationState {
    pub fn new(dim: usize, log_offset: f64, scale: Vec<f64>) -> Self {
        assert_eq!(scale.len(), dim, "scale length must equal the dimension");
        Self {
            dim,
            points: Vec::new(),
            log_q: Vec::new(),
            y: Vec::new(),
            point_weights: Vec::new(),
            z: Vec::new(),
            mixture: GaussianMixture::new(dim),
            approx: Vec::new(),
            lq_max: f64::NEG_INFINITY,
            zeta_history: Vec::new(),
            groups: Vec::new(),
            scale,
            log_offset,
            gram: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Raw `log q` at each explored point.
    pub fn log_q(&self) -> &[f64] {
        &self.log_q
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn point_weights(&self) -> &[f64] {
        &self.point_weights
    }

    /// `Z[k][i] = N(x_k | μ_i, Q_i)`.
    pub fn z(&self) -> &[Vec<f64>] {
        &self.z
    }

    pub fn mixture(&self) -> &GaussianMixture {
        &self.mixture
    }

    /// `q̃` at each explored point under the latest weights.
    pub fn approx(&self) -> &[f64] {
        &self.approx
    }

    pub fn lq_max(&self) -> f64 {
        self.lq_max
    }

    pub fn zeta_history(&self) -> &[f64] {
        &self.zeta_history
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn log_offset(&self) -> f64 {
        self.log_offset
    }

    pub fn n_components(&self) -> usize {
        self.mixture.len()
    }

    /// Index of the first component at component `i`'s location.
    pub fn group_of(&self, i: usize) -> usize {
        self.groups[i]
    }

    pub fn scaled_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.scale).map(|((x, y), s)| ((x - y) / s).powi(2)).sum::<f64>().sqrt()
    }

    /// `q(x) − q̃(x)` in offset units, given `log q(x)`.
    pub fn discrepancy(&self, x: &[f64], log_q: f64) -> f64 {
        (log_q - self.log_offset).exp() - self.mixture.value(x)
    }

    pub fn max_abs_error(&self) -> f64 {
        self.y.iter().zip(&self.approx).fold(0.0, |m, (y, a)| m.max((y - a).abs()))
    }

    /// Adds a component column; `group` names an earlier component at the same location.
    pub fn add_component(&mut self, component: GaussianComponent, group: Option<usize>) -> Result<()> {
        if component.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: component.dim() });
        }
        let n = self.mixture.len();
        let col: Vec<f64> = self.points.iter().map(|x| component.log_density(x).exp()).collect();
        let mut gram = vec![0.0; (n + 1) * (n + 1)];
        for i in 0..n {
            gram[i * (n + 1)..i * (n + 1) + n].copy_from_slice(&self.gram[i * n..i * n + n]);
        }
        let mut cross = vec![0.0; n + 1];
        let mut h = 0.0;
        for (k, row) in self.z.iter().enumerate() {
            let wz = self.point_weights[k] * col[k];
            for (c, zi) in cross.iter_mut().zip(row) {
                *c += wz * zi;
            }
            cross[n] += wz * col[k];
            h += wz * self.y[k];
        }
        for i in 0..=n {
            gram[i * (n + 1) + n] = cross[i];
            gram[n * (n + 1) + i] = cross[i];
        }
        self.gram = gram;
        self.rhs.push(h);
        for (row, v) in self.z.iter_mut().zip(col) {
            row.push(v);
        }
        self.groups.push(group.unwrap_or(n));
        self.mixture.push(component.with_weight(0.0))
    }

    /// Appends evaluated points with their least-squares weights.
    pub fn add_points(&mut self, points: Vec<Vec<f64>>, log_q: Vec<f64>, weights: Vec<f64>) {
        let n = self.mixture.len();
        for ((x, lq), w) in points.into_iter().zip(log_q).zip(weights) {
            let row: Vec<f64> = self.mixture.components().iter().map(|c| c.log_density(&x).exp()).collect();
            let y = (lq - self.log_offset).exp();
            for i in 0..n {
                let wzi = w * row[i];
                if wzi == 0.0 {
                    continue;
                }
                for j in 0..n {
                    self.gram[i * n + j] += wzi * row[j];
                }
                self.rhs[i] += wzi * y;
            }
            let a = self.mixture.components().iter().zip(&row).map(|(c, z)| c.weight() * z).sum();
            self.approx.push(a);
            self.lq_max = self.lq_max.max(lq);
            self.points.push(x);
            self.log_q.push(lq);
            self.y.push(y);
            self.point_weights.push(w);
            self.z.push(row);
        }
    }

    /// Adds `component`, then its mean, `n_x` draws from it and the target's manual points.
    pub fn explore<R: Rng + ?Sized>(
        &mut self,
        component: GaussianComponent,
        group: Option<usize>,
        t: &dyn TargetDensity,
        cfg: &IterLapConfig,
        rng: &mut R,
    ) -> Result<()> {
        let mut pts = Vec::with_capacity(cfg.n_x_for(self.dim) + 1);
        pts.push(component.mean().to_vec());
        for _ in 0..cfg.n_x_for(self.dim) {
            pts.push(component.draw(rng));
        }
        pts.extend(t.manual_points(component.mean()));
        let mut weights = vec![1.0; pts.len()];
        weights[0] = cfg.mean_weight();
        self.add_component(component, group)?;
        let lq = eval_log_q(t, &pts);
        self.add_points(pts, lq, weights);
        Ok(())
    }

    /// Weighted non-negative least squares for the weights; records `ζ̃ = Σw`.
    pub fn fit_weights(&mut self) -> Result<()> {
        if self.mixture.is_empty() {
            return Err(Error::EmptyMixture);
        }
        let sol = solve_nnls_gram(&self.gram, &self.rhs)?;
        self.mixture.set_weights(&sol.weights)?;
        self.approx = self.z.iter().map(|row| row.iter().zip(&sol.weights).map(|(z, w)| z * w).sum()).collect();
        self.zeta_history.push(self.mixture.total_weight() * self.log_offset.exp());
        Ok(())
    }

    /// Weighted residual sum of squares of the current fit.
    pub fn weighted_rss(&self) -> f64 {
        self.y.iter().zip(&self.approx).zip(&self.point_weights).map(|((y, a), w)| w * (y - a) * (y - a)).sum()
    }

    /// Drops components with normalised weight below `threshold`; with `refit`
    /// the kept weights are re-estimated on the same points.
    ///
    /// Returns the mixture on the target's own scale, the number removed and
    /// whether everything fell below the threshold.
    pub fn pruned_mixture(&self, threshold: f64, refit: bool) -> Result<(GaussianMixture, usize, bool)> {
        let w = self.mixture.weights();
        let total: f64 = w.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidWeights);
        }
        let mut keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] / total >= threshold).collect();
        let degenerate = keep.is_empty();
        if degenerate {
            keep = vec![(0..w.len()).fold(0, |b, i| if w[i] > w[b] { i } else { b })];
        }
        let mut kept_w: Vec<f64> = keep.iter().map(|&i| w[i]).collect();
        if refit && !degenerate {
            let n = w.len();
            let k = keep.len();
            let gram: Vec<f64> = (0..k * k).map(|e| self.gram[keep[e / k] * n + keep[e % k]]).collect();
            let rhs: Vec<f64> = keep.iter().map(|&i| self.rhs[i]).collect();
            kept_w = solve_nnls_gram(&gram, &rhs)?.weights;
        }
        let f = self.log_offset.exp();
        let comps = self.mixture.components();
        let mut out = GaussianMixture::new(self.dim);
        for (&i, &wi) in keep.iter().zip(&kept_w) {
            if wi > 0.0 || keep.len() == 1 {
                out.push(comps[i].with_weight(wi * f))?;
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidWeights);
        }
        let removed = w.len() - out.len();
        Ok((out, removed, degenerate))
    }

    /// The mixture with weights converted back to the target's own scale.
    pub fn unscaled_mixture(&self) -> Result<GaussianMixture> {
        let mut m = self.mixture.clone();
        let f = self.log_offset.exp();
        let w: Vec<f64> = m.weights().iter().map(|w| w * f).collect();
        m.set_weights(&w)?;
        Ok(m)
    }
}

#[cfg(test)]
impl ExplorationState {
    /// Overrides the fitted weights without solving.
    pub(crate) fn force_weights(&mut self, w: &[f64]) {
        self.mixture.set_weights(w).unwrap();
        self.approx = self.z.iter().map(|row| row.iter().zip(w).map(|(z, w)| z * w).sum()).collect();
    }

    pub(crate) fn set_zeta_history(&mut self, h: Vec<f64>) {
        self.zeta_history = h;
    }

    pub(crate) fn raise_lq_max(&mut self, v: f64) {
        self.lq_max = self.lq_max.max(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use crate::targets::{gaussian, FnTarget};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn std_normal_component() -> GaussianComponent {
        GaussianComponent::new(vec![0.0], SymMatrix::identity(1), 1.0).unwrap()
    }

    fn small_cfg(n_x: usize) -> IterLapConfig {
        IterLapConfig { n_x: Some(n_x), ..IterLapConfig::modified() }
    }

    #[test]
    fn explore_counts_rows() {
        let t = gaussian(vec![0.0], SymMatrix::identity(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = ExplorationState::new(1, 0.0, vec![1.0]);
        s.explore(std_normal_component(), None, &t, &small_cfg(10), &mut rng).unwrap();
        assert_eq!(s.points().len(), 11);
        assert_eq!(s.point_weights()[0], 10.0);
        assert!(s.point_weights()[1..].iter().all(|&w| w == 1.0));

        let t = FnTarget::new("flat", vec![(-5.0, 5.0)], |x| -0.5 * x[0] * x[0])
            .with_manual_points(|m| vec![vec![m[0] + 1.0], vec![m[0] - 1.0]]);
        let mut s = ExplorationState::new(1, 0.0, vec![1.0]);
        s.explore(std_normal_component(), None, &t, &small_cfg(10), &mut rng).unwrap();
        assert_eq!(s.points().len(), 13);
        assert_eq!(s.points()[12], vec![-1.0]);
    }

    #[test]
    fn z_matches_component_density_and_alignment_holds() {
        let t = FnTarget::new("bimodal", vec![(-8.0, 8.0), (-8.0, 8.0)], |x| {
            let a = -0.5 * ((x[0] - 2.0).powi(2) + x[1].powi(2));
            let b = -0.5 * ((x[0] + 2.0).powi(2) + x[1].powi(2));
            a.max(b) + (1.0 + (-(a - b).abs()).exp()).ln()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = ExplorationState::new(2, 0.0, vec![1.0, 1.0]);
        let c1 = GaussianComponent::new(vec![2.0, 0.0], SymMatrix::identity(2), 1.0).unwrap();
        let c2 = GaussianComponent::new(vec![-2.0, 0.0], SymMatrix::from_diag(&[2.0, 0.5]), 1.0).unwrap();
        s.explore(c1, None, &t, &small_cfg(7), &mut rng).unwrap();
        s.fit_weights().unwrap();
        let before_lq = s.lq_max();
        s.explore(c2, None, &t, &small_cfg(7), &mut rng).unwrap();
        s.fit_weights().unwrap();
        assert!(s.lq_max() >= before_lq);
        assert_eq!(s.points().len(), 16);
        assert_eq!(s.y().len(), 16);
        assert_eq!(s.z().len(), 16);
        assert!(s.z().iter().all(|r| r.len() == 2));
        for (x, row) in s.points().iter().zip(s.z()) {
            for (c, v) in s.mixture().components().iter().zip(row) {
                let direct = c.log_density(x).exp();
                assert!((v - direct).abs() <= 1e-12 * direct.max(1e-300));
            }
        }
        // Incremental normal equations equal the ones rebuilt from scratch.
        let n = 2;
        for i in 0..n {
            let h: f64 = (0..16).map(|k| s.point_weights()[k] * s.z()[k][i] * s.y()[k]).sum();
            assert!((h - s.rhs[i]).abs() < 1e-12 * h.abs().max(1.0));
            for j in 0..n {
                let g: f64 = (0..16).map(|k| s.point_weights()[k] * s.z()[k][i] * s.z()[k][j]).sum();
                assert!((g - s.gram[i * n + j]).abs() < 1e-12 * g.abs().max(1.0));
            }
        }
        assert!(s.mixture().weights().iter().all(|&w| w >= 0.0));
        let zero_rss: f64 = s.y().iter().zip(s.point_weights()).map(|(y, w)| w * y * y).sum();
        assert!(s.weighted_rss() <= zero_rss);
    }

    fn self_fit(factor: f64) -> f64 {
        let f = factor.ln();
        let t = FnTarget::new("g", vec![(-8.0, 8.0)], move |x| f - 0.5 * x[0] * x[0] - 0.918_938_533_204_672_8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ExplorationState::new(1, 0.0, vec![1.0]);
        s.explore(std_normal_component(), None, &t, &small_cfg(20), &mut rng).unwrap();
        s.fit_weights().unwrap();
        s.mixture().weights()[0]
    }

    #[test]
    fn fit_recovers_exact_weights() {
        assert!((self_fit(1.0) - 1.0).abs() < 1e-6);
        assert!((self_fit(2.0) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn duplicate_columns_split_the_single_weight() {
        let t = FnTarget::new("g", vec![(-8.0, 8.0)], |x| -0.5 * x[0] * x[0] - 0.918_938_533_204_672_8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = ExplorationState::new(1, 0.0, vec![1.0]);
        s.explore(std_normal_component(), None, &t, &small_cfg(20), &mut rng).unwrap();
        s.explore(std_normal_component(), Some(0), &t, &small_cfg(20), &mut rng).unwrap();
        s.fit_weights().unwrap();
        let w = s.mixture().weights();
        assert!(w.iter().all(|&v| v >= 0.0));
        assert!((w[0] + w[1] - 1.0).abs() < 1e-6, "{w:?}");
        assert_eq!(s.group_of(1), 0);
    }

    #[test]
    fn zeta_history_is_on_target_scale() {
        let t = gaussian(vec![0.0], SymMatrix::identity(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let offset = t.log_q(&[0.0]);
        let mut s = ExplorationState::new(1, offset, vec![1.0]);
        s.explore(std_normal_component(), None, &t, &small_cfg(20), &mut rng).unwrap();
        s.fit_weights().unwrap();
        assert!((s.y()[0] - 1.0).abs() < 1e-12);
        assert!((s.zeta_history()[0] - 1.0).abs() < 1e-6);
        assert!((s.unscaled_mixture().unwrap().weights()[0] - 1.0).abs() < 1e-6);
    }
}
