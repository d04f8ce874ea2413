use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{log_normal, TargetDensity};
use crate::mixture::log_sum_exp;

/// `N(x₁ | 0, σ₁²) · N(x₂ | c (x₁ − s)² + o, σ₂²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledBanana {
    name: &'static str,
    var1: f64,
    curvature: f64,
    shift: f64,
    offset: f64,
    var2: f64,
    bounds: [(f64, f64); 2],
}

impl ScaledBanana {
    pub fn conditional_mean(&self, x1: f64) -> f64 {
        self.curvature * (x1 - self.shift).powi(2) + self.offset
    }
}

impl TargetDensity for ScaledBanana {
    fn name(&self) -> &str {
        self.name
    }

    fn dim(&self) -> usize {
        2
    }

    fn log_q(&self, x: &[f64]) -> f64 {
        let v = log_normal(x[0], 0.0, self.var1) + log_normal(x[1], self.conditional_mean(x[0]), self.var2);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    fn reference_box(&self) -> Vec<(f64, f64)> {
        self.bounds.to_vec()
    }
}

/// The introductory banana: `N(x₁|0,10²) N(x₂|0.03 x₁², 1)`.
pub fn intro_banana() -> ScaledBanana {
    ScaledBanana {
        name: "intro_banana",
        var1: 100.0,
        curvature: 0.03,
        shift: 0.0,
        offset: 0.0,
        var2: 1.0,
        bounds: [(-30.0, 30.0), (-5.0, 32.0)],
    }
}

/// `N(x_a|0,10²) N(x_b|0.03 (x_a − 3)² + 5, 1)`.
pub fn ex6() -> ScaledBanana {
    ScaledBanana {
        name: "ex6",
        var1: 100.0,
        curvature: 0.03,
        shift: 3.0,
        offset: 5.0,
        var2: 1.0,
        bounds: [(-30.0, 30.0), (0.0, 42.0)],
    }
}

/// `exp(−x²/50 − (|x| − 0.5)₊³/50)`: Gaussian near zero, cubic tails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewedDensity;

pub fn skewed_1d() -> SkewedDensity {
    SkewedDensity
}

impl TargetDensity for SkewedDensity {
    fn name(&self) -> &str {
        "skewed1d"
    }

    fn dim(&self) -> usize {
        1
    }

    fn log_q(&self, x: &[f64]) -> f64 {
        let hinge = (x[0].abs() - 0.5).max(0.0);
        let v = -x[0] * x[0] / 50.0 - hinge.powi(3) / 50.0;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    fn reference_box(&self) -> Vec<(f64, f64)> {
        vec![(-10.0, 10.0)]
    }
}

/// Equal mixture of two mirrored bananas with modes near (−1, 3) and (1, −3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ex7Bimodal;

pub fn ex7() -> Ex7Bimodal {
    Ex7Bimodal
}

impl TargetDensity for Ex7Bimodal {
    fn name(&self) -> &str {
        "ex7"
    }

    fn dim(&self) -> usize {
        2
    }

    fn log_q(&self, x: &[f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        let first = 0.5f64.ln() + log_normal(a, -1.0, 6.0) + log_normal(b, -0.5 * (a + 1.0).powi(2) + 3.0, 2.0);
        let second = 0.5f64.ln() + log_normal(a, 1.0, 6.0) + log_normal(b, 0.5 * (a - 1.0).powi(2) - 3.0, 2.0);
        let v = log_sum_exp(&[first, second]);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    fn reference_box(&self) -> Vec<(f64, f64)> {
        vec![(-11.0, 11.0), (-42.0, 42.0)]
    }
}

/// Three-block chain `x_a → x_b → x_c` with a quadratic link into `x_c`:
///
/// * `x_a ~ N(μ_a, diag σ_a²)`
/// * `x_b | x_a ~ N(A (x_a − μ_a) + b, diag σ_b²)`
/// * `x_c | x_a, x_b ~ N(C [(x_a − μ_a)², (x_b − μ_b)²], diag σ_c²)`
///
/// where the squares are elementwise on the stacked centred vector and
/// `μ_b` is the conditional mean of `x_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalChain {
    name: &'static str,
    mu_a: Vec<f64>,
    var_a: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    var_b: Vec<f64>,
    c: Vec<Vec<f64>>,
    var_c: Vec<f64>,
}

impl ConditionalChain {
    fn da(&self) -> usize {
        self.mu_a.len()
    }

    fn db(&self) -> usize {
        self.b.len()
    }

    fn dc(&self) -> usize {
        self.var_c.len()
    }

    /// The point where every block residual vanishes: `(μ_a, b, 0)`.
    pub fn zero_residual_point(&self) -> Vec<f64> {
        let mut x = self.mu_a.clone();
        x.extend(&self.b);
        x.extend(std::iter::repeat_n(0.0, self.dc()));
        x
    }

    /// Sum of the three blocks' Gaussian normalising constants.
    pub fn log_norm_sum(&self) -> f64 {
        self.var_a.iter().chain(&self.var_b).chain(&self.var_c).map(|&v| log_normal(0.0, 0.0, v)).sum()
    }

    fn b_mean(&self, centred_a: &[f64]) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| bi + row.iter().zip(centred_a).map(|(r, v)| r * v).sum::<f64>())
            .collect()
    }

    fn c_mean(&self, squares: &[f64]) -> Vec<f64> {
        self.c.iter().map(|row| row.iter().zip(squares).map(|(r, v)| r * v).sum()).collect()
    }
}

impl TargetDensity for ConditionalChain {
    fn name(&self) -> &str {
        self.name
    }

    fn dim(&self) -> usize {
        self.da() + self.db() + self.dc()
    }

    fn log_q(&self, x: &[f64]) -> f64 {
        let (da, db) = (self.da(), self.db());
        let (xa, rest) = x.split_at(da);
        let (xb, xc) = rest.split_at(db);
        let centred_a: Vec<f64> = xa.iter().zip(&self.mu_a).map(|(x, m)| x - m).collect();
        let mu_b = self.b_mean(&centred_a);
        let mut squares: Vec<f64> = centred_a.iter().map(|v| v * v).collect();
        squares.extend(xb.iter().zip(&mu_b).map(|(x, m)| (x - m).powi(2)));
        let mu_c = self.c_mean(&squares);
        let mut lq = 0.0;
        for i in 0..da {
            lq += log_normal(xa[i], self.mu_a[i], self.var_a[i]);
        }
        for i in 0..db {
            lq += log_normal(xb[i], mu_b[i], self.var_b[i]);
        }
        for i in 0..self.dc() {
            lq += log_normal(xc[i], mu_c[i], self.var_c[i]);
        }
        if lq.is_nan() {
            f64::NEG_INFINITY
        } else {
            lq
        }
    }

    fn reference_box(&self) -> Vec<(f64, f64)> {
        const K: f64 = 4.0;
        let sd_a: Vec<f64> = self.var_a.iter().map(|v| v.sqrt()).collect();
        let sd_b: Vec<f64> = self.var_b.iter().map(|v| v.sqrt()).collect();
        let mut bounds: Vec<(f64, f64)> = self.mu_a.iter().zip(&sd_a).map(|(m, s)| (m - K * s, m + K * s)).collect();
        for (i, row) in self.a.iter().enumerate() {
            let spread: f64 = row.iter().zip(&sd_a).map(|(r, s)| r.abs() * K * s).sum();
            bounds.push((self.b[i] - spread - K * sd_b[i], self.b[i] + spread + K * sd_b[i]));
        }
        let sq_max: Vec<f64> = sd_a.iter().chain(&sd_b).map(|s| (K * s).powi(2)).collect();
        for (i, row) in self.c.iter().enumerate() {
            let lo: f64 = row.iter().zip(&sq_max).map(|(r, m)| (r * m).min(0.0)).sum();
            let hi: f64 = row.iter().zip(&sq_max).map(|(r, m)| (r * m).max(0.0)).sum();
            let sd = self.var_c[i].sqrt();
            bounds.push((lo - K * sd, hi + K * sd));
        }
        bounds
    }

    fn exact_sample(&self, n: usize, seed: u64) -> Option<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
        let out = (0..n)
            .map(|_| {
                let xa: Vec<f64> = self.mu_a.iter().zip(&self.var_a).map(|(m, v)| m + v.sqrt() * z()).collect();
                let centred_a: Vec<f64> = xa.iter().zip(&self.mu_a).map(|(x, m)| x - m).collect();
                let mu_b = self.b_mean(&centred_a);
                let xb: Vec<f64> = mu_b.iter().zip(&self.var_b).map(|(m, v)| m + v.sqrt() * z()).collect();
                let mut squares: Vec<f64> = centred_a.iter().map(|v| v * v).collect();
                squares.extend(xb.iter().zip(&mu_b).map(|(x, m)| (x - m).powi(2)));
                let xc: Vec<f64> =
                    self.c_mean(&squares).iter().zip(&self.var_c).map(|(m, v)| m + v.sqrt() * z()).collect();
                let mut x = xa;
                x.extend(xb);
                x.extend(xc);
                x
            })
            .collect();
        Some(out)
    }
}

/// Six-dimensional chain: `dim(x_a) = dim(x_b) = 1`, `dim(x_c) = 4`.
pub fn ex8() -> ConditionalChain {
    ConditionalChain {
        name: "ex8",
        mu_a: vec![-0.5],
        var_a: vec![6.0],
        a: vec![vec![-2.0]],
        b: vec![-1.0],
        var_b: vec![0.2],
        c: vec![vec![0.9, 0.3], vec![-0.3, -1.1], vec![-0.5, -0.6], vec![0.3, 0.2]],
        var_c: [0.6, 0.7, 0.8, 0.9].iter().map(|v| v / 3.0).collect(),
    }
}

/// Nine-dimensional chain: `dim(x_a) = dim(x_b) = 2`, `dim(x_c) = 5`.
pub fn ex9() -> ConditionalChain {
    ConditionalChain {
        name: "ex9",
        mu_a: vec![-0.5, -1.0],
        var_a: vec![6.0, 7.0],
        a: vec![vec![0.5, -1.2], vec![-2.9, -1.3]],
        b: vec![-1.0, -1.5],
        var_b: vec![0.2, 0.3],
        c: vec![
            vec![0.9, -1.3, -0.3, 0.8],
            vec![-0.7, 0.8, -0.1, 0.6],
            vec![0.7, -0.6, 1.4, 1.5],
            vec![1.2, -1.2, 0.3, 0.0],
            vec![1.3, 1.4, 1.4, 0.0],
        ],
        var_c: [0.8, 0.9, 1.0, 1.1, 1.2].iter().map(|v| v / 4.0).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{numerical_gradient, OptimSettings};

    fn grid_argmax(t: &dyn TargetDensity, bx: [(f64, f64); 2], n: usize) -> (f64, f64) {
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let x = bx[0].0 + (bx[0].1 - bx[0].0) * i as f64 / (n - 1) as f64;
                let y = bx[1].0 + (bx[1].1 - bx[1].0) * j as f64 / (n - 1) as f64;
                let v = t.log_q(&[x, y]);
                if v > best.0 {
                    best = (v, x, y);
                }
            }
        }
        (best.1, best.2)
    }

    #[test]
    fn banana_examples() {
        let t = intro_banana();
        let expect = log_normal(0.0, 0.0, 100.0) + log_normal(0.0, 0.0, 1.0);
        assert!((t.log_q(&[0.0, 0.0]) - expect).abs() < 1e-15);
        for &(a, b) in &[(1.0, 2.0), (7.5, -1.0), (22.0, 14.0)] {
            assert_eq!(t.log_q(&[a, b]), t.log_q(&[-a, b]));
        }
        // grid step 0.1 over [-30,30]x[-5,30]
        let (x, y) = grid_argmax(&t, [(-30.0, 30.0), (-5.0, 30.0)], 601);
        assert!(x.abs() < 1e-9 && y.abs() < 0.06, "({x}, {y})");
    }

    #[test]
    fn skewed_examples() {
        let t = skewed_1d();
        assert_eq!(t.log_q(&[0.0]), 0.0);
        assert!((t.log_q(&[0.5]) + 0.005).abs() < 1e-15);
        for x in [0.3, 1.7, 4.0, 9.0] {
            assert_eq!(t.log_q(&[x]), t.log_q(&[-x]));
        }
    }

    #[test]
    fn ex6_examples() {
        let t = ex6();
        let at = t.log_q(&[3.0, 5.0]);
        assert!((at - log_normal(3.0, 0.0, 100.0) - log_normal(0.0, 0.0, 1.0)).abs() < 1e-14);
        for xa in [-10.0, 0.0, 4.0, 12.0] {
            let m = 0.03 * (xa - 3.0) * (xa - 3.0) + 5.0;
            assert!(t.log_q(&[xa, m]) > t.log_q(&[xa, m + 1e-3]));
            assert!(t.log_q(&[xa, m]) > t.log_q(&[xa, m - 1e-3]));
        }
        // The mode solves x_a/100 = 0 on the ridge: (0, 5.27).
        let (x, y) = grid_argmax(&t, [(-5.0, 5.0), (0.0, 10.0)], 1001);
        assert!(x.abs() < 0.011 && (y - 5.27).abs() < 0.011, "({x}, {y})");
    }

    #[test]
    fn ex7_examples() {
        let t = ex7();
        for &(a, b) in &[(0.3, 1.0), (-2.0, 5.0), (4.0, -7.5)] {
            assert!((t.log_q(&[a, b]) - t.log_q(&[-a, -b])).abs() < 1e-12);
        }
        // (−1, 3) is on the first branch's ridge.
        let first = |x: &[f64]| log_normal(x[0], -1.0, 6.0) + log_normal(x[1], -0.5 * (x[0] + 1.0).powi(2) + 3.0, 2.0);
        let m = first(&[-1.0, 3.0]);
        assert!(m > first(&[-1.0, 3.01]) && m > first(&[-1.0, 2.99]));
        // Branch overlap pulls the two modes away from the ridge points to (∓2.09, ±2.20).
        let (x, y) = grid_argmax(&t, [(-6.0, 0.0), (0.0, 6.0)], 601);
        assert!((x + 2.09).abs() < 0.02 && (y - 2.2).abs() < 0.02, "({x}, {y})");
        let (x, y) = grid_argmax(&t, [(0.0, 6.0), (-6.0, 0.0)], 601);
        assert!((x - 2.09).abs() < 0.02 && (y + 2.2).abs() < 0.02, "({x}, {y})");
    }

    #[test]
    fn chain_dimensions_and_zero_residual() {
        for (t, d) in [(ex8(), 6), (ex9(), 9)] {
            assert_eq!(t.dim(), d);
            let z = t.zero_residual_point();
            assert!((t.log_q(&z) - t.log_norm_sum()).abs() < 1e-12);
            let g = numerical_gradient(|x| t.log_q(x), &z, OptimSettings::default().fd_step).unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-5), "{g:?}");
        }
    }

    #[test]
    fn chain_exact_sample_moments() {
        let t = ex8();
        let xs = t.exact_sample(40_000, 3).unwrap();
        let n = xs.len() as f64;
        let mean_a = xs.iter().map(|x| x[0]).sum::<f64>() / n;
        let var_a = xs.iter().map(|x| (x[0] - mean_a).powi(2)).sum::<f64>() / n;
        assert!((mean_a + 0.5).abs() < 4.0 * (6.0 / n).sqrt());
        assert!((var_a - 6.0).abs() < 0.2);
        // x_b - (A(x_a - μ_a) + b) has variance σ_b²
        let rb: Vec<f64> = xs.iter().map(|x| x[1] - (-2.0 * (x[0] + 0.5) - 1.0)).collect();
        let vb = rb.iter().map(|v| v * v).sum::<f64>() / n;
        assert!((vb - 0.2).abs() < 0.01);
        assert_eq!(t.exact_sample(10, 3), t.exact_sample(10, 3));
    }
}
