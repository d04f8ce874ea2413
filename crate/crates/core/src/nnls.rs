//! Weighted non-negative least squares by the Lawson–Hanson active-set method.
//!
//! The solver works on the normal equations `G = ZᵀΩZ`, `h = ZᵀΩy` after
//! scaling every column of `Z` to unit (weighted) norm. Working from the Gram
//! matrix lets the engine grow `G` one component at a time instead of
//! refactorising a tall design on every refit.

use crate::error::{Error, Result};
use crate::linalg::{cholesky, SymMatrix};

const DEGENERATE_NORM: f64 = 1e-300;

/// `min_b (y − Zb)ᵀ diag(ω) (y − Zb)` subject to `b ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NnlsProblem {
    /// Row-major `m × n` design matrix.
    pub design: Vec<Vec<f64>>,
    pub response: Vec<f64>,
    pub point_weights: Vec<f64>,
}

impl NnlsProblem {
    pub fn new(design: Vec<Vec<f64>>, response: Vec<f64>) -> Self {
        let m = response.len();
        Self { design, response, point_weights: vec![1.0; m] }
    }

    pub fn with_point_weights(mut self, w: Vec<f64>) -> Self {
        self.point_weights = w;
        self
    }

    pub fn n_cols(&self) -> usize {
        self.design.first().map_or(0, |r| r.len())
    }

    pub fn objective(&self, b: &[f64]) -> f64 {
        self.design
            .iter()
            .zip(&self.response)
            .zip(&self.point_weights)
            .map(|((row, y), w)| {
                let r = y - row.iter().zip(b).map(|(z, b)| z * b).sum::<f64>();
                w * r * r
            })
            .sum()
    }

    /// Normal-equation form `(ZᵀΩZ, ZᵀΩy)`.
    pub fn normal_equations(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_cols();
        let mut gram = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for ((row, &y), &w) in self.design.iter().zip(&self.response).zip(&self.point_weights) {
            for i in 0..n {
                let wi = w * row[i];
                rhs[i] += wi * y;
                for j in 0..=i {
                    gram[i * n + j] += wi * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                gram[j * n + i] = gram[i * n + j];
            }
        }
        (gram, rhs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub weights: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

pub fn solve_nnls(p: &NnlsProblem) -> Result<NnlsSolution> {
    let m = p.response.len();
    if p.design.len() != m {
        return Err(Error::DimensionMismatch { expected: m, actual: p.design.len() });
    }
    if p.point_weights.len() != m {
        return Err(Error::DimensionMismatch { expected: m, actual: p.point_weights.len() });
    }
    let n = p.n_cols();
    if p.design.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, actual: 0 });
    }
    if p.design.iter().flatten().chain(&p.response).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("design or response"));
    }
    if p.point_weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::NonFiniteInput("point weights must be finite and positive"));
    }
    let (gram, rhs) = p.normal_equations();
    solve_nnls_gram(&gram, &rhs)
}

/// Lawson–Hanson on `min ½ bᵀGb − hᵀb, b ≥ 0` with `G` given row-major.
pub fn solve_nnls_gram(gram: &[f64], rhs: &[f64]) -> Result<NnlsSolution> {
    let n = rhs.len();
    if gram.len() != n * n {
        return Err(Error::DimensionMismatch { expected: n * n, actual: gram.len() });
    }
    if gram.iter().chain(rhs).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("normal equations"));
    }
    if n == 0 {
        return Ok(NnlsSolution { weights: vec![], converged: true, iterations: 0 });
    }

    // Unit-norm column scaling; degenerate columns stay out of the active set.
    let norms: Vec<f64> = (0..n).map(|j| gram[j * n + j].max(0.0).sqrt()).collect();
    let usable: Vec<bool> = norms.iter().map(|&v| v >= DEGENERATE_NORM).collect();
    let scale: Vec<f64> = norms.iter().zip(&usable).map(|(&v, &u)| if u { 1.0 / v } else { 0.0 }).collect();
    let g: Vec<f64> = (0..n * n).map(|k| gram[k] * scale[k / n] * scale[k % n]).collect();
    let h: Vec<f64> = rhs.iter().zip(&scale).map(|(a, s)| a * s).collect();

    let tol = 1e-12 * h.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    let mut blocked = vec![false; n];
    let mut converged = false;
    let mut iterations = 0;

    let dual =
        |x: &[f64]| -> Vec<f64> { (0..n).map(|i| h[i] - (0..n).map(|j| g[i * n + j] * x[j]).sum::<f64>()).collect() };

    while iterations < 3 * n {
        iterations += 1;
        let w = dual(&x);
        let candidate = (0..n)
            .filter(|&j| usable[j] && !passive[j] && !blocked[j])
            .max_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a)));
        let Some(j) = candidate.filter(|&j| w[j] > tol) else {
            converged = true;
            break;
        };
        passive[j] = true;

        let mut inner = 0;
        loop {
            inner += 1;
            let set: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let s = solve_subset(&g, n, &h, &set);
            if set.iter().zip(&s).all(|(_, &v)| v > 0.0) {
                for (&i, &v) in set.iter().zip(&s) {
                    x[i] = v;
                }
                blocked.iter_mut().for_each(|b| *b = false);
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&i, &v) in set.iter().zip(&s) {
                if v <= 0.0 {
                    let denom = x[i] - v;
                    if denom > 0.0 {
                        alpha = alpha.min(x[i] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            let alpha = alpha.clamp(0.0, 1.0);
            for (&i, &v) in set.iter().zip(&s) {
                x[i] += alpha * (v - x[i]);
            }
            let xmax = set.iter().fold(0.0_f64, |m, &i| m.max(x[i]));
            for &i in &set {
                if x[i] <= 1e-15 * xmax {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if !passive[j] && x[j] == 0.0 && alpha == 0.0 {
                // the entering column cannot move; keep it out until the set changes
                blocked[j] = true;
            }
            if !passive.iter().any(|&p| p) || inner > 3 * n {
                break;
            }
        }
    }

    let weights = x.iter().zip(&scale).map(|(v, s)| (v * s).max(0.0)).collect();
    Ok(NnlsSolution { weights, converged, iterations })
}

/// Solves `G_SS s = h_S`, falling back to a small ridge when the block is singular.
fn solve_subset(g: &[f64], n: usize, h: &[f64], set: &[usize]) -> Vec<f64> {
    let k = set.len();
    let block = SymMatrix::from_lower_fn(k, |a, b| g[set[a] * n + set[b]]);
    let rhs: Vec<f64> = set.iter().map(|&i| h[i]).collect();
    let mut ridge = 0.0;
    for _ in 0..12 {
        let m = if ridge > 0.0 {
            block.add(&SymMatrix::identity(k).scaled(ridge)).expect("same dim")
        } else {
            block.clone()
        };
        if let Ok(c) = cholesky(&m) {
            let s = c.solve(&rhs);
            if s.iter().all(|v| v.is_finite()) {
                return s;
            }
        }
        ridge = if ridge == 0.0 { 1e-14 } else { ridge * 10.0 };
    }
    vec![0.0; k]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_design() {
        let p = NnlsProblem::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 2.0]);
        let s = solve_nnls(&p).unwrap();
        assert!((s.weights[0] - 1.0).abs() < 1e-14 && (s.weights[1] - 2.0).abs() < 1e-14);
        assert!(s.converged);
    }

    #[test]
    fn negative_target_clipped() {
        let p = NnlsProblem::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![-1.0, 2.0]);
        let s = solve_nnls(&p).unwrap();
        assert_eq!(s.weights[0], 0.0);
        assert!((s.weights[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn weighted_mean() {
        let p = NnlsProblem::new(vec![vec![1.0], vec![1.0]], vec![1.0, 3.0]).with_point_weights(vec![3.0, 1.0]);
        let s = solve_nnls(&p).unwrap();
        // grid scan oracle
        let best = (0..=40_000)
            .map(|k| k as f64 * 1e-4)
            .min_by(|a, b| p.objective(&[*a]).total_cmp(&p.objective(&[*b])))
            .unwrap();
        assert!((best - 1.5).abs() < 1e-4);
        assert!((s.weights[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let p = NnlsProblem::new(vec![vec![f64::NAN]], vec![1.0]);
        assert!(matches!(solve_nnls(&p), Err(Error::NonFiniteInput(_))));
        let p = NnlsProblem::new(vec![vec![1.0]], vec![1.0]).with_point_weights(vec![0.0]);
        assert!(solve_nnls(&p).is_err());
    }

    #[test]
    fn zero_column_gets_zero_weight() {
        let p = NnlsProblem::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]], vec![2.0, 2.0]);
        let s = solve_nnls(&p).unwrap();
        assert!((s.weights[0] - 2.0).abs() < 1e-14);
        assert_eq!(s.weights[1], 0.0);
    }

    #[test]
    fn duplicate_columns() {
        let z = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![0.5, 0.5]];
        let y = vec![1.0, 2.1, 0.4];
        let s = solve_nnls(&NnlsProblem::new(z, y.clone())).unwrap();
        let single = solve_nnls(&NnlsProblem::new(vec![vec![1.0], vec![2.0], vec![0.5]], y)).unwrap();
        assert!(s.weights.iter().all(|&w| w >= 0.0));
        assert!((s.weights[0] + s.weights[1] - single.weights[0]).abs() < 1e-10);
    }

    pub(crate) fn exhaustive(p: &NnlsProblem) -> f64 {
        let n = p.n_cols();
        let (g, h) = p.normal_equations();
        let mut best = p.objective(&vec![0.0; n]);
        for mask in 1u32..(1 << n) {
            let set: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            // Gaussian elimination with partial pivoting on the sub-system
            let k = set.len();
            let mut a: Vec<Vec<f64>> = set
                .iter()
                .map(|&i| {
                    let mut r: Vec<f64> = set.iter().map(|&j| g[i * n + j]).collect();
                    r.push(h[i]);
                    r
                })
                .collect();
            let mut ok = true;
            for c in 0..k {
                let piv = (c..k).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
                a.swap(c, piv);
                if a[c][c].abs() < 1e-14 {
                    ok = false;
                    break;
                }
                for r in 0..k {
                    if r != c {
                        let f = a[r][c] / a[c][c];
                        for cc in c..=k {
                            a[r][cc] -= f * a[c][cc];
                        }
                    }
                }
            }
            if !ok {
                continue;
            }
            let sol: Vec<f64> = (0..k).map(|r| a[r][k] / a[r][r]).collect();
            if sol.iter().any(|&v| v < 0.0) {
                continue;
            }
            let mut b = vec![0.0; n];
            for (&i, &v) in set.iter().zip(&sol) {
                b[i] = v;
            }
            best = best.min(p.objective(&b));
        }
        best
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        pub(super) fn problem() -> impl Strategy<Value = NnlsProblem> {
            (1usize..=20, 1usize..=5).prop_flat_map(|(m, n)| {
                (
                    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, n), m),
                    prop::collection::vec(-3.0f64..3.0, m),
                    prop::collection::vec(0.1f64..5.0, m),
                )
                    .prop_map(|(z, y, w)| NnlsProblem::new(z, y).with_point_weights(w))
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn matches_enumeration(p in problem()) {
                let s = solve_nnls(&p).unwrap();
                prop_assert!(s.weights.iter().all(|&w| w >= 0.0));
                let got = p.objective(&s.weights);
                let oracle = exhaustive(&p);
                prop_assert!(got - oracle <= 1e-7 * oracle.max(1.0), "{} vs {}", got, oracle);
                prop_assert!(got <= p.objective(&vec![0.0; p.n_cols()]) + 1e-12);
            }

            #[test]
            fn satisfies_kkt(p in problem()) {
                let s = solve_nnls(&p).unwrap();
                let (g, h) = p.normal_equations();
                let n = p.n_cols();
                let scale = h.iter().chain(&g).fold(1.0_f64, |m, v| m.max(v.abs()));
                for j in 0..n {
                    let grad = h[j] - (0..n).map(|k| g[j * n + k] * s.weights[k]).sum::<f64>();
                    if s.weights[j] > 0.0 {
                        prop_assert!(grad.abs() <= 1e-8 * scale);
                    } else {
                        prop_assert!(grad <= 1e-8 * scale);
                    }
                }
            }
        }
    }
}
