//! Small dense linear algebra for symmetric matrices.
//!
//! Everything here works on row-major `Vec<f64>` storage. Dimensions in this
//! crate stay small (the largest system is the DLM posterior precision), so
//! the routines favour clarity over blocking or vectorisation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense symmetric matrix stored in full, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![1.0; dim])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * m.dim + i] = d;
        }
        m
    }

    /// Builds a matrix from rows, rejecting anything that is not exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, actual: 0 });
        }
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: row.len() });
            }
            data.extend_from_slice(row);
        }
        for i in 0..dim {
            for j in 0..i {
                if data[i * dim + j] != data[j * dim + i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { dim, data })
    }

    /// Builds a matrix from the lower triangle produced by `f(i, j)` with `j <= i`.
    pub fn from_lower_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                let v = f(i, j);
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        m
    }

    /// Symmetrises an arbitrary square row-major buffer as `(A + Aᵀ) / 2`.
    pub fn symmetrize(dim: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), dim * dim);
        Self::from_lower_fn(dim, |i, j| 0.5 * (data[i * dim + j] + data[j * dim + i]))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|v| v * factor).collect() }
    }

    pub fn add(&self, other: &SymMatrix) -> Result<Self> {
        self.check_dim(other.dim)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { dim: self.dim, data })
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim);
        self.data.chunks(self.dim).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.matvec(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: dim });
        }
        Ok(())
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.to_rows()
    }
}

/// Lower-triangular Cholesky factor `L` with `M = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn l(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    /// `log det M = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim).map(|i| self.l(i, i).ln()).sum::<f64>()
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut x = b.to_vec();
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / self.l(i, i);
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = 0.0;
            for k in i + 1..n {
                s += self.l(k, i) * x[k];
            }
            x[i] = (x[i] - s) / self.l(i, i);
        }
        x
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `Lᵀ v`, so that `‖Lᵀ v‖² = vᵀ M v`.
    pub fn mul_upper(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n).map(|i| (i..n).map(|k| self.l(k, i) * v[k]).sum()).collect()
    }

    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.dim;
        SymMatrix::from_lower_fn(n, |i, j| (0..=j).map(|k| self.l(i, k) * self.l(j, k)).sum())
    }
}

pub fn cholesky(m: &SymMatrix) -> Result<Cholesky> {
    let n = m.dim;
    let mut lower = vec![0.0; n * n];
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= lower[j * n + k] * lower[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        lower[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= lower[i * n + k] * lower[j * n + k];
            }
            lower[i * n + j] = s / ljj;
        }
    }
    Ok(Cholesky { dim: n, lower })
}

pub fn solve_spd(m: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    m.check_dim(b.len())?;
    Ok(cholesky(m)?.solve(b))
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues and the eigenvectors as columns of a row-major matrix.
pub fn symmetric_eigen(m: &SymMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.dim;
    let mut a = m.data.clone();
    let mut v = SymMatrix::identity(n).data;
    let scale = m.max_abs();
    if scale == 0.0 {
        return (vec![0.0; n], v);
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

/// Raises every eigenvalue below `floor_ratio · max|λ|` up to that floor.
///
/// Matrices that already satisfy the floor are returned unchanged. A zero
/// matrix maps to `floor_ratio · I`.
pub fn make_positive_definite(m: &SymMatrix, floor_ratio: f64) -> SymMatrix {
    assert!(floor_ratio > 0.0 && floor_ratio <= 1.0, "floor_ratio must lie in (0, 1]");
    let n = m.dim;
    let (values, vectors) = symmetric_eigen(m);
    let max_abs = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if max_abs == 0.0 || !max_abs.is_finite() {
        return SymMatrix::identity(n).scaled(floor_ratio);
    }
    let floor = floor_ratio * max_abs;
    // Slack absorbs the rounding of a previous reassembly so repair is idempotent.
    if values.iter().all(|&v| v >= floor * (1.0 - 1e-9)) && cholesky(m).is_ok() {
        return m.clone();
    }
    let clipped: Vec<f64> = values.iter().map(|&v| v.max(floor)).collect();
    SymMatrix::from_lower_fn(n, |i, j| (0..n).map(|k| vectors[i * n + k] * clipped[k] * vectors[j * n + k]).sum())
}
