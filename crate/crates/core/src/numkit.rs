//! Dense complex linear algebra: LU solves, norm estimates and singular
//! value extremes for the small matrices the estimators work with.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};
use thiserror::Error;

/// Pivots below this multiple of the largest entry count as singular.
pub const PIVOT_RELATIVE_TOLERANCE: f64 = 1e-14;

/// Singular values below this are treated as zero.
pub const SINGULAR_VALUE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("matrix is singular: pivot {pivot:.3e} in column {column} is below {threshold:.3e}")]
    SingularMatrix {
        column: usize,
        pivot: f64,
        threshold: f64,
    },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("all singular values are below {floor:e}")]
    ZeroMatrix { floor: f64 },
    #[error("matrix has more columns ({cols}) than rows ({rows})")]
    TooManyColumns { rows: usize, cols: usize },
}

pub type NumResult<T> = Result<T, NumError>;

/// Complex column vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComplexVector(pub Vec<Complex64>);

impl ComplexVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[k] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self|other>`, conjugate-linear in `self`.
    pub fn dot(&self, other: &Self) -> Complex64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self(self.0.iter().map(|z| z * s).collect())
    }

    pub fn normalized(&self) -> Self {
        self.scaled(Complex64::new(1.0 / self.norm(), 0.0))
    }

    pub fn axpy(&mut self, s: Complex64, x: &Self) {
        for (y, xi) in self.0.iter_mut().zip(&x.0) {
            *y += s * xi;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.sub(other).norm()
    }
}

/// Square complex matrix stored row-major. All entries are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct ComplexMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRepr {
    dim: usize,
    entries: Vec<Complex64>,
}

impl TryFrom<MatrixRepr> for ComplexMatrix {
    type Error = NumError;

    fn try_from(r: MatrixRepr) -> NumResult<Self> {
        ComplexMatrix::new(r.dim, r.entries)
    }
}

impl From<ComplexMatrix> for MatrixRepr {
    fn from(m: ComplexMatrix) -> Self {
        MatrixRepr {
            dim: m.dim,
            entries: m.entries,
        }
    }
}

impl ComplexMatrix {
    pub fn new(dim: usize, entries: Vec<Complex64>) -> NumResult<Self> {
        if entries.len() != dim * dim {
            return Err(NumError::DimensionMismatch {
                expected: dim * dim,
                actual: entries.len(),
            });
        }
        if let Some(index) = entries.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(NumError::NonFinite { index });
        }
        Ok(Self { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![Complex64::new(1.0, 0.0); dim])
    }

    pub fn from_diag(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    /// Panics on ragged or non-square input; meant for literals.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let dim = rows.len();
        let entries: Vec<Complex64> = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.len(), dim, "row length must equal row count");
                r.iter().copied()
            })
            .collect();
        Self::new(dim, entries).expect("finite square literal")
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn column(&self, k: usize) -> ComplexVector {
        ComplexVector((0..self.dim).map(|i| self[(i, k)]).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.dim;
        assert_eq!(n, other.dim);
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.entries[i * n + j] += a * other.entries[k * n + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim;
        assert_eq!(n, v.len());
        (0..n)
            .map(|i| {
                self.entries[i * n..(i + 1) * n]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|z| z * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// `z I - self`.
    pub fn shifted_resolvent_operand(&self, z: Complex64) -> Self {
        let mut out = self.scaled(Complex64::new(-1.0, 0.0));
        for i in 0..self.dim {
            out[(i, i)] += z;
        }
        out
    }

    pub fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    pub fn to_rect(&self) -> RectMatrix {
        RectMatrix {
            rows: self.dim,
            cols: self.dim,
            entries: self.entries.clone(),
        }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.entries[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.entries[i * self.dim + j]
    }
}

/// Row-major matrix that need not be square, e.g. a set of eigenvector columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Complex64>,
}

impl RectMatrix {
    pub fn from_columns(columns: &[ComplexVector]) -> NumResult<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, |c| c.len());
        let mut entries = vec![Complex64::new(0.0, 0.0); rows * cols];
        for (k, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(NumError::DimensionMismatch {
                    expected: rows,
                    actual: c.len(),
                });
            }
            for i in 0..rows {
                entries[i * cols + k] = c.0[i];
            }
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn column(&self, k: usize) -> ComplexVector {
        ComplexVector((0..self.rows).map(|i| self.entries[i * self.cols + k]).collect())
    }

    pub fn columns(&self) -> Vec<ComplexVector> {
        (0..self.cols).map(|k| self.column(k)).collect()
    }

    pub fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.entries)
    }
}

/// LU factorization with partial pivoting, `P C = L U`.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn new(c: &ComplexMatrix) -> NumResult<Self> {
        let n = c.dim();
        let threshold = PIVOT_RELATIVE_TOLERANCE * c.max_abs();
        let mut lu = c.entries().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[i * n + k].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= threshold {
                return Err(NumError::SingularMatrix {
                    column: k,
                    pivot,
                    threshold,
                });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let inv = lu[k * n + k].inv();
            for i in (k + 1)..n {
                let factor = lu[i * n + k] * inv;
                lu[i * n + k] = factor;
                if factor == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in (k + 1)..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= factor * u;
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[Complex64]) -> NumResult<Vec<Complex64>> {
        let n = self.n;
        if b.len() != n {
            return Err(NumError::DimensionMismatch {
                expected: n,
                actual: b.len(),
            });
        }
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        Ok(x)
    }

    pub fn inverse(&self) -> ComplexMatrix {
        let n = self.n;
        // Rows of P applied to the identity, then both substitutions row-wise.
        let mut x = vec![Complex64::new(0.0, 0.0); n * n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[i * n + p] = Complex64::new(1.0, 0.0);
        }
        for i in 0..n {
            let (done, rest) = x.split_at_mut(i * n);
            let row = &mut rest[..n];
            for j in 0..i {
                let l = self.lu[i * n + j];
                if l != Complex64::new(0.0, 0.0) {
                    for (r, d) in row.iter_mut().zip(&done[j * n..(j + 1) * n]) {
                        *r -= l * d;
                    }
                }
            }
        }
        for i in (0..n).rev() {
            let (head, tail) = x.split_at_mut((i + 1) * n);
            let row = &mut head[i * n..];
            for j in (i + 1)..n {
                let u = self.lu[i * n + j];
                if u != Complex64::new(0.0, 0.0) {
                    let src = &tail[(j - i - 1) * n..(j - i) * n];
                    for (r, d) in row.iter_mut().zip(src) {
                        *r -= u * d;
                    }
                }
            }
            let inv = self.lu[i * n + i].inv();
            for r in row.iter_mut() {
                *r *= inv;
            }
        }
        ComplexMatrix::new(n, x).expect("finite inverse")
    }
}

/// Solves `C x = b` by LU with partial pivoting.
pub fn solve(c: &ComplexMatrix, b: &[Complex64]) -> NumResult<Vec<Complex64>> {
    LuFactors::new(c)?.solve(b)
}

/// Largest singular value, from the top eigenvalue of `C^dag C`.
pub fn spectral_norm(c: &ComplexMatrix) -> f64 {
    if c.dim() == 0 {
        return 0.0;
    }
    let m = c.to_nalgebra();
    let h = m.adjoint() * &m;
    h.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .sqrt()
}

/// `sqrt(max column abs sum * max row abs sum)`, an upper bound on the spectral norm.
pub fn row_col_norm_bound(c: &ComplexMatrix) -> f64 {
    let n = c.dim();
    let max_row = (0..n)
        .map(|i| (0..n).map(|j| c[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let max_col = (0..n)
        .map(|j| (0..n).map(|i| c[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    (max_row * max_col).sqrt()
}

/// Largest and smallest nonzero singular values of a tall or square matrix.
pub fn svd_extremes(c: &RectMatrix) -> NumResult<(f64, f64)> {
    if c.cols > c.rows {
        return Err(NumError::TooManyColumns {
            rows: c.rows,
            cols: c.cols,
        });
    }
    let sv = c.to_nalgebra().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max < SINGULAR_VALUE_FLOOR {
        return Err(NumError::ZeroMatrix {
            floor: SINGULAR_VALUE_FLOOR,
        });
    }
    let floor = SINGULAR_VALUE_FLOOR * max.max(1.0);
    let min = sv
        .iter()
        .copied()
        .filter(|&s| s >= floor)
        .fold(f64::INFINITY, f64::min);
    Ok((max, min))
}

/// Least-squares coefficients against a fixed column set, via the Gram matrix.
#[derive(Debug, Clone)]
pub struct DualBasis {
    columns: Vec<ComplexVector>,
    gram_lu: LuFactors,
}

impl DualBasis {
    pub fn new(columns: &[ComplexVector]) -> NumResult<Self> {
        let m = columns.len();
        let mut gram = ComplexMatrix::zeros(m);
        for i in 0..m {
            for j in 0..m {
                gram[(i, j)] = columns[i].dot(&columns[j]);
            }
        }
        Ok(Self {
            columns: columns.to_vec(),
            gram_lu: LuFactors::new(&gram)?,
        })
    }

    pub fn coefficients(&self, v: &[Complex64]) -> Vec<Complex64> {
        let v = ComplexVector(v.to_vec());
        let rhs: Vec<Complex64> = self.columns.iter().map(|c| c.dot(&v)).collect();
        self.gram_lu.solve(&rhs).expect("gram dimension matches")
    }

    pub fn combine(&self, coeffs: &[Complex64]) -> ComplexVector {
        let n = self.columns.first().map_or(0, |c| c.len());
        let mut out = ComplexVector::zeros(n);
        for (c, col) in coeffs.iter().zip(&self.columns) {
            out.axpy(*c, col);
        }
        out
    }
}

/// Chunk length for [`det_sum`]; fixed so results do not depend on thread count.
pub const SUM_CHUNK: usize = 1 << 14;

/// Sum of `f(i)` for `i` in `range`, chunked in parallel with a fixed chunk
/// layout and combined pairwise so the result is thread-count independent.
pub fn det_sum<F>(range: std::ops::Range<u64>, f: F) -> f64
where
    F: Fn(u64) -> f64 + Sync,
{
    let len = range.end.saturating_sub(range.start);
    let chunks = len.div_ceil(SUM_CHUNK as u64);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = range.start + c * SUM_CHUNK as u64;
            let hi = (lo + SUM_CHUNK as u64).min(range.end);
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            s
        })
        .collect();
    pairwise_sum(&partial)
}

/// [`det_sum`] for `K` simultaneous accumulators.
pub fn det_sum_n<const K: usize, F>(range: std::ops::Range<u64>, f: F) -> [f64; K]
where
    F: Fn(u64) -> [f64; K] + Sync,
{
    let len = range.end.saturating_sub(range.start);
    let chunks = len.div_ceil(SUM_CHUNK as u64);
    let partial: Vec<[f64; K]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = range.start + c * SUM_CHUNK as u64;
            let hi = (lo + SUM_CHUNK as u64).min(range.end);
            let mut s = [0.0; K];
            for i in lo..hi {
                let v = f(i);
                for k in 0..K {
                    s[k] += v[k];
                }
            }
            s
        })
        .collect();
    let mut out = [0.0; K];
    for (k, o) in out.iter_mut().enumerate() {
        let column: Vec<f64> = partial.iter().map(|p| p[k]).collect();
        *o = pairwise_sum(&column);
    }
    out
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

/// Complex digamma `psi(z) = Gamma'(z) / Gamma(z)`, via reflection for
/// `Re z < 1/2`, upward recurrence to `Re z >= 10`, then the asymptotic series.
pub fn digamma(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        // psi(z) = psi(1 - z) - pi cot(pi z)
        return digamma(Complex64::new(1.0, 0.0) - z) - cot_pi(z) * std::f64::consts::PI;
    }
    let mut z = z;
    let mut acc = Complex64::new(0.0, 0.0);
    while z.re < 10.0 {
        acc -= z.inv();
        z += 1.0;
    }
    let w = z.inv();
    let w2 = w * w;
    // Bernoulli terms B_2k / (2k) for k = 1..7.
    const C: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 120.0,
        1.0 / 252.0,
        -1.0 / 240.0,
        1.0 / 132.0,
        -691.0 / 32760.0,
        1.0 / 12.0,
    ];
    let mut series = Complex64::new(0.0, 0.0);
    for &c in C.iter().rev() {
        series = (series + c) * w2;
    }
    acc + z.ln() - w * 0.5 - series
}

/// `cot(pi z)` written in terms of `exp(2 pi i z)` or its inverse so that it
/// stays finite for large `|Im z|`.
fn cot_pi(z: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let pz = z * std::f64::consts::PI;
    if pz.im >= 0.0 {
        let e = (i * pz * 2.0).exp();
        i * (e + 1.0) / (e - 1.0)
    } else {
        let e = (-i * pz * 2.0).exp();
        i * (1.0 + e) / (1.0 - e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solve_examples() {
        let x = solve(&ComplexMatrix::identity(2), &[c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        assert_eq!(x, vec![c(1.0, 0.0), c(0.0, 1.0)]);

        let d = ComplexMatrix::from_real_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]);
        let x = solve(&d, &[c(2.0, 0.0), c(4.0, 0.0)]).unwrap();
        assert_eq!(x, vec![c(1.0, 0.0), c(1.0, 0.0)]);

        let p = ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let x = solve(&p, &[c(3.0, 0.0), c(7.0, 0.0)]).unwrap();
        assert_eq!(x, vec![c(7.0, 0.0), c(3.0, 0.0)]);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let s = ComplexMatrix::from_real_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(
            solve(&s, &[c(1.0, 0.0), c(1.0, 0.0)]),
            Err(NumError::SingularMatrix { column: 1, .. })
        ));
        assert!(matches!(
            solve(&ComplexMatrix::zeros(3), &[c(0.0, 0.0); 3]),
            Err(NumError::SingularMatrix { column: 0, .. })
        ));
    }

    #[test]
    fn spectral_norm_examples() {
        assert_relative_eq!(spectral_norm(&ComplexMatrix::identity(3)), 1.0, max_relative = 1e-12);
        let nil = ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert_relative_eq!(spectral_norm(&nil), 1.0, max_relative = 1e-12);
        // C^dag C = [[1, r], [r, 1]] with r = 1/sqrt(2), so the norm is sqrt(1 + r).
        let r = 0.5f64.sqrt();
        let m = ComplexMatrix::from_real_rows(&[vec![1.0, r], vec![0.0, r]]);
        assert_relative_eq!(spectral_norm(&m), (1.0 + r).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(spectral_norm(&m), 1.30656, max_relative = 1e-5);
    }

    #[test]
    fn row_col_bound_examples() {
        let nil = ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert_eq!(row_col_norm_bound(&nil), 1.0);
        let ones = ComplexMatrix::from_real_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(row_col_norm_bound(&ones), 2.0);
        let shear = ComplexMatrix::from_real_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]);
        assert_eq!(row_col_norm_bound(&shear), 2.0);
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert_relative_eq!(spectral_norm(&shear), golden, max_relative = 1e-12);
    }

    #[test]
    fn svd_extremes_examples() {
        let (hi, lo) = svd_extremes(&ComplexMatrix::identity(2).to_rect()).unwrap();
        assert_relative_eq!(hi, 1.0, max_relative = 1e-12);
        assert_relative_eq!(lo, 1.0, max_relative = 1e-12);

        let r = 0.5f64.sqrt();
        let s = RectMatrix::from_columns(&[
            ComplexVector(vec![c(1.0, 0.0), c(0.0, 0.0)]),
            ComplexVector(vec![c(r, 0.0), c(r, 0.0)]),
        ])
        .unwrap();
        let (hi, lo) = svd_extremes(&s).unwrap();
        assert_relative_eq!(hi, (1.0 + r).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(lo, (1.0 - r).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(hi / lo, 1.0 + 2f64.sqrt(), max_relative = 1e-12);

        let col = RectMatrix::from_columns(&[ComplexVector(vec![c(3.0, 0.0), c(0.0, 0.0)])]).unwrap();
        assert_eq!(svd_extremes(&col).unwrap(), (3.0, 3.0));

        let zero = ComplexMatrix::zeros(2).to_rect();
        assert!(matches!(svd_extremes(&zero), Err(NumError::ZeroMatrix { .. })));
    }

    #[test]
    fn matrix_json_round_trip() {
        let m = ComplexMatrix::from_rows(&[vec![c(1.0, -1.0), c(0.5, 0.0)], vec![c(0.0, 2.0), c(-3.0, 0.25)]]);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"dim":2,"entries":[[1.0,-1.0],[0.5,0.0],[0.0,2.0],[-3.0,0.25]]}"#);
        let back: ComplexMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<ComplexMatrix>(r#"{"dim":2,"entries":[[1.0,0.0]]}"#).is_err());
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let m = ComplexMatrix::from_rows(&[
            vec![c(0.0, 1.0), c(2.0, 0.0), c(0.5, -0.5)],
            vec![c(1.0, 0.0), c(0.0, 0.0), c(3.0, 1.0)],
            vec![c(-2.0, 0.0), c(1.0, 1.0), c(0.0, 0.0)],
        ]);
        let inv = LuFactors::new(&m).unwrap().inverse();
        assert!(m.matmul(&inv).sub(&ComplexMatrix::identity(3)).max_abs() < 1e-14);
    }

    #[test]
    fn det_sum_matches_closed_form() {
        let n = 100_003u64;
        let s = det_sum(0..n, |i| i as f64);
        assert_eq!(s, (n * (n - 1) / 2) as f64);
    }

    #[test]
    fn dual_basis_recovers_coefficients() {
        let r = 0.5f64.sqrt();
        let cols = vec![
            ComplexVector(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
            ComplexVector(vec![c(r, 0.0), c(0.0, r), c(0.0, 0.0)]),
        ];
        let dual = DualBasis::new(&cols).unwrap();
        let beta = vec![c(0.3, -0.2), c(-1.0, 0.5)];
        let v = dual.combine(&beta);
        let back = dual.coefficients(v.as_slice());
        for (a, b) in back.iter().zip(&beta) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn digamma_special_values() {
        let euler = 0.577_215_664_901_532_9;
        assert!((digamma(c(1.0, 0.0)) - c(-euler, 0.0)).norm() < 1e-14);
        let half = -euler - 2.0 * std::f64::consts::LN_2;
        assert!((digamma(c(0.5, 0.0)) - c(half, 0.0)).norm() < 1e-14);
        // Im psi(iy) = 1/(2y) + (pi/2) coth(pi y)
        for y in [0.3, 2.0, 40.0] {
            let pi = std::f64::consts::PI;
            let want = 0.5 / y + 0.5 * pi / (pi * y).tanh();
            assert!((digamma(c(0.0, y)).im - want).abs() < 1e-13 * want.max(1.0));
        }
    }

    #[test]
    fn digamma_conjugate_symmetry() {
        for z in [c(-7.3, -2.0), c(-0.4, 0.8), c(3.0, -50.0)] {
            assert!((digamma(z.conj()) - digamma(z).conj()).norm() < 1e-12 * digamma(z).norm());
        }
    }

    #[test]
    fn digamma_difference_gives_lorentzian_sum() {
        for &(u, v, n) in &[(-400.3, 2.7, 1000u64), (-3.2e6, 1.5e3, 1u64 << 23), (5.0, 0.01, 300)] {
            let direct: f64 = (0..n).map(|j| 1.0 / ((j as f64 + u).powi(2) + v * v)).sum();
            let exact = (digamma(c(u, v)).im - digamma(c(u + n as f64, v)).im) / v;
            assert_relative_eq!(direct, exact, max_relative = 1e-10);
        }
    }
}
