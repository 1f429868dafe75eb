//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are row-major `Complex64` buffers. Nothing here knows about radar;
//! the array model and estimators build on these primitives.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Relative pivot magnitude below which a factorization is declared singular.
pub const SINGULAR_RTOL: f64 = 1e-13;

/// Dense complex vector.
#[derive(Clone, PartialEq, Default)]
pub struct CVector {
    data: Vec<C64>,
}

impl CVector {
    pub fn from_vec(data: Vec<C64>) -> Self {
        Self { data }
    }

    pub fn zeros(len: usize) -> Self {
        Self { data: vec![ZERO; len] }
    }

    /// Unit vector `e_index` of the given length.
    pub fn unit(len: usize, index: usize) -> Self {
        let mut v = Self::zeros(len);
        v.data[index] = ONE;
        v
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self { data: values.iter().map(|&x| C64::new(x, 0.0)).collect() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, C64> {
        self.data.iter()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Hermitian inner product `selfᴴ·other`.
    pub fn dot(&self, other: &CVector) -> C64 {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn scale(&self, s: C64) -> CVector {
        Self { data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn sub(&self, other: &CVector) -> CVector {
        assert_eq!(self.len(), other.len(), "sub: length mismatch");
        Self { data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn add(&self, other: &CVector) -> CVector {
        assert_eq!(self.len(), other.len(), "add: length mismatch");
        Self { data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn conj(&self) -> CVector {
        Self { data: self.data.iter().map(|z| z.conj()).collect() }
    }

    /// Kronecker product of two column vectors.
    pub fn kron(&self, other: &CVector) -> CVector {
        let mut out = Vec::with_capacity(self.len() * other.len());
        for a in &self.data {
            out.extend(other.data.iter().map(|b| a * b));
        }
        Self { data: out }
    }

    /// View as an `len × 1` matrix.
    pub fn to_column(&self) -> CMatrix {
        CMatrix { rows: self.len().max(1), cols: 1, data: self.data.clone() }
    }

    /// Largest elementwise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &CVector) -> f64 {
        assert_eq!(self.len(), other.len());
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

impl Index<usize> for CVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for CVector {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.data[i]
    }
}

impl fmt::Debug for CVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.iter()).finish()
    }
}

impl From<Vec<C64>> for CVector {
    fn from(data: Vec<C64>) -> Self {
        Self { data }
    }
}

impl FromIterator<C64> for CVector {
    fn from_iter<I: IntoIterator<Item = C64>>(iter: I) -> Self {
        Self { data: iter.into_iter().collect() }
    }
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("matrix must be at least 1x1, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix must be at least 1x1");
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_columns(columns: &[CVector]) -> Self {
        let rows = columns[0].len();
        let mut m = Self::zeros(rows, columns.len());
        for (j, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), rows, "from_columns: ragged input");
            m.set_column(j, col);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [C64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> CVector {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &CVector) {
        assert_eq!(v.len(), self.rows);
        for i in 0..self.rows {
            self.data[i * self.cols + j] = v[i];
        }
    }

    pub fn diag(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> CMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn conj(&self) -> CMatrix {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), other.shape(), "add: shape mismatch");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), other.shape(), "sub: shape mismatch");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    /// `self += s·other`
    pub fn add_scaled_assign(&mut self, s: C64, other: &CMatrix) {
        assert_eq!(self.shape(), other.shape(), "add_scaled_assign: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "matmul: inner dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        let n = other.cols;
        for i in 0..self.rows {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᴴ·other` without materializing the adjoint.
    pub fn adjoint_matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.rows, other.rows, "adjoint_matmul: row mismatch");
        let mut out = Self::zeros(self.cols, other.cols);
        let n = other.cols;
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, a) in a_row.iter().enumerate() {
                let a = a.conj();
                if a == ZERO {
                    continue;
                }
                let out_row = &mut out.data[i * n..(i + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &CVector) -> CVector {
        assert_eq!(self.cols, v.len(), "mul_vec: dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v.iter()).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    pub fn trace(&self) -> C64 {
        self.diag().into_iter().sum()
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (i..self.cols).all(|j| (self[(i, j)] - self[(j, i)].conj()).norm() <= tol))
    }

    /// Replace with `(A + Aᴴ)/2`.
    pub fn hermitize(&mut self) {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        for i in 0..n {
            let d = self[(i, i)].re;
            self[(i, i)] = C64::new(d, 0.0);
            for j in (i + 1)..n {
                let avg = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
                self[(i, j)] = avg;
                self[(j, i)] = avg.conj();
            }
        }
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Kronecker product.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(a.rows() * br, a.cols() * bc);
    for i1 in 0..a.rows() {
        for j1 in 0..a.cols() {
            let s = a[(i1, j1)];
            for i2 in 0..br {
                for j2 in 0..bc {
                    out[(i1 * br + i2, j1 * bc + j2)] = s * b[(i2, j2)];
                }
            }
        }
    }
    out
}

/// Column-stacking vectorization.
pub fn vec(a: &CMatrix) -> CVector {
    let mut out = Vec::with_capacity(a.rows() * a.cols());
    for j in 0..a.cols() {
        for i in 0..a.rows() {
            out.push(a[(i, j)]);
        }
    }
    CVector::from_vec(out)
}

/// Complex symmetric (not Hermitian) Toeplitz matrix with `(m, m') = first_row[|m − m'|]`.
pub fn toeplitz_symmetric(first_row: &CVector) -> CMatrix {
    let n = first_row.len();
    assert!(n >= 1, "toeplitz_symmetric: empty first row");
    CMatrix::from_fn(n, n, |i, j| first_row[i.abs_diff(j)])
}

/// LU factorization with partial pivoting, `P·A = L·U` packed in one buffer.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: Vec<C64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &CMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::Dimension(format!("LU needs a square matrix, got {}x{}", a.rows(), a.cols())));
        }
        let n = a.rows();
        let threshold = SINGULAR_RTOL * a.frobenius_norm();
        let mut lu = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot_abs) = (k..n)
                .map(|i| (i, lu[i * n + k].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot_abs >= threshold) || pivot_abs == 0.0 {
                return Err(Error::SingularMatrix { pivot: pivot_abs, threshold });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let inv_pivot = ONE / lu[k * n + k];
            for i in (k + 1)..n {
                let factor = lu[i * n + k] * inv_pivot;
                lu[i * n + k] = factor;
                if factor == ZERO {
                    continue;
                }
                let (upper, lower) = lu.split_at_mut(i * n);
                let pivot_row = &upper[k * n + k + 1..k * n + n];
                for (x, u) in lower[k + 1..n].iter_mut().zip(pivot_row) {
                    *x -= factor * u;
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_vec(&self, b: &CVector) -> CVector {
        assert_eq!(b.len(), self.n, "LU solve: rhs length mismatch");
        let n = self.n;
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: C64 = row.iter().zip(&x[..i]).map(|(l, y)| l * y).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s: C64 = row.iter().zip(&x[i + 1..]).map(|(u, y)| u * y).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        CVector::from_vec(x)
    }

    /// Solve for every column of `b` at once.
    pub fn solve_mat(&self, b: &CMatrix) -> CMatrix {
        assert_eq!(b.rows(), self.n, "LU solve: rhs row mismatch");
        let n = self.n;
        let m = b.cols();
        let mut x = CMatrix::zeros(n, m);
        for (i, &p) in self.perm.iter().enumerate() {
            x.row_mut(i).copy_from_slice(b.row(p));
        }
        let data = x.as_mut_slice();
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[i * n + k];
                if l == ZERO {
                    continue;
                }
                let (head, tail) = data.split_at_mut(i * m);
                let src = &head[k * m..(k + 1) * m];
                for (d, s) in tail[..m].iter_mut().zip(src) {
                    *d -= l * s;
                }
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let u = self.lu[i * n + k];
                if u == ZERO {
                    continue;
                }
                let (head, tail) = data.split_at_mut(k * m);
                let dst = &mut head[i * m..(i + 1) * m];
                for (d, s) in dst.iter_mut().zip(&tail[..m]) {
                    *d -= u * s;
                }
            }
            let inv = ONE / self.lu[i * n + i];
            for d in &mut data[i * m..(i + 1) * m] {
                *d *= inv;
            }
        }
        x
    }

    pub fn inverse(&self) -> CMatrix {
        self.solve_mat(&CMatrix::identity(self.n))
    }
}

/// Solve `a·x = b` by partial-pivoted LU.
pub fn solve(a: &CMatrix, b: &CVector) -> Result<CVector> {
    if b.len() != a.rows() {
        return Err(Error::Dimension(format!("rhs length {} does not match {} rows", b.len(), a.rows())));
    }
    Ok(Lu::factor(a)?.solve_vec(b))
}

/// Circularly symmetric complex Gaussian samples with total per-entry variance `variance`.
pub fn sample_cgauss<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> CVector {
    assert!(variance > 0.0, "sample_cgauss: variance must be positive");
    let sd = (variance / 2.0).sqrt();
    (0..len)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(sd * re, sd * im)
        })
        .collect()
}

/// Eigen-decomposition of a Hermitian matrix: eigenvalues ascending, eigenvectors as columns.
pub fn hermitian_eigen(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if a.rows() != a.cols() {
        return Err(Error::Dimension("eigen-decomposition needs a square matrix".into()));
    }
    let n = a.rows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[(i, j)]);
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<Vec<[f64; 2]>>,
}

impl Serialize for CMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let data = (0..self.rows).map(|i| self.row(i).iter().map(|z| [z.re, z.im]).collect()).collect();
        MatrixRepr { rows: self.rows, cols: self.cols, data }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = MatrixRepr::deserialize(deserializer)?;
        if repr.data.len() != repr.rows || repr.data.iter().any(|r| r.len() != repr.cols) {
            return Err(D::Error::custom(format!(
                "matrix data does not match declared shape {}x{}",
                repr.rows, repr.cols
            )));
        }
        let flat = repr.data.into_iter().flatten().map(|[re, im]| C64::new(re, im)).collect();
        CMatrix::new(repr.rows, repr.cols, flat).map_err(D::Error::custom)
    }
}

impl Serialize for CVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.data.iter().map(|z| [z.re, z.im]))
    }
}

impl<'de> Deserialize<'de> for CVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(deserializer)?;
        Ok(pairs.into_iter().map(|[re, im]| C64::new(re, im)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
        CMatrix::new(rows, cols, sample_cgauss(rng, rows * cols, 1.0).into_vec()).unwrap()
    }

    fn random_vector(rng: &mut ChaCha8Rng, len: usize) -> CVector {
        sample_cgauss(rng, len, 1.0)
    }

    #[test]
    fn kron_of_identities_is_identity() {
        assert_eq!(kron(&CMatrix::identity(2), &CMatrix::identity(3)), CMatrix::identity(6));
    }

    #[test]
    fn kron_with_scalar_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_matrix(&mut rng, 3, 4);
        let two = CMatrix::new(1, 1, vec![c(2.0, 0.0)]).unwrap();
        assert_eq!(kron(&two, &b), b.scale(c(2.0, 0.0)));
    }

    #[test]
    fn kron_mixed_product_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 3, 3);
        let b = random_matrix(&mut rng, 3, 3);
        let x = random_vector(&mut rng, 3);
        let y = random_vector(&mut rng, 3);
        let lhs = kron(&a, &b).mul_vec(&x.kron(&y));
        let rhs = a.mul_vec(&x).kron(&b.mul_vec(&y));
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn kron_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 2, 3);
            let b = random_matrix(&mut rng, 3, 2);
            let cm = random_matrix(&mut rng, 2, 2);
            let l = kron(&kron(&a, &b), &cm);
            let r = kron(&a, &kron(&b, &cm));
            assert!(l.max_abs_diff(&r) < 1e-12);
        }
    }

    #[test]
    fn vec_stacks_columns() {
        let a = CMatrix::from_fn(2, 2, |i, j| c((1 + i + 2 * j) as f64, 0.0));
        let v = vec(&a);
        assert_eq!(v, CVector::from_real(&[1.0, 2.0, 3.0, 4.0]));
        let s = CMatrix::new(1, 1, vec![c(5.0, -1.0)]).unwrap();
        assert_eq!(vec(&s).as_slice(), &[c(5.0, -1.0)]);
    }

    #[test]
    fn vec_of_outer_product_is_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_vector(&mut rng, 4);
        let y = random_vector(&mut rng, 4);
        let outer = x.to_column().matmul(&y.to_column().transpose());
        assert!(vec(&outer).max_abs_diff(&y.kron(&x)) < 1e-12);
    }

    #[test]
    fn vec_of_triple_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 3, 3);
            let x = random_matrix(&mut rng, 3, 3);
            let b = random_matrix(&mut rng, 3, 3);
            let lhs = vec(&a.matmul(&x).matmul(&b));
            let rhs = kron(&b.transpose(), &a).mul_vec(&vec(&x));
            assert!(lhs.max_abs_diff(&rhs) < 1e-10);
        }
    }

    #[test]
    fn toeplitz_layout_and_symmetry() {
        let row = CVector::from_vec(vec![ONE, c(0.3, 0.1), c(-0.2, 0.4)]);
        let t = toeplitz_symmetric(&row);
        let expected = CMatrix::from_fn(3, 3, |i, j| [ONE, c(0.3, 0.1), c(-0.2, 0.4)][i.abs_diff(j)]);
        assert_eq!(t, expected);
        assert_eq!(toeplitz_symmetric(&CVector::from_vec(vec![ONE])), CMatrix::identity(1));

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t6 = toeplitz_symmetric(&random_vector(&mut rng, 6));
        assert_eq!(t6, t6.transpose());
    }

    #[test]
    fn solve_trivial_systems() {
        let b = CVector::from_vec(vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 1.0)]);
        assert_eq!(solve(&CMatrix::identity(3), &b).unwrap(), b);
        let d = CMatrix::from_diag(&[c(2.0, 0.0), c(4.0, 0.0)]);
        let x = solve(&d, &CVector::from_real(&[2.0, 4.0])).unwrap();
        assert!(x.max_abs_diff(&CVector::from_real(&[1.0, 1.0])) < 1e-15);
    }

    #[test]
    fn solve_residual_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 5, 8, 8, 8] {
            let a = random_matrix(&mut rng, n, n).add(&CMatrix::identity(n).scale(c(n as f64, 0.0)));
            let b = random_vector(&mut rng, n);
            let x = solve(&a, &b).unwrap();
            let resid = a.mul_vec(&x).sub(&b).norm();
            assert!(resid <= 1e-9 * (a.frobenius_norm() * x.norm() + b.norm()));
        }
    }

    #[test]
    fn solve_detects_singular() {
        let a = CMatrix::from_fn(3, 3, |i, j| c((i + 1) as f64 * (j + 1) as f64, 0.0));
        assert!(matches!(solve(&a, &CVector::zeros(3)), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn lu_solve_mat_matches_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_matrix(&mut rng, 6, 6);
        let b = random_matrix(&mut rng, 6, 3);
        let lu = Lu::factor(&a).unwrap();
        let x = lu.solve_mat(&b);
        for j in 0..3 {
            assert!(x.column(j).max_abs_diff(&lu.solve_vec(&b.column(j))) < 1e-12);
        }
        let inv = lu.inverse();
        assert!(a.matmul(&inv).max_abs_diff(&CMatrix::identity(6)) < 1e-10);
    }

    #[test]
    fn cgauss_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for variance in [1.0, 4.0] {
            let s = sample_cgauss(&mut rng, 1_000_000, variance);
            let mean: C64 = s.iter().sum::<C64>() / s.len() as f64;
            let var = s.norm_sqr() / s.len() as f64;
            assert!(mean.norm() < 5e-3 * variance.sqrt(), "mean {mean}");
            assert!((var / variance - 1.0).abs() < 0.01, "variance {var}");
            let re_var = s.iter().map(|z| z.re * z.re).sum::<f64>() / s.len() as f64;
            assert!((re_var / (variance / 2.0) - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn cgauss_is_deterministic_per_seed() {
        let a = sample_cgauss(&mut ChaCha8Rng::seed_from_u64(11), 64, 1.0);
        let b = sample_cgauss(&mut ChaCha8Rng::seed_from_u64(11), 64, 1.0);
        assert_eq!(a, b);
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_matrix(&mut rng, 5, 5);
        let h = x.adjoint_matmul(&x);
        let (vals, vecs) = hermitian_eigen(&h).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let recon = vecs.matmul(&CMatrix::from_diag(&vals.iter().map(|&v| c(v, 0.0)).collect::<Vec<_>>())).matmul(&vecs.adjoint());
        assert!(recon.max_abs_diff(&h) < 1e-10);
    }

    #[test]
    fn adjoint_matmul_matches_explicit() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_matrix(&mut rng, 7, 4);
        let b = random_matrix(&mut rng, 7, 3);
        assert!(a.adjoint_matmul(&b).max_abs_diff(&a.adjoint().matmul(&b)) < 1e-12);
    }

    #[test]
    fn matrix_json_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let a = random_matrix(&mut rng, 3, 2);
        let s = serde_json::to_string(&a).unwrap();
        let back: CMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(a, back);
        assert!(serde_json::from_str::<CMatrix>(r#"{"rows":2,"cols":1,"data":[[[1,0]]]}"#).is_err());
    }
}
