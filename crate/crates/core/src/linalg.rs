//! Dense linear-algebra kernels: a row-major `Matrix`, Gram-Schmidt
//! orthonormalization, null-space projection, PCA via cyclic Jacobi, and
//! seeded random orthogonal matrices.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub type Vector = Vec<f64>;

/// Dense row-major `f64` matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{} values", rows * cols),
                format!("{} values", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. An empty slice gives a 0×0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(
                    "Matrix::from_rows",
                    format!("{cols} columns"),
                    format!("{} columns in row {i}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Matrix with i.i.d. standard-normal entries drawn from a seeded stream.
    pub fn random_normal(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn column(&self, c: usize) -> Vector {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Matrix {
        let k = k.min(self.cols);
        Matrix::from_fn(self.rows, k, |r, c| self[(r, c)])
    }

    /// `self · other`
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!("{} rows on the right", self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), out_row);
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::shape(
                "matmul_tn",
                format!("{} rows on the right", self.rows),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let b_row = other.row(r);
            for (i, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, b_row, &mut out.data[i * other.cols..(i + 1) * other.cols]);
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::shape(
                "matmul_nt",
                format!("{} columns on the right", self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a_row, other.row(j));
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                "sub",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn column_means(&self) -> Vector {
        let mut mean = vec![0.0; self.cols];
        for row in self.row_iter() {
            axpy(1.0, row, &mut mean);
        }
        if self.rows > 0 {
            let n = self.rows as f64;
            mean.iter_mut().for_each(|m| *m /= n);
        }
        mean
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows > 0 && other.rows > 0 && self.cols != other.cols {
            return Err(Error::shape("vstack", self.cols, other.cols));
        }
        let cols = if self.rows > 0 { self.cols } else { other.cols };
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols,
            data,
        })
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthonormal basis for the column space of `w` via modified Gram-Schmidt
/// with one re-orthogonalization pass.
///
/// Columns whose residual falls below `1e-10 ×` the largest input column
/// norm are dropped, so the result is `D × rank(w)`. An all-zero input gives
/// a `D × 0` matrix.
pub fn orthonormalize_columns(w: &Matrix) -> Matrix {
    let (basis, _) = gram_schmidt(w, RANK_DROP_TOL);
    let d = w.rows();
    Matrix::from_fn(d, basis.len(), |r, c| basis[c][r])
}

const RANK_DROP_TOL: f64 = 1e-10;

/// Returns the accepted orthonormal columns and, for each input column,
/// the residual norm before normalization (the diagonal of R).
fn gram_schmidt(w: &Matrix, rel_tol: f64) -> (Vec<Vector>, Vec<f64>) {
    let max_norm = (0..w.cols()).map(|c| norm(&w.column(c))).fold(0.0, f64::max);
    let mut basis: Vec<Vector> = Vec::with_capacity(w.cols());
    let mut diag = Vec::with_capacity(w.cols());
    if max_norm == 0.0 {
        return (basis, vec![0.0; w.cols()]);
    }
    for c in 0..w.cols() {
        let mut v = w.column(c);
        for _ in 0..2 {
            for q in &basis {
                let proj = dot(q, &v);
                axpy(-proj, q, &mut v);
            }
        }
        let n = norm(&v);
        diag.push(n);
        if n > rel_tol * max_norm {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    (basis, diag)
}

/// `H − H Q Qᵀ`: removes from every row of `h` its component in `span(Q)`.
pub fn nullspace_project(h: &Matrix, q: &Matrix) -> Result<Matrix> {
    if q.rows() != h.cols() {
        return Err(Error::shape(
            "nullspace_project",
            format!("basis with {} rows", h.cols()),
            format!("{}x{}", q.rows(), q.cols()),
        ));
    }
    if q.cols() == 0 {
        return Ok(h.clone());
    }
    let coords = h.matmul(q)?;
    let inside = coords.matmul_nt(q)?;
    h.sub(&inside)
}

/// Result of a symmetric eigendecomposition, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vector,
    /// Row `i` is the unit eigenvector for `values[i]`.
    pub vectors: Matrix,
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps stop once the off-diagonal Frobenius mass drops below `1e-12 ×`
/// the full Frobenius norm, or after 100 sweeps.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape(
            "symmetric_eigen",
            "square matrix",
            format!("{:?}", a.shape()),
        ));
    }
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let total: f64 = m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= JACOBI_TOL * total || total == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps index order among equal eigenvalues
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(c, order[r])]);
    Ok(SymmetricEigen { values, vectors })
}

/// Flips `v` so its entry of largest magnitude (first one on ties) is positive.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Sample covariance with `1/N` normalization, and the column mean.
pub fn covariance(h: &Matrix) -> (Vector, Matrix) {
    let mean = h.column_means();
    let mut centered = h.clone();
    for r in 0..centered.rows() {
        axpy(-1.0, &mean, centered.row_mut(r));
    }
    let mut cov = centered
        .matmul_tn(&centered)
        .expect("centered matrix is conformable with itself");
    if h.rows() > 0 {
        cov.scale(1.0 / h.rows() as f64);
    }
    (mean, cov)
}

/// Top principal components of the rows of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vector,
    /// `s × D`, unit rows in descending variance order.
    pub directions: Matrix,
    /// Standard deviation of the data along each direction.
    pub stds: Vector,
}

pub fn top_pca(h: &Matrix, s: usize) -> Result<Pca> {
    let (n, d) = h.shape();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 rows, got {n}"
        )));
    }
    if s == 0 || s > (n - 1).min(d) {
        return Err(Error::InvalidArgument(format!(
            "cannot take {s} principal directions from {n} rows in dimension {d}"
        )));
    }
    let (mean, cov) = covariance(h);
    let trace: f64 = (0..d).map(|i| cov[(i, i)]).sum();
    let scale = h.as_slice().iter().map(|x| x * x).sum::<f64>() / n as f64;
    if trace <= 1e-24 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateCovariance);
    }
    let eig = symmetric_eigen(&cov)?;
    let mut directions = Matrix::zeros(s, d);
    for i in 0..s {
        let row = directions.row_mut(i);
        row.copy_from_slice(eig.vectors.row(i));
        fix_sign(row);
    }
    let stds = eig.values[..s].iter().map(|&l| l.max(0.0).sqrt()).collect();
    Ok(Pca {
        mean,
        directions,
        stds,
    })
}

/// Seeded random `s × s` orthogonal matrix: Gram-Schmidt on a standard-normal
/// draw, then columns flipped so the diagonal is non-negative.
pub fn random_orthogonal(s: usize, seed: u64) -> Matrix {
    let mut attempt = 0u64;
    loop {
        let draw_seed = if attempt == 0 {
            seed
        } else {
            seed::derive_seed(seed, &["redraw".into(), attempt.into()])
        };
        let g = Matrix::random_normal(s, s, draw_seed);
        let (mut basis, _) = gram_schmidt(&g, 1e-8);
        if basis.len() == s {
            // diag(Q) ≥ 0 after flipping columns; s = 1 gives exactly (1).
            for (c, col) in basis.iter_mut().enumerate() {
                if col[c] < 0.0 {
                    col.iter_mut().for_each(|v| *v = -*v);
                }
            }
            return Matrix::from_fn(s, s, |r, c| basis[c][r]);
        }
        attempt += 1;
    }
}
