//! Dense symmetric linear algebra shared by every embedding method.
//!
//! All methods in this crate reduce to the symmetric-definite generalized
//! eigenproblem `P w = λ Q w`. [`solve_gep`] handles it by a Cholesky
//! reduction to a standard symmetric problem, so symmetry is preserved end to
//! end and no nonsymmetric eigensolver is needed.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Dense real matrix. Data matrices are stored features × samples.
pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default ridge factor applied to the metric matrix, relative to its mean
/// diagonal.
pub const DEFAULT_DELTA: f64 = 1e-6;

/// Relative tolerance used when checking symmetry of solver inputs.
pub const SYMMETRY_TOL: f64 = 1e-9;

pub(crate) fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        invalid(format!("{what} contains non-finite entries"))
    }
}

pub(crate) fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Whether `m` is square and symmetric to `tol` relative to its largest entry.
pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(1.0);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Per-row means of a features × samples matrix.
pub fn row_means(x: &Matrix) -> Vector {
    let n = x.ncols() as f64;
    Vector::from_iterator(x.nrows(), x.row_iter().map(|r| r.sum() / n))
}

/// Subtracts `mean` from every column of `x`.
pub fn subtract_mean(x: &Matrix, mean: &Vector) -> Matrix {
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        col -= mean;
    }
    out
}

/// Returns `X - mean(X)`, removing the per-feature mean across samples.
pub fn center_data(x: &Matrix) -> Result<Matrix> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return invalid("cannot center an empty matrix");
    }
    ensure_finite(x, "data matrix")?;
    Ok(subtract_mean(x, &row_means(x)))
}

/// Cross-view covariance `(1/N) X̄_i X̄_jᵀ`.
pub fn covariance_block(xi: &Matrix, xj: &Matrix) -> Result<Matrix> {
    if xi.ncols() != xj.ncols() {
        return invalid(format!(
            "views have different sample counts ({} vs {})",
            xi.ncols(),
            xj.ncols()
        ));
    }
    let n = xi.ncols() as f64;
    let ci = center_data(xi)?;
    let cj = center_data(xj)?;
    Ok(ci * cj.transpose() / n)
}

/// Top-d solution of a generalized eigenproblem.
///
/// `w` stacks the per-view projections row-wise; `view_offsets` has one more
/// entry than there are views and delimits the rows of each `W_v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSolution {
    #[serde(with = "crate::serial::matrix")]
    pub w: Matrix,
    pub view_offsets: Vec<usize>,
    pub eigenvalues: Vec<f64>,
    pub rho: f64,
}

impl EigenSolution {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn num_views(&self) -> usize {
        self.view_offsets.len().saturating_sub(1)
    }

    /// Rows of `W` belonging to view `v`.
    pub fn view_block(&self, v: usize) -> Matrix {
        let start = self.view_offsets[v];
        let end = self.view_offsets[v + 1];
        self.w.rows(start, end - start).into_owned()
    }

    /// Re-partitions the rows of `W` into views.
    pub fn with_offsets(mut self, offsets: Vec<usize>) -> Result<Self> {
        let ok = offsets.first() == Some(&0)
            && offsets.last() == Some(&self.w.nrows())
            && offsets.windows(2).all(|w| w[0] <= w[1]);
        if !ok {
            return invalid("view offsets do not partition the projection rows");
        }
        self.view_offsets = offsets;
        Ok(self)
    }
}

/// `Q + delta * (trace(Q) / n) * I`.
pub fn regularize(q: &Matrix, delta: f64) -> Matrix {
    let n = q.nrows();
    let ridge = if n == 0 { 0.0 } else { delta * q.trace() / n as f64 };
    let mut out = q.clone();
    for i in 0..n {
        out[(i, i)] += ridge;
    }
    out
}

/// Flips `v` so that its entry of largest magnitude is positive.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

/// Sorts eigenpairs by decreasing eigenvalue, breaking exact ties by the
/// lexicographic order of the (sign-fixed) vectors, larger first.
fn order_pairs(values: &[f64], vectors: &[Vec<f64>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .total_cmp(&values[a])
            .then_with(|| lexicographic(&vectors[b], &vectors[a]))
    });
    idx
}

/// Full symmetric eigendecomposition, eigenvalues non-increasing and
/// eigenvector signs fixed. Returns `(values, vectors as columns)`.
pub fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if !is_symmetric(m, SYMMETRY_TOL) {
        return invalid("matrix is not symmetric");
    }
    ensure_finite(m, "matrix")?;
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = m.nrows();
    let vectors: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
            fix_sign(&mut v);
            v
        })
        .collect();
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = order_pairs(&values, &vectors);
    let mut out = Matrix::zeros(n, n);
    let mut sorted = Vec::with_capacity(n);
    for (col, &k) in order.iter().enumerate() {
        sorted.push(values[k]);
        out.set_column(col, &Vector::from_column_slice(&vectors[k]));
    }
    Ok((sorted, out))
}

/// Solves `P w = λ Q̃ w` for the `d` algebraically largest eigenvalues, where
/// `Q̃ = Q + delta·(trace(Q)/n)·I`.
///
/// `Q̃` is Cholesky-factored as `L Lᵀ`, the symmetric matrix `L⁻¹ P L⁻ᵀ` is
/// diagonalized, and eigenvectors are mapped back with `L⁻ᵀ`. Returned
/// vectors satisfy `wᵀ Q̃ w = 1`. `P` may be indefinite.
pub fn solve_gep(p: &Matrix, q: &Matrix, d: usize, delta: f64) -> Result<EigenSolution> {
    let n = p.nrows();
    if !p.is_square() || q.shape() != p.shape() {
        return invalid(format!(
            "P ({}x{}) and Q ({}x{}) must be square and of equal size",
            p.nrows(),
            p.ncols(),
            q.nrows(),
            q.ncols()
        ));
    }
    if d == 0 || d > n {
        return invalid(format!("requested {d} eigenpairs from a problem of size {n}"));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return invalid(format!("regularization delta must be non-negative, got {delta}"));
    }
    ensure_finite(p, "P")?;
    ensure_finite(q, "Q")?;
    if !is_symmetric(p, SYMMETRY_TOL) {
        return invalid("P is not symmetric");
    }
    if !is_symmetric(q, SYMMETRY_TOL) {
        return invalid("Q is not symmetric");
    }

    let q_reg = regularize(&((q + q.transpose()) * 0.5), delta);
    let chol = cholesky_lower(&q_reg)?;
    let p_sym = (p + p.transpose()) * 0.5;

    // C = L⁻¹ P L⁻ᵀ
    let y = chol
        .solve_lower_triangular(&p_sym)
        .ok_or(Error::SingularMetric { pivot: 0 })?;
    let c = chol
        .solve_lower_triangular(&y.transpose())
        .ok_or(Error::SingularMetric { pivot: 0 })?;
    let c = (&c + c.transpose()) * 0.5;

    let eig = SymmetricEigen::new(c);
    let lt = chol.transpose();
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for j in 0..n {
        let u = eig.eigenvectors.column(j).into_owned();
        let w = lt
            .solve_upper_triangular(&u)
            .ok_or(Error::SingularMetric { pivot: 0 })?;
        let mut w: Vec<f64> = w.iter().copied().collect();
        fix_sign(&mut w);
        values.push(eig.eigenvalues[j]);
        vectors.push(w);
    }
    let order = order_pairs(&values, &vectors);

    let mut w = Matrix::zeros(n, d);
    let mut eigenvalues = Vec::with_capacity(d);
    for (col, &k) in order.iter().take(d).enumerate() {
        eigenvalues.push(values[k]);
        w.set_column(col, &Vector::from_column_slice(&vectors[k]));
    }
    let rho = eigenvalues.iter().sum();
    Ok(EigenSolution {
        w,
        view_offsets: vec![0, n],
        eigenvalues,
        rho,
    })
}

/// Lower Cholesky factor, reporting the failing pivot.
fn cholesky_lower(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::SingularMetric { pivot: j });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Principal component projection fitted on a features × samples matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    #[serde(with = "crate::serial::vector")]
    pub mean: Vector,
    #[serde(with = "crate::serial::matrix")]
    pub basis: Matrix,
    pub explained: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `basisᵀ (X - mean)`.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.nrows() != self.input_dim() {
            return invalid(format!(
                "PCA expects {} features, got {}",
                self.input_dim(),
                x.nrows()
            ));
        }
        Ok(self.basis.transpose() * subtract_mean(x, &self.mean))
    }

    /// Maps component scores back to feature space.
    pub fn reconstruct(&self, scores: &Matrix) -> Matrix {
        let mut out = &self.basis * scores;
        for mut col in out.column_iter_mut() {
            col += &self.mean;
        }
        out
    }
}

/// Keeps the top-`k` eigenvectors of the sample covariance of `x`.
pub fn pca_fit(x: &Matrix, k: usize) -> Result<PcaModel> {
    let (dim, n) = x.shape();
    if k == 0 || k > dim.min(n) {
        return invalid(format!(
            "PCA dimension {k} outside 1..={} for a {dim}x{n} matrix",
            dim.min(n)
        ));
    }
    let mean = row_means(x);
    let cov = covariance_block(x, x)?;
    let (values, vectors) = symmetric_eigen(&cov)?;
    Ok(PcaModel {
        mean,
        basis: vectors.columns(0, k).into_owned(),
        explained: values.iter().take(k).map(|v| v.max(0.0)).collect(),
    })
}
