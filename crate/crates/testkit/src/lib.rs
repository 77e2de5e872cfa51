//! Reference computations for tests.
//!
//! Everything here is written from first principles with plain loops and a
//! cyclic Jacobi eigensolver, so that the library's results can be checked
//! against code that shares none of its numerical paths.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal entries.
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `A Aᵀ + shift·I` for a random square `A`.
pub fn random_spd(rng: &mut impl Rng, n: usize, shift: f64) -> Matrix {
    let a = random_matrix(rng, n, n);
    &a * a.transpose() + Matrix::identity(n, n) * shift
}

pub fn random_symmetric(rng: &mut impl Rng, n: usize) -> Matrix {
    let a = random_matrix(rng, n, n);
    (&a + a.transpose()) * 0.5
}

/// Two views sharing a `k`-dimensional latent plus independent noise.
pub fn correlated_views(rng: &mut impl Rng, n: usize, d1: usize, d2: usize, k: usize, noise: f64) -> (Matrix, Matrix) {
    let z = random_matrix(rng, k, n);
    let a1 = random_matrix(rng, d1, k);
    let a2 = random_matrix(rng, d2, k);
    let x1 = &a1 * &z + random_matrix(rng, d1, n) * noise;
    let x2 = &a2 * &z + random_matrix(rng, d2, n) * noise;
    (x1, x2)
}

/// Eigenpairs of a symmetric matrix by cyclic Jacobi rotations, eigenvalues
/// descending, eigenvectors as columns.
pub fn jacobi_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "square input required");
    let mut m = a.clone();
    let mut v = Matrix::identity(n, n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-32 * scale {
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
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).unwrap());
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// `A^{-1/2}` of a symmetric positive definite matrix.
pub fn inverse_sqrt(a: &Matrix) -> Matrix {
    let (vals, vecs) = jacobi_eigen(a);
    let n = a.nrows();
    let mut out = Matrix::zeros(n, n);
    for (k, &l) in vals.iter().enumerate() {
        assert!(l > 0.0, "matrix is not positive definite");
        let u = vecs.column(k);
        out += (u * u.transpose()) / l.sqrt();
    }
    out
}

/// `(1/N) Σ_n (x_n - x̄)(y_n - ȳ)ᵀ` with explicit loops.
pub fn naive_covariance(x: &Matrix, y: &Matrix) -> Matrix {
    let n = x.ncols();
    assert_eq!(n, y.ncols());
    let mx: Vec<f64> = (0..x.nrows()).map(|r| (0..n).map(|c| x[(r, c)]).sum::<f64>() / n as f64).collect();
    let my: Vec<f64> = (0..y.nrows()).map(|r| (0..n).map(|c| y[(r, c)]).sum::<f64>() / n as f64).collect();
    let mut out = Matrix::zeros(x.nrows(), y.nrows());
    for a in 0..x.nrows() {
        for b in 0..y.nrows() {
            let mut s = 0.0;
            for c in 0..n {
                s += (x[(a, c)] - mx[a]) * (y[(b, c)] - my[b]);
            }
            out[(a, b)] = s / n as f64;
        }
    }
    out
}

/// Canonical correlations of two views, descending: singular values of
/// `Σ₁₁^{-1/2} Σ₁₂ Σ₂₂^{-1/2}`.
pub fn canonical_correlations(x1: &Matrix, x2: &Matrix) -> Vec<f64> {
    let s11 = naive_covariance(x1, x1);
    let s22 = naive_covariance(x2, x2);
    let s12 = naive_covariance(x1, x2);
    let t = inverse_sqrt(&s11) * s12 * inverse_sqrt(&s22);
    let (vals, _) = jacobi_eigen(&(&t * t.transpose()));
    vals.into_iter().map(|l| l.max(0.0).sqrt()).collect()
}

/// Pearson correlation of two equal-length sequences.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    assert!(n > 0);
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean Euclidean distance over all unordered column pairs.
pub fn mean_pairwise_distance(x: &Matrix) -> f64 {
    let n = x.ncols();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d2 = 0.0;
            for r in 0..x.nrows() {
                d2 += (x[(r, i)] - x[(r, j)]).powi(2);
            }
            sum += d2.sqrt();
            count += 1;
        }
    }
    sum / count as f64
}

/// `exp(-‖x_i - x_j‖² / (2σ²))` entry by entry.
pub fn rbf_gram(x: &Matrix, sigma: f64) -> Matrix {
    let n = x.ncols();
    Matrix::from_fn(n, n, |i, j| {
        let mut d2 = 0.0;
        for r in 0..x.nrows() {
            d2 += (x[(r, i)] - x[(r, j)]).powi(2);
        }
        (-d2 / (2.0 * sigma * sigma)).exp()
    })
}

/// Central differences of a scalar function with respect to every entry.
pub fn central_difference(f: impl Fn(&Matrix) -> f64, x: &Matrix, step: f64) -> Matrix {
    let mut g = Matrix::zeros(x.nrows(), x.ncols());
    for idx in 0..x.len() {
        let mut plus = x.clone();
        plus[idx] += step;
        let mut minus = x.clone();
        minus[idx] -= step;
        g[idx] = (f(&plus) - f(&minus)) / (2.0 * step);
    }
    g
}

/// Mean of the columns of `y` with label `class` (labels are 1-based).
pub fn class_mean(y: &Matrix, labels: &[usize], class: usize) -> Vector {
    let mut m = Vector::zeros(y.nrows());
    let mut count = 0;
    for (i, &l) in labels.iter().enumerate() {
        if l == class {
            m += y.column(i);
            count += 1;
        }
    }
    assert!(count > 0, "class {class} is empty");
    m / count as f64
}

/// The eight summed terms in the expansion of the two between-class scatter
/// forms, computed from per-view class means of projected data `ys`.
///
/// Index `t` holds term `t + 1`; each is summed over views `i, j` and ordered
/// class pairs `p ≠ q`.
pub fn scatter_terms(ys: &[Matrix], labels: &[usize]) -> [Matrix; 8] {
    let c = *labels.iter().max().unwrap();
    let d = ys[0].nrows();
    let means: Vec<Vec<Vector>> = ys
        .iter()
        .map(|y| (1..=c).map(|k| class_mean(y, labels, k)).collect())
        .collect();
    let outer = |a: &Vector, b: &Vector| a * b.transpose();
    let mut t: [Matrix; 8] = std::array::from_fn(|_| Matrix::zeros(d, d));
    for i in 0..ys.len() {
        for j in 0..ys.len() {
            for p in 0..c {
                for q in 0..c {
                    if p == q {
                        continue;
                    }
                    let (mpi, mqi) = (&means[i][p], &means[i][q]);
                    let (mpj, mqj) = (&means[j][p], &means[j][q]);
                    t[0] += outer(mpi, mpi);
                    t[1] += outer(mqj, mpi);
                    t[2] += outer(mpi, mqj);
                    t[3] += outer(mqj, mqj);
                    t[4] += outer(mpi, mpj);
                    t[5] += outer(mqi, mpj);
                    t[6] += outer(mpi, mqj);
                    t[7] += outer(mqi, mqj);
                }
            }
        }
    }
    t
}

/// `Σ_{i,j} Σ_{p≠q} (m_p^i - m_q^j)(m_p^i - m_q^j)ᵀ` directly from means.
pub fn scatter_cross_view(ys: &[Matrix], labels: &[usize]) -> Matrix {
    let c = *labels.iter().max().unwrap();
    let d = ys[0].nrows();
    let mut s = Matrix::zeros(d, d);
    for yi in ys {
        for yj in ys {
            for p in 1..=c {
                for q in 1..=c {
                    if p != q {
                        let diff = class_mean(yi, labels, p) - class_mean(yj, labels, q);
                        s += &diff * diff.transpose();
                    }
                }
            }
        }
    }
    s
}

/// `Σ_{i,j} Σ_{p≠q} (m_p^i - m_q^i)(m_p^j - m_q^j)ᵀ` directly from means.
pub fn scatter_modular(ys: &[Matrix], labels: &[usize]) -> Matrix {
    let c = *labels.iter().max().unwrap();
    let d = ys[0].nrows();
    let mut s = Matrix::zeros(d, d);
    for yi in ys {
        for yj in ys {
            for p in 1..=c {
                for q in 1..=c {
                    if p != q {
                        let a = class_mean(yi, labels, p) - class_mean(yi, labels, q);
                        let b = class_mean(yj, labels, p) - class_mean(yj, labels, q);
                        s += &a * b.transpose();
                    }
                }
            }
        }
    }
    s
}

/// The closed form for the summed first term:
/// `(C-1)(Σ_i Σ_c m_c^i m_c^iᵀ + (V-1) Σ_i Σ_c m_c^i m_c^iᵀ)`.
pub fn first_term_closed_form(ys: &[Matrix], labels: &[usize]) -> Matrix {
    let c = *labels.iter().max().unwrap();
    let v = ys.len() as f64;
    let d = ys[0].nrows();
    let mut own = Matrix::zeros(d, d);
    for y in ys {
        for k in 1..=c {
            let m = class_mean(y, labels, k);
            own += &m * m.transpose();
        }
    }
    (&own + &own * (v - 1.0)) * (c as f64 - 1.0)
}

/// The closed form for the summed fifth term:
/// `(C-1)(Σ_i Σ_c m_c^i m_c^iᵀ + Σ_i Σ_{j≠i} Σ_c m_c^i m_c^jᵀ)`.
pub fn fifth_term_closed_form(ys: &[Matrix], labels: &[usize]) -> Matrix {
    let c = *labels.iter().max().unwrap();
    let d = ys[0].nrows();
    let mut own = Matrix::zeros(d, d);
    let mut cross = Matrix::zeros(d, d);
    for (i, yi) in ys.iter().enumerate() {
        for (j, yj) in ys.iter().enumerate() {
            for k in 1..=c {
                let a = class_mean(yi, labels, k);
                let b = class_mean(yj, labels, k);
                if i == j {
                    own += &a * b.transpose();
                } else {
                    cross += &a * b.transpose();
                }
            }
        }
    }
    (own + cross) * (c as f64 - 1.0)
}
