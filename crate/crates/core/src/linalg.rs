//! Deterministic dense linear algebra: symmetric eigendecomposition by
//! cyclic Jacobi rotations, truncated SVD through the smaller Gram matrix,
//! and vector angle helpers.

use crate::error::{check_finite, DtbmError, Result};
use crate::matrix::{dot, DenseMatrix};

/// Off-diagonal Frobenius mass, relative to the full norm, at which the
/// Jacobi sweeps stop.
pub const JACOBI_TOLERANCE: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, eigenvalues nonincreasing.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Eigenvectors stored as columns.
    pub vectors: DenseMatrix,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<SymmetricEigen> {
    let n = a.rows();
    if a.cols() != n {
        return Err(DtbmError::Shape(format!("{:?} is not square", a.shape())));
    }
    check_finite(a.values())?;
    let mut m = a.values().to_vec();
    // Symmetrize so rounding noise in the input cannot stall convergence.
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = s;
            m[j * n + i] = s;
        }
    }
    let mut v = DenseMatrix::identity(n).into_values();
    let total: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOLERANCE * total || total == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps index order among exact ties.
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors[k * n + new] = v[k * n + old];
        }
    }
    Ok(SymmetricEigen {
        values,
        vectors: DenseMatrix::from_parts(n, n, vectors),
    })
}

/// Top-`r` left singular subspace.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// `rows x r`, orthonormal columns.
    pub left_vectors: DenseMatrix,
    /// Nonincreasing, nonnegative.
    pub singular_values: Vec<f64>,
}

/// Top-`r` left singular vectors of `m`.
///
/// Computed from the eigendecomposition of the smaller Gram matrix. Each
/// returned vector has its first non-negligible component nonnegative.
pub fn top_left_singular_vectors(m: &DenseMatrix, r: usize) -> Result<TruncatedSvd> {
    let max = m.rows().min(m.cols());
    if r == 0 || r > max {
        return Err(DtbmError::RankOutOfRange { rank: r, max });
    }
    check_finite(m.values())?;
    let rows = m.rows();
    let (mut cols, singular_values): (Vec<Vec<f64>>, Vec<f64>) = if rows <= m.cols() {
        let eig = symmetric_eigen(&m.gram_rows())?;
        let sv = eig.values[..r].iter().map(|&l| l.max(0.0).sqrt()).collect();
        ((0..r).map(|j| eig.vectors.column(j)).collect(), sv)
    } else {
        let eig = symmetric_eigen(&m.gram_cols())?;
        let sv: Vec<f64> = eig.values[..r].iter().map(|&l| l.max(0.0).sqrt()).collect();
        let cutoff = sv[0] * 1e-10;
        let cols = (0..r)
            .map(|j| {
                if sv[j] > cutoff && sv[j] > 0.0 {
                    let vj = eig.vectors.column(j);
                    m.row_iter().map(|row| dot(row, &vj) / sv[j]).collect()
                } else {
                    vec![0.0; rows]
                }
            })
            .collect();
        (cols, sv)
    };
    orthonormalize(&mut cols, rows);
    for c in &mut cols {
        fix_sign(c);
    }
    let mut values = vec![0.0; rows * r];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..rows {
            values[i * r + j] = c[i];
        }
    }
    Ok(TruncatedSvd {
        left_vectors: DenseMatrix::from_parts(rows, r, values),
        singular_values,
    })
}

/// Modified Gram-Schmidt (two passes) that replaces degenerate columns by
/// standard basis vectors, so the result is always orthonormal.
fn orthonormalize(cols: &mut [Vec<f64>], n: usize) {
    let mut next_basis = 0usize;
    for j in 0..cols.len() {
        for _ in 0..2 {
            for k in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let proj = dot(&done[k], &rest[0]);
                for (x, &q) in rest[0].iter_mut().zip(&done[k]) {
                    *x -= proj * q;
                }
            }
        }
        let mut norm = dot(&cols[j], &cols[j]).sqrt();
        while norm < 1e-8 {
            // Degenerate direction: complete the basis deterministically.
            let mut e = vec![0.0; n];
            e[next_basis % n] = 1.0;
            next_basis += 1;
            for _ in 0..2 {
                for k in 0..j {
                    let proj = dot(&cols[k], &e);
                    for (x, &q) in e.iter_mut().zip(&cols[k]) {
                        *x -= proj * q;
                    }
                }
            }
            cols[j] = e;
            norm = dot(&cols[j], &cols[j]).sqrt();
        }
        cols[j].iter_mut().for_each(|x| *x /= norm);
    }
}

fn fix_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-10 * scale) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// `U Uᵀ` for a basis with orthonormal columns.
pub fn projector(u: &DenseMatrix) -> DenseMatrix {
    u.gram_rows()
}

/// `U Uᵀ M`.
pub fn low_rank_project(m: &DenseMatrix, u: &DenseMatrix) -> Result<DenseMatrix> {
    if u.rows() != m.rows() {
        return Err(DtbmError::DimensionMismatch(format!(
            "basis has {} rows, matrix has {}",
            u.rows(),
            m.rows()
        )));
    }
    u.matmul(&u.transpose().matmul(m)?)
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine of the angle between `a` and `b`; zero when either is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine of vectors with different lengths");
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// `a / ‖a‖`, or the zero vector when `a` is zero.
pub fn normalize(a: &[f64]) -> Vec<f64> {
    let n = norm(a);
    if n == 0.0 {
        return vec![0.0; a.len()];
    }
    a.iter().map(|x| x / n).collect()
}

/// Coordinates whose rows have the same pairwise inner products as the rows
/// of `a`, in at most `rows` dimensions.
///
/// Clustering algorithms that only look at norms, angles and distances give
/// identical answers on the embedding, which is far narrower than a
/// tensor unfolding.
pub fn row_embedding(a: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() <= a.rows() {
        return Ok(a.clone());
    }
    let eig = symmetric_eigen(&a.gram_rows())?;
    let top = eig.values[0].max(0.0);
    let keep = eig
        .values
        .iter()
        .take_while(|&&l| l > 1e-14 * top && l > 0.0)
        .count()
        .max(1);
    let n = a.rows();
    let mut values = vec![0.0; n * keep];
    for j in 0..keep {
        let s = eig.values[j].max(0.0).sqrt();
        for i in 0..n {
            values[i * keep + j] = eig.vectors.get(i, j) * s;
        }
    }
    Ok(DenseMatrix::from_parts(n, keep, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = crate::rng::rng_from_seed(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn assert_orthonormal(u: &DenseMatrix) {
        let g = u.gram_cols();
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g.get(i, j) - want).abs() < 1e-10, "gram {i},{j} = {}", g.get(i, j));
            }
        }
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let b = random_matrix(6, 6, 1);
        let a = b.matmul(&b.transpose()).unwrap();
        let eig = symmetric_eigen(&a).unwrap();
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
        let v = &eig.vectors;
        let d = DenseMatrix::from_fn(6, 6, |i, j| if i == j { eig.values[i] } else { 0.0 }).unwrap();
        let rec = v.matmul(&d).unwrap().matmul(&v.transpose()).unwrap();
        assert!(rec.sub(&a).unwrap().frobenius_norm() < 1e-12 * a.frobenius_norm());
        assert_orthonormal(v);
    }

    #[test]
    fn diagonal_svd() {
        let m = DenseMatrix::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]])
            .unwrap();
        let svd = top_left_singular_vectors(&m, 2).unwrap();
        assert!((svd.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((svd.singular_values[1] - 2.0).abs() < 1e-12);
        assert!((svd.left_vectors.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((svd.left_vectors.get(1, 1) - 1.0).abs() < 1e-12);
        assert!(svd.left_vectors.get(2, 0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_svd() {
        let u = [1.0, -2.0, 2.0];
        let v = [3.0, 4.0, 0.0, 0.0];
        let m = DenseMatrix::from_fn(3, 4, |i, j| u[i] * v[j]).unwrap();
        let svd = top_left_singular_vectors(&m, 1).unwrap();
        assert!((svd.singular_values[0] - 15.0).abs() < 1e-12);
        let resid = m.sub(&low_rank_project(&m, &svd.left_vectors).unwrap()).unwrap();
        assert!(resid.frobenius_norm() < 1e-12);
        // Sign convention: first component nonnegative.
        assert!(svd.left_vectors.get(0, 0) > 0.0);
    }

    #[test]
    fn rank_bounds_are_checked() {
        let m = random_matrix(3, 5, 2);
        assert!(top_left_singular_vectors(&m, 0).is_err());
        assert!(top_left_singular_vectors(&m, 4).is_err());
        assert!(top_left_singular_vectors(&m, 3).is_ok());
    }

    #[test]
    fn tall_matrices_and_rank_deficiency() {
        // Tall, rank 1: the remaining requested columns must still be orthonormal.
        let m = DenseMatrix::from_fn(5, 3, |i, _| (i + 1) as f64).unwrap();
        let svd = top_left_singular_vectors(&m, 3).unwrap();
        assert_orthonormal(&svd.left_vectors);
        assert!(svd.singular_values[1] < 1e-6);
        let resid = m.sub(&low_rank_project(&m, &svd.left_vectors).unwrap()).unwrap();
        assert!(resid.frobenius_norm() < 1e-10);
        let zero = DenseMatrix::zeros(4, 6);
        assert_orthonormal(&top_left_singular_vectors(&zero, 2).unwrap().left_vectors);
    }

    #[test]
    fn residual_equals_trailing_energy() {
        let m = random_matrix(6, 8, 3);
        let full = top_left_singular_vectors(&m, 6).unwrap();
        let svd = top_left_singular_vectors(&m, 3).unwrap();
        let resid = m.sub(&low_rank_project(&m, &svd.left_vectors).unwrap()).unwrap();
        let trailing: f64 = full.singular_values[3..].iter().map(|s| s * s).sum();
        let r2 = resid.frobenius_norm().powi(2);
        assert!((r2 - trailing).abs() <= 1e-8 * trailing, "{r2} vs {trailing}");
        assert_orthonormal(&svd.left_vectors);
    }

    #[test]
    fn projection_is_idempotent() {
        let m = random_matrix(5, 7, 4);
        let u = top_left_singular_vectors(&m, 2).unwrap().left_vectors;
        let once = low_rank_project(&m, &u).unwrap();
        let twice = low_rank_project(&once, &u).unwrap();
        assert!(once.sub(&twice).unwrap().frobenius_norm() < 1e-12);
        let id = DenseMatrix::identity(5);
        assert!(low_rank_project(&m, &id).unwrap().sub(&m).unwrap().frobenius_norm() < 1e-15);
    }

    #[test]
    fn cosine_and_normalize_conventions() {
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 1.0], &[1.0, -1.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, -1.0]), 0.0);
        assert_eq!(normalize(&[3.0, 4.0]), vec![0.6, 0.8]);
        assert_eq!(normalize(&[0.0, 0.0]), vec![0.0, 0.0]);
        let n = normalize(&[1.0, 7.0, -2.0]);
        let nn = normalize(&n);
        assert!(n.iter().zip(&nn).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn row_embedding_preserves_inner_products() {
        let a = random_matrix(5, 40, 5);
        let e = row_embedding(&a).unwrap();
        assert!(e.cols() <= 5);
        let ga = a.gram_rows();
        let ge = e.gram_rows();
        assert!(ga.sub(&ge).unwrap().frobenius_norm() < 1e-12 * ga.frobenius_norm());
    }
}
