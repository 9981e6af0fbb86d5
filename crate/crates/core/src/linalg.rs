//! Dense symmetric linear algebra shared by the solvers.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. Eigenvectors are stored as
//! columns, eigenvalues are sorted in descending order and every
//! eigenvector is sign-normalised so that its first non-negligible
//! component is positive. Together these make decompositions
//! reproducible for a fixed input.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Components smaller than this are skipped when fixing eigenvector signs.
const SIGN_EPS: f64 = 1e-12;

/// Eigenvalues above this count towards the rank of a projection.
pub const RANK_THRESHOLD: f64 = 0.5;

/// Row-orthonormality tolerance accepted by [`rank_k_neutralizer`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// A finite, exactly symmetric square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps `m`, rejecting non-square, asymmetric or non-finite input.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let d = m.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(SymMatrix(m))
    }

    /// Replaces `m` by `(m + mᵀ) / 2`, which is exactly symmetric in floating point.
    pub fn symmetrize(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        let s = (m + m.transpose()) * 0.5;
        SymMatrix::new(s)
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        SymMatrix::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

impl AsRef<DMatrix<f64>> for SymMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Sorted descending.
    pub eigenvalues: DVector<f64>,
    /// Column `i` is the unit eigenvector for `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    /// `V · diag(λ) · Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = &self.eigenvectors * DMatrix::from_diagonal(&self.eigenvalues);
        scaled * self.eigenvectors.transpose()
    }

    /// Reassembles `V · diag(f(λ)) · Vᵀ` as an exactly symmetric matrix.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let mapped = self.eigenvalues.map(f);
        let scaled = &self.eigenvectors * DMatrix::from_diagonal(&mapped);
        let m = scaled * self.eigenvectors.transpose();
        SymMatrix((&m + m.transpose()) * 0.5)
    }

    /// The leading `k` eigenvectors as the rows of a `k × D` matrix.
    pub fn top_rows(&self, k: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(0, k).transpose()
    }
}

/// Symmetric eigendecomposition with descending eigenvalues and
/// first-nonzero-positive eigenvector signs.
pub fn sym_eig(m: &SymMatrix) -> EigenDecomposition {
    let d = m.dim();
    if d == 0 {
        return EigenDecomposition {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        };
    }
    let raw = SymmetricEigen::new(m.0.clone());
    let mut order: Vec<usize> = (0..d).collect();
    // Stable sort with an index tiebreak keeps the ordering deterministic.
    order.sort_by(|&a, &b| {
        raw.eigenvalues[b]
            .total_cmp(&raw.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let eigenvalues = DVector::from_iterator(d, order.iter().map(|&i| raw.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = raw.eigenvectors.column(src).into_owned();
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
        if let Some(first) = col.iter().find(|v| v.abs() > SIGN_EPS) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        eigenvectors.set_column(dst, &col);
    }
    EigenDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// Minimum-norm least-squares solution of `A θ ≈ y`.
///
/// Solved through the eigendecomposition of `AᵀA`, dropping directions
/// with eigenvalue below `1e-12 · λ_max`, plus one refinement step. This is
/// robust for the rank-deficient projected designs used here, where the
/// dense SVD can lose accuracy.
pub fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    Error::check_dim(a.nrows(), y.len())?;
    let gram = SymMatrix::symmetrize(&a.tr_mul(a))?;
    let eig = sym_eig(&gram);
    let cutoff = 1e-12 * eig.eigenvalues.max().max(f64::MIN_POSITIVE);
    let solve = |rhs: &DVector<f64>| {
        let mut theta = DVector::zeros(a.ncols());
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            if l > cutoff {
                let v = eig.eigenvectors.column(i);
                theta += v * (v.dot(rhs) / l);
            }
        }
        theta
    };
    let theta = solve(&a.tr_mul(y));
    let residual = y - a * &theta;
    Ok(theta + solve(&a.tr_mul(&residual)))
}

/// Column-centred principal component reduction.
#[derive(Debug, Clone)]
pub struct PcaReduction {
    /// Column means of the input.
    pub mean: DVector<f64>,
    /// `target_dim × D`, orthonormal rows, leading direction first.
    pub basis: DMatrix<f64>,
    /// `N × target_dim` scores of the centred input.
    pub projected: DMatrix<f64>,
    /// Population-covariance eigenvalues captured by each component.
    pub explained_variance: DVector<f64>,
}

impl PcaReduction {
    /// Applies the stored centring and basis to new rows.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Error::check_dim(self.mean.len(), x.ncols())?;
        let centered = center_rows(x, &self.mean);
        Ok(centered * self.basis.transpose())
    }
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

fn center_rows(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    centered
}

/// Population covariance `XcᵀXc / N` of the column-centred data.
pub fn covariance(x: &DMatrix<f64>) -> Result<SymMatrix> {
    let mean = column_means(x);
    let centered = center_rows(x, &mean);
    let cov = centered.tr_mul(&centered) / x.nrows() as f64;
    SymMatrix::symmetrize(&cov)
}

/// Projects the column-centred rows of `x` onto its top `target_dim`
/// principal directions.
pub fn pca_reduce(x: &DMatrix<f64>, target_dim: usize) -> Result<PcaReduction> {
    let (n, d) = x.shape();
    if target_dim < 1 || target_dim > n.min(d) {
        return Err(Error::InvalidArgument(format!(
            "target_dim must be in 1..={}, got {target_dim}",
            n.min(d)
        )));
    }
    let mean = column_means(x);
    let cov = covariance(x)?;
    let eig = sym_eig(&cov);
    let basis = eig.top_rows(target_dim);
    let projected = center_rows(x, &mean) * basis.transpose();
    Ok(PcaReduction {
        mean,
        basis,
        projected,
        explained_variance: eig.eigenvalues.rows(0, target_dim).into_owned(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionCheck {
    pub is_projection: bool,
    /// Number of eigenvalues above [`RANK_THRESHOLD`].
    pub rank_estimate: usize,
    /// `max |P·P − P|`.
    pub max_violation: f64,
}

pub fn is_orthogonal_projection(m: &SymMatrix, tol: f64) -> ProjectionCheck {
    let p = m.as_matrix();
    let max_violation = max_abs_diff(&(p * p), p);
    let rank_estimate = sym_eig(m)
        .eigenvalues
        .iter()
        .filter(|&&l| l > RANK_THRESHOLD)
        .count();
    ProjectionCheck {
        is_projection: max_violation <= tol,
        rank_estimate,
        max_violation,
    }
}

/// Largest deviation of `W·Wᵀ` from the identity.
pub fn gram_deviation(rows: &DMatrix<f64>) -> f64 {
    let k = rows.nrows();
    let gram = rows * rows.transpose();
    max_abs_diff(&gram, &DMatrix::identity(k, k))
}

/// `I − WᵀW` for a `k × D` matrix `W` with orthonormal rows.
pub fn rank_k_neutralizer(basis: &DMatrix<f64>) -> Result<SymMatrix> {
    let dev = gram_deviation(basis);
    if !(dev <= ORTHONORMAL_TOL) {
        return Err(Error::InvalidArgument(format!(
            "basis rows are not orthonormal (max Gram deviation {dev:.3e})"
        )));
    }
    let d = basis.ncols();
    let p = DMatrix::identity(d, d) - basis.tr_mul(basis);
    SymMatrix::symmetrize(&p)
}

/// Gram-Schmidt on rows, dropping rows whose residual norm falls below `tol`
/// relative to their original norm.
pub fn orthonormalize_rows(rows: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mut kept: Vec<DVector<f64>> = Vec::new();
    for r in rows.row_iter() {
        let orig: DVector<f64> = r.transpose();
        let scale = orig.norm();
        if scale == 0.0 {
            continue;
        }
        let mut v = orig.clone();
        // Two passes for numerical stability.
        for _ in 0..2 {
            for q in &kept {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > tol * scale {
            kept.push(v / norm);
        }
    }
    let d = rows.ncols();
    let mut out = DMatrix::zeros(kept.len(), d);
    for (i, q) in kept.iter().enumerate() {
        out.set_row(i, &q.transpose());
    }
    out
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}

/// First `m` columns of a Haar-random orthogonal matrix, as rows.
pub fn random_frame(dim: usize, m: usize, rng: &mut impl rand::Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, m, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // Fix column signs so the frame does not depend on QR sign conventions.
    let mut q = q.columns(0, m).into_owned();
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix {
        let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        SymMatrix::symmetrize(&m).unwrap()
    }

    #[test]
    fn identity_eigenvalues() {
        let eig = sym_eig(&SymMatrix::identity(3));
        for l in eig.eigenvalues.iter() {
            assert!((l - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_eigenpairs() {
        let eig = sym_eig(&SymMatrix::from_diagonal(&[1.0, 3.0]).unwrap());
        assert_eq!(eig.eigenvalues.as_slice(), &[3.0, 1.0]);
        assert!((eig.eigenvectors[(1, 0)] - 1.0).abs() < 1e-14);
        assert!((eig.eigenvectors[(0, 1)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_sym(&mut rng, 5);
        let eig = sym_eig(&m);
        // Oracle: multiply the factors back together.
        let mut rebuilt = DMatrix::zeros(5, 5);
        for i in 0..5 {
            let v = eig.eigenvectors.column(i);
            rebuilt += v * v.transpose() * eig.eigenvalues[i];
        }
        assert!(max_abs_diff(&rebuilt, m.as_matrix()) < 1e-10);
    }

    #[test]
    fn many_random_decompositions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..500 {
            let d = 1 + trial % 12;
            let m = random_sym(&mut rng, d);
            let eig = sym_eig(&m);
            assert!(max_abs_diff(&eig.reconstruct(), m.as_matrix()) < 1e-8);
            let gram = eig.eigenvectors.tr_mul(&eig.eigenvectors);
            assert!(max_abs_diff(&gram, &DMatrix::identity(d, d)) < 1e-8);
            for w in eig.eigenvalues.as_slice().windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0])).unwrap();
        let a = sym_eig(&m);
        let b = sym_eig(&m);
        assert_eq!(a.eigenvectors, b.eigenvectors);
        for c in a.eigenvectors.column_iter() {
            let first = c.iter().find(|v| v.abs() > SIGN_EPS).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn rejects_non_finite_and_asymmetric() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(matches!(SymMatrix::new(bad), Err(Error::InvalidInput(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0]);
        assert!(matches!(SymMatrix::new(asym), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn pca_single_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(40, 3, |_, j| {
            if j == 1 {
                rng.random_range(-5.0..5.0)
            } else {
                0.0
            }
        });
        let pca = pca_reduce(&x, 1).unwrap();
        assert!(pca.basis[(0, 1)].abs() > 0.999);
    }

    #[test]
    fn pca_full_retention() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
        let pca = pca_reduce(&x, 4).unwrap();
        let total: f64 = covariance(&x).unwrap().trace();
        let kept = pca.projected.iter().map(|v| v * v).sum::<f64>() / 30.0;
        assert!((total - kept).abs() < 1e-8);
    }

    #[test]
    fn pca_captured_variance_matches_covariance_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let normal = rand_distr::StandardNormal;
        let x = DMatrix::from_fn(100, 6, |_, j| {
            let z: f64 = rng.sample(normal);
            z * (j + 1) as f64
        });
        let pca = pca_reduce(&x, 2).unwrap();
        // Oracle: eigenvalues of the explicitly formed covariance.
        let n = x.nrows() as f64;
        let mean = column_means(&x);
        let mut cov = DMatrix::zeros(6, 6);
        for r in x.row_iter() {
            let c = r.transpose() - &mean;
            cov += &c * c.transpose() / n;
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        let captured = pca.projected.iter().map(|v| v * v).sum::<f64>() / n;
        assert!((captured - (ev[0] + ev[1])).abs() < 1e-8);
    }

    #[test]
    fn pca_rejects_bad_target() {
        let x = DMatrix::<f64>::zeros(3, 5);
        assert!(matches!(pca_reduce(&x, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(pca_reduce(&x, 4), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn pca_basis_invariant_under_row_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(50, 5, |_, j| rng.random_range(-1.0..1.0) * (5 - j) as f64);
        let mut perm: Vec<usize> = (0..50).collect();
        perm.reverse();
        let xp = x.select_rows(&perm);
        let a = pca_reduce(&x, 3).unwrap();
        let b = pca_reduce(&xp, 3).unwrap();
        for i in 0..3 {
            let dot = a.basis.row(i).dot(&b.basis.row(i));
            assert!((dot.abs() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_checks() {
        let p = SymMatrix::from_diagonal(&[0.0, 1.0, 1.0]).unwrap();
        let c = is_orthogonal_projection(&p, 1e-8);
        assert!(c.is_projection);
        assert_eq!(c.rank_estimate, 2);

        let half = SymMatrix::from_diagonal(&[0.5, 0.5]).unwrap();
        assert!(!is_orthogonal_projection(&half, 1e-8).is_projection);
    }

    #[test]
    fn neutralizer_examples() {
        let e1 = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let p = rank_k_neutralizer(&e1).unwrap();
        assert_eq!(p.as_matrix(), &DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0])));

        let w = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let p = rank_k_neutralizer(&w).unwrap();
        assert_eq!(
            p.as_matrix(),
            &DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 1.0]))
        );

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let w = DMatrix::from_row_slice(1, 2, &[s, -s]);
        let p = rank_k_neutralizer(&w).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        assert!(max_abs_diff(p.as_matrix(), &expected) < 1e-15);
    }

    #[test]
    fn neutralizer_rejects_non_orthonormal() {
        let w = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let err = rank_k_neutralizer(&w).unwrap_err();
        assert!(err.to_string().contains("Gram deviation"));
    }

    #[test]
    fn neutralizer_of_random_unit_vector_is_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let v = DVector::from_fn(7, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let w = DMatrix::from_row_slice(1, 7, v.normalize().as_slice());
            let p = rank_k_neutralizer(&w).unwrap();
            let check = is_orthogonal_projection(&p, 1e-8);
            assert!(check.is_projection);
            assert_eq!(check.rank_estimate, 6);
            assert!((p.as_matrix() * w.transpose()).norm() < 1e-10);
            // Any u orthogonal to w is left alone.
            let mut u = DVector::from_fn(7, |_, _| rng.random_range(-1.0..1.0));
            let wv = w.transpose();
            u -= &wv * wv.dot(&u);
            assert!((p.as_matrix() * &u - &u).amax() < 1e-10);
        }
    }

    #[test]
    fn orthonormalize_drops_dependent_rows() {
        let rows = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 0.0, 1.0, 1.0]);
        let q = orthonormalize_rows(&rows, 1e-10);
        assert_eq!(q.nrows(), 2);
        assert!(gram_deviation(&q) < 1e-14);
    }

    #[test]
    fn least_squares_full_rank_recovers_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
        let w = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let theta = least_squares(&a, &(&a * &w)).unwrap();
        assert!((theta - w).amax() < 1e-10);
    }

    #[test]
    fn least_squares_rank_deficient_residual_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let a = DMatrix::from_fn(200, 20, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(200, |_, _| rng.random_range(-2.0..2.0));
        // Project out the direction most correlated with y.
        let u = a.tr_mul(&y).normalize();
        let ap = &a - (&a * &u) * u.transpose();
        let theta = least_squares(&ap, &y).unwrap();
        let residual = &y - &ap * &theta;
        assert!(ap.tr_mul(&residual).amax() < 1e-9);
        // Minimum norm: no component along the removed direction.
        assert!(theta.dot(&u).abs() < 1e-9);
        assert!(residual.norm_squared() <= y.norm_squared());
    }
}
