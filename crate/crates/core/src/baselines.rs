//! Comparison methods: iterative nullspace projection (INLP) and the
//! difference-vector PCA subspace.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::closedform;
use crate::dataio::{apply_projection, Dataset, ErasureProjection, Method, TaskKind};
use crate::error::{Error, Result};
use crate::glm::{GlmKind, GlmSpec};
use crate::linalg::{self, least_squares, sym_eig, SymMatrix};
use crate::probe::{LogisticProbe, ProbeConfig};

/// Directions shorter than this count as "no signal left".
const NULL_DIRECTION: f64 = 1e-10;
/// Composed projections are re-snapped to exact projections this often.
const RESNAP_EVERY: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct InlpConfig {
    /// Number of directions to remove.
    pub iterations: usize,
    /// Inner classifier budget (classification mode).
    pub probe: ProbeConfig,
    pub seed: u64,
}

impl Default for InlpConfig {
    fn default() -> Self {
        InlpConfig {
            iterations: 1,
            probe: ProbeConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InlpIteration {
    pub iteration: usize,
    pub direction: Vec<f64>,
    /// Training accuracy of the inner classifier (classification mode).
    pub accuracy: Option<f64>,
    /// Inner objective: classifier loss, regression MSE, or Rayleigh value.
    pub objective: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InlpDiagnostics {
    pub iterations: Vec<InlpIteration>,
    pub warnings: Vec<String>,
    /// Rank of the composed projection after each iteration.
    pub ranks: Vec<usize>,
}

/// `P (I − θθᵀ/θᵀθ)`.
fn remove_direction(p: &DMatrix<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
    let u = theta / theta.norm();
    let pu = p * &u;
    p - pu * u.transpose()
}

/// Replaces a numerically drifting composition by the exact projection onto
/// its eigenvalue-above-½ eigenspace.
fn resnap(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eig(&SymMatrix::symmetrize(p)?);
    let keep = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l > linalg::RANK_THRESHOLD)
        .count();
    let v = eig.eigenvectors.columns(0, keep);
    Ok(v * v.transpose())
}

/// Top eigenpair of `A` restricted to the range of the projection `p`:
/// the maximum of `θᵀAθ / θᵀθ` over `θ = Pθ`.
fn restricted_top(a: &SymMatrix, p: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let eig = sym_eig(&SymMatrix::symmetrize(p)?);
    let r = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l > linalg::RANK_THRESHOLD)
        .count();
    if r == 0 {
        return Err(Error::Degenerate("projection has empty range".into()));
    }
    let q = eig.eigenvectors.columns(0, r).into_owned();
    let compressed = SymMatrix::symmetrize(&(q.transpose() * a.as_matrix() * &q))?;
    let inner = sym_eig(&compressed);
    Ok((inner.eigenvalues[0], q * inner.eigenvectors.column(0)))
}

/// Iteratively trains a predictor on the projected data and removes its
/// direction. The kind of `spec` selects the inner step: a logistic probe,
/// ordinary least squares, or the top Rayleigh eigenvector of `PAP` with
/// `A = Xᵀy yᵀX`.
pub fn inlp_fit(
    data: &Dataset,
    spec: &GlmSpec,
    config: &InlpConfig,
) -> Result<(ErasureProjection, InlpDiagnostics)> {
    let d = data.dim();
    if config.iterations < 1 || config.iterations >= d {
        return Err(Error::InvalidArgument(format!(
            "INLP iterations must satisfy 1 <= k < D={d}, got {}",
            config.iterations
        )));
    }
    if spec.kind == GlmKind::Logistic && data.task() != TaskKind::BinaryClassification {
        return Err(Error::InvalidArgument(
            "logistic INLP needs a binary-classification dataset".into(),
        ));
    }
    let pls_a = match spec.kind {
        GlmKind::Pls => Some(closedform::pls_matrix(data)?),
        _ => None,
    };

    let mut p = DMatrix::<f64>::identity(d, d);
    let mut directions: Vec<DVector<f64>> = Vec::new();
    let mut diag = InlpDiagnostics {
        iterations: Vec::new(),
        warnings: Vec::new(),
        ranks: Vec::new(),
    };

    for it in 1..=config.iterations {
        let xp = data.x() * &p;
        let (raw, accuracy, objective) = match spec.kind {
            GlmKind::Logistic => {
                let probe = LogisticProbe::fit(&xp, data.y(), &config.probe)?;
                let (acc, loss) = probe.evaluate(&xp, data.y())?;
                (probe.weights, Some(acc), loss)
            }
            GlmKind::SquaredErrorIdentity => {
                let theta = least_squares(&xp, data.y())?;
                let mse = (data.y() - &xp * &theta).norm_squared() / data.len() as f64;
                (theta, None, mse)
            }
            GlmKind::Pls => {
                let a = pls_a.as_ref().expect("PLS matrix computed above");
                let (value, top) = restricted_top(a, &p)?;
                (top, None, value)
            }
        };
        // Keep the direction inside the current range, away from earlier ones.
        let theta = &p * raw;
        if theta.norm() < NULL_DIRECTION {
            diag.warnings.push(format!(
                "iteration {it}: predictor direction vanished; stopping early with {} directions",
                directions.len()
            ));
            break;
        }
        p = remove_direction(&p, &theta);
        if it % RESNAP_EVERY == 0 {
            p = resnap(&p)?;
        }
        diag.ranks.push(
            sym_eig(&SymMatrix::symmetrize(&p)?)
                .eigenvalues
                .iter()
                .filter(|&&l| l > linalg::RANK_THRESHOLD)
                .count(),
        );
        diag.iterations.push(InlpIteration {
            iteration: it,
            direction: (theta.normalize()).iter().copied().collect(),
            accuracy,
            objective,
        });
        directions.push(theta);
    }

    if directions.is_empty() {
        return Err(Error::Degenerate(
            "INLP found no direction to remove".into(),
        ));
    }
    let mut stacked = DMatrix::zeros(directions.len(), d);
    for (i, v) in directions.iter().enumerate() {
        stacked.set_row(i, &v.transpose());
    }
    let basis = linalg::orthonormalize_rows(&stacked, 1e-8);
    let proj = ErasureProjection::from_basis(basis, Method::Inlp)?
        .with_seed(config.seed)
        .with_meta("inner_kind", serde_json::to_value(spec.kind).unwrap_or_default())
        .with_meta("iterations", directions.len());
    Ok((proj, diag))
}

#[derive(Debug, Clone)]
pub struct RegressionDirection {
    /// `(XᵀX)⁻¹Xᵀy`.
    pub direction: DVector<f64>,
    /// Set when `XᵀX` was singular and a 1e-8 ridge was added.
    pub regularized: bool,
}

/// The first direction INLP removes in regression mode: the OLS coefficient
/// vector on the data as given (no centring).
pub fn inlp_regression_first_direction(data: &Dataset) -> Result<RegressionDirection> {
    let x = data.x();
    let gram = x.tr_mul(x);
    let rhs = x.tr_mul(data.y());
    if let Some(ch) = gram.clone().cholesky() {
        let direction = ch.solve(&rhs);
        if direction.iter().all(|v| v.is_finite()) {
            return Ok(RegressionDirection {
                direction,
                regularized: false,
            });
        }
    }
    let d = gram.nrows();
    let ridged = gram + DMatrix::<f64>::identity(d, d) * 1e-8;
    let direction = ridged
        .cholesky()
        .ok_or_else(|| Error::Internal("ridge-regularised Gram matrix is not SPD".into()))?
        .solve(&rhs);
    Ok(RegressionDirection {
        direction,
        regularized: true,
    })
}

/// Greedy Rayleigh INLP on an explicit matrix: repeatedly take the
/// Rayleigh-maximising direction within the current range and project it
/// out. Returns the removed basis and the remaining game value, the largest
/// Rayleigh quotient still reachable inside the final range.
pub fn inlp_rayleigh(a: &SymMatrix, k: usize) -> Result<(DMatrix<f64>, f64)> {
    let d = a.dim();
    if k >= d {
        return Err(Error::InvalidArgument(format!(
            "rank to neutralize must be < D={d}, got {k}"
        )));
    }
    let mut p = DMatrix::<f64>::identity(d, d);
    let mut basis = DMatrix::zeros(k, d);
    for i in 0..k {
        let (_, top) = restricted_top(a, &p)?;
        let theta = (&p * top).normalize();
        basis.set_row(i, &theta.transpose());
        p = remove_direction(&p, &theta);
    }
    let (value, _) = restricted_top(a, &p)?;
    Ok((basis, value))
}

/// Neutralises the top-`k` principal directions of the pair differences.
///
/// Differences are used as-is unless `center` is set.
pub fn pca_diff_fit(
    pairs: &[(DVector<f64>, DVector<f64>)],
    k: usize,
    center: bool,
) -> Result<ErasureProjection> {
    if k < 1 {
        return Err(Error::InvalidArgument("rank must be >= 1".into()));
    }
    if pairs.len() < k {
        return Err(Error::InvalidArgument(format!(
            "need at least {k} pairs, got {}",
            pairs.len()
        )));
    }
    let d = pairs[0].0.len();
    let mut diffs = DMatrix::zeros(pairs.len(), d);
    for (i, (a, b)) in pairs.iter().enumerate() {
        Error::check_dim(d, a.len())?;
        Error::check_dim(d, b.len())?;
        diffs.set_row(i, &(a - b).transpose());
    }
    if center {
        let mean = linalg::column_means(&diffs);
        for (j, mut col) in diffs.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mean[j]);
        }
    }
    let scatter = SymMatrix::symmetrize(&(diffs.tr_mul(&diffs) / pairs.len() as f64))?;
    let eig = sym_eig(&scatter);
    let scale = eig.eigenvalues[0].abs().max(f64::MIN_POSITIVE);
    let rank = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l > 1e-10 * scale && l > 0.0)
        .count();
    if rank < k {
        return Err(Error::Degenerate(format!(
            "only {rank} linearly independent difference directions, need {k}"
        )));
    }
    ErasureProjection::from_basis(eig.top_rows(k), Method::PcaDiff)
        .map(|p| p.with_meta("centered", center).with_meta("pairs", pairs.len()))
}

/// Best MSE of least squares on `X P` (no intercept).
pub fn best_projected_mse(x: &DMatrix<f64>, y: &DVector<f64>, p: &ErasureProjection) -> Result<f64> {
    let xp = apply_projection(x, p)?;
    let theta = least_squares(&xp, y)?;
    Ok((y - xp * theta).norm_squared() / y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::{rayleigh_equilibrium, RayleighProblem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn row(v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, v.len(), v.as_slice())
    }

    fn mirrored_e1() -> Dataset {
        let offsets = [0.3, -0.7, 0.5, -0.1, 0.9, -0.4];
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for &o in &offsets {
            for (sign, label) in [(1.0, 1.0), (-1.0, 0.0)] {
                rows.extend_from_slice(&[sign, o]);
                y.push(label);
            }
        }
        Dataset::new(
            DMatrix::from_row_slice(y.len(), 2, &rows),
            DVector::from_vec(y),
            TaskKind::BinaryClassification,
        )
        .unwrap()
    }

    #[test]
    fn inlp_finds_the_separating_axis() {
        let (proj, diag) =
            inlp_fit(&mirrored_e1(), &GlmSpec::logistic(), &InlpConfig::default()).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0]));
        assert!(linalg::max_abs_diff(proj.matrix().as_matrix(), &expected) < 1e-3);
        assert_eq!(diag.ranks, vec![1]);
        assert_eq!(diag.iterations[0].accuracy, Some(1.0));
    }

    #[test]
    fn inlp_directions_are_orthogonal_and_rank_drops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, d) = (300, 6);
        let y = DVector::from_fn(n, |i, _| (i % 2) as f64);
        let x = DMatrix::from_fn(n, d, |i, j| {
            let s = 2.0 * y[i] - 1.0;
            rng.sample::<f64, _>(StandardNormal) + s * (j as f64 + 1.0) * 0.3
        });
        let data = Dataset::new(x.clone(), y.clone(), TaskKind::BinaryClassification).unwrap();
        let cfg = InlpConfig {
            iterations: 4,
            ..InlpConfig::default()
        };
        let (proj, diag) = inlp_fit(&data, &GlmSpec::logistic(), &cfg).unwrap();
        assert_eq!(diag.ranks, vec![5, 4, 3, 2]);
        for a in &diag.iterations {
            for b in &diag.iterations {
                if a.iteration < b.iteration {
                    let dot: f64 = a.direction.iter().zip(&b.direction).map(|(u, v)| u * v).sum();
                    assert!(dot.abs() < 1e-6);
                }
            }
            let dir = DVector::from_column_slice(&a.direction);
            assert!((proj.matrix().as_matrix() * dir).amax() < 1e-8);
        }
        let check = linalg::is_orthogonal_projection(proj.matrix(), 1e-6);
        assert!(check.is_projection);
        assert_eq!(check.rank_estimate, d - 4);
    }

    #[test]
    fn inlp_exhausting_rank_leaves_little_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 400;
        let y = DVector::from_fn(n, |i, _| (i % 2) as f64);
        let x = DMatrix::from_fn(n, 3, |i, _| {
            rng.sample::<f64, _>(StandardNormal) + (2.0 * y[i] - 1.0)
        });
        let data = Dataset::new(x, y, TaskKind::BinaryClassification).unwrap();
        let cfg = InlpConfig {
            iterations: 2,
            ..InlpConfig::default()
        };
        let (proj, _) = inlp_fit(&data, &GlmSpec::logistic(), &cfg).unwrap();
        let xp = apply_projection(data.x(), &proj).unwrap();
        let probe = LogisticProbe::fit(&xp, data.y(), &ProbeConfig::default()).unwrap();
        let (acc, _) = probe.evaluate(&xp, data.y()).unwrap();
        assert!(acc <= data.majority_share() + 0.05, "accuracy {acc}");
    }

    #[test]
    fn resnap_every_tenth_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, d) = (200, 14);
        let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let data = Dataset::new(x, y, TaskKind::Regression).unwrap();
        let cfg = InlpConfig {
            iterations: 12,
            ..InlpConfig::default()
        };
        let (proj, diag) = inlp_fit(&data, &GlmSpec::squared_error(), &cfg).unwrap();
        assert_eq!(diag.ranks, (2..=13).rev().collect::<Vec<_>>());
        assert_eq!(proj.rank_removed(), 12);
    }

    #[test]
    fn ols_direction_differs_from_covariance() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let data = Dataset::new(x.clone(), DVector::from_vec(vec![1.0, 1.0]), TaskKind::Regression)
            .unwrap();
        let r = inlp_regression_first_direction(&data).unwrap();
        assert!(!r.regularized);
        assert!((r.direction[0] - 1.0).abs() < 1e-12);
        assert!((r.direction[1] - 0.5).abs() < 1e-12);
        let cov = x.tr_mul(data.y());
        // (1, ½)·(1, 2) / (‖(1, ½)‖ ‖(1, 2)‖) = 2 / 2.5.
        assert!((linalg::cosine(&r.direction, &cov) - 0.8).abs() < 1e-12);

        // One INLP step leaves signal; removing Xᵀy leaves none.
        let inlp =
            ErasureProjection::from_basis(row(&r.direction.normalize()), Method::Inlp).unwrap();
        let second_moment = data.y().norm_squared() / 2.0;
        assert!(best_projected_mse(&x, data.y(), &inlp).unwrap() < second_moment - 1e-6);
        let optimal =
            ErasureProjection::from_basis(row(&cov.normalize()), Method::RegressionClosedForm)
                .unwrap();
        assert!((best_projected_mse(&x, data.y(), &optimal).unwrap() - second_moment).abs() < 1e-12);
    }

    #[test]
    fn ols_direction_isotropic_and_singular() {
        let x = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, -3.0, 0.5]);
        let data = Dataset::new(x.clone(), y, TaskKind::Regression).unwrap();
        let r = inlp_regression_first_direction(&data).unwrap();
        let cov = x.tr_mul(data.y());
        assert!((linalg::cosine(&r.direction, &cov) - 1.0).abs() < 1e-10);

        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let data = Dataset::new(x, DVector::from_vec(vec![1.0, 2.0]), TaskKind::Regression).unwrap();
        assert!(inlp_regression_first_direction(&data).unwrap().regularized);
    }

    #[test]
    fn rayleigh_inlp_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for d in 2..=8 {
            let m = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let a = SymMatrix::symmetrize(&m).unwrap();
            for k in 1..d {
                let (_, value) = inlp_rayleigh(&a, k).unwrap();
                let exact = rayleigh_equilibrium(&RayleighProblem::new(a.clone(), k).unwrap())
                    .unwrap()
                    .game_value;
                assert!((value - exact).abs() < 1e-8, "d={d} k={k}");
            }
        }
    }

    #[test]
    fn pca_diff_examples() {
        let e = |v: &[f64]| DVector::from_column_slice(v);
        let pairs = vec![
            (e(&[1.0, 2.0, 3.0]), e(&[0.0, 2.0, 3.0])),
            (e(&[5.0, 1.0, 0.0]), e(&[3.0, 1.0, 0.0])),
        ];
        let p = pca_diff_fit(&pairs, 1, false).unwrap();
        assert!((p.basis()[(0, 0)].abs() - 1.0).abs() < 1e-12);

        // Variance 3 along e2 versus 2 along e3.
        let s3 = 3f64.sqrt();
        let s2 = 2f64.sqrt();
        let pairs = vec![
            (e(&[0.0, s3, 0.0]), e(&[0.0, 0.0, 0.0])),
            (e(&[0.0, -s3, 0.0]), e(&[0.0, 0.0, 0.0])),
            (e(&[0.0, 0.0, s2]), e(&[0.0, 0.0, 0.0])),
            (e(&[0.0, 0.0, -s2]), e(&[0.0, 0.0, 0.0])),
        ];
        let p = pca_diff_fit(&pairs, 1, false).unwrap();
        assert!((p.basis()[(0, 1)].abs() - 1.0).abs() < 1e-12);

        let p = pca_diff_fit(&pairs, 2, false).unwrap();
        for (a, b) in &pairs {
            let diff = row(&(a - b));
            assert!(apply_projection(&diff, &p).unwrap().norm() < 1e-8);
        }
        assert!(matches!(pca_diff_fit(&pairs, 3, false), Err(Error::Degenerate(_))));
    }
}
