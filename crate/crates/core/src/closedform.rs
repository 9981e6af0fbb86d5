//! Exact equilibria of the regression game and of Rayleigh-quotient games.
//!
//! * Regression: removing the single direction `Xᵀy` (after centring) leaves
//!   no linear signal; the best predictor is then `θ = 0` and the game value
//!   is the variance of `y`.
//! * Rayleigh quotient `max_θ min_P θᵀPAPθ / ‖Pθ‖²`: neutralising the top-`k`
//!   eigenvectors of `A` leaves value `λ_{k+1}`, attained by `θ = v_{k+1}`.
//! * PLS is the Rayleigh game with the rank-one `A = Xᵀy yᵀX`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::dataio::{Dataset, ErasureProjection, Method, TaskKind};
use crate::error::{Error, Result};
use crate::linalg::{self, column_means, sym_eig, SymMatrix};

/// Below this norm `Xᵀy` is treated as zero.
pub const DEGENERATE_COVARIANCE: f64 = 1e-12;
/// Eigenvalue gap at the cut below which the split is ambiguous.
pub const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct RayleighProblem {
    a: SymMatrix,
    k: usize,
}

impl RayleighProblem {
    pub fn new(a: SymMatrix, k: usize) -> Result<Self> {
        if k >= a.dim() {
            return Err(Error::InvalidArgument(format!(
                "rank to neutralize must be < D={}, got {k}",
                a.dim()
            )));
        }
        Ok(RayleighProblem { a, k })
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.a
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    /// `P*`; the identity when nothing is removed.
    pub projection: SymMatrix,
    /// `k × D` orthonormal rows spanning the neutralised subspace.
    pub basis: DMatrix<f64>,
    pub theta_star: DVector<f64>,
    pub game_value: f64,
    /// Set when the signal to remove is (numerically) absent.
    pub degenerate: bool,
    pub warnings: Vec<String>,
    pub method: Method,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl EquilibriumResult {
    fn new(
        basis: DMatrix<f64>,
        theta_star: DVector<f64>,
        game_value: f64,
        method: Method,
    ) -> Result<Self> {
        let projection = if basis.nrows() == 0 {
            SymMatrix::identity(basis.ncols())
        } else {
            linalg::rank_k_neutralizer(&basis)?
        };
        Ok(EquilibriumResult {
            projection,
            basis,
            theta_star,
            game_value,
            degenerate: false,
            warnings: Vec::new(),
            method,
            metadata: BTreeMap::new(),
        })
    }

    pub fn rank_removed(&self) -> usize {
        self.basis.nrows()
    }

    /// The fitted projection as a persisted artifact. Fails when nothing was
    /// removed (`k = 0` or a degenerate problem).
    pub fn erasure(&self) -> Result<ErasureProjection> {
        if self.degenerate {
            return Err(Error::Degenerate(
                "no signal to remove; the equilibrium projection is the identity".into(),
            ));
        }
        let mut proj = ErasureProjection::from_basis(self.basis.clone(), self.method)?;
        proj.metadata = self.metadata.clone();
        proj.metadata
            .insert("game_value".into(), serde_json::json!(self.game_value));
        Ok(proj)
    }
}

/// `θᵀPAPθ / ‖Pθ‖²`; `None` when `Pθ = 0`.
pub fn rayleigh_quotient(a: &SymMatrix, p: &SymMatrix, theta: &DVector<f64>) -> Option<f64> {
    let pt = p.as_matrix() * theta;
    let denom = pt.norm_squared();
    if denom == 0.0 {
        return None;
    }
    Some(pt.dot(&(a.as_matrix() * &pt)) / denom)
}

fn centered(data: &Dataset) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, f64) {
    let mean = column_means(data.x());
    let mut xc = data.x().clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let y_mean = data.y().mean();
    let yc = data.y().add_scalar(-y_mean);
    (xc, yc, mean, y_mean)
}

/// Rank-one equilibrium of the squared-error game. Inputs and targets are
/// mean-centred first; the means are recorded in the metadata.
pub fn regression_equilibrium(data: &Dataset) -> Result<EquilibriumResult> {
    if data.task() != TaskKind::Regression {
        return Err(Error::InvalidArgument(
            "regression equilibrium needs a regression dataset".into(),
        ));
    }
    let (xc, yc, x_mean, y_mean) = centered(data);
    let d = data.dim();
    let variance = yc.norm_squared() / yc.len() as f64;
    let cov = xc.tr_mul(&yc);
    let norm = cov.norm();

    let mut result = if norm < DEGENERATE_COVARIANCE {
        let mut r = EquilibriumResult::new(
            DMatrix::zeros(0, d),
            DVector::zeros(d),
            variance,
            Method::RegressionClosedForm,
        )?;
        r.degenerate = true;
        r.warnings
            .push("Xᵀy is zero: targets are already uncorrelated with the inputs".into());
        r
    } else {
        let basis = DMatrix::from_row_slice(1, d, (cov / norm).as_slice());
        EquilibriumResult::new(basis, DVector::zeros(d), variance, Method::RegressionClosedForm)?
    };
    result.metadata.insert(
        "x_mean".into(),
        serde_json::json!(x_mean.iter().copied().collect::<Vec<_>>()),
    );
    result
        .metadata
        .insert("y_mean".into(), serde_json::json!(y_mean));
    Ok(result)
}

/// Neutralises the top-`k` eigenvectors of `A`; value `λ_{k+1}`.
pub fn rayleigh_equilibrium(problem: &RayleighProblem) -> Result<EquilibriumResult> {
    let a = problem.matrix();
    let k = problem.k();
    let d = a.dim();
    if a.as_matrix().iter().all(|&v| v == 0.0) {
        // Every split is optimal; pick the natural basis.
        let basis = DMatrix::identity(d, d).rows(0, k).into_owned();
        let mut theta = DVector::zeros(d);
        theta[k] = 1.0;
        return EquilibriumResult::new(basis, theta, 0.0, Method::RayleighClosedForm);
    }
    let eig = sym_eig(a);
    let basis = eig.top_rows(k);
    let theta = eig.eigenvectors.column(k).into_owned();
    let value = eig.eigenvalues[k];
    let mut result = EquilibriumResult::new(basis, theta, value, Method::RayleighClosedForm)?;
    if k >= 1 && (eig.eigenvalues[k - 1] - value).abs() <= TIE_TOL {
        result.warnings.push(format!(
            "eigenvalues {} and {} tie at the cut; the neutralised subspace is not unique",
            k,
            k + 1
        ));
    }
    Ok(result)
}

/// Responses used by the PLS game: classification labels become ±1.
pub fn pls_responses(data: &Dataset) -> DVector<f64> {
    match data.task() {
        TaskKind::BinaryClassification => data.y().map(|v| 2.0 * v - 1.0),
        TaskKind::Regression => data.y().clone(),
    }
}

/// `A = Xᵀy yᵀX`.
pub fn pls_matrix(data: &Dataset) -> Result<SymMatrix> {
    let c = data.x().tr_mul(&pls_responses(data));
    SymMatrix::symmetrize(&(&c * c.transpose()))
}

pub fn pls_equilibrium(data: &Dataset, k: usize) -> Result<EquilibriumResult> {
    let y = pls_responses(data);
    let c = data.x().tr_mul(&y);
    let problem = RayleighProblem::new(pls_matrix(data)?, k)?;
    let mut result = rayleigh_equilibrium(&problem)?;
    if c.norm() < DEGENERATE_COVARIANCE {
        result.degenerate = true;
        result
            .warnings
            .push("Xᵀy is zero: nothing for the PLS game to remove".into());
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn reg(x: DMatrix<f64>, y: Vec<f64>) -> Dataset {
        Dataset::new(x, DVector::from_vec(y), TaskKind::Regression).unwrap()
    }

    /// Exact least squares on `XP` (centred), via the pseudo-inverse.
    fn best_mse(x: &DMatrix<f64>, y: &DVector<f64>, p: &DMatrix<f64>) -> f64 {
        let xp = x * p;
        let svd = xp.clone().svd(true, true);
        let theta = svd.solve(y, 1e-10).unwrap();
        (y - xp * theta).norm_squared() / y.len() as f64
    }

    #[test]
    fn regression_identity_design() {
        let data = reg(DMatrix::identity(2, 2), vec![1.0, -1.0]);
        let r = regression_equilibrium(&data).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r.basis[(0, 0)].abs() - s).abs() < 1e-12);
        assert!((r.basis[(0, 0)] + r.basis[(0, 1)]).abs() < 1e-12);
        assert!((r.game_value - 1.0).abs() < 1e-12);
        let (xc, yc, _, _) = centered(&data);
        assert!((best_mse(&xc, &yc, r.projection.as_matrix()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regression_degenerate() {
        let x = DMatrix::from_row_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
        let data = reg(x, vec![1.0, 1.0, -1.0, -1.0]);
        let r = regression_equilibrium(&data).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.projection, SymMatrix::identity(1));
        assert!(matches!(r.erasure(), Err(Error::Degenerate(_))));
    }

    #[test]
    fn regression_rejects_classification() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let data =
            Dataset::new(x, DVector::from_vec(vec![0.0, 1.0]), TaskKind::BinaryClassification)
                .unwrap();
        assert!(regression_equilibrium(&data).is_err());
    }

    #[test]
    fn regression_value_equals_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (n, d) = (200, 20);
        let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &x * w + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) + 3.0);
        let data = Dataset::new(x, y, TaskKind::Regression).unwrap();
        let r = regression_equilibrium(&data).unwrap();
        let (xc, yc, _, _) = centered(&data);
        let var = yc.norm_squared() / n as f64;
        assert!((best_mse(&xc, &yc, r.projection.as_matrix()) - var).abs() < 1e-8);
        assert!((r.game_value - var).abs() < 1e-12);
        assert!(r.erasure().is_ok());
    }

    #[test]
    fn rayleigh_diagonal() {
        let a = SymMatrix::from_diagonal(&[5.0, 3.0, 1.0]).unwrap();
        let r = rayleigh_equilibrium(&RayleighProblem::new(a.clone(), 1).unwrap()).unwrap();
        assert_eq!(r.game_value, 3.0);
        assert!(max_abs_diff(&r.basis, &DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0])) < 1e-14);
        assert!((r.theta_star[1] - 1.0).abs() < 1e-14);
        let q = rayleigh_quotient(&a, &r.projection, &r.theta_star).unwrap();
        assert!((q - 3.0).abs() < 1e-12);

        let r0 = rayleigh_equilibrium(&RayleighProblem::new(a, 0).unwrap()).unwrap();
        assert_eq!(r0.projection, SymMatrix::identity(3));
        assert_eq!(r0.game_value, 5.0);
        assert!((r0.theta_star[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rayleigh_zero_matrix() {
        let r = rayleigh_equilibrium(&RayleighProblem::new(SymMatrix::zeros(3), 2).unwrap()).unwrap();
        assert_eq!(r.game_value, 0.0);
        assert_eq!(
            r.projection.as_matrix(),
            &DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 1.0]))
        );
    }

    #[test]
    fn rayleigh_tie_warns() {
        let a = SymMatrix::from_diagonal(&[2.0, 2.0, 1.0]).unwrap();
        let r = rayleigh_equilibrium(&RayleighProblem::new(a, 1).unwrap()).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert!(RayleighProblem::new(SymMatrix::identity(2), 2).is_err());
    }

    #[test]
    fn pls_examples() {
        let data = reg(DMatrix::identity(2, 2), vec![1.0, 0.0]);
        let a = pls_matrix(&data).unwrap();
        assert_eq!(a.as_matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let r = pls_equilibrium(&data, 1).unwrap();
        assert_eq!(r.game_value, 0.0);
        assert!((r.basis[(0, 0)] - 1.0).abs() < 1e-14);
        let r0 = pls_equilibrium(&data, 0).unwrap();
        assert!((r0.game_value - 1.0).abs() < 1e-14);

        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let flat = reg(x, vec![1.0, -1.0]);
        let r = pls_equilibrium(&flat, 0).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.game_value, 0.0);
    }

    #[test]
    fn pls_kills_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let x = DMatrix::from_fn(50, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(50, |_, _| rng.sample::<f64, _>(StandardNormal));
        let data = Dataset::new(x.clone(), y.clone(), TaskKind::Regression).unwrap();
        let r = pls_equilibrium(&data, 1).unwrap();
        assert!(r.game_value.abs() < 1e-8);
        let cov = (x * r.projection.as_matrix()).tr_mul(&y);
        assert!(cov.norm() < 1e-8);
    }
}
