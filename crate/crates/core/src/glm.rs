//! Loss / inverse-link pairs shared by the predictor and the eraser.
//!
//! Every objective here is a mean over examples of `ℓ(y, g⁻¹(θᵀ P x))`.
//! There is no intercept; centre or augment the data if one is needed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlmKind {
    /// `(y − z)²` with the identity link.
    SquaredErrorIdentity,
    /// Binary cross-entropy with the sigmoid link.
    Logistic,
    /// `(y·z)²` with the identity link.
    Pls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlmSpec {
    pub kind: GlmKind,
}

impl GlmSpec {
    pub const fn new(kind: GlmKind) -> Self {
        GlmSpec { kind }
    }

    pub const fn logistic() -> Self {
        GlmSpec::new(GlmKind::Logistic)
    }

    pub const fn squared_error() -> Self {
        GlmSpec::new(GlmKind::SquaredErrorIdentity)
    }

    pub const fn pls() -> Self {
        GlmSpec::new(GlmKind::Pls)
    }

    /// `g⁻¹(z)`.
    pub fn inverse_link(&self, z: f64) -> f64 {
        match self.kind {
            GlmKind::Logistic => sigmoid(z),
            GlmKind::SquaredErrorIdentity | GlmKind::Pls => z,
        }
    }

    /// `ℓ(y, g⁻¹(z))` evaluated from the raw score for numerical stability.
    pub fn loss_at_score(&self, y: f64, z: f64) -> f64 {
        match self.kind {
            GlmKind::SquaredErrorIdentity => (y - z) * (y - z),
            GlmKind::Logistic => softplus(z) - y * z,
            GlmKind::Pls => (y * z) * (y * z),
        }
    }

    /// `∂ℓ(y, g⁻¹(z)) / ∂z`.
    pub fn dloss_dscore(&self, y: f64, z: f64) -> f64 {
        match self.kind {
            GlmKind::SquaredErrorIdentity => 2.0 * (z - y),
            GlmKind::Logistic => sigmoid(z) - y,
            GlmKind::Pls => 2.0 * y * y * z,
        }
    }

    fn check_responses(&self, y: &DVector<f64>) -> Result<()> {
        if self.kind == GlmKind::Logistic {
            if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidInput(format!(
                    "logistic loss needs labels in {{0, 1}}, found {bad}"
                )));
            }
        }
        Ok(())
    }

    /// `g⁻¹(θᵀ P x)`.
    pub fn predict(&self, theta: &DVector<f64>, p: &SymMatrix, x: &DVector<f64>) -> Result<f64> {
        Error::check_dim(p.dim(), theta.len())?;
        Error::check_dim(p.dim(), x.len())?;
        let z = (p.as_matrix() * theta).dot(x);
        Ok(self.inverse_link(z))
    }

    /// Mean loss over the rows of `x`.
    pub fn loss(
        &self,
        theta: &DVector<f64>,
        p: &SymMatrix,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
    ) -> Result<f64> {
        let scores = self.scores(theta, p, x, y)?;
        let total: f64 = y
            .iter()
            .zip(scores.iter())
            .map(|(&yi, &zi)| self.loss_at_score(yi, zi))
            .sum();
        Ok(total / y.len() as f64)
    }

    /// Gradient of [`GlmSpec::loss`] with respect to `θ`.
    pub fn grad_theta(
        &self,
        theta: &DVector<f64>,
        p: &SymMatrix,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let g = self.score_weighted_inputs(theta, p, x, y)?;
        Ok(p.as_matrix() * g)
    }

    /// Gradient of [`GlmSpec::loss`] with respect to the matrix argument `P`,
    /// symmetrised because `P` is constrained to be symmetric.
    pub fn grad_eraser(
        &self,
        theta: &DVector<f64>,
        p: &SymMatrix,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
    ) -> Result<SymMatrix> {
        let g = self.score_weighted_inputs(theta, p, x, y)?;
        // ∂z_n/∂P = θ x_nᵀ, so ∂L/∂P = θ gᵀ with g = mean_n ℓ'_n x_n.
        let outer = theta * g.transpose();
        SymMatrix::symmetrize(&outer)
    }

    pub fn batch_loss(&self, theta: &DVector<f64>, p: &SymMatrix, data: &Dataset) -> Result<f64> {
        self.loss(theta, p, data.x(), data.y())
    }

    pub fn batch_grad_theta(
        &self,
        theta: &DVector<f64>,
        p: &SymMatrix,
        data: &Dataset,
    ) -> Result<DVector<f64>> {
        self.grad_theta(theta, p, data.x(), data.y())
    }

    pub fn batch_grad_eraser(
        &self,
        theta: &DVector<f64>,
        p: &SymMatrix,
        data: &Dataset,
    ) -> Result<SymMatrix> {
        self.grad_eraser(theta, p, data.x(), data.y())
    }

    fn scores(
        &self,
        theta: &DVector<f64>,
        p: &SymMatrix,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        Error::check_dim(p.dim(), theta.len())?;
        Error::check_dim(p.dim(), x.ncols())?;
        Error::check_dim(x.nrows(), y.len())?;
        if y.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        self.check_responses(y)?;
        Ok(x * (p.as_matrix() * theta))
    }

    /// `mean_n ℓ'(y_n, z_n) x_n`.
    fn score_weighted_inputs(
        &self,
        theta: &DVector<f64>,
        p: &SymMatrix,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let scores = self.scores(theta, p, x, y)?;
        let residual = DVector::from_iterator(
            y.len(),
            y.iter()
                .zip(scores.iter())
                .map(|(&yi, &zi)| self.dloss_dscore(yi, zi)),
        );
        Ok(x.tr_mul(&residual) / y.len() as f64)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eᶻ)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}
