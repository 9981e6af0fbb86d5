//! Euclidean projection onto the Fantope
//! `F_k = { A symmetric : 0 ≼ A ≼ I, tr A = k }`.
//!
//! The projection keeps the eigenvectors and replaces each eigenvalue `λ`
//! by `min(max(λ − γ, 0), 1)`, where the shift `γ` is the root of the
//! piecewise-linear, non-increasing residual [`gamma_residual`]. The root is
//! bracketed by `[λ_min − 1, λ_max]` and found by bisection.

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, SymMatrix};

/// Default residual tolerance for the shift.
pub const DEFAULT_TOL: f64 = 1e-10;
const MIN_BRACKET: f64 = 1e-14;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FantopeSpec {
    dim: usize,
    k: usize,
}

impl FantopeSpec {
    pub fn new(dim: usize, k: usize) -> Result<Self> {
        if k < 1 || k >= dim {
            return Err(Error::InvalidArgument(format!(
                "Fantope trace must satisfy 1 <= k < D, got k={k}, D={dim}"
            )));
        }
        Ok(FantopeSpec { dim, k })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

fn clip(lambda: f64, gamma: f64) -> f64 {
    (lambda - gamma).clamp(0.0, 1.0)
}

/// `Σ_d min(max(λ_d − γ, 0), 1) − k`.
pub fn gamma_residual(eigenvalues: &[f64], gamma: f64, k: usize) -> f64 {
    eigenvalues.iter().map(|&l| clip(l, gamma)).sum::<f64>() - k as f64
}

/// Finds the eigenvalue shift `γ` with `gamma_residual(λ, γ, k) ≈ 0`.
pub fn solve_shift(eigenvalues: &[f64], k: usize, tol: f64) -> Result<f64> {
    let lo_init = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let hi_init = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (lo_init, hi_init);
    // residual(lo) = D − k > 0 and residual(hi) = −k < 0 for 1 <= k < D.
    if !(gamma_residual(eigenvalues, lo, k) > 0.0 && gamma_residual(eigenvalues, hi, k) < 0.0) {
        return Err(Error::Internal(format!(
            "Fantope shift not bracketed by [{lo}, {hi}]"
        )));
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let r = gamma_residual(eigenvalues, mid, k);
        if r.abs() <= tol || hi - lo <= MIN_BRACKET || mid == lo || mid == hi {
            return Ok(mid);
        }
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Internal(format!(
        "Fantope bisection did not converge in {MAX_BISECTIONS} steps"
    )))
}

/// Nearest point of `F_k` to `m` in Frobenius norm.
pub fn fantope_project(m: &SymMatrix, spec: FantopeSpec, tol: f64) -> Result<SymMatrix> {
    Error::check_dim(spec.dim, m.dim())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let eig = sym_eig(m);
    let gamma = solve_shift(eig.eigenvalues.as_slice(), spec.k, tol)?;
    Ok(eig.map_spectrum(|l| clip(l, gamma)))
}

/// Whether `m` lies in `F_k` up to `tol` on the eigenvalue bounds and trace.
pub fn is_member(m: &SymMatrix, k: usize, tol: f64) -> bool {
    let eig = sym_eig(m);
    let in_bounds = eig
        .eigenvalues
        .iter()
        .all(|&l| l >= -tol && l <= 1.0 + tol);
    in_bounds && (m.trace() - k as f64).abs() <= tol
}
