//! L2-regularised logistic probe trained by damped Newton iterations.
//!
//! Used to measure how much label information a representation still
//! carries. Training starts from zero and is fully deterministic.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Newton iteration budget.
    pub max_iter: usize,
    /// Stop once the max-abs gradient of the penalised objective is below this.
    pub tol: f64,
    /// Ridge weight on the (non-intercept) coefficients of the mean loss.
    pub l2: f64,
    pub fit_intercept: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            max_iter: 100,
            tol: 1e-8,
            l2: 1e-4,
            fit_intercept: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProbe {
    pub weights: DVector<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_labels(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    Error::check_dim(x.nrows(), y.len())?;
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput(format!("probe labels must be 0 or 1, found {bad}")));
    }
    Ok(())
}

impl LogisticProbe {
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &ProbeConfig) -> Result<Self> {
        check_labels(x, y)?;
        let positives = y.iter().filter(|&&v| v == 1.0).count();
        if positives == 0 || positives == y.len() {
            return Err(Error::InvalidInput(
                "probe training data must contain both classes".into(),
            ));
        }
        let (n, d) = x.shape();
        let nf = n as f64;
        let width = d + usize::from(cfg.fit_intercept);
        let design = if cfg.fit_intercept {
            x.clone().insert_column(d, 1.0)
        } else {
            x.clone()
        };
        let penalty = DVector::from_fn(width, |i, _| if i < d { cfg.l2 } else { 0.0 });

        let objective = |params: &DVector<f64>| -> f64 {
            let z = &design * params;
            let ce: f64 = z
                .iter()
                .zip(y.iter())
                .map(|(&zi, &yi)| softplus(zi) - yi * zi)
                .sum::<f64>()
                / nf;
            ce + 0.5 * params.component_mul(&penalty).dot(params)
        };

        let mut params = DVector::zeros(width);
        let mut value = objective(&params);
        let mut converged = false;
        let mut iterations = 0;
        while iterations < cfg.max_iter {
            let z = &design * &params;
            let p = z.map(sigmoid);
            let grad = design.tr_mul(&(&p - y)) / nf + penalty.component_mul(&params);
            if grad.amax() < cfg.tol {
                converged = true;
                break;
            }
            let w = p.map(|pi| (pi * (1.0 - pi)).max(1e-12));
            let mut weighted = design.clone();
            for (i, mut row) in weighted.row_iter_mut().enumerate() {
                row *= w[i] / nf;
            }
            let mut hess = design.tr_mul(&weighted);
            for i in 0..width {
                hess[(i, i)] += penalty[i] + 1e-12;
            }
            let step = match hess.clone().cholesky() {
                Some(ch) => ch.solve(&grad),
                None => hess
                    .lu()
                    .solve(&grad)
                    .ok_or_else(|| Error::Internal("singular probe Hessian".into()))?,
            };
            // Backtracking keeps the damped Newton step monotone.
            let slope = grad.dot(&step);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..50 {
                let candidate = &params - &step * t;
                let cv = objective(&candidate);
                if cv <= value - 1e-4 * t * slope {
                    params = candidate;
                    value = cv;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            iterations += 1;
            if !accepted {
                // No further decrease is representable.
                converged = true;
                break;
            }
            if !value.is_finite() {
                return Err(Error::Divergence(format!("probe iteration {iterations}")));
            }
        }
        let (weights, intercept) = if cfg.fit_intercept {
            (params.rows(0, d).into_owned(), params[d])
        } else {
            (params, 0.0)
        };
        Ok(LogisticProbe {
            weights,
            intercept,
            iterations,
            converged,
        })
    }

    pub fn scores(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        Error::check_dim(self.weights.len(), x.ncols())?;
        Ok((x * &self.weights).add_scalar(self.intercept))
    }

    /// Accuracy at the 0.5 threshold and unpenalised mean cross-entropy.
    pub fn evaluate(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(f64, f64)> {
        check_labels(x, y)?;
        let z = self.scores(x)?;
        let n = y.len() as f64;
        let correct = z
            .iter()
            .zip(y.iter())
            .filter(|(&zi, &yi)| (zi > 0.0) == (yi == 1.0))
            .count() as f64;
        let loss = z
            .iter()
            .zip(y.iter())
            .map(|(&zi, &yi)| softplus(zi) - yi * zi)
            .sum::<f64>()
            / n;
        Ok((correct / n, loss))
    }
}
