//! Relaxed adversarial concept erasure.
//!
//! The adversary is a rank-`k` eraser `M` relaxed to the Fantope `F_k`;
//! the predictor sees the data through `I − M`. Each outer loop takes
//! `M` inner SGD steps on `θ` (descent) followed by `M` inner projected
//! steps on the eraser (ascent, symmetrise, project onto `F_k`). Every
//! `eval_every` outer loops the current eraser is snapped to an exact
//! projection, a fresh probe is trained on held-out data through it, and
//! the eraser with the highest probe loss is kept. The result is the
//! snapped best eraser.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::{apply_projection, Dataset, ErasureProjection, Method, TaskKind};
use crate::error::{Error, Result};
use crate::fantope::{self, FantopeSpec};
use crate::glm::GlmSpec;
use crate::linalg::{self, sym_eig, SymMatrix};
use crate::probe::{LogisticProbe, ProbeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlaceConfig {
    /// Rank of the neutralised subspace.
    pub k: usize,
    pub outer_loops: usize,
    pub inner_loops: usize,
    pub lr_theta: f64,
    pub lr_eraser: f64,
    /// Decoupled weight decay on `θ`.
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Outer loops between adversary evaluations.
    pub eval_every: usize,
    pub probe: ProbeConfig,
    pub seed: u64,
    /// Share of the data held out for adversary selection.
    pub dev_fraction: f64,
}

impl Default for RlaceConfig {
    fn default() -> Self {
        RlaceConfig {
            k: 1,
            outer_loops: 50_000,
            inner_loops: 1,
            lr_theta: 0.005,
            lr_eraser: 0.005,
            weight_decay: 0.0,
            batch_size: 128,
            eval_every: 1000,
            probe: ProbeConfig::default(),
            seed: 0,
            dev_fraction: 0.2,
        }
    }
}

impl RlaceConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.k < 1 || self.k >= dim {
            return bad(format!("rank must satisfy 1 <= k < D={dim}, got {}", self.k));
        }
        if self.outer_loops < 1 || self.inner_loops < 1 {
            return bad("outer and inner loop counts must be >= 1".into());
        }
        if !(self.lr_theta > 0.0 && self.lr_eraser > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be non-negative".into());
        }
        if self.batch_size < 1 || self.eval_every < 1 {
            return bad("batch size and evaluation interval must be >= 1".into());
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return bad(format!(
                "dev fraction must be in (0, 1), got {}",
                self.dev_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestAdversary {
    pub eraser: SymMatrix,
    pub loss: f64,
    pub accuracy: f64,
    pub outer_loop: usize,
}

/// Optimisation state of one fit.
#[derive(Debug, Clone)]
pub struct RelaxedAdversaryState {
    /// Relaxed eraser in `F_k`; the predictor sees `X (I − eraser)`.
    pub eraser: SymMatrix,
    pub theta: DVector<f64>,
    pub best: Option<BestAdversary>,
    pub predictor_steps: usize,
    pub adversary_steps: usize,
}

impl RelaxedAdversaryState {
    /// `θ ~ N(0, 0.01²)`; the eraser starts as the orthogonal projection onto
    /// a uniformly random `k`-dimensional subspace, a vertex of `F_k`.
    pub fn init(dim: usize, k: usize, rng: &mut impl Rng) -> Result<Self> {
        FantopeSpec::new(dim, k)?;
        let theta = DVector::from_fn(dim, |_, _| 0.01 * rng.sample::<f64, _>(StandardNormal));
        let frame = linalg::random_frame(dim, k, rng);
        let eraser = SymMatrix::symmetrize(&frame.tr_mul(&frame))?;
        Ok(RelaxedAdversaryState {
            eraser,
            theta,
            best: None,
            predictor_steps: 0,
            adversary_steps: 0,
        })
    }

    /// `I − eraser`.
    pub fn effective_projection(&self) -> SymMatrix {
        let d = self.eraser.dim();
        // Exactly symmetric since the eraser is.
        SymMatrix::new(DMatrix::identity(d, d) - self.eraser.as_matrix())
            .expect("difference of symmetric matrices is symmetric")
    }

    /// Records an evaluation, keeping the eraser with the highest probe loss.
    pub fn record(&mut self, loss: f64, accuracy: f64, outer_loop: usize) -> bool {
        let better = self.best.as_ref().is_none_or(|b| loss > b.loss);
        if better {
            self.best = Some(BestAdversary {
                eraser: self.eraser.clone(),
                loss,
                accuracy,
                outer_loop,
            });
        }
        better
    }
}

/// A batch of rows.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Batch {
    pub fn of(data: &Dataset, rows: &[usize]) -> Self {
        Batch {
            x: data.x().select_rows(rows),
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&i| data.y()[i])),
        }
    }

    pub fn whole(data: &Dataset) -> Self {
        Batch {
            x: data.x().clone(),
            y: data.y().clone(),
        }
    }
}

fn ensure_finite(values: impl IntoIterator<Item = f64>, what: &str, step: usize) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::Divergence(format!("{what} step {step}")))
    }
}

/// One SGD step on `θ`: `θ ← θ − α (∇_θ L + wd·θ)` with the data seen
/// through `I − eraser`.
pub fn predictor_step(
    state: &mut RelaxedAdversaryState,
    batch: &Batch,
    spec: &GlmSpec,
    config: &RlaceConfig,
) -> Result<()> {
    let p = state.effective_projection();
    let grad = spec.grad_theta(&state.theta, &p, &batch.x, &batch.y)?;
    let decay = config.weight_decay;
    state.theta = &state.theta * (1.0 - config.lr_theta * decay) - grad * config.lr_theta;
    state.predictor_steps += 1;
    ensure_finite(state.theta.iter().copied(), "predictor", state.predictor_steps)
}

/// One projected ascent step on the eraser.
///
/// The loss is evaluated at `P = I − eraser`, so `∂L/∂eraser = −∂L/∂P`.
pub fn adversary_step(
    state: &mut RelaxedAdversaryState,
    batch: &Batch,
    spec: &GlmSpec,
    config: &RlaceConfig,
) -> Result<()> {
    let p = state.effective_projection();
    let grad_p = spec.grad_eraser(&state.theta, &p, &batch.x, &batch.y)?;
    let moved = state.eraser.as_matrix() - grad_p.as_matrix() * config.lr_eraser;
    state.adversary_steps += 1;
    ensure_finite(moved.iter().copied(), "adversary", state.adversary_steps)?;
    let symmetric = SymMatrix::symmetrize(&moved)?;
    let spec_f = FantopeSpec::new(state.eraser.dim(), config.k)?;
    state.eraser = fantope::fantope_project(&symmetric, spec_f, fantope::DEFAULT_TOL)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Snap {
    pub projection: ErasureProjection,
    /// `‖eraser − WᵀW‖_F` for the snapped basis `W`.
    pub residual: f64,
}

/// Exact projection neutralising the top-`k` eigenvectors of the eraser.
pub fn snap_to_projection(eraser: &SymMatrix, k: usize) -> Result<Snap> {
    let eig = sym_eig(eraser);
    let basis = eig.top_rows(k);
    let gram = basis.tr_mul(&basis);
    let residual = (eraser.as_matrix() - gram).norm();
    let projection = ErasureProjection::from_basis(basis, Method::Rlace)?;
    Ok(Snap {
        projection,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdversaryEvaluation {
    pub outer_loop: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Freezes the eraser, trains a fresh probe on the snapped projection of the
/// dev data, and returns its `(loss, accuracy)` on that data.
pub fn evaluate_adversary(
    eraser: &SymMatrix,
    dev: &Dataset,
    config: &RlaceConfig,
) -> Result<(f64, f64)> {
    if dev.task() != TaskKind::BinaryClassification {
        return Err(Error::InvalidInput("dev set must be binary-classification".into()));
    }
    let snap = snap_to_projection(eraser, config.k)?;
    let x = apply_projection(dev.x(), &snap.projection)?;
    let probe = LogisticProbe::fit(&x, dev.y(), &config.probe)?;
    let (accuracy, loss) = probe.evaluate(&x, dev.y())?;
    Ok((loss, accuracy))
}

#[derive(Debug, Clone, Serialize)]
pub struct FitDiagnostics {
    /// Eigenvalues of the relaxed eraser at termination, descending.
    pub final_spectrum: Vec<f64>,
    /// Eigenvalues of the selected (best) relaxed eraser, descending.
    pub best_spectrum: Vec<f64>,
    pub evaluations: Vec<AdversaryEvaluation>,
    pub best_outer_loop: usize,
    pub best_loss: f64,
    pub best_accuracy: f64,
    pub snap_residual: f64,
}

/// Cycles through seeded per-epoch shuffles of the training rows.
struct BatchStream {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    fn new(n: usize, rng: ChaCha8Rng) -> Self {
        let mut s = BatchStream {
            order: (0..n).collect(),
            cursor: n,
            rng,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    fn next_rows(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        if self.cursor + size > self.order.len() {
            self.reshuffle();
        }
        let rows = self.order[self.cursor..self.cursor + size].to_vec();
        self.cursor += size;
        rows
    }
}

pub fn rlace_fit(
    data: &Dataset,
    spec: &GlmSpec,
    config: &RlaceConfig,
) -> Result<(ErasureProjection, FitDiagnostics)> {
    if data.task() != TaskKind::BinaryClassification {
        return Err(Error::InvalidArgument(
            "R-LACE needs binary labels; use the closed-form solvers for regression".into(),
        ));
    }
    config.validate(data.dim())?;
    let (train, dev) = data.split(config.dev_fraction, config.seed)?;
    rlace_fit_split(&train, &dev, spec, config)
}

/// Like [`rlace_fit`] with an explicit selection set: the game is played on
/// `train` and adversaries are scored by probes trained on `dev`.
pub fn rlace_fit_split(
    train: &Dataset,
    dev: &Dataset,
    spec: &GlmSpec,
    config: &RlaceConfig,
) -> Result<(ErasureProjection, FitDiagnostics)> {
    for part in [train, dev] {
        if part.task() != TaskKind::BinaryClassification {
            return Err(Error::InvalidArgument(
                "R-LACE needs binary labels; use the closed-form solvers for regression".into(),
            ));
        }
    }
    Error::check_dim(train.dim(), dev.dim())?;
    config.validate(train.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = RelaxedAdversaryState::init(train.dim(), config.k, &mut rng)?;
    let mut stream = BatchStream::new(train.len(), ChaCha8Rng::seed_from_u64(rng.random()));
    let mut evaluations = Vec::new();

    for outer in 1..=config.outer_loops {
        for _ in 0..config.inner_loops {
            let batch = Batch::of(train, &stream.next_rows(config.batch_size));
            predictor_step(&mut state, &batch, spec, config)?;
        }
        for _ in 0..config.inner_loops {
            let batch = Batch::of(train, &stream.next_rows(config.batch_size));
            adversary_step(&mut state, &batch, spec, config)?;
        }
        if outer % config.eval_every == 0 || outer == config.outer_loops {
            let (loss, accuracy) = evaluate_adversary(&state.eraser, dev, config)?;
            evaluations.push(AdversaryEvaluation {
                outer_loop: outer,
                loss,
                accuracy,
            });
            state.record(loss, accuracy, outer);
        }
    }

    let best = state
        .best
        .clone()
        .ok_or_else(|| Error::Internal("no adversary was evaluated".into()))?;
    let snap = snap_to_projection(&best.eraser, config.k)?;
    let spectrum = |m: &SymMatrix| sym_eig(m).eigenvalues.iter().copied().collect::<Vec<_>>();
    let diagnostics = FitDiagnostics {
        final_spectrum: spectrum(&state.eraser),
        best_spectrum: spectrum(&best.eraser),
        evaluations,
        best_outer_loop: best.outer_loop,
        best_loss: best.loss,
        best_accuracy: best.accuracy,
        snap_residual: snap.residual,
    };
    let projection = snap
        .projection
        .with_seed(config.seed)
        .with_meta("best_outer_loop", best.outer_loop)
        .with_meta("best_dev_loss", best.loss)
        .with_meta("outer_loops", config.outer_loops)
        .with_meta("lr_theta", config.lr_theta)
        .with_meta("lr_eraser", config.lr_eraser)
        .with_meta("batch_size", config.batch_size)
        .with_meta("snap_residual", snap.residual);
    debug_assert!(linalg::is_orthogonal_projection(projection.matrix(), 1e-6).is_projection);
    Ok((projection, diagnostics))
}
