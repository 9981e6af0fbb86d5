//! Rank-k linear concept erasure.
//!
//! Fits orthogonal projections that remove a concept from vector
//! representations. Regression and Rayleigh-quotient objectives have closed
//! forms; classification uses a relaxed adversarial solver over the Fantope.
//! INLP and mean-difference baselines and a set of erasure metrics are
//! included for comparison.

pub mod baselines;
pub mod cli;
pub mod closedform;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod fantope;
pub mod glm;
pub mod linalg;
pub mod probe;
pub mod rlace;
pub mod synth;

pub use dataio::{apply_projection, Dataset, ErasureProjection, Method, TaskKind};
pub use error::{Error, Result};
pub use linalg::SymMatrix;
