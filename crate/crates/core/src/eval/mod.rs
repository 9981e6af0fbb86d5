//! Post-erasure measurements.

mod cluster;
mod fairness;
mod similarity;
mod weat;

pub use cluster::{kmeans_cluster, v_measure, KMeansResult, VMeasure};
pub use fairness::{group_shares, tpr_gap_suite, TprCell, TprGapReport, TprTable};
pub use similarity::{pearson, similarity_correlation};
pub use weat::{weat_statistic, WeatResult, WeatSpec, WeatSpecFile, EXACT_LIMIT, MONTE_CARLO_PERMUTATIONS};

use serde::Serialize;

use crate::dataio::{apply_projection, Dataset, ErasureProjection, TaskKind};
use crate::error::{Error, Result};
use crate::probe::{LogisticProbe, ProbeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeReport {
    pub accuracy: f64,
    pub loss: f64,
    /// Majority-class share of the test set.
    pub majority: f64,
}

/// Trains a fresh logistic probe on (optionally projected) training data and
/// scores it on the (identically projected) test data.
pub fn probe_accuracy(
    train: &Dataset,
    test: &Dataset,
    proj: Option<&ErasureProjection>,
    budget: &ProbeConfig,
) -> Result<ProbeReport> {
    if train.task() != TaskKind::BinaryClassification
        || test.task() != TaskKind::BinaryClassification
    {
        return Err(Error::InvalidInput("probe needs binary-classification data".into()));
    }
    Error::check_dim(train.dim(), test.dim())?;
    let (xtr, xte) = match proj {
        Some(p) => (apply_projection(train.x(), p)?, apply_projection(test.x(), p)?),
        None => (train.x().clone(), test.x().clone()),
    };
    let probe = LogisticProbe::fit(&xtr, train.y(), budget)?;
    let (accuracy, loss) = probe.evaluate(&xte, test.y())?;
    Ok(ProbeReport {
        accuracy,
        loss,
        majority: test.majority_share(),
    })
}

/// Everything `erasure eval` can report.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weat: Option<WeatResult>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub v_measure: Vec<ClusterScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tpr_gap: Option<TprGapReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity: Option<SimilarityScore>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rank_sweep: Vec<SweepPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterScore {
    pub n_clusters: usize,
    pub v_measure: f64,
    pub homogeneity: f64,
    pub completeness: f64,
}

/// Pairs with a word missing from the vectors are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimilarityScore {
    pub correlation: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub rank: usize,
    pub accuracy: f64,
    pub loss: f64,
}
