//! k-means clustering and the V-measure agreement score.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VMeasure {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Weighted harmonic mean of homogeneity and completeness.
///
/// A single true class counts as perfectly homogeneous; a single cluster
/// counts as perfectly complete.
pub fn v_measure<T: Hash + Eq, U: Hash + Eq>(
    labels_true: &[T],
    labels_cluster: &[U],
    beta: f64,
) -> Result<VMeasure> {
    if labels_true.len() != labels_cluster.len() {
        return Err(Error::DimensionMismatch {
            expected: labels_true.len(),
            got: labels_cluster.len(),
        });
    }
    if labels_true.is_empty() {
        return Err(Error::InvalidInput("V-measure of empty labelings".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    let n = labels_true.len() as f64;
    // Dense ids in order of first appearance keep the sums order-stable.
    let mut class_ids: HashMap<&T, usize> = HashMap::new();
    let mut cluster_ids: HashMap<&U, usize> = HashMap::new();
    let mut pairs = Vec::with_capacity(labels_true.len());
    for (c, k) in labels_true.iter().zip(labels_cluster) {
        let nc = class_ids.len();
        let nk = cluster_ids.len();
        pairs.push((*class_ids.entry(c).or_insert(nc), *cluster_ids.entry(k).or_insert(nk)));
    }
    let mut classes = vec![0usize; class_ids.len()];
    let mut clusters = vec![0usize; cluster_ids.len()];
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for &(c, k) in &pairs {
        classes[c] += 1;
        clusters[k] += 1;
        *joint.entry((c, k)).or_default() += 1;
    }
    let h_c = entropy(classes.iter().copied(), n);
    let h_k = entropy(clusters.iter().copied(), n);
    let mut h_c_given_k = 0.0;
    let mut h_k_given_c = 0.0;
    for (&(c, k), &nck) in &joint {
        let p = nck as f64 / n;
        h_c_given_k -= p * (nck as f64 / clusters[k] as f64).ln();
        h_k_given_c -= p * (nck as f64 / classes[c] as f64).ln();
    }
    let homogeneity = if h_c == 0.0 { 1.0 } else { 1.0 - h_c_given_k / h_c };
    let completeness = if h_k == 0.0 { 1.0 } else { 1.0 - h_k_given_c / h_k };
    let denom = beta * homogeneity + completeness;
    let v = if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta) * homogeneity * completeness / denom
    };
    Ok(VMeasure {
        homogeneity,
        completeness,
        v_measure: v,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
}

fn sq_dist(x: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, j: usize) -> f64 {
    x.row(i)
        .iter()
        .zip(c.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn plus_plus_init(x: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = x.nrows();
    let mut centroids = DMatrix::zeros(k, x.ncols());
    centroids.set_row(0, &x.row(rng.random_range(0..n)));
    let mut nearest = DVector::from_fn(n, |i, _| sq_dist(x, i, &centroids, 0));
    for j in 1..k {
        let total = nearest.sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        };
        centroids.set_row(j, &x.row(pick));
        for i in 0..n {
            nearest[i] = nearest[i].min(sq_dist(x, i, &centroids, j));
        }
    }
    centroids
}

fn lloyd(x: &DMatrix<f64>, mut centroids: DMatrix<f64>) -> KMeansResult {
    let (n, d) = x.shape();
    let k = centroids.nrows();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let best = (0..k)
                .map(|j| (j, sq_dist(x, i, &centroids, j)))
                .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b })
                .0;
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        let mut sums = DMatrix::<f64>::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            let mut row = sums.row_mut(l);
            row += x.row(i);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids.set_row(j, &(sums.row(j) / counts[j] as f64));
            } else {
                // Empty cluster: reseed at the point farthest from its centroid.
                let far = (0..n)
                    .map(|i| (i, sq_dist(x, i, &centroids, labels[i])))
                    .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b })
                    .0;
                centroids.set_row(j, &x.row(far));
                labels[far] = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(x, i, &centroids, l))
        .sum();
    KMeansResult {
        labels,
        centroids,
        inertia,
    }
}

/// k-means++ seeding followed by Lloyd iterations; the restart with the
/// lowest inertia wins.
pub fn kmeans_cluster(
    x: &DMatrix<f64>,
    n_clusters: usize,
    seed: u64,
    restarts: usize,
) -> Result<KMeansResult> {
    let n = x.nrows();
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::InvalidArgument(format!(
            "cluster count must be in 1..={n}, got {n_clusters}"
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts {
        let init = plus_plus_init(x, n_clusters, &mut rng);
        let run = lloyd(x, init);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
