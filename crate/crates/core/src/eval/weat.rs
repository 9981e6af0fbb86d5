//! Word embedding association test.
//!
//! `s(w) = mean_a cos(w, a) − mean_b cos(w, b)`; the effect size is the
//! difference of the target-set means of `s` divided by the population
//! standard deviation of `s` over both target sets. The p-value is one-sided:
//! the share of equal-size re-partitions whose `Σ_X s − Σ_Y s` is at least
//! the observed one.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::Vectors;
use crate::error::{Error, Result};

/// Largest number of partitions enumerated exactly.
pub const EXACT_LIMIT: u64 = 20_000;
pub const MONTE_CARLO_PERMUTATIONS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct WeatSpec {
    pub targets_x: Vec<DVector<f64>>,
    pub targets_y: Vec<DVector<f64>>,
    pub attributes_a: Vec<DVector<f64>>,
    pub attributes_b: Vec<DVector<f64>>,
}

/// On-disk form: word ids resolved against a vectors file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatSpecFile {
    #[serde(rename = "X")]
    pub x: Vec<String>,
    #[serde(rename = "Y")]
    pub y: Vec<String>,
    #[serde(rename = "A")]
    pub a: Vec<String>,
    #[serde(rename = "B")]
    pub b: Vec<String>,
}

impl WeatSpecFile {
    pub fn resolve(&self, vectors: &Vectors) -> Result<WeatSpec> {
        let index = vectors.index();
        let lookup = |ids: &[String]| -> Result<Vec<DVector<f64>>> {
            ids.iter()
                .map(|id| {
                    index
                        .get(id.as_str())
                        .map(|&i| vectors.matrix.row(i).transpose())
                        .ok_or_else(|| Error::InvalidInput(format!("WEAT word \"{id}\" has no vector")))
                })
                .collect()
        };
        Ok(WeatSpec {
            targets_x: lookup(&self.x)?,
            targets_y: lookup(&self.y)?,
            attributes_a: lookup(&self.a)?,
            attributes_b: lookup(&self.b)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeatResult {
    pub d: f64,
    pub p_value: f64,
    pub n_permutations: u64,
    pub exact: bool,
    /// All association scores were identical; `d` is reported as 0.
    pub zero_variance: bool,
}

fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}

fn association(w: &DVector<f64>, a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let ma = a.iter().map(|v| cosine(w, v)).sum::<f64>() / a.len() as f64;
    let mb = b.iter().map(|v| cosine(w, v)).sum::<f64>() / b.len() as f64;
    ma - mb
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
        if acc > u64::MAX / 2 {
            return u64::MAX;
        }
    }
    acc
}

/// Visits every `k`-subset of `0..n` in lexicographic order.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub fn weat_statistic(spec: &WeatSpec, seed: u64) -> Result<WeatResult> {
    let sets = [
        ("X", &spec.targets_x),
        ("Y", &spec.targets_y),
        ("A", &spec.attributes_a),
        ("B", &spec.attributes_b),
    ];
    for (name, set) in sets {
        if set.is_empty() {
            return Err(Error::InvalidInput(format!("WEAT set {name} is empty")));
        }
        if set.iter().any(|v| v.norm() == 0.0) {
            return Err(Error::InvalidInput(format!(
                "WEAT set {name} contains a zero vector; cosine is undefined"
            )));
        }
    }
    if spec.targets_x.len() != spec.targets_y.len() {
        return Err(Error::InvalidInput(format!(
            "target sets must have equal size, got {} and {}",
            spec.targets_x.len(),
            spec.targets_y.len()
        )));
    }
    let (a, b) = (&spec.attributes_a, &spec.attributes_b);
    let scores: Vec<f64> = spec
        .targets_x
        .iter()
        .chain(spec.targets_y.iter())
        .map(|w| association(w, a, b))
        .collect();
    let nx = spec.targets_x.len();
    let n = scores.len();

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let all_mean = mean(&scores);
    let std = (scores.iter().map(|s| (s - all_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let diff = mean(&scores[..nx]) - mean(&scores[nx..]);
    let zero_variance = std <= 1e-15 * scores.iter().fold(1.0f64, |m, s| m.max(s.abs()));
    let d = if zero_variance { 0.0 } else { diff / std };

    // Σ_X s − Σ_Y s = 2 Σ_X s − Σ s.
    let total: f64 = scores.iter().sum();
    let observed = 2.0 * scores[..nx].iter().sum::<f64>() - total;
    let slack = 1e-12 * scores.iter().map(|s| s.abs()).sum::<f64>().max(1e-300);
    let partitions = binomial(n as u64, nx as u64);
    let (hits, count, exact) = if partitions <= EXACT_LIMIT {
        let mut hits = 0u64;
        for_each_combination(n, nx, |chosen| {
            let s = 2.0 * chosen.iter().map(|&i| scores[i]).sum::<f64>() - total;
            if s >= observed - slack {
                hits += 1;
            }
        });
        (hits, partitions, true)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut hits = 0u64;
        for _ in 0..MONTE_CARLO_PERMUTATIONS {
            order.shuffle(&mut rng);
            let s = 2.0 * order[..nx].iter().map(|&i| scores[i]).sum::<f64>() - total;
            if s >= observed - slack {
                hits += 1;
            }
        }
        (hits, MONTE_CARLO_PERMUTATIONS as u64, false)
    };
    Ok(WeatResult {
        d,
        p_value: hits as f64 / count as f64,
        n_permutations: count,
        exact,
        zero_variance,
    })
}
