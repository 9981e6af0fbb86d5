//! Seeded synthetic fixtures with known label geometry.
//!
//! Every fixture embeds its signal in a random orthonormal frame so that no
//! coordinate axis is special, and labels are exactly balanced.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::dataio::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::linalg::random_frame;

/// Class offset along the planted direction, in noise standard deviations.
pub const PLANTED_MARGIN: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureKind {
    Planted1d,
    Planted3d,
    MultiSeparable,
    NoSignal,
    Blobs,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 5] = [
        FixtureKind::Planted1d,
        FixtureKind::Planted3d,
        FixtureKind::MultiSeparable,
        FixtureKind::NoSignal,
        FixtureKind::Blobs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FixtureKind::Planted1d => "planted-1d",
            FixtureKind::Planted3d => "planted-3d",
            FixtureKind::MultiSeparable => "multi-separable",
            FixtureKind::NoSignal => "no-signal",
            FixtureKind::Blobs => "blobs",
        }
    }
}

impl fmt::Display for FixtureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FixtureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FixtureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown fixture kind '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub kind: FixtureKind,
    pub data: Dataset,
    pub ids: Vec<String>,
    /// Rows span the directions carrying label signal (empty for no-signal).
    pub signal: DMatrix<f64>,
}

fn balanced_labels(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    let mut y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    y.shuffle(rng);
    DVector::from_vec(y)
}

fn gaussian(n: usize, d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn check_size(n: usize, dim: usize, min_dim: usize) -> Result<()> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!("fixture needs n ≥ 4, got {n}")));
    }
    if dim < min_dim {
        return Err(Error::InvalidArgument(format!(
            "fixture needs dim ≥ {min_dim}, got {dim}"
        )));
    }
    Ok(())
}

/// Isotropic noise plus `±margin · u` along a hidden unit direction `u`.
pub fn planted(n: usize, dim: usize, k: usize, seed: u64) -> Result<Fixture> {
    check_size(n, dim, k + 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame = random_frame(dim, k, &mut rng);
    let y = balanced_labels(n, &mut rng);
    let mut x = gaussian(n, dim, &mut rng);
    let kind = if k == 1 {
        FixtureKind::Planted1d
    } else {
        FixtureKind::Planted3d
    };
    if k == 1 {
        for i in 0..n {
            let s = 2.0 * y[i] - 1.0;
            let mut row = x.row_mut(i);
            row += frame.row(0) * (s * PLANTED_MARGIN);
        }
    } else {
        // Each example carries its label along one of the k directions, chosen
        // at random; the remaining planted directions get only noise.
        for i in 0..n {
            let s = 2.0 * y[i] - 1.0;
            let j = rng.random_range(0..k);
            let mut row = x.row_mut(i);
            row += frame.row(j) * (s * PLANTED_MARGIN);
        }
    }
    finish(kind, x, y, frame)
}

/// One dominant, nearly noise-free separating direction plus two weaker
/// ones correlated with it through the label, in isotropic noise.
///
/// The mean-difference direction mixes all three, so removing it leaves no
/// linear signal, while the best single classifier leans on the dominant
/// direction and leaves the weaker ones usable.
pub fn multi_separable(n: usize, dim: usize, seed: u64) -> Result<Fixture> {
    check_size(n, dim, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame = random_frame(dim, 3, &mut rng);
    let y = balanced_labels(n, &mut rng);
    let shift = [1.2, 1.0, 0.6];
    let spread = [0.7, 1.5, 1.5];
    let mut latent = gaussian(n, dim, &mut rng);
    for i in 0..n {
        let s = 2.0 * y[i] - 1.0;
        for j in 0..3 {
            latent[(i, j)] = s * shift[j] + spread[j] * latent[(i, j)];
        }
    }
    // Rotate the latent coordinates into a random basis.
    let full = complete_frame(&frame, &mut rng);
    let x = latent * full;
    finish(FixtureKind::MultiSeparable, x, y, frame)
}

/// Extends orthonormal rows to a full orthonormal basis of their ambient space.
fn complete_frame(frame: &DMatrix<f64>, rng: &mut impl Rng) -> DMatrix<f64> {
    let (m, dim) = frame.shape();
    let mut rows = frame.clone().resize_vertically(dim, 0.0);
    for r in m..dim {
        loop {
            let mut v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            for q in 0..r {
                let b = rows.row(q).transpose();
                v -= &b * b.dot(&v);
            }
            let norm = v.norm();
            if norm > 1e-6 {
                rows.set_row(r, &(v / norm).transpose());
                break;
            }
        }
    }
    rows
}

/// Labels independent of the representations.
pub fn no_signal(n: usize, dim: usize, seed: u64) -> Result<Fixture> {
    check_size(n, dim, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = balanced_labels(n, &mut rng);
    let x = gaussian(n, dim, &mut rng);
    finish(FixtureKind::NoSignal, x, y, DMatrix::zeros(0, dim))
}

/// Two well-separated Gaussian clusters; the label is the cluster.
pub fn blobs(n: usize, dim: usize, seed: u64) -> Result<Fixture> {
    check_size(n, dim, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame = random_frame(dim, 1, &mut rng);
    let y = balanced_labels(n, &mut rng);
    let mut x = gaussian(n, dim, &mut rng) * 0.5;
    for i in 0..n {
        let s = 2.0 * y[i] - 1.0;
        let mut row = x.row_mut(i);
        row += frame.row(0) * (s * 8.0);
    }
    finish(FixtureKind::Blobs, x, y, frame)
}

fn finish(kind: FixtureKind, x: DMatrix<f64>, y: DVector<f64>, signal: DMatrix<f64>) -> Result<Fixture> {
    let ids: Vec<String> = (0..x.nrows()).map(|i| format!("w{i}")).collect();
    let data = Dataset::with_ids(x, y, Some(ids.clone()), TaskKind::BinaryClassification)?;
    Ok(Fixture {
        kind,
        data,
        ids,
        signal,
    })
}

pub fn generate(kind: FixtureKind, n: usize, dim: usize, seed: u64) -> Result<Fixture> {
    match kind {
        FixtureKind::Planted1d => planted(n, dim, 1, seed),
        FixtureKind::Planted3d => planted(n, dim, 3, seed),
        FixtureKind::MultiSeparable => multi_separable(n, dim, seed),
        FixtureKind::NoSignal => no_signal(n, dim, seed),
        FixtureKind::Blobs => blobs(n, dim, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::probe_accuracy;
    use crate::linalg::gram_deviation;
    use crate::probe::ProbeConfig;

    #[test]
    fn frames_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gram_deviation(&random_frame(20, 5, &mut rng)) < 1e-12);
        let f = random_frame(6, 2, &mut rng);
        assert!(gram_deviation(&complete_frame(&f, &mut rng)) < 1e-12);
    }

    #[test]
    fn labels_are_balanced() {
        for kind in FixtureKind::ALL {
            let f = generate(kind, 101, 8, 3).unwrap();
            assert_eq!(f.data.y().sum(), 50.0, "{kind}");
        }
    }

    #[test]
    fn same_seed_same_fixture() {
        for kind in FixtureKind::ALL {
            let a = generate(kind, 50, 6, 9).unwrap();
            let b = generate(kind, 50, 6, 9).unwrap();
            assert_eq!(a.data.x(), b.data.x());
            assert_eq!(a.data.y(), b.data.y());
        }
    }

    #[test]
    fn planted_1d_is_learnable() {
        let f = planted(2000, 50, 1, 1).unwrap();
        let (train, test) = f.data.split(0.3, 1).unwrap();
        let r = probe_accuracy(&train, &test, None, &ProbeConfig::default()).unwrap();
        assert!(r.accuracy >= 0.95, "{}", r.accuracy);
    }

    #[test]
    fn no_signal_is_near_majority() {
        let f = no_signal(2000, 10, 2).unwrap();
        let (train, test) = f.data.split(0.3, 2).unwrap();
        let r = probe_accuracy(&train, &test, None, &ProbeConfig::default()).unwrap();
        assert!((r.accuracy - 0.5).abs() < 0.05, "{}", r.accuracy);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in FixtureKind::ALL {
            assert_eq!(kind.name().parse::<FixtureKind>().unwrap(), kind);
        }
        assert!("planted".parse::<FixtureKind>().is_err());
    }
}
