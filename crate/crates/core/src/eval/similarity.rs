use nalgebra::DVector;

use crate::error::{Error, Result};

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput("correlation needs at least two points".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("correlation of a constant series".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation between pair cosine similarities and human scores.
pub fn similarity_correlation(pairs: &[(DVector<f64>, DVector<f64>, f64)]) -> Result<f64> {
    if pairs.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "similarity correlation needs at least 3 pairs, got {}",
            pairs.len()
        )));
    }
    let mut cosines = Vec::with_capacity(pairs.len());
    for (i, (u, v, _)) in pairs.iter().enumerate() {
        Error::check_dim(u.len(), v.len())?;
        let denom = u.norm() * v.norm();
        if denom == 0.0 {
            return Err(Error::InvalidInput(format!("pair {i} contains a zero vector")));
        }
        cosines.push(u.dot(v) / denom);
    }
    let human: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    pearson(&cosines, &human)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_pairs(n: usize, seed: u64) -> Vec<(DVector<f64>, DVector<f64>, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
                let v = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
                (u, v, rng.random::<f64>() * 10.0)
            })
            .collect()
    }

    fn cos(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(v) / (u.norm() * v.norm())
    }

    #[test]
    fn scores_equal_to_cosines() {
        let mut pairs = random_pairs(10, 1);
        for p in &mut pairs {
            p.2 = cos(&p.0, &p.1);
        }
        assert!((similarity_correlation(&pairs).unwrap() - 1.0).abs() < 1e-12);
        for p in &mut pairs {
            p.2 = -p.2;
        }
        assert!((similarity_correlation(&pairs).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_covariance_formula() {
        let pairs = random_pairs(25, 2);
        let c: Vec<f64> = pairs.iter().map(|p| cos(&p.0, &p.1)).collect();
        let h: Vec<f64> = pairs.iter().map(|p| p.2).collect();
        let n = c.len() as f64;
        let mc = c.iter().sum::<f64>() / n;
        let mh = h.iter().sum::<f64>() / n;
        let cov = c.iter().zip(&h).map(|(a, b)| (a - mc) * (b - mh)).sum::<f64>() / (n - 1.0);
        let sc = (c.iter().map(|a| (a - mc).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let sh = (h.iter().map(|b| (b - mh).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let r = similarity_correlation(&pairs).unwrap();
        assert!((r - cov / (sc * sh)).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let pairs = random_pairs(2, 3);
        assert!(similarity_correlation(&pairs).is_err());
        let mut pairs = random_pairs(5, 3);
        for p in &mut pairs {
            p.2 = 1.0;
        }
        assert!(similarity_correlation(&pairs).is_err());
        let mut pairs = random_pairs(5, 3);
        pairs[0].0 = DVector::zeros(4);
        assert!(similarity_correlation(&pairs).is_err());
    }
}
