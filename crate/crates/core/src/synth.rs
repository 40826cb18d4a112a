//! Seeded synthetic embedding instances for tests, property harnesses, and
//! the corpus generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embeddings::{EmbeddingSet, SetRole};
use crate::error::{Error, Result};

fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// `n` directions drawn by normalizing standard Gaussian samples in `d`
/// dimensions. General position whenever `n <= d`.
pub fn gaussian_instance(seed: u64, n: usize, d: usize, role: SetRole) -> EmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let v = normal_vec(&mut rng, d);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let vector: Vec<f32> = v.iter().map(|x| (x / norm) as f32).collect();
        rows.push((format!("v{i:06}"), None, vector));
    }
    EmbeddingSet::from_raw(role, rows).expect("gaussian draws are nonzero")
}

/// Clustered instance: unit-vector centers plus per-point Gaussian noise
/// scaled by `noise`. Points are assigned to clusters round-robin and the
/// assignment is recorded in the label field.
pub fn clustered_instance(
    seed: u64,
    n: usize,
    d: usize,
    clusters: usize,
    noise: f64,
) -> Result<EmbeddingSet> {
    if clusters < 1 || n < clusters {
        return Err(Error::Config(format!(
            "need n >= clusters >= 1, got n={n}, clusters={clusters}"
        )));
    }
    if d < 2 {
        return Err(Error::Config(format!("need d >= 2, got d={d}")));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::Config(format!(
            "noise must be finite and nonnegative, got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Vec::with_capacity(clusters);
    for _ in 0..clusters {
        let c = normal_vec(&mut rng, d);
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        centers.push(c.into_iter().map(|x| x / norm).collect::<Vec<f64>>());
    }
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let cluster = i % clusters;
        let g = normal_vec(&mut rng, d);
        let vector: Vec<f32> = centers[cluster]
            .iter()
            .zip(&g)
            .map(|(c, e)| (c + noise * e) as f32)
            .collect();
        rows.push((format!("v{i:06}"), Some(format!("c{cluster}")), vector));
    }
    EmbeddingSet::from_raw(SetRole::Corpus, rows)
}
