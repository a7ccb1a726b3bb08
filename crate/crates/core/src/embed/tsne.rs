//! Exact t-SNE (O(n²) per iteration).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbedMethod, Embedding, FeatureSet, Provenance};

pub const MAX_POINTS: usize = 5000;
const ENTROPY_TOL: f64 = 1e-5;
const P_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iters: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        TsneParams {
            perplexity: 30.0,
            iters: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            seed: 0,
        }
    }
}

/// Result of a run with the KL divergence at the end of the exaggeration
/// phase and at the last iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TsneRun {
    pub embedding: Embedding,
    pub kl_after_exaggeration: f64,
    pub kl_final: f64,
}

/// Row-conditional affinities with the bandwidth set by bisection on entropy.
fn conditional_row(d2: &[f64], i: usize, target_entropy: f64) -> Vec<f64> {
    let n = d2.len();
    let min = (0..n)
        .filter(|&j| j != i)
        .map(|j| d2[j])
        .fold(f64::INFINITY, f64::min);
    let mut beta = 1.0;
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut row = vec![0.0; n];
    for _ in 0..200 {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for j in 0..n {
            if j == i {
                row[j] = 0.0;
                continue;
            }
            // shifting by the row minimum leaves the normalized row unchanged
            let shifted = d2[j] - min;
            let p = (-beta * shifted).exp();
            row[j] = p;
            sum += p;
            weighted += shifted * p;
        }
        let entropy = sum.ln() + beta * weighted / sum;
        let diff = entropy - target_entropy;
        if diff.abs() < ENTROPY_TOL {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
    }
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= sum);
    row
}

/// Symmetrized joint affinities, row-major n×n.
pub(crate) fn joint_probabilities(features: &FeatureSet, perplexity: f64) -> Vec<f64> {
    let n = features.len();
    let target = perplexity.ln();
    let mut cond = vec![0.0; n * n];
    let mut d2 = vec![0.0; n];
    for i in 0..n {
        for (j, slot) in d2.iter_mut().enumerate() {
            *slot = if i == j { 0.0 } else { features.sq_dist(i, j) };
        }
        let row = conditional_row(&d2, i, target);
        cond[i * n..(i + 1) * n].copy_from_slice(&row);
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(P_FLOOR);
            }
        }
    }
    p
}

/// Student-t kernel numerators and their sum.
fn student_t(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let q = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = q;
            num[j * n + i] = q;
            z += 2.0 * q;
        }
    }
    (num, z)
}

pub(crate) fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let (num, z) = student_t(y);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = p[i * n + j];
                let qij = (num[i * n + j] / z).max(f64::MIN_POSITIVE);
                kl += pij * (pij / qij).ln();
            }
        }
    }
    kl
}

pub fn tsne(features: &FeatureSet, params: &TsneParams) -> Result<TsneRun, EmbedError> {
    let n = features.len();
    if n < 4 {
        return Err(EmbedError::TooFewPoints { need: 4, got: n });
    }
    if n > MAX_POINTS {
        return Err(EmbedError::InvalidParameter(format!(
            "exact t-SNE supports at most {MAX_POINTS} points, got {n}"
        )));
    }
    features.check_lengths()?;
    let limit = n as f64 / 3.0;
    if !(params.perplexity > 0.0 && params.perplexity.is_finite()) {
        return Err(EmbedError::InvalidParameter(format!(
            "perplexity must be positive, got {}",
            params.perplexity
        )));
    }
    if params.perplexity >= limit {
        return Err(EmbedError::PerplexityTooLarge {
            perplexity: params.perplexity,
            limit,
        });
    }
    if !(params.learning_rate > 0.0 && params.early_exaggeration >= 1.0) {
        return Err(EmbedError::InvalidParameter(
            "learning_rate must be positive and early_exaggeration at least 1".into(),
        ));
    }

    let p = joint_probabilities(features, params.perplexity);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut grad = vec![[0.0; 2]; n];
    let mut kl_after_exaggeration = f64::NAN;

    for iter in 0..params.iters {
        let exaggerating = iter < params.exaggeration_iters;
        let exaggeration = if exaggerating { params.early_exaggeration } else { 1.0 };
        let momentum = if exaggerating { 0.5 } else { 0.8 };

        let (num, z) = student_t(&y);
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = num[i * n + j];
                let coeff = (exaggeration * p[i * n + j] - q / z) * q;
                g[0] += coeff * (y[i][0] - y[j][0]);
                g[1] += coeff * (y[i][1] - y[j][1]);
            }
            grad[i] = [4.0 * g[0], 4.0 * g[1]];
        }

        for i in 0..n {
            for d in 0..2 {
                let same_direction = (grad[i][d] > 0.0) == (update[i][d] > 0.0);
                gains[i][d] = if same_direction { gains[i][d] * 0.8 } else { gains[i][d] + 0.2 };
                gains[i][d] = gains[i][d].max(0.01);
                update[i][d] = momentum * update[i][d] - params.learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += update[i][d];
            }
        }
        let mean = y.iter().fold([0.0; 2], |m, p| [m[0] + p[0], m[1] + p[1]]);
        for pt in &mut y {
            pt[0] -= mean[0] / n as f64;
            pt[1] -= mean[1] / n as f64;
        }

        if iter + 1 == params.exaggeration_iters {
            kl_after_exaggeration = kl_divergence(&p, &y);
        }
    }
    let kl_final = kl_divergence(&p, &y);
    if params.exaggeration_iters >= params.iters {
        kl_after_exaggeration = kl_final;
    }
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(EmbedError::SingularSystem);
    }

    let provenance = Provenance {
        kernel: None,
        params: [
            ("early_exaggeration", params.early_exaggeration),
            ("iters", params.iters as f64),
            ("learning_rate", params.learning_rate),
            ("perplexity", params.perplexity),
            ("seed", params.seed as f64),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect(),
    };
    Ok(TsneRun {
        embedding: Embedding::new(y, EmbedMethod::Tsne, provenance),
        kl_after_exaggeration,
        kl_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(n: usize, seed: u64) -> FeatureSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureSet::Dense(
            (0..n)
                .map(|i| {
                    let off = if i % 2 == 0 { 0.0 } else { 5.0 };
                    (0..3).map(|_| off + rng.random_range(-1.0..1.0)).collect()
                })
                .collect(),
        )
    }

    #[test]
    fn entropy_matches_perplexity() {
        let f = blobs(30, 1);
        let n = 30;
        let mut d2 = vec![0.0; n];
        for (j, v) in d2.iter_mut().enumerate() {
            *v = f.sq_dist(0, j);
        }
        let row = conditional_row(&d2, 0, 5f64.ln());
        let h: f64 = row.iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum();
        assert!((h - 5f64.ln()).abs() < 1e-4);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_probabilities_are_symmetric_and_sum_to_one() {
        let f = blobs(12, 2);
        let p = joint_probabilities(&f, 3.0);
        let n = 12;
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        for i in 0..n {
            for j in 0..n {
                assert_eq!(p[i * n + j], p[j * n + i]);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let f = blobs(20, 3);
        let params = TsneParams { perplexity: 5.0, iters: 300, seed: 9, ..Default::default() };
        let a = tsne(&f, &params).unwrap();
        let b = tsne(&f, &params).unwrap();
        assert_eq!(a.embedding.coords, b.embedding.coords);
        assert!(a.kl_final <= a.kl_after_exaggeration);
    }

    #[test]
    fn duplicates_end_close() {
        let mut rows = match blobs(10, 4) {
            FeatureSet::Dense(r) => r,
            _ => unreachable!(),
        };
        rows[9] = rows[0].clone();
        let f = FeatureSet::Dense(rows);
        let run = tsne(&f, &TsneParams { perplexity: 3.0, seed: 1, ..Default::default() }).unwrap();
        let c = &run.embedding.coords;
        let d = ((c[0][0] - c[9][0]).powi(2) + (c[0][1] - c[9][1]).powi(2)).sqrt();
        assert!(d < 0.05 * run.embedding.diameter());
    }

    #[test]
    fn perplexity_bound() {
        let f = blobs(9, 5);
        assert!(matches!(
            tsne(&f, &TsneParams::default()),
            Err(EmbedError::PerplexityTooLarge { .. })
        ));
        let tiny = blobs(3, 5);
        assert!(matches!(tsne(&tiny, &TsneParams::default()), Err(EmbedError::TooFewPoints { .. })));
    }
}
