//! How faithfully a 2-D layout keeps the structure of the original features.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::FeatureSet;
use crate::linalg::sq_dist;

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QualityError {
    #[error("need at least {need} points for k = {k}, got {got}")]
    TooFewPoints { need: usize, got: usize, k: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("{hd} feature rows but {ld} embedded points")]
    LengthMismatch { hd: usize, ld: usize },
    #[error("feature vectors have different lengths")]
    MixedLengths,
}

impl QualityError {
    pub fn code(&self) -> &'static str {
        match self {
            QualityError::TooFewPoints { .. } => "too_few_points",
            QualityError::ZeroK => "invalid_parameters",
            QualityError::LengthMismatch { .. } => "invalid_parameters",
            QualityError::MixedLengths => "mixed_lengths",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub trustworthiness: f64,
    pub knn_preservation: f64,
    pub shepard_spearman: f64,
    /// Kruskal stress after the optimal uniform rescaling of the layout.
    pub normalized_stress: f64,
    pub k_used: usize,
}

/// Row-major n×n distance matrix.
struct Distances {
    n: usize,
    values: Vec<f64>,
}

impl Distances {
    fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = f(i, j);
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Distances { n, values }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Other points ordered by distance from `i`, ties by index.
    fn order_from(&self, i: usize) -> Vec<usize> {
        let mut others: Vec<usize> = (0..self.n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| self.get(i, a).total_cmp(&self.get(i, b)).then(a.cmp(&b)));
        others
    }

    fn upper_triangle(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n * (self.n - 1) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                v.push(self.get(i, j));
            }
        }
        v
    }
}

/// Ranks starting at 1, tied values sharing their average rank.
pub(crate) fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    (cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0)
}

pub(crate) fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    if ra == rb {
        // also covers the constant case, where the correlation is undefined
        return if ra.windows(2).any(|w| w[0] != w[1]) { 1.0 } else { 0.0 };
    }
    pearson(&ra, &rb)
}

pub fn embedding_quality(hd: &FeatureSet, ld: &[[f64; 2]], k: usize) -> Result<QualityReport, QualityError> {
    let n = hd.len();
    if ld.len() != n {
        return Err(QualityError::LengthMismatch { hd: n, ld: ld.len() });
    }
    if k == 0 {
        return Err(QualityError::ZeroK);
    }
    if n < 2 * k + 2 {
        return Err(QualityError::TooFewPoints { need: 2 * k + 2, got: n, k });
    }
    if let FeatureSet::Dense(rows) = hd {
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(QualityError::MixedLengths);
        }
    }

    let high = Distances::from_fn(n, |i, j| hd.sq_dist(i, j).sqrt());
    let low = Distances::from_fn(n, |i, j| sq_dist(&ld[i], &ld[j]).sqrt());

    let mut penalty = 0.0;
    let mut overlap = 0usize;
    for i in 0..n {
        let high_order = high.order_from(i);
        let low_order = low.order_from(i);
        let mut high_rank = vec![0usize; n];
        for (pos, &j) in high_order.iter().enumerate() {
            high_rank[j] = pos + 1;
        }
        for &j in &low_order[..k] {
            if high_rank[j] <= k {
                overlap += 1;
            } else {
                penalty += (high_rank[j] - k) as f64;
            }
        }
    }
    let (nf, kf) = (n as f64, k as f64);
    let trustworthiness = 1.0 - 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0)) * penalty;
    let knn_preservation = overlap as f64 / (nf * kf);

    let dh = high.upper_triangle();
    let dl = low.upper_triangle();
    let shepard_spearman = spearman(&dh, &dl);

    let cross: f64 = dh.iter().zip(&dl).map(|(a, b)| a * b).sum();
    let low_sq: f64 = dl.iter().map(|b| b * b).sum();
    let high_sq: f64 = dh.iter().map(|a| a * a).sum();
    let beta = if low_sq > 0.0 { cross / low_sq } else { 0.0 };
    let residual: f64 = dh.iter().zip(&dl).map(|(a, b)| (a - beta * b).powi(2)).sum();
    let normalized_stress = if high_sq > 0.0 { (residual / high_sq).sqrt() } else { 0.0 };

    Ok(QualityReport {
        trustworthiness,
        knn_preservation,
        shepard_spearman,
        normalized_stress,
        k_used: k,
    })
}
