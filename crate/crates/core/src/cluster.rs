//! Partitioning of feature vectors and validity indices for a partition.
//!
//! Everything works on dense rows under the Euclidean metric; fingerprint bit
//! vectors are treated as 0/1 reals.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{rows_to_matrix, sq_dist};

pub const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("k = {k} exceeds the number of points ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least {min}, got {k}")]
    KTooSmall { k: usize, min: usize },
    #[error("validity needs 2 <= k <= n - 1 clusters, got k = {k} for n = {n}")]
    DegenerateLabeling { k: usize, n: usize },
    #[error("feature vectors have different lengths")]
    MixedLengths,
    #[error("{labels} labels for {points} points")]
    LabelCount { labels: usize, points: usize },
}

impl ClusterError {
    pub fn code(&self) -> &'static str {
        match self {
            ClusterError::KTooLarge { .. } => "k_too_large",
            ClusterError::KTooSmall { .. } => "invalid_parameters",
            ClusterError::DegenerateLabeling { .. } => "degenerate_labeling",
            ClusterError::MixedLengths => "mixed_lengths",
            ClusterError::LabelCount { .. } => "invalid_parameters",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Average,
    Ward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Cluster means (k-means only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<Vec<f64>>>,
    /// Within-cluster sum of squared distances to the cluster means.
    pub inertia: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Inertia after each Lloyd update (k-means only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inertia_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub silhouette: f64,
    pub calinski_harabasz: f64,
    pub davies_bouldin: f64,
}

fn check_rows(data: &[Vec<f64>]) -> Result<usize, ClusterError> {
    let d = data.first().map_or(0, Vec::len);
    if data.iter().any(|r| r.len() != d) {
        return Err(ClusterError::MixedLengths);
    }
    Ok(d)
}

fn check_k(k: usize, n: usize, min: usize) -> Result<(), ClusterError> {
    if k < min {
        return Err(ClusterError::KTooSmall { k, min });
    }
    if k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    Ok(())
}

fn means(data: &[Vec<f64>], labels: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in data.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    sums
}

fn inertia(data: &[Vec<f64>], labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    data.iter().zip(labels).map(|(r, &l)| sq_dist(r, &centers[l])).sum()
}

/// Nearest centre for every row, ties to the lowest cluster index.
fn assign(data: &[Vec<f64>], centers: &[Vec<f64>]) -> Vec<usize> {
    data.iter()
        .map(|row| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(row, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn plus_plus_init(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = data.iter().map(|r| sq_dist(r, &data[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            if nearest[pick] == 0.0 {
                pick = nearest.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // every point coincides with a chosen centre
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (slot, row) in nearest.iter_mut().zip(data) {
            *slot = slot.min(sq_dist(row, &data[next]));
        }
    }
    chosen.iter().map(|&i| data[i].clone()).collect()
}

/// Gives each empty cluster the point farthest from its current centre,
/// taken from a cluster that can spare one.
fn repair_empty(data: &[Vec<f64>], labels: &mut [usize], centers: &mut [Vec<f64>]) {
    let k = centers.len();
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for (i, row) in data.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(row, &centers[labels[i]]);
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, i));
            }
        }
        if let Some((_, i)) = best {
            counts[labels[i]] -= 1;
            labels[i] = c;
            counts[c] = 1;
            centers[c] = data[i].clone();
        }
    }
}

/// Lloyd's algorithm from a k-means++ start.
pub fn kmeans(data: &[Vec<f64>], k: usize, seed: u64) -> Result<Clustering, ClusterError> {
    let n = data.len();
    let dim = check_rows(data)?;
    check_k(k, n, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(data, k, &mut rng);
    let mut labels = assign(data, &centers);
    let mut history = Vec::new();
    for iter in 0..MAX_LLOYD_ITERS {
        repair_empty(data, &mut labels, &mut centers);
        centers = means(data, &labels, k, dim);
        history.push(inertia(data, &labels, &centers));
        if iter + 1 == MAX_LLOYD_ITERS {
            break;
        }
        let next = assign(data, &centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(Clustering {
        inertia: *history.last().expect("at least one iteration"),
        labels,
        k,
        centers: Some(centers),
        seed: Some(seed),
        inertia_history: history,
    })
}

/// Pairwise Euclidean distances. Rows are centred first so the Gram-matrix
/// shortcut stays accurate under translation.
pub(crate) fn distance_matrix(data: &[Vec<f64>]) -> DMatrix<f64> {
    let n = data.len();
    let mut x = rows_to_matrix(data);
    for mut col in x.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let gram = &x * x.transpose();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(0.0).sqrt()
        }
    })
}

/// Relabels so clusters are numbered by first appearance.
fn relabel_by_appearance(raw: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    raw.iter()
        .map(|&r| {
            let next = map.len();
            *map.entry(r).or_insert(next)
        })
        .collect()
}

/// Bottom-up merging with Lance–Williams updates and per-row cached nearest
/// neighbours. Cluster slots are named by their smallest member; ties merge
/// the lexicographically smallest `(distance, i, j)`.
pub fn agglomerative(data: &[Vec<f64>], k: usize, linkage: Linkage) -> Result<Clustering, ClusterError> {
    let n = data.len();
    let dim = check_rows(data)?;
    check_k(k, n, 1)?;
    let dist = distance_matrix(data);
    let mut d = match linkage {
        Linkage::Ward => dist.map(|v| v * v),
        _ => dist,
    };
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();
    let mut nn = vec![usize::MAX; n];
    let mut nd = vec![f64::INFINITY; n];

    let rescan = |i: usize, d: &DMatrix<f64>, active: &[bool], nn: &mut [usize], nd: &mut [f64]| {
        nn[i] = usize::MAX;
        nd[i] = f64::INFINITY;
        for j in i + 1..n {
            if active[j] && d[(i, j)] < nd[i] {
                nd[i] = d[(i, j)];
                nn[i] = j;
            }
        }
    };
    for i in 0..n {
        rescan(i, &d, &active, &mut nn, &mut nd);
    }

    let mut clusters = n;
    while clusters > k {
        let mut i = usize::MAX;
        for a in 0..n {
            if active[a] && nn[a] != usize::MAX && (i == usize::MAX || nd[a] < nd[i]) {
                i = a;
            }
        }
        let j = nn[i];
        let dij = d[(i, j)];
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for m in 0..n {
            if !active[m] || m == i || m == j {
                continue;
            }
            let (dim_, djm) = (d[(i, m)], d[(j, m)]);
            let updated = match linkage {
                Linkage::Single => dim_.min(djm),
                Linkage::Average => (ni * dim_ + nj * djm) / (ni + nj),
                Linkage::Ward => {
                    let nm = size[m] as f64;
                    ((ni + nm) * dim_ + (nj + nm) * djm - nm * dij) / (ni + nj + nm)
                }
            };
            d[(i, m)] = updated;
            d[(m, i)] = updated;
        }
        active[j] = false;
        size[i] += size[j];
        for o in owner.iter_mut() {
            if *o == j {
                *o = i;
            }
        }
        clusters -= 1;

        rescan(i, &d, &active, &mut nn, &mut nd);
        for a in 0..i {
            if !active[a] {
                continue;
            }
            if nn[a] == i || nn[a] == j {
                rescan(a, &d, &active, &mut nn, &mut nd);
            } else if d[(a, i)] < nd[a] || (d[(a, i)] == nd[a] && i < nn[a]) {
                nd[a] = d[(a, i)];
                nn[a] = i;
            }
        }
        for a in i + 1..j {
            if active[a] && nn[a] == j {
                rescan(a, &d, &active, &mut nn, &mut nd);
            }
        }
    }

    let labels = relabel_by_appearance(&owner);
    let centers = means(data, &labels, k, dim);
    Ok(Clustering {
        inertia: inertia(data, &labels, &centers),
        labels,
        k,
        centers: None,
        seed: None,
        inertia_history: Vec::new(),
    })
}

/// Silhouette, Calinski–Harabasz and Davies–Bouldin indices.
pub fn validity(data: &[Vec<f64>], labels: &[usize]) -> Result<ValidityReport, ClusterError> {
    let n = data.len();
    let dim = check_rows(data)?;
    if labels.len() != n {
        return Err(ClusterError::LabelCount { labels: labels.len(), points: n });
    }
    let ids: BTreeMap<usize, usize> = {
        let mut distinct: Vec<usize> = labels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        distinct.into_iter().enumerate().map(|(c, l)| (l, c)).collect()
    };
    let k = ids.len();
    if k < 2 || k + 1 > n {
        return Err(ClusterError::DegenerateLabeling { k, n });
    }
    let lab: Vec<usize> = labels.iter().map(|l| ids[l]).collect();
    let mut sizes = vec![0usize; k];
    for &l in &lab {
        sizes[l] += 1;
    }
    let dist = distance_matrix(data);

    let mut silhouette = 0.0;
    for i in 0..n {
        if sizes[lab[i]] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[lab[j]] += dist[(i, j)];
            }
        }
        let a = sums[lab[i]] / (sizes[lab[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != lab[i])
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            silhouette += (b - a) / m;
        }
    }
    silhouette /= n as f64;

    let centers = means(data, &lab, k, dim);
    let overall: Vec<f64> = (0..dim)
        .map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let within = inertia(data, &lab, &centers);
    let between: f64 = centers
        .iter()
        .zip(&sizes)
        .map(|(c, &s)| s as f64 * sq_dist(c, &overall))
        .sum();
    let calinski_harabasz = if within == 0.0 {
        1.0
    } else {
        (between / (k - 1) as f64) / (within / (n - k) as f64)
    };

    let mut scatter = vec![0.0; k];
    for (row, &l) in data.iter().zip(&lab) {
        scatter[l] += sq_dist(row, &centers[l]).sqrt();
    }
    for (s, &c) in scatter.iter_mut().zip(&sizes) {
        *s /= c as f64;
    }
    let mut db = 0.0;
    for a in 0..k {
        let mut worst = 0.0f64;
        for b in 0..k {
            if a == b {
                continue;
            }
            let sep = sq_dist(&centers[a], &centers[b]).sqrt();
            if sep > 0.0 {
                worst = worst.max((scatter[a] + scatter[b]) / sep);
            }
        }
        db += worst;
    }
    Ok(ValidityReport {
        silhouette,
        calinski_harabasz,
        davies_bouldin: db / k as f64,
    })
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let pairs = |v: f64| v * (v - 1.0) / 2.0;
    let index: f64 = table.values().map(|&v| pairs(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| pairs(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| pairs(v)).sum();
    let expected = sum_a * sum_b / pairs(n);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
