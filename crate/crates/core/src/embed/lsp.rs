//! Least-squares projection: free points sit at the mean of their feature-space
//! neighbours, control points are anchored to their targets.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ControlPoint, EmbedError, EmbedMethod, Embedding, FeatureSet, Provenance};

/// Weight of the anchor rows relative to the neighbourhood rows.
pub const LSP_ANCHOR_WEIGHT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LspParams {
    pub k_neighbors: usize,
}

impl Default for LspParams {
    fn default() -> Self {
        LspParams { k_neighbors: 10 }
    }
}

/// Indices of the `k` nearest other points, ties broken by index.
pub(crate) fn nearest_neighbors(features: &FeatureSet, i: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<(f64, usize)> = (0..features.len())
        .filter(|&j| j != i)
        .map(|j| (features.sq_dist(i, j), j))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    others.into_iter().take(k).map(|(_, j)| j).collect()
}

/// The stacked least-squares system `A x = b` (one right-hand side per
/// output dimension).
pub(crate) fn lsp_system(
    features: &FeatureSet,
    controls: &[ControlPoint],
    k: usize,
) -> (DMatrix<f64>, [DVector<f64>; 2]) {
    let n = features.len();
    let anchored: BTreeSet<usize> = controls.iter().map(|c| c.index).collect();
    let free: Vec<usize> = (0..n).filter(|i| !anchored.contains(i)).collect();
    let rows = free.len() + controls.len();
    let mut a = DMatrix::zeros(rows, n);
    let mut b = [DVector::zeros(rows), DVector::zeros(rows)];
    for (r, &i) in free.iter().enumerate() {
        let nbrs = nearest_neighbors(features, i, k);
        a[(r, i)] = 1.0;
        for &j in &nbrs {
            a[(r, j)] -= 1.0 / nbrs.len() as f64;
        }
    }
    for (c, cp) in controls.iter().enumerate() {
        let r = free.len() + c;
        a[(r, cp.index)] = LSP_ANCHOR_WEIGHT;
        b[0][r] = LSP_ANCHOR_WEIGHT * cp.x;
        b[1][r] = LSP_ANCHOR_WEIGHT * cp.y;
    }
    (a, b)
}

pub fn lsp(features: &FeatureSet, controls: &[ControlPoint], params: &LspParams) -> Result<Embedding, EmbedError> {
    let n = features.len();
    features.check_lengths()?;
    if controls.len() < 3 {
        return Err(EmbedError::TooFewControls { need: 3, got: controls.len() });
    }
    if params.k_neighbors < 1 || params.k_neighbors >= n {
        return Err(EmbedError::InvalidParameter(format!(
            "k_neighbors must be in [1, {n}), got {}",
            params.k_neighbors
        )));
    }
    let mut seen = BTreeSet::new();
    for cp in controls {
        if cp.index >= n || !seen.insert(cp.index) || !(cp.x.is_finite() && cp.y.is_finite()) {
            return Err(EmbedError::InvalidConstraints(format!(
                "control {} is out of range, repeated or non-finite",
                cp.index
            )));
        }
    }

    let (a, b) = lsp_system(features, controls, params.k_neighbors);
    let qr = a.clone().col_piv_qr();
    let solve = |rhs: &DVector<f64>| -> Option<DVector<f64>> {
        if let Some(x) = qr.solve(rhs) {
            return Some(x);
        }
        // rank-deficient: points with no path to an anchor; minimum-norm fallback
        a.clone().svd(true, true).solve(rhs, 1e-12).ok()
    };
    let xs = solve(&b[0]).ok_or(EmbedError::SingularSystem)?;
    let ys = solve(&b[1]).ok_or(EmbedError::SingularSystem)?;
    let coords: Vec<[f64; 2]> = xs.iter().zip(ys.iter()).map(|(&x, &y)| [x, y]).collect();
    if coords.iter().flatten().any(|v| !v.is_finite()) {
        return Err(EmbedError::SingularSystem);
    }
    Ok(Embedding::new(
        coords,
        EmbedMethod::Lsp,
        Provenance {
            kernel: None,
            params: [("k_neighbors".to_string(), params.k_neighbors as f64)].into(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> FeatureSet {
        FeatureSet::Dense((0..n).map(|i| vec![i as f64, 0.0]).collect())
    }

    #[test]
    fn all_controls_land_on_targets() {
        let f = line(5);
        let controls: Vec<ControlPoint> = (0..5)
            .map(|i| ControlPoint { index: i, x: i as f64 * 0.3, y: -(i as f64) })
            .collect();
        let e = lsp(&f, &controls, &LspParams { k_neighbors: 2 }).unwrap();
        for (c, cp) in e.coords.iter().zip(&controls) {
            assert!((c[0] - cp.x).abs() < 1e-6 && (c[1] - cp.y).abs() < 1e-6);
        }
    }

    #[test]
    fn free_point_averages_controlled_neighbors() {
        // point 2 has neighbours 1 and 3 at k=2
        let f = line(5);
        let controls = [
            ControlPoint { index: 0, x: 0.0, y: 0.0 },
            ControlPoint { index: 1, x: 1.0, y: 2.0 },
            ControlPoint { index: 3, x: 3.0, y: 0.0 },
            ControlPoint { index: 4, x: 4.0, y: 1.0 },
        ];
        let e = lsp(&f, &controls, &LspParams { k_neighbors: 2 }).unwrap();
        assert!((e.coords[2][0] - 2.0).abs() < 1e-8);
        assert!((e.coords[2][1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn preconditions() {
        let f = line(5);
        let two = [ControlPoint { index: 0, x: 0.0, y: 0.0 }, ControlPoint { index: 1, x: 0.0, y: 0.0 }];
        assert_eq!(
            lsp(&f, &two, &LspParams::default()),
            Err(EmbedError::TooFewControls { need: 3, got: 2 })
        );
        let three: Vec<ControlPoint> = (0..3).map(|i| ControlPoint { index: i, x: 0.0, y: 0.0 }).collect();
        assert!(matches!(lsp(&f, &three, &LspParams { k_neighbors: 5 }), Err(EmbedError::InvalidParameter(_))));
    }
}
