//! Two-dimensional embeddings: kernels, PCA and kernel PCA, constrained kernel
//! PCA with interactive updates, exact t-SNE and least-squares projection.

mod ckpca;
mod frame;
mod interactive;
mod kernel;
mod lsp;
mod pca;
pub(crate) mod secular;
mod tsne;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::Fingerprint;
use crate::linalg;

pub use ckpca::{CkpcaState, ConstraintSet, ControlPoint};
pub use frame::Frame;
pub use interactive::{Interaction, InteractiveSession, LinkKind, StrengthTarget};
pub use kernel::{build_kernel, center, KernelMatrix, KernelSpec};
pub use lsp::{lsp, LspParams, LSP_ANCHOR_WEIGHT};
pub use pca::{kpca, pca, KernelSpectrum};
pub use tsne::{tsne, TsneParams, TsneRun};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("feature vectors have different lengths")]
    MixedLengths,
    #[error("tanimoto kernel requires binary feature vectors")]
    TanimotoOnDense,
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("all points are identical")]
    DegenerateData,
    #[error("kernel has only {rank} positive eigenvalue(s); two are required")]
    RankDeficient { rank: usize },
    #[error("constrained system could not be solved")]
    SingularSystem,
    #[error("no control point at index {0}")]
    UnknownControl(usize),
    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
    #[error("perplexity {perplexity} must be below n/3 = {limit}")]
    PerplexityTooLarge { perplexity: f64, limit: f64 },
    #[error("need at least {need} control points, got {got}")]
    TooFewControls { need: usize, got: usize },
    #[error("kernel matrix is not centered")]
    NotCentered,
    #[error("kernel matrix is already centered")]
    AlreadyCentered,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl EmbedError {
    /// Stable machine-readable code shared by the CLI and the server.
    pub fn code(&self) -> &'static str {
        match self {
            EmbedError::MixedLengths => "mixed_lengths",
            EmbedError::TanimotoOnDense => "tanimoto_on_dense",
            EmbedError::TooFewPoints { .. } => "too_few_points",
            EmbedError::DegenerateData => "degenerate_data",
            EmbedError::RankDeficient { .. } => "rank_deficient",
            EmbedError::SingularSystem => "singular_system",
            EmbedError::UnknownControl(_) => "unknown_control",
            EmbedError::InvalidConstraints(_) => "invalid_constraints",
            EmbedError::PerplexityTooLarge { .. } => "perplexity_too_large",
            EmbedError::TooFewControls { .. } => "too_few_controls",
            EmbedError::NotCentered => "not_centered",
            EmbedError::AlreadyCentered => "already_centered",
            EmbedError::InvalidParameter(_) => "invalid_parameters",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedMethod {
    Pca,
    Kpca,
    Ckpca,
    Tsne,
    Lsp,
}

impl EmbedMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbedMethod::Pca => "pca",
            EmbedMethod::Kpca => "kpca",
            EmbedMethod::Ckpca => "ckpca",
            EmbedMethod::Tsne => "tsne",
            EmbedMethod::Lsp => "lsp",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub coords: Vec<[f64; 2]>,
    pub method: EmbedMethod,
    pub version: u64,
    pub provenance: Provenance,
}

impl Embedding {
    pub(crate) fn new(coords: Vec<[f64; 2]>, method: EmbedMethod, provenance: Provenance) -> Self {
        Embedding {
            coords,
            method,
            version: 0,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().flatten().all(|v| v.is_finite())
    }

    /// Largest pairwise distance between embedded points.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.coords.iter().enumerate() {
            for b in &self.coords[i + 1..] {
                best = best.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        best
    }

    /// Rescales into the unit frame: bounding box centred on the origin with
    /// its longer side equal to 2.
    pub fn normalized(mut self) -> Self {
        let frame = Frame::fit(&self.coords);
        self.coords = frame.to_unit_all(&self.coords);
        self
    }
}

/// Per-point feature vectors, either dense reals or sparse bit sets.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSet {
    Dense(Vec<Vec<f64>>),
    Bits { n_bits: usize, rows: Vec<Vec<u32>> },
}

impl FeatureSet {
    pub fn from_fingerprints(fps: &[Fingerprint]) -> Result<Self, EmbedError> {
        let n_bits = fps.first().map_or(0, |f| f.n_bits);
        if fps.iter().any(|f| f.n_bits != n_bits) {
            return Err(EmbedError::MixedLengths);
        }
        Ok(FeatureSet::Bits {
            n_bits: n_bits as usize,
            rows: fps.iter().map(|f| f.bits.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        match self {
            FeatureSet::Dense(rows) => rows.len(),
            FeatureSet::Bits { rows, .. } => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureSet::Dense(rows) => rows.first().map_or(0, Vec::len),
            FeatureSet::Bits { n_bits, .. } => *n_bits,
        }
    }

    pub(crate) fn check_lengths(&self) -> Result<(), EmbedError> {
        if let FeatureSet::Dense(rows) = self {
            let d = self.dim();
            if rows.iter().any(|r| r.len() != d) {
                return Err(EmbedError::MixedLengths);
            }
        }
        Ok(())
    }

    /// Dense 0/1 (or real) rows, for Euclidean methods.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        match self {
            FeatureSet::Dense(rows) => rows.clone(),
            FeatureSet::Bits { n_bits, rows } => rows
                .iter()
                .map(|bits| {
                    let mut v = vec![0.0; *n_bits];
                    for &b in bits {
                        v[b as usize] = 1.0;
                    }
                    v
                })
                .collect(),
        }
    }

    /// Squared Euclidean distance between rows `i` and `j`.
    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        match self {
            FeatureSet::Dense(rows) => linalg::sq_dist(&rows[i], &rows[j]),
            FeatureSet::Bits { rows, .. } => {
                let common = crate::fingerprint::intersection_count(&rows[i], &rows[j]);
                (rows[i].len() + rows[j].len() - 2 * common) as f64
            }
        }
    }
}

/// Flips a coordinate column so its largest-magnitude entry is positive.
pub(crate) fn fix_sign(column: &mut [f64]) {
    let k = linalg::argmax_abs(column.iter().copied());
    if column.get(k).is_some_and(|&v| v < 0.0) {
        for v in column.iter_mut() {
            *v = -*v;
        }
    }
}

pub(crate) fn columns_to_coords(x: &[f64], y: &[f64]) -> Vec<[f64; 2]> {
    x.iter().zip(y).map(|(&a, &b)| [a, b]).collect()
}
