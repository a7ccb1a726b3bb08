use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{EmbedError, FeatureSet};
use crate::fingerprint::{intersection_count, tanimoto_sorted};
use crate::linalg::rows_to_matrix;

/// Reads as either a bare name (`"rbf"`) or a tagged object
/// (`{"kind": "rbf", "gamma": 0.01}`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", try_from = "KernelRepr")]
pub enum KernelSpec {
    Linear,
    Rbf {
        /// Defaults to `1 / feature dimension` when omitted.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
    Tanimoto,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum TaggedKernel {
    Linear,
    Rbf {
        #[serde(default)]
        gamma: Option<f64>,
    },
    Tanimoto,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum KernelRepr {
    Name(String),
    Tagged(TaggedKernel),
}

impl TryFrom<KernelRepr> for KernelSpec {
    type Error = String;
    fn try_from(repr: KernelRepr) -> Result<Self, String> {
        Ok(match repr {
            KernelRepr::Name(name) => name.parse()?,
            KernelRepr::Tagged(TaggedKernel::Linear) => KernelSpec::Linear,
            KernelRepr::Tagged(TaggedKernel::Rbf { gamma }) => KernelSpec::Rbf { gamma },
            KernelRepr::Tagged(TaggedKernel::Tanimoto) => KernelSpec::Tanimoto,
        })
    }
}

impl std::str::FromStr for KernelSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" => Ok(KernelSpec::Linear),
            "rbf" => Ok(KernelSpec::rbf()),
            "tanimoto" => Ok(KernelSpec::Tanimoto),
            other => Err(format!("unknown kernel {other:?}; expected linear, rbf or tanimoto")),
        }
    }
}

impl KernelSpec {
    pub fn rbf() -> Self {
        KernelSpec::Rbf { gamma: None }
    }

    /// Fills in defaults that depend on the data.
    pub fn resolved(self, dim: usize) -> Self {
        match self {
            KernelSpec::Rbf { gamma: None } => KernelSpec::Rbf {
                gamma: Some(1.0 / dim.max(1) as f64),
            },
            other => other,
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        match self {
            KernelSpec::Rbf { gamma: Some(g) } if !(g.is_finite() && *g > 0.0) => Err(
                EmbedError::InvalidParameter(format!("rbf gamma must be positive, got {g}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Symmetric Gram matrix, optionally double-centered.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub values: DMatrix<f64>,
    pub centered: bool,
}

impl KernelMatrix {
    pub fn new(values: DMatrix<f64>) -> Self {
        KernelMatrix {
            values,
            centered: false,
        }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

fn fill_symmetric(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = f(i, j);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn dense_as_bits(rows: &[Vec<f64>]) -> Result<Vec<Vec<u32>>, EmbedError> {
    rows.iter()
        .map(|r| {
            let mut bits = Vec::new();
            for (k, &v) in r.iter().enumerate() {
                if v == 1.0 {
                    bits.push(k as u32);
                } else if v != 0.0 {
                    return Err(EmbedError::TanimotoOnDense);
                }
            }
            Ok(bits)
        })
        .collect()
}

pub fn build_kernel(features: &FeatureSet, spec: KernelSpec) -> Result<KernelMatrix, EmbedError> {
    let n = features.len();
    if n < 2 {
        return Err(EmbedError::TooFewPoints { need: 2, got: n });
    }
    features.check_lengths()?;
    let spec = spec.resolved(features.dim());
    spec.validate()?;

    let values = match (features, spec) {
        (FeatureSet::Dense(rows), KernelSpec::Linear) => {
            let x = rows_to_matrix(rows);
            let g = &x * x.transpose();
            fill_symmetric(n, |i, j| g[(i, j)])
        }
        (FeatureSet::Dense(rows), KernelSpec::Rbf { gamma: Some(gamma) }) => {
            let x = rows_to_matrix(rows);
            let g = &x * x.transpose();
            fill_symmetric(n, |i, j| {
                if i == j {
                    1.0
                } else {
                    let d2 = (g[(i, i)] + g[(j, j)] - 2.0 * g[(i, j)]).max(0.0);
                    (-gamma * d2).exp()
                }
            })
        }
        (FeatureSet::Dense(rows), KernelSpec::Tanimoto) => {
            let bits = dense_as_bits(rows)?;
            fill_symmetric(n, |i, j| if i == j { 1.0 } else { tanimoto_sorted(&bits[i], &bits[j]) })
        }
        (FeatureSet::Bits { rows, .. }, KernelSpec::Linear) => {
            fill_symmetric(n, |i, j| intersection_count(&rows[i], &rows[j]) as f64)
        }
        (FeatureSet::Bits { rows, .. }, KernelSpec::Rbf { gamma: Some(gamma) }) => {
            fill_symmetric(n, |i, j| {
                if i == j {
                    1.0
                } else {
                    let common = intersection_count(&rows[i], &rows[j]);
                    let d2 = (rows[i].len() + rows[j].len() - 2 * common) as f64;
                    (-gamma * d2).exp()
                }
            })
        }
        (FeatureSet::Bits { rows, .. }, KernelSpec::Tanimoto) => {
            fill_symmetric(n, |i, j| if i == j { 1.0 } else { tanimoto_sorted(&rows[i], &rows[j]) })
        }
        (_, KernelSpec::Rbf { gamma: None }) => unreachable!("gamma resolved above"),
    };
    Ok(KernelMatrix::new(values))
}

/// Double-centers a Gram matrix: `H K H` with `H = I - 11ᵀ/n`.
pub fn center(k: &KernelMatrix) -> Result<KernelMatrix, EmbedError> {
    if k.centered {
        return Err(EmbedError::AlreadyCentered);
    }
    let n = k.n();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| k.values.row(i).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let values = fill_symmetric(n, |i, j| k.values[(i, j)] - row_means[i] - row_means[j] + grand);
    Ok(KernelMatrix {
        values,
        centered: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_names_and_objects_both_parse() {
        let named: KernelSpec = serde_json::from_str(r#""rbf""#).unwrap();
        assert_eq!(named, KernelSpec::rbf());
        let tagged: KernelSpec = serde_json::from_str(r#"{"kind": "rbf", "gamma": 0.5}"#).unwrap();
        assert_eq!(tagged, KernelSpec::Rbf { gamma: Some(0.5) });
        assert_eq!(serde_json::to_string(&tagged).unwrap(), r#"{"kind":"rbf","gamma":0.5}"#);
        assert!(serde_json::from_str::<KernelSpec>(r#""poly""#).is_err());
    }


    fn dense(rows: &[&[f64]]) -> FeatureSet {
        FeatureSet::Dense(rows.iter().map(|r| r.to_vec()).collect())
    }

    #[test]
    fn rbf_diagonal_is_one() {
        let f = dense(&[&[0.3, 1.0], &[2.0, -1.0], &[5.0, 5.0]]);
        let k = build_kernel(&f, KernelSpec::rbf()).unwrap();
        assert!((0..3).all(|i| k.values[(i, i)] == 1.0));
    }

    #[test]
    fn linear_on_orthonormal_basis_is_identity() {
        let f = dense(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let k = build_kernel(&f, KernelSpec::Linear).unwrap();
        assert_eq!(k.values, DMatrix::identity(3, 3));
    }

    #[test]
    fn errors() {
        let mixed = FeatureSet::Dense(vec![vec![1.0, 2.0], vec![1.0]]);
        assert_eq!(build_kernel(&mixed, KernelSpec::Linear), Err(EmbedError::MixedLengths));
        let real = dense(&[&[0.5, 1.0], &[1.0, 0.0]]);
        assert_eq!(build_kernel(&real, KernelSpec::Tanimoto), Err(EmbedError::TanimotoOnDense));
        let one = dense(&[&[1.0]]);
        assert!(matches!(build_kernel(&one, KernelSpec::Linear), Err(EmbedError::TooFewPoints { .. })));
        let bad_gamma = KernelSpec::Rbf { gamma: Some(-1.0) };
        assert!(build_kernel(&real, bad_gamma).is_err());
    }

    #[test]
    fn bits_and_dense_agree() {
        let bits = FeatureSet::Bits {
            n_bits: 8,
            rows: vec![vec![0, 3, 5], vec![3, 4], vec![1, 5, 7]],
        };
        let dense = FeatureSet::Dense(bits.to_dense());
        for spec in [KernelSpec::Linear, KernelSpec::rbf(), KernelSpec::Tanimoto] {
            let a = build_kernel(&bits, spec).unwrap();
            let b = build_kernel(&dense, spec).unwrap();
            assert!((a.values - b.values).abs().max() < 1e-12, "{spec:?}");
        }
    }

    #[test]
    fn centering_constant_matrix_gives_zero() {
        let k = KernelMatrix::new(DMatrix::from_element(4, 4, 2.5));
        let c = center(&k).unwrap();
        assert!(c.values.abs().max() < 1e-15);
        assert_eq!(center(&c), Err(EmbedError::AlreadyCentered));
    }

    #[test]
    fn centering_identity_matches_explicit_product() {
        let k = KernelMatrix::new(DMatrix::identity(3, 3));
        let h = DMatrix::identity(3, 3) - DMatrix::from_element(3, 3, 1.0 / 3.0);
        let oracle = &h * &k.values * &h;
        let c = center(&k).unwrap();
        assert!((&c.values - &oracle).abs().max() < 1e-15);
        // H is idempotent, so H·I·H = H
        assert!((c.values[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.values[(0, 1)] + 1.0 / 3.0).abs() < 1e-15);
    }
}
