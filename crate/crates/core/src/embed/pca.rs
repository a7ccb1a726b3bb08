use nalgebra::{DMatrix, SVD};

use super::{columns_to_coords, fix_sign, EmbedError, EmbedMethod, Embedding, FeatureSet, KernelMatrix, Provenance};
use crate::linalg::{argmax_abs, rows_to_matrix, sym_eigen_desc};

/// Eigenvalues at or below this fraction of the largest are treated as zero.
pub(crate) const RANK_TOL: f64 = 1e-12;

/// Principal component scores of mean-centred data.
pub fn pca(features: &FeatureSet) -> Result<Embedding, EmbedError> {
    let n = features.len();
    if n < 3 {
        return Err(EmbedError::TooFewPoints { need: 3, got: n });
    }
    features.check_lengths()?;
    let mut x = rows_to_matrix(&features.to_dense());
    let d = x.ncols();
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }

    // (variance along the direction, unit loading vector), largest first
    let components: Vec<(f64, Vec<f64>)> = if d <= n {
        let svd = SVD::new(x.clone(), false, true);
        let v_t = svd.v_t.expect("requested right singular vectors");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        order
            .iter()
            .take(2)
            .map(|&k| (svd.singular_values[k].powi(2), v_t.row(k).iter().copied().collect()))
            .collect()
    } else {
        let gram = &x * x.transpose();
        let (values, vectors) = sym_eigen_desc(gram);
        (0..2.min(n))
            .map(|k| {
                let lam = values[k].max(0.0);
                let loading = if lam > 0.0 {
                    (x.transpose() * vectors.column(k)) / lam.sqrt()
                } else {
                    nalgebra::DVector::zeros(d)
                };
                (lam, loading.iter().copied().collect())
            })
            .collect()
    };

    let top = components.first().map_or(0.0, |c| c.0);
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || top <= f64::EPSILON * scale * scale {
        return Err(EmbedError::DegenerateData);
    }

    let mut columns = Vec::with_capacity(2);
    for k in 0..2 {
        let Some((lam, loading)) = components.get(k) else {
            columns.push(vec![0.0; n]);
            continue;
        };
        if *lam <= RANK_TOL * top {
            columns.push(vec![0.0; n]);
            continue;
        }
        let sign = if loading[argmax_abs(loading.iter().copied())] < 0.0 { -1.0 } else { 1.0 };
        let v = nalgebra::DVector::from_iterator(d, loading.iter().map(|l| sign * l));
        columns.push((&x * v).iter().copied().collect());
    }
    Ok(Embedding::new(
        columns_to_coords(&columns[0], &columns[1]),
        EmbedMethod::Pca,
        Provenance::default(),
    ))
}

/// Eigendecomposition of a centred kernel, columns sign-fixed so the
/// largest-magnitude entry of each is positive.
#[derive(Debug, Clone)]
pub struct KernelSpectrum {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl KernelSpectrum {
    pub fn new(kernel: &KernelMatrix) -> Result<Self, EmbedError> {
        if !kernel.centered {
            return Err(EmbedError::NotCentered);
        }
        let n = kernel.n();
        if n < 3 {
            return Err(EmbedError::TooFewPoints { need: 3, got: n });
        }
        let (values, mut vectors) = sym_eigen_desc(kernel.values.clone());
        for mut col in vectors.column_iter_mut() {
            fix_sign(col.as_mut_slice());
        }
        Ok(KernelSpectrum { values, vectors })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of eigenvalues above the relative zero threshold.
    pub fn rank(&self) -> usize {
        let top = self.values.first().copied().unwrap_or(0.0);
        if top <= 0.0 {
            return 0;
        }
        self.values.iter().filter(|&&v| v > RANK_TOL * top).count()
    }

    /// Scaled eigenvectors `u_k·√σ_k` for every `σ_k > floor·σ_max`, keeping
    /// at least the top two. Returns the basis (n×r) and its eigenvalues.
    pub(crate) fn scaled_basis(&self, floor: f64) -> (DMatrix<f64>, Vec<f64>) {
        let top = self.values[0];
        let r = self
            .values
            .iter()
            .take_while(|&&v| v > floor * top && v > RANK_TOL * top)
            .count()
            .max(2)
            .min(self.n());
        let sigma: Vec<f64> = self.values[..r].to_vec();
        let mut basis = self.vectors.columns(0, r).into_owned();
        for (k, mut col) in basis.column_iter_mut().enumerate() {
            col *= sigma[k].max(0.0).sqrt();
        }
        (basis, sigma)
    }

    /// Unconstrained kernel PCA coordinates.
    pub fn embedding(&self) -> Result<Embedding, EmbedError> {
        let rank = self.rank();
        if rank < 2 {
            return Err(EmbedError::RankDeficient { rank });
        }
        let col = |k: usize| -> Vec<f64> {
            let s = self.values[k].sqrt();
            self.vectors.column(k).iter().map(|v| v * s).collect()
        };
        Ok(Embedding::new(
            columns_to_coords(&col(0), &col(1)),
            EmbedMethod::Kpca,
            Provenance::default(),
        ))
    }
}

pub fn kpca(kernel: &KernelMatrix) -> Result<Embedding, EmbedError> {
    KernelSpectrum::new(kernel)?.embedding()
}
