//! Request/response layer shared by the command line and the HTTP server, so
//! identical requests give identical numbers in both.
//!
//! Output frames: pca, kpca and t-SNE coordinates are rescaled to the unit
//! box (longer side 2, centred on the origin); ckpca coordinates use the unit
//! frame of the unconstrained kpca layout, so control targets mean the same
//! thing as in an interactive session; lsp coordinates are left in the units
//! of the control targets, which define that layout.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{self, ClusterError, Linkage, ValidityReport};
use crate::docstore::{Document, StoreError};
use crate::embed::{
    self, build_kernel, center, ConstraintSet, EmbedError, EmbedMethod, FeatureSet, InteractiveSession, KernelSpec,
    KernelSpectrum, LspParams, Provenance, TsneParams,
};
use crate::fingerprint::{self, FingerprintError, FingerprintMethod, FingerprintSpec, PathConfig};
use crate::quality::{self, QualityError, QualityReport, DEFAULT_K};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error("fingerprints were made with different settings")]
    MixedFingerprints,
    #[error("{0}")]
    InvalidParameter(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl AnalysisError {
    pub fn code(&self) -> &'static str {
        match self {
            AnalysisError::Embed(e) => e.code(),
            AnalysisError::Cluster(e) => e.code(),
            AnalysisError::Quality(e) => e.code(),
            AnalysisError::Store(e) => e.code(),
            AnalysisError::Fingerprint(FingerprintError::Smiles(_)) => "invalid_smiles",
            AnalysisError::Fingerprint(_) => "invalid_parameters",
            AnalysisError::MixedFingerprints => "mixed_lengths",
            AnalysisError::InvalidParameter(_) => "invalid_parameters",
            AnalysisError::Parse { .. } => "parse_error",
        }
    }
}

/// Pretty JSON with object keys in alphabetical order.
pub fn to_sorted_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    serde_json::to_string_pretty(&v).expect("json value")
}

// ---------------------------------------------------------------- fingerprints

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FingerprintParams {
    pub max_len: Option<usize>,
    pub n_bits: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintRequest {
    pub method: FingerprintMethod,
    #[serde(default)]
    pub params: FingerprintParams,
}

impl FingerprintRequest {
    pub fn spec(&self) -> Result<FingerprintSpec, AnalysisError> {
        let spec = match self.method {
            FingerprintMethod::HashedPath => {
                let d = PathConfig::default();
                FingerprintSpec::HashedPath(PathConfig {
                    max_len: self.params.max_len.unwrap_or(d.max_len),
                    n_bits: self.params.n_bits.unwrap_or(d.n_bits),
                })
            }
            FingerprintMethod::AtmoKeys => {
                if self.params != FingerprintParams::default() {
                    return Err(AnalysisError::InvalidParameter("atmo_keys takes no parameters".into()));
                }
                FingerprintSpec::atmo_keys()
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// One line of a fingerprint file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintRecord {
    pub id: String,
    pub smiles: String,
    pub bits: Vec<u32>,
    pub n_bits: u32,
    pub spec: FingerprintSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintFailure {
    pub id: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintStats {
    pub method: FingerprintMethod,
    pub molecules: usize,
    pub dimension: u32,
    pub mean_bits_set: f64,
    pub min_bits_set: usize,
    pub max_bits_set: usize,
    /// Mean fraction of set bits.
    pub density: f64,
    /// Molecules whose SMILES could not be parsed; they keep an empty bit set
    /// so indices stay aligned with the documents.
    pub failures: Vec<FingerprintFailure>,
}

pub fn fingerprint_documents(
    docs: &[Document],
    spec: &FingerprintSpec,
) -> Result<(Vec<FingerprintRecord>, FingerprintStats), AnalysisError> {
    spec.validate()?;
    let mut records = Vec::with_capacity(docs.len());
    let mut failures = Vec::new();
    for doc in docs {
        let bits = match fingerprint::fingerprint_smiles(doc.smiles(), spec) {
            Ok(fp) => fp.bits,
            Err(e) => {
                failures.push(FingerprintFailure {
                    id: doc.id.clone(),
                    code: AnalysisError::from(e.clone()).code().to_string(),
                    message: e.to_string(),
                });
                Vec::new()
            }
        };
        records.push(FingerprintRecord {
            id: doc.id.clone(),
            smiles: doc.smiles().to_string(),
            bits,
            n_bits: spec.n_bits(),
            spec: spec.clone(),
        });
    }
    let counts: Vec<usize> = records.iter().map(|r| r.bits.len()).collect();
    let mean = if counts.is_empty() { 0.0 } else { counts.iter().sum::<usize>() as f64 / counts.len() as f64 };
    let stats = FingerprintStats {
        method: spec.method(),
        molecules: records.len(),
        dimension: spec.n_bits(),
        mean_bits_set: mean,
        min_bits_set: counts.iter().copied().min().unwrap_or(0),
        max_bits_set: counts.iter().copied().max().unwrap_or(0),
        density: mean / spec.n_bits() as f64,
        failures,
    };
    Ok((records, stats))
}

pub fn features(records: &[FingerprintRecord]) -> Result<FeatureSet, AnalysisError> {
    if let Some(first) = records.first() {
        if records.iter().any(|r| r.spec != first.spec || r.n_bits != first.n_bits) {
            return Err(AnalysisError::MixedFingerprints);
        }
        if records.iter().any(|r| r.bits.iter().any(|&b| b >= r.n_bits)) {
            return Err(AnalysisError::InvalidParameter("bit position beyond n_bits".into()));
        }
    }
    Ok(FeatureSet::Bits {
        n_bits: records.first().map_or(0, |r| r.n_bits as usize),
        rows: records.iter().map(|r| r.bits.clone()).collect(),
    })
}

pub fn write_fingerprints(records: &[FingerprintRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&serde_json::to_value(r).expect("record")).expect("json"));
        out.push('\n');
    }
    out
}

pub fn read_fingerprints(reader: impl BufRead) -> Result<Vec<FingerprintRecord>, AnalysisError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(|e| AnalysisError::Parse { line: line_no, message: e.to_string() })?;
        if text.trim().is_empty() {
            continue;
        }
        let mut rec: FingerprintRecord = serde_json::from_str(&text)
            .map_err(|e| AnalysisError::Parse { line: line_no, message: e.to_string() })?;
        rec.bits.sort_unstable();
        rec.bits.dedup();
        out.push(rec);
    }
    Ok(out)
}

// ------------------------------------------------------------------ clustering

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterAlgo {
    Kmeans,
    Agglomerative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterRequest {
    pub algo: ClusterAlgo,
    pub k: usize,
    #[serde(default)]
    pub linkage: Option<Linkage>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResponse {
    pub algo: ClusterAlgo,
    pub k: usize,
    pub labels: Vec<usize>,
    pub inertia: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linkage: Option<Linkage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Absent when the partition is too coarse or too fine to score.
    pub validity: Option<ValidityReport>,
}

pub fn cluster(features: &FeatureSet, req: &ClusterRequest) -> Result<ClusterResponse, AnalysisError> {
    let data = features.to_dense();
    let (clustering, linkage, seed) = match req.algo {
        ClusterAlgo::Kmeans => {
            if req.linkage.is_some() {
                return Err(AnalysisError::InvalidParameter("linkage applies to agglomerative only".into()));
            }
            let seed = req.seed.unwrap_or(0);
            (cluster::kmeans(&data, req.k, seed)?, None, Some(seed))
        }
        ClusterAlgo::Agglomerative => {
            let linkage = req.linkage.unwrap_or(Linkage::Ward);
            (cluster::agglomerative(&data, req.k, linkage)?, Some(linkage), None)
        }
    };
    let n = data.len();
    let validity = if clustering.k >= 2 && clustering.k < n {
        Some(cluster::validity(&data, &clustering.labels)?)
    } else {
        None
    };
    Ok(ClusterResponse {
        algo: req.algo,
        k: clustering.k,
        labels: clustering.labels,
        inertia: clustering.inertia,
        linkage,
        seed,
        validity,
    })
}

// ------------------------------------------------------------------- embedding

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedParams {
    #[serde(flatten)]
    pub tsne: TsneParams,
    #[serde(flatten)]
    pub lsp: LspParams,
    /// Neighbourhood size for the quality report; shrunk to fit small sets
    /// when not given.
    pub quality_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub method: EmbedMethod,
    /// Kernel for kpca and ckpca; tanimoto when omitted.
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub params: EmbedParams,
    /// ckpca constraints (unit frame) or lsp control points.
    #[serde(default)]
    pub constraints: Option<ConstraintSet>,
}

impl EmbedRequest {
    pub fn new(method: EmbedMethod) -> Self {
        EmbedRequest { method, kernel: None, params: EmbedParams::default(), constraints: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub method: EmbedMethod,
    pub version: u64,
    pub coords: Vec<[f64; 2]>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintSet>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub diagnostics: BTreeMap<String, f64>,
    pub quality: Option<QualityReport>,
}

/// An embedding plus, for ckpca, the live session that produced it.
#[derive(Debug, Clone)]
pub struct EmbedOutcome {
    pub response: EmbedResponse,
    pub session: Option<InteractiveSession>,
}

pub const DEFAULT_KERNEL: KernelSpec = KernelSpec::Tanimoto;

pub fn kernel_spectrum(features: &FeatureSet, kernel: KernelSpec) -> Result<(KernelSpectrum, KernelSpec), AnalysisError> {
    let spec = kernel.resolved(features.dim());
    spec.validate()?;
    let k = center(&build_kernel(features, spec)?)?;
    Ok((KernelSpectrum::new(&k)?, spec))
}

/// The largest usable neighbourhood size up to the default.
pub fn default_quality_k(n: usize) -> Option<usize> {
    let k = DEFAULT_K.min(n.saturating_sub(2) / 2);
    (k >= 1).then_some(k)
}

pub fn quality_report(
    features: &FeatureSet,
    coords: &[[f64; 2]],
    k: Option<usize>,
) -> Result<Option<QualityReport>, AnalysisError> {
    match k.or_else(|| default_quality_k(features.len())) {
        Some(k) => Ok(Some(quality::embedding_quality(features, coords, k)?)),
        None => Ok(None),
    }
}

pub fn embed(features: &FeatureSet, req: &EmbedRequest) -> Result<EmbedOutcome, AnalysisError> {
    let kernel_used = matches!(req.method, EmbedMethod::Kpca | EmbedMethod::Ckpca);
    if req.kernel.is_some() && !kernel_used {
        return Err(AnalysisError::InvalidParameter(format!(
            "method {} takes no kernel",
            req.method.as_str()
        )));
    }
    if req.constraints.is_some() && !matches!(req.method, EmbedMethod::Ckpca | EmbedMethod::Lsp) {
        return Err(AnalysisError::InvalidParameter(format!(
            "method {} takes no constraints",
            req.method.as_str()
        )));
    }
    let mut diagnostics = BTreeMap::new();
    let mut session = None;
    let mut echo = None;
    let embedding = match req.method {
        EmbedMethod::Pca => embed::pca(features)?.normalized(),
        EmbedMethod::Kpca => {
            let (spectrum, spec) = kernel_spectrum(features, req.kernel.unwrap_or(DEFAULT_KERNEL))?;
            let mut e = spectrum.embedding()?.normalized();
            e.provenance.kernel = Some(spec);
            e
        }
        EmbedMethod::Ckpca => {
            let (spectrum, spec) = kernel_spectrum(features, req.kernel.unwrap_or(DEFAULT_KERNEL))?;
            let constraints = req.constraints.clone().unwrap_or_default();
            let live = InteractiveSession::new(spectrum, constraints)?;
            let mut e = live.embedding().clone();
            e.provenance.kernel = Some(spec);
            echo = Some(live.constraints().clone());
            session = Some(live);
            e
        }
        EmbedMethod::Tsne => {
            let run = embed::tsne(features, &req.params.tsne)?;
            diagnostics.insert("kl_after_exaggeration".to_string(), run.kl_after_exaggeration);
            diagnostics.insert("kl_final".to_string(), run.kl_final);
            run.embedding.normalized()
        }
        EmbedMethod::Lsp => {
            let controls = req.constraints.as_ref().map(|c| c.control_points.clone()).unwrap_or_default();
            let e = embed::lsp(features, &controls, &req.params.lsp)?;
            echo = req.constraints.clone();
            e
        }
    };
    if !embedding.is_finite() {
        return Err(EmbedError::SingularSystem.into());
    }
    let quality = quality_report(features, &embedding.coords, req.params.quality_k)?;
    Ok(EmbedOutcome {
        response: EmbedResponse {
            method: embedding.method,
            version: embedding.version,
            coords: embedding.coords,
            provenance: embedding.provenance,
            constraints: echo,
            diagnostics,
            quality,
        },
        session,
    })
}

// ------------------------------------------------------------- coordinate csv

pub fn coords_csv(ids: &[String], coords: &[[f64; 2]]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "x", "y"]).expect("in-memory write");
    for (id, c) in ids.iter().zip(coords) {
        w.write_record([id.as_str(), &c[0].to_string(), &c[1].to_string()]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn read_coords_csv(reader: impl std::io::Read) -> Result<(Vec<String>, Vec<[f64; 2]>), AnalysisError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| AnalysisError::Parse { line: 1, message: e.to_string() })?;
    if headers.iter().collect::<Vec<_>>() != ["id", "x", "y"] {
        return Err(AnalysisError::Parse { line: 1, message: "expected header id,x,y".into() });
    }
    let mut ids = Vec::new();
    let mut coords = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| AnalysisError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| {
            rec[i].parse::<f64>().map_err(|e| AnalysisError::Parse { line, message: e.to_string() })
        };
        ids.push(rec[0].to_string());
        coords.push([num(1)?, num(2)?]);
    }
    Ok((ids, coords))
}
