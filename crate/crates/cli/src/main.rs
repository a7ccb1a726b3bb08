use std::fs;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use molscope_core::analysis::{
    self, AnalysisError, ClusterAlgo, ClusterRequest, EmbedParams, EmbedRequest, FingerprintParams, FingerprintRecord,
    FingerprintRequest,
};
use molscope_core::cluster::Linkage;
use molscope_core::docstore::{self, Bins, FetchQuery, Filter, Store, StoreError, SummaryOpts};
use molscope_core::embed::{ConstraintSet, EmbedMethod, KernelSpec};
use molscope_core::fingerprint::FingerprintMethod;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "molscope", version, about = "Summarize, fingerprint, cluster and embed molecular collections")]
struct Cli {
    /// Directory holding collection snapshots.
    #[arg(long, global = true, env = "MOLSCOPE_DATA_DIR", default_value = "molscope-data")]
    data_dir: PathBuf,
    /// Log filter, e.g. `info` or `molscope_server=debug`.
    #[arg(long, global = true, env = "MOLSCOPE_LOG", default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a JSONL or CSV file into a collection.
    Ingest {
        file: PathBuf,
        #[arg(long)]
        collection: String,
    },
    /// Summary statistics for fields of a collection.
    Summarize {
        collection: String,
        /// Comma-separated; defaults to every field except smiles.
        #[arg(long, value_delimiter = ',')]
        fields: Vec<String>,
        #[arg(long)]
        filter: Option<String>,
        /// `auto` or a bin count.
        #[arg(long, default_value = "auto")]
        bins: String,
        #[arg(long)]
        group_by: Option<String>,
    },
    /// Fingerprint every molecule of a collection into a JSONL file.
    Fingerprint {
        collection: String,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        filter: Option<String>,
        #[arg(long)]
        n_bits: Option<u32>,
        #[arg(long)]
        max_len: Option<usize>,
    },
    /// Cluster fingerprints.
    Cluster {
        fingerprints: PathBuf,
        #[arg(long, value_enum, default_value = "kmeans")]
        algo: AlgoArg,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        linkage: Option<LinkageArg>,
    },
    /// Embed fingerprints in 2-D; coordinates go to --out, the report to stdout.
    Embed {
        fingerprints: PathBuf,
        #[arg(long, value_enum)]
        method: EmbedArg,
        /// linear, rbf or tanimoto (kpca and ckpca only).
        #[arg(long)]
        kernel: Option<String>,
        #[arg(long)]
        gamma: Option<f64>,
        /// Constraint file for ckpca and lsp.
        #[arg(long)]
        constraints: Option<PathBuf>,
        /// Method parameters as JSON, e.g. '{"perplexity": 20, "seed": 3}'.
        #[arg(long)]
        params: Option<String>,
        #[arg(long)]
        quality_k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a coordinates file against its fingerprints.
    Quality {
        fingerprints: PathBuf,
        coords: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run the HTTP and WebSocket server.
    Serve {
        #[arg(long, env = "MOLSCOPE_BIND", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Minutes before an idle session is dropped.
        #[arg(long, default_value_t = 60)]
        idle_minutes: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum MethodArg {
    HashedPath,
    AtmoKeys,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgoArg {
    Kmeans,
    Agglomerative,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LinkageArg {
    Single,
    Average,
    Ward,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EmbedArg {
    Pca,
    Kpca,
    Ckpca,
    Tsne,
    Lsp,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            CliError::Analysis(e) => e.code(),
            CliError::Store(e) => e.code(),
            CliError::Io { .. } => "io_error",
            CliError::Invalid(_) => "invalid_parameters",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: String,
}

fn parse_filter(text: Option<&str>) -> Result<Filter, CliError> {
    let Some(text) = text else { return Ok(Filter::all()) };
    let json: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Invalid(format!("--filter is not JSON: {e}")))?;
    Ok(Filter::from_json(&json).map_err(StoreError::from)?)
}

fn read_fingerprint_file(path: &Path) -> Result<Vec<FingerprintRecord>, CliError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(analysis::read_fingerprints(BufReader::new(file))?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn json_out<T: Serialize>(value: &T) -> String {
    analysis::to_sorted_json(value) + "\n"
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Ingest { file, collection } => {
            let store = Store::open(&cli.data_dir)?;
            if !file.exists() {
                return Err(CliError::Io { path: file, source: std::io::ErrorKind::NotFound.into() });
            }
            let report = docstore::ingest_path(&store, &collection, &file)?;
            Ok(json_out(&report))
        }
        Command::Summarize { collection, fields, filter, bins, group_by } => {
            let store = Store::open(&cli.data_dir)?;
            let bins: Bins = serde_json::from_value(match bins.parse::<u64>() {
                Ok(n) => n.into(),
                Err(_) => bins.into(),
            })
            .map_err(|e| CliError::Invalid(e.to_string()))?;
            let fields = if fields.is_empty() {
                store.fields(&collection)?.into_iter().map(|f| f.name).filter(|n| n != "smiles").collect()
            } else {
                fields
            };
            let opts = SummaryOpts { bins, group_by };
            let summaries = store.summarize(&collection, &fields, &parse_filter(filter.as_deref())?, &opts)?;
            Ok(json_out(&summaries))
        }
        Command::Fingerprint { collection, method, out, filter, n_bits, max_len } => {
            let store = Store::open(&cli.data_dir)?;
            let docs = store.fetch(&collection, &FetchQuery { filter: parse_filter(filter.as_deref())?, ..Default::default() })?;
            let request = FingerprintRequest {
                method: match method {
                    MethodArg::HashedPath => FingerprintMethod::HashedPath,
                    MethodArg::AtmoKeys => FingerprintMethod::AtmoKeys,
                },
                params: FingerprintParams { max_len, n_bits },
            };
            let (records, stats) = analysis::fingerprint_documents(&docs, &request.spec()?)?;
            write_file(&out, &analysis::write_fingerprints(&records))?;
            Ok(json_out(&stats))
        }
        Command::Cluster { fingerprints, algo, k, seed, linkage } => {
            let records = read_fingerprint_file(&fingerprints)?;
            let request = ClusterRequest {
                algo: match algo {
                    AlgoArg::Kmeans => ClusterAlgo::Kmeans,
                    AlgoArg::Agglomerative => ClusterAlgo::Agglomerative,
                },
                k,
                linkage: linkage.map(|l| match l {
                    LinkageArg::Single => Linkage::Single,
                    LinkageArg::Average => Linkage::Average,
                    LinkageArg::Ward => Linkage::Ward,
                }),
                seed,
            };
            let response = analysis::cluster(&analysis::features(&records)?, &request)?;
            Ok(json_out(&response))
        }
        Command::Embed { fingerprints, method, kernel, gamma, constraints, params, quality_k, out } => {
            let records = read_fingerprint_file(&fingerprints)?;
            let kernel = match (kernel, gamma) {
                (None, None) => None,
                (None, Some(_)) => return Err(CliError::Invalid("--gamma needs --kernel rbf".into())),
                (Some(name), gamma) => {
                    let spec: KernelSpec = name.parse().map_err(CliError::Invalid)?;
                    Some(match (spec, gamma) {
                        (KernelSpec::Rbf { .. }, g) => KernelSpec::Rbf { gamma: g },
                        (other, None) => other,
                        (_, Some(_)) => return Err(CliError::Invalid("--gamma only applies to rbf".into())),
                    })
                }
            };
            let constraints = match constraints {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
                    let set: ConstraintSet = serde_json::from_str(&text)
                        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
                    Some(set)
                }
                None => None,
            };
            let mut params: EmbedParams = match params {
                Some(text) => serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("--params: {e}")))?,
                None => EmbedParams::default(),
            };
            if quality_k.is_some() {
                params.quality_k = quality_k;
            }
            let request = EmbedRequest {
                method: match method {
                    EmbedArg::Pca => EmbedMethod::Pca,
                    EmbedArg::Kpca => EmbedMethod::Kpca,
                    EmbedArg::Ckpca => EmbedMethod::Ckpca,
                    EmbedArg::Tsne => EmbedMethod::Tsne,
                    EmbedArg::Lsp => EmbedMethod::Lsp,
                },
                kernel,
                params,
                constraints,
            };
            let outcome = analysis::embed(&analysis::features(&records)?, &request)?;
            let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
            write_file(&out, &analysis::coords_csv(&ids, &outcome.response.coords))?;
            let mut report = serde_json::to_value(&outcome.response).expect("response serializes");
            if let Some(obj) = report.as_object_mut() {
                obj.remove("coords");
                obj.remove("version");
            }
            Ok(json_out(&report))
        }
        Command::Quality { fingerprints, coords, k } => {
            let records = read_fingerprint_file(&fingerprints)?;
            let file = fs::File::open(&coords).map_err(io_err(&coords))?;
            let (ids, xy) = analysis::read_coords_csv(file)?;
            let expected: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
            if ids.iter().map(String::as_str).ne(expected.iter().copied()) {
                return Err(CliError::Invalid("coordinate ids do not match the fingerprint file".into()));
            }
            match analysis::quality_report(&analysis::features(&records)?, &xy, k)? {
                Some(report) => Ok(json_out(&report)),
                None => Err(CliError::Invalid(format!("{} points are too few for any neighbourhood size", xy.len()))),
            }
        }
        Command::Serve { bind, idle_minutes } => {
            let store = Arc::new(Store::open(&cli.data_dir)?);
            let config = molscope_server::ServerConfig { idle_timeout: Duration::from_secs(idle_minutes * 60) };
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Invalid(e.to_string()))?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(bind).await.map_err(|source| CliError::Io {
                    path: PathBuf::from(bind.to_string()),
                    source,
                })?;
                molscope_server::serve(listener, molscope_server::AppState::new(store, config))
                    .await
                    .map_err(|e| CliError::Invalid(e.to_string()))
            })?;
            Ok(String::new())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(&cli.log_level))
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let body = ErrorBody { code: e.code(), message: e.to_string() };
            eprint!("{}", json_out(&body));
            ExitCode::from(1)
        }
    }
}
