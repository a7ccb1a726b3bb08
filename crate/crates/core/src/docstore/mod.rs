//! Embedded schema-free store for molecule records.
//!
//! Collections are in-memory vectors of flat [`Document`]s kept in insertion
//! order. With a data directory configured, every write is followed by a
//! snapshot to `<dir>/<collection>.jsonl` (written to a temporary file and
//! renamed into place), and [`Store::open`] reloads those snapshots.

mod document;
mod filter;
mod ingest;
mod summary;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use document::{Document, Value};
pub use filter::{Filter, FilterError, Op};
pub use ingest::{Format, IngestReport, Reject, RejectReason};
pub use summary::{
    auto_bin_count, binned_kde, boxplot, histogram, quantile, silverman_bandwidth, summarize_docs, Bins, BoxPlot,
    CategoryCount, FieldKind, FieldSummary, GroupBoxPlot, HistogramBin, StdKind, SummaryOpts, KDE_POINTS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("unknown collection {0:?}")]
    UnknownCollection(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("field {0:?} has no numeric values")]
    NonNumericField(String),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("invalid collection name {0:?}")]
    InvalidName(String),
    #[error("{0}")]
    InvalidParameter(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::UnknownCollection(_) => "unknown_collection",
            StoreError::Parse { .. } => "parse_error",
            StoreError::NonNumericField(_) => "non_numeric_field",
            StoreError::Filter(_) => "invalid_filter",
            StoreError::InvalidName(_) | StoreError::InvalidParameter(_) => "invalid_parameters",
            StoreError::Io(_) => "io_error",
        }
    }
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Limit {
    #[default]
    All,
    First { n: usize },
    /// Uniform sample without replacement, returned in insertion order.
    Sample { n: usize, seed: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FetchQuery {
    pub filter: Filter,
    /// Fields to keep besides `id` and `smiles`; `None` keeps everything.
    pub fields: Option<Vec<String>>,
    pub limit: Limit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldType {
    Number,
    Text,
    Boolean,
    Null,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldInfo {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: FieldType,
    pub present: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionInfo {
    pub name: String,
    pub size: usize,
}

/// Anything that can serve documents by collection. The embedded [`Store`]
/// is the only implementation; a remote database would be another.
pub trait DocumentSource {
    fn collections(&self) -> Vec<CollectionInfo>;
    fn fetch(&self, collection: &str, query: &FetchQuery) -> Result<Vec<Document>, StoreError>;
}

#[derive(Debug, Default)]
struct Collection {
    docs: Vec<Document>,
    ids: HashSet<String>,
}

impl Collection {
    fn matching<'a>(&'a self, filter: &'a Filter) -> impl Iterator<Item = &'a Document> + 'a {
        self.docs.iter().filter(move |d| filter.matches(d))
    }
}

#[derive(Debug, Default)]
pub struct Store {
    data_dir: Option<PathBuf>,
    collections: RwLock<BTreeMap<String, Arc<RwLock<Collection>>>>,
}

pub fn valid_collection_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
        && !name.starts_with('.')
}

impl Store {
    /// A store that never touches disk.
    pub fn in_memory() -> Self {
        Store::default()
    }

    /// Opens (creating if needed) a data directory and loads every
    /// `<name>.jsonl` snapshot in it.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let store = Store { data_dir: Some(dir.clone()), collections: RwLock::default() };
        let mut entries: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        entries.sort();
        for path in entries {
            let Some(name) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                continue;
            };
            if !valid_collection_name(&name) {
                continue;
            }
            let records = ingest::read_jsonl(BufReader::new(fs::File::open(&path)?))?;
            let mut coll = Collection::default();
            let report = append(&mut coll, records);
            if let Some(bad) = report.rejects.first() {
                return Err(StoreError::Parse {
                    line: bad.line,
                    message: format!("snapshot {} holds an invalid record ({:?})", path.display(), bad.reason),
                });
            }
            store.write_map().insert(name, Arc::new(RwLock::new(coll)));
        }
        Ok(store)
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    fn write_map(&self) -> std::sync::RwLockWriteGuard<'_, BTreeMap<String, Arc<RwLock<Collection>>>> {
        self.collections.write().unwrap_or_else(|e| e.into_inner())
    }

    fn get(&self, name: &str) -> Result<Arc<RwLock<Collection>>, StoreError> {
        self.collections
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(name)
            .cloned()
            .ok_or_else(|| StoreError::UnknownCollection(name.to_string()))
    }

    fn read<T>(&self, name: &str, f: impl FnOnce(&Collection) -> T) -> Result<T, StoreError> {
        let coll = self.get(name)?;
        let guard = coll.read().unwrap_or_else(|e| e.into_inner());
        Ok(f(&guard))
    }

    /// Appends every valid record of the stream. A parse error anywhere
    /// leaves the collection untouched.
    pub fn ingest(&self, collection: &str, reader: impl Read, format: Format) -> Result<IngestReport, StoreError> {
        if !valid_collection_name(collection) {
            return Err(StoreError::InvalidName(collection.to_string()));
        }
        let records = match format {
            Format::Jsonl => ingest::read_jsonl(BufReader::new(reader))?,
            Format::Csv => ingest::read_csv(reader)?,
        };
        let coll = self.write_map().entry(collection.to_string()).or_default().clone();
        let mut guard = coll.write().unwrap_or_else(|e| e.into_inner());
        let report = append(&mut guard, records);
        if report.inserted > 0 {
            self.write_snapshot(collection, &guard)?;
        }
        Ok(report)
    }

    /// Adds already-built documents; ids must be new.
    pub fn insert(&self, collection: &str, docs: Vec<Document>) -> Result<IngestReport, StoreError> {
        if !valid_collection_name(collection) {
            return Err(StoreError::InvalidName(collection.to_string()));
        }
        let records = docs
            .into_iter()
            .enumerate()
            .map(|(i, d)| ingest::RawRecord { line: i + 1, id: Some(d.id), fields: Ok(d.fields) })
            .collect();
        let coll = self.write_map().entry(collection.to_string()).or_default().clone();
        let mut guard = coll.write().unwrap_or_else(|e| e.into_inner());
        let report = append(&mut guard, records);
        if report.inserted > 0 {
            self.write_snapshot(collection, &guard)?;
        }
        Ok(report)
    }

    pub fn drop_collection(&self, collection: &str) -> Result<(), StoreError> {
        self.write_map()
            .remove(collection)
            .ok_or_else(|| StoreError::UnknownCollection(collection.to_string()))?;
        if let Some(dir) = &self.data_dir {
            let path = dir.join(format!("{collection}.jsonl"));
            if path.exists() {
                fs::remove_file(path)?;
            }
        }
        Ok(())
    }

    pub fn len(&self, collection: &str) -> Result<usize, StoreError> {
        self.read(collection, |c| c.docs.len())
    }

    pub fn collection_infos(&self) -> Vec<CollectionInfo> {
        let map = self.collections.read().unwrap_or_else(|e| e.into_inner());
        map.iter()
            .map(|(name, c)| CollectionInfo {
                name: name.clone(),
                size: c.read().unwrap_or_else(|e| e.into_inner()).docs.len(),
            })
            .collect()
    }

    pub fn fields(&self, collection: &str) -> Result<Vec<FieldInfo>, StoreError> {
        self.read(collection, |c| {
            let mut seen: BTreeMap<String, (Option<FieldType>, usize)> = BTreeMap::new();
            for doc in &c.docs {
                for (name, v) in &doc.fields {
                    let t = match v {
                        Value::Number(_) => FieldType::Number,
                        Value::Text(_) => FieldType::Text,
                        Value::Bool(_) => FieldType::Boolean,
                        Value::Null => FieldType::Null,
                    };
                    let entry = seen.entry(name.clone()).or_insert((None, 0));
                    entry.1 += 1;
                    entry.0 = match entry.0 {
                        None => Some(t),
                        Some(prev) if prev == t || t == FieldType::Null => Some(prev),
                        Some(FieldType::Null) => Some(t),
                        Some(_) => Some(FieldType::Mixed),
                    };
                }
            }
            seen.into_iter()
                .map(|(name, (kind, present))| FieldInfo { name, kind: kind.unwrap_or(FieldType::Null), present })
                .collect()
        })
    }

    pub fn fetch(&self, collection: &str, query: &FetchQuery) -> Result<Vec<Document>, StoreError> {
        self.read(collection, |c| {
            let matched: Vec<&Document> = c.matching(&query.filter).collect();
            let chosen: Vec<&Document> = match query.limit {
                Limit::All => matched,
                Limit::First { n } => matched.into_iter().take(n).collect(),
                Limit::Sample { n, seed } if n < matched.len() => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let mut picks = rand::seq::index::sample(&mut rng, matched.len(), n).into_vec();
                    picks.sort_unstable();
                    picks.into_iter().map(|i| matched[i]).collect()
                }
                Limit::Sample { .. } => matched,
            };
            chosen
                .into_iter()
                .map(|d| match &query.fields {
                    Some(f) => d.project(f),
                    None => d.clone(),
                })
                .collect()
        })
    }

    pub fn summarize(
        &self,
        collection: &str,
        fields: &[String],
        filter: &Filter,
        opts: &SummaryOpts,
    ) -> Result<Vec<FieldSummary>, StoreError> {
        self.read(collection, |c| summarize_docs(c.matching(filter), fields, opts))?
    }

    /// Writes the snapshot for one collection (no-op without a data directory).
    pub fn snapshot(&self, collection: &str) -> Result<(), StoreError> {
        let coll = self.get(collection)?;
        let guard = coll.read().unwrap_or_else(|e| e.into_inner());
        self.write_snapshot(collection, &guard)
    }

    fn write_snapshot(&self, name: &str, coll: &Collection) -> Result<(), StoreError> {
        let Some(dir) = &self.data_dir else {
            return Ok(());
        };
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".{name}.jsonl.tmp"));
        {
            let mut out = std::io::BufWriter::new(fs::File::create(&tmp)?);
            for doc in &coll.docs {
                serde_json::to_writer(&mut out, doc).map_err(|e| StoreError::Io(e.to_string()))?;
                out.write_all(b"\n")?;
            }
            out.into_inner().map_err(|e| StoreError::Io(e.to_string()))?.sync_all()?;
        }
        fs::rename(&tmp, dir.join(format!("{name}.jsonl")))?;
        Ok(())
    }
}

impl DocumentSource for Store {
    fn collections(&self) -> Vec<CollectionInfo> {
        self.collection_infos()
    }

    fn fetch(&self, collection: &str, query: &FetchQuery) -> Result<Vec<Document>, StoreError> {
        Store::fetch(self, collection, query)
    }
}

fn append(coll: &mut Collection, records: Vec<ingest::RawRecord>) -> IngestReport {
    let mut report = IngestReport::default();
    for rec in records {
        let fields = match rec.fields.and_then(ingest::validate) {
            Ok(f) => f,
            Err(reason) => {
                report.rejects.push(Reject { line: rec.line, reason });
                continue;
            }
        };
        let id = rec.id.unwrap_or_else(|| format!("doc-{}", coll.docs.len()));
        if !coll.ids.insert(id.clone()) {
            report.rejects.push(Reject { line: rec.line, reason: RejectReason::DuplicateId });
            continue;
        }
        let doc = Document { id, fields };
        if doc.smiles().is_empty() {
            report.empty_smiles.push(doc.id.clone());
        }
        coll.docs.push(doc);
        report.inserted += 1;
    }
    report
}

/// Reads a whole file into a collection, picking the format from its extension.
pub fn ingest_path(store: &Store, collection: &str, path: &Path) -> Result<IngestReport, StoreError> {
    let file = fs::File::open(path)?;
    store.ingest(collection, file, Format::from_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    const JSONL: &str = r#"{"id": "a", "smiles": "CCO", "mass": 46.07}
{"smiles": "C", "mass": 16.04, "flag": true}

{"id": 7, "smiles": "O", "mass": null}
"#;

    #[test]
    fn jsonl_ingest_assigns_ids() {
        let s = Store::in_memory();
        let r = s.ingest("demo", JSONL.as_bytes(), Format::Jsonl).unwrap();
        assert_eq!(r.inserted, 3);
        let docs = s.fetch("demo", &FetchQuery::default()).unwrap();
        let ids: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["a", "doc-1", "7"]);
        assert_eq!(docs[1].fields["flag"], Value::Bool(true));
    }

    #[test]
    fn empty_stream_inserts_nothing() {
        let s = Store::in_memory();
        assert_eq!(s.ingest("e", "".as_bytes(), Format::Jsonl).unwrap().inserted, 0);
        assert_eq!(s.ingest("e", "smiles,mass\n".as_bytes(), Format::Csv).unwrap().inserted, 0);
    }

    #[test]
    fn parse_error_is_atomic() {
        let s = Store::in_memory();
        s.ingest("demo", JSONL.as_bytes(), Format::Jsonl).unwrap();
        let bad = "{\"smiles\": \"C\"}\n{not json\n";
        assert!(matches!(s.ingest("demo", bad.as_bytes(), Format::Jsonl), Err(StoreError::Parse { line: 2, .. })));
        assert_eq!(s.len("demo").unwrap(), 3);
    }

    #[test]
    fn rejects_are_tallied() {
        let s = Store::in_memory();
        let src = "{\"id\":\"x\",\"smiles\":\"C\"}\n{\"id\":\"x\",\"smiles\":\"CC\"}\n{\"mass\":1}\n{\"smiles\":\"C\",\"tags\":[1]}\n";
        let r = s.ingest("demo", src.as_bytes(), Format::Jsonl).unwrap();
        assert_eq!(r.inserted, 1);
        let reasons: Vec<(usize, RejectReason)> = r.rejects.iter().map(|r| (r.line, r.reason)).collect();
        assert_eq!(
            reasons,
            [(2, RejectReason::DuplicateId), (3, RejectReason::MissingSmiles), (4, RejectReason::NestedValue)]
        );
    }

    #[test]
    fn csv_cells_are_typed() {
        let s = Store::in_memory();
        let src = "id,smiles,mass,name\nm1,CCO,46.07,ethanol\nm2,C,n/a,\n,O,18,water\n";
        let r = s.ingest("demo", src.as_bytes(), Format::Csv).unwrap();
        assert_eq!(r.inserted, 3);
        let docs = s.fetch("demo", &FetchQuery::default()).unwrap();
        assert_eq!(docs[0].fields["mass"], Value::Number(46.07));
        assert_eq!(docs[1].fields["mass"], Value::Text("n/a".into()));
        assert!(!docs[1].fields.contains_key("name"));
        assert_eq!(docs[2].id, "doc-2");
        let sum = s.summarize("demo", &["mass".into()], &Filter::all(), &SummaryOpts::default()).unwrap();
        assert_eq!((sum[0].count, sum[0].missing), (2, 1));
    }

    #[test]
    fn csv_ragged_row_is_a_parse_error() {
        let s = Store::in_memory();
        let err = s.ingest("demo", "smiles,mass\nC,1\nCC,2,3\n".as_bytes(), Format::Csv).unwrap_err();
        assert!(matches!(err, StoreError::Parse { line: 3, .. }), "{err:?}");
        assert!(s.len("demo").is_err() || s.len("demo").unwrap() == 0);
    }

    #[test]
    fn fetch_limits_and_projection() {
        let s = Store::in_memory();
        let docs: Vec<Document> = (0..50)
            .map(|i| Document::new(format!("m{i}"), "C").with("mass", Value::Number(i as f64)).with("x", Value::Null))
            .collect();
        s.insert("demo", docs).unwrap();
        let q = |limit| FetchQuery { limit, fields: Some(vec!["mass".into()]), ..Default::default() };
        let first = s.fetch("demo", &q(Limit::First { n: 5 })).unwrap();
        assert_eq!(first.len(), 5);
        assert_eq!(first[0].fields.len(), 2);
        let a = s.fetch("demo", &q(Limit::Sample { n: 10, seed: 3 })).unwrap();
        let b = s.fetch("demo", &q(Limit::Sample { n: 10, seed: 3 })).unwrap();
        assert_eq!(a, b);
        let idx: Vec<usize> = a.iter().map(|d| d.id[1..].parse().unwrap()).collect();
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        let none = FetchQuery {
            filter: Filter::from_json(&serde_json::json!({"mass": {"$gt": 1000}})).unwrap(),
            ..Default::default()
        };
        assert!(s.fetch("demo", &none).unwrap().is_empty());
        assert_eq!(s.fetch("nope", &none), Err(StoreError::UnknownCollection("nope".into())));
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path()).unwrap();
        s.ingest("demo", JSONL.as_bytes(), Format::Jsonl).unwrap();
        s.ingest("other", "smiles,v\nC,0.1\nCC,1e-300\n".as_bytes(), Format::Csv).unwrap();
        let reloaded = Store::open(dir.path()).unwrap();
        assert_eq!(reloaded.collection_infos(), s.collection_infos());
        for name in ["demo", "other"] {
            assert_eq!(
                reloaded.fetch(name, &FetchQuery::default()).unwrap(),
                s.fetch(name, &FetchQuery::default()).unwrap()
            );
        }
    }

    #[test]
    fn field_types() {
        let s = Store::in_memory();
        s.ingest("demo", JSONL.as_bytes(), Format::Jsonl).unwrap();
        let f = s.fields("demo").unwrap();
        let kinds: Vec<(&str, FieldType)> = f.iter().map(|f| (f.name.as_str(), f.kind)).collect();
        assert_eq!(kinds, [("flag", FieldType::Boolean), ("mass", FieldType::Number), ("smiles", FieldType::Text)]);
    }

    #[test]
    fn names_are_checked() {
        assert!(valid_collection_name("demo_1"));
        assert!(!valid_collection_name("../etc"));
        assert!(!valid_collection_name(""));
    }
}
