//! Reading JSONL and CSV record streams into documents.

use std::collections::BTreeMap;
use std::io::{BufRead, Read};

use serde::{Deserialize, Serialize};

use super::{StoreError, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guesses from a file extension (`.csv`, else JSONL).
    pub fn from_path(path: &std::path::Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    MissingSmiles,
    DuplicateId,
    InvalidId,
    NestedValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub inserted: usize,
    pub rejects: Vec<Reject>,
    /// Ids of inserted documents whose smiles text is empty.
    pub empty_smiles: Vec<String>,
}

/// A record before it is given an id and checked against the collection.
pub(crate) struct RawRecord {
    pub line: usize,
    pub id: Option<String>,
    pub fields: Result<BTreeMap<String, Value>, RejectReason>,
}

fn id_from_json(v: &serde_json::Value) -> Result<Option<String>, RejectReason> {
    match v {
        serde_json::Value::Null => Ok(None),
        serde_json::Value::String(s) if !s.is_empty() => Ok(Some(s.clone())),
        serde_json::Value::Number(n) => Ok(Some(n.to_string())),
        _ => Err(RejectReason::InvalidId),
    }
}

pub(crate) fn read_jsonl(reader: impl BufRead) -> Result<Vec<RawRecord>, StoreError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(|e| StoreError::Parse { line: line_no, message: e.to_string() })?;
        if text.trim().is_empty() {
            continue;
        }
        let parsed: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| StoreError::Parse { line: line_no, message: e.to_string() })?;
        let serde_json::Value::Object(obj) = parsed else {
            return Err(StoreError::Parse { line: line_no, message: "expected a JSON object".into() });
        };
        let mut id = None;
        let mut fields = Ok(BTreeMap::new());
        for (key, v) in &obj {
            if key == "id" {
                match id_from_json(v) {
                    Ok(found) => id = found,
                    Err(reason) => fields = Err(reason),
                }
                continue;
            }
            if let Ok(map) = fields.as_mut() {
                match Value::from_json(v) {
                    Some(value) => {
                        map.insert(key.clone(), value);
                    }
                    None => fields = Err(RejectReason::NestedValue),
                }
            }
        }
        out.push(RawRecord { line: line_no, id, fields });
    }
    Ok(out)
}

pub(crate) fn read_csv(reader: impl Read) -> Result<Vec<RawRecord>, StoreError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| StoreError::Parse { line: 1, message: e.to_string() })?
        .clone();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| StoreError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut id = None;
        let mut fields = BTreeMap::new();
        for (name, cell) in headers.iter().zip(record.iter()) {
            match name {
                "id" => id = (!cell.is_empty()).then(|| cell.to_string()),
                "smiles" => {
                    fields.insert(name.to_string(), Value::Text(cell.trim().to_string()));
                }
                _ if cell.is_empty() => {}
                _ => {
                    fields.insert(name.to_string(), Value::from_cell(cell));
                }
            }
        }
        out.push(RawRecord { line, id, fields: Ok(fields) });
    }
    Ok(out)
}

/// A record is usable once it carries text smiles.
pub(crate) fn validate(fields: BTreeMap<String, Value>) -> Result<BTreeMap<String, Value>, RejectReason> {
    match fields.get("smiles") {
        Some(Value::Text(_)) => Ok(fields),
        _ => Err(RejectReason::MissingSmiles),
    }
}
