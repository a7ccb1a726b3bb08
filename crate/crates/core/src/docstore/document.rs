use std::collections::BTreeMap;
use std::fmt;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

/// A flat field value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Number(f64),
    Text(String),
    Null,
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Converts a JSON scalar; arrays and objects have no flat form.
    pub fn from_json(v: &serde_json::Value) -> Option<Value> {
        Some(match v {
            serde_json::Value::Null => Value::Null,
            serde_json::Value::Bool(b) => Value::Bool(*b),
            serde_json::Value::Number(n) => Value::Number(n.as_f64()?),
            serde_json::Value::String(s) => Value::Text(s.clone()),
            _ => return None,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Null => serde_json::Value::Null,
            Value::Bool(b) => (*b).into(),
            Value::Number(x) => serde_json::Number::from_f64(*x).map_or(serde_json::Value::Null, Into::into),
            Value::Text(s) => s.clone().into(),
        }
    }

    /// Reads a CSV cell: finite numbers become numbers, anything else stays text.
    pub fn from_cell(cell: &str) -> Value {
        match cell.trim().parse::<f64>() {
            Ok(x) if x.is_finite() && !cell.trim().is_empty() => Value::Number(x),
            _ => Value::Text(cell.to_string()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Number(x) => write!(f, "{x}"),
            Value::Text(s) => f.write_str(s),
            Value::Null => f.write_str("null"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    /// Every field except `id`; always holds a text `smiles`.
    pub fields: BTreeMap<String, Value>,
}

impl Document {
    pub fn new(id: impl Into<String>, smiles: impl Into<String>) -> Self {
        let mut fields = BTreeMap::new();
        fields.insert("smiles".to_string(), Value::Text(smiles.into()));
        Document { id: id.into(), fields }
    }

    pub fn with(mut self, field: &str, value: Value) -> Self {
        self.fields.insert(field.to_string(), value);
        self
    }

    pub fn smiles(&self) -> &str {
        self.fields.get("smiles").and_then(Value::as_str).unwrap_or("")
    }

    /// Field lookup where `id` resolves to the document id.
    pub fn get(&self, field: &str) -> Option<Value> {
        if field == "id" {
            return Some(Value::Text(self.id.clone()));
        }
        self.fields.get(field).cloned()
    }

    /// Keeps only the listed fields (plus `smiles`).
    pub fn project(&self, fields: &[String]) -> Document {
        let kept = self
            .fields
            .iter()
            .filter(|(k, _)| k.as_str() == "smiles" || fields.iter().any(|f| f == *k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Document { id: self.id.clone(), fields: kept }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        map.insert("id".into(), self.id.clone().into());
        for (k, v) in &self.fields {
            map.insert(k.clone(), v.to_json());
        }
        serde_json::Value::Object(map)
    }
}

impl Serialize for Document {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.fields.len() + 1))?;
        let mut id_written = false;
        for (k, v) in &self.fields {
            if !id_written && k.as_str() > "id" {
                map.serialize_entry("id", &self.id)?;
                id_written = true;
            }
            map.serialize_entry(k, v)?;
        }
        if !id_written {
            map.serialize_entry("id", &self.id)?;
        }
        map.end()
    }
}
