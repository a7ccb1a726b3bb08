//! Document filters written as JSON objects in the familiar query style:
//! `{"mass": {"$gt": 100}, "$or": [{"name": "ethanol"}, {"smiles": {"$contains": "N"}}]}`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map};
use thiserror::Error;

use super::{Document, Value};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid filter: {0}")]
pub struct FilterError(pub String);

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Eq(Value),
    Ne(Value),
    Lt(Value),
    Lte(Value),
    Gt(Value),
    Gte(Value),
    In(Vec<Value>),
    Exists(bool),
    Contains(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Value", into = "serde_json::Value")]
pub enum Filter {
    And(Vec<Filter>),
    Or(Vec<Filter>),
    Not(Box<Filter>),
    Field { field: String, op: Op },
}

impl Default for Filter {
    fn default() -> Self {
        Filter::And(Vec::new())
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, FilterError> {
    Err(FilterError(msg.into()))
}

fn scalar(v: &serde_json::Value, context: &str) -> Result<Value, FilterError> {
    Value::from_json(v).ok_or_else(|| FilterError(format!("{context} needs a scalar value")))
}

fn parse_ops(field: &str, ops: &Map<String, serde_json::Value>) -> Result<Filter, FilterError> {
    let mut parts = Vec::new();
    for (name, arg) in ops {
        let op = match name.as_str() {
            "$eq" => Op::Eq(scalar(arg, name)?),
            "$ne" => Op::Ne(scalar(arg, name)?),
            "$lt" => Op::Lt(scalar(arg, name)?),
            "$lte" => Op::Lte(scalar(arg, name)?),
            "$gt" => Op::Gt(scalar(arg, name)?),
            "$gte" => Op::Gte(scalar(arg, name)?),
            "$in" => {
                let list = arg.as_array().ok_or_else(|| FilterError("$in needs a list".into()))?;
                if list.is_empty() {
                    return err(format!("$in list for {field} is empty"));
                }
                Op::In(list.iter().map(|v| scalar(v, name)).collect::<Result<_, _>>()?)
            }
            "$exists" => Op::Exists(arg.as_bool().ok_or_else(|| FilterError("$exists needs a boolean".into()))?),
            "$contains" => Op::Contains(
                arg.as_str()
                    .ok_or_else(|| FilterError("$contains needs text".into()))?
                    .to_string(),
            ),
            other => return err(format!("unknown operator {other}")),
        };
        parts.push(Filter::Field { field: field.to_string(), op });
    }
    Ok(match parts.len() {
        0 => return err(format!("no operator given for {field}")),
        1 => parts.pop().expect("one element"),
        _ => Filter::And(parts),
    })
}

fn parse_list(key: &str, v: &serde_json::Value) -> Result<Vec<Filter>, FilterError> {
    let list = v.as_array().ok_or_else(|| FilterError(format!("{key} needs a list")))?;
    if list.is_empty() {
        return err(format!("{key} list is empty"));
    }
    list.iter().map(Filter::from_json).collect()
}

impl Filter {
    /// Matches every document.
    pub fn all() -> Self {
        Filter::default()
    }

    pub fn field(field: &str, op: Op) -> Self {
        Filter::Field { field: field.to_string(), op }
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Filter, FilterError> {
        if v.is_null() {
            return Ok(Filter::all());
        }
        let obj = v.as_object().ok_or_else(|| FilterError("filter must be a JSON object".into()))?;
        let mut parts = Vec::new();
        for (key, arg) in obj {
            match key.as_str() {
                "$and" => parts.push(Filter::And(parse_list(key, arg)?)),
                "$or" => parts.push(Filter::Or(parse_list(key, arg)?)),
                "$not" => parts.push(Filter::Not(Box::new(Filter::from_json(arg)?))),
                k if k.starts_with('$') => return err(format!("unknown combinator {k}")),
                "" => return err("empty field name"),
                field => match arg {
                    serde_json::Value::Object(ops) if ops.keys().all(|k| k.starts_with('$')) => {
                        parts.push(parse_ops(field, ops)?)
                    }
                    other => parts.push(Filter::field(field, Op::Eq(scalar(other, field)?))),
                },
            }
        }
        Ok(if parts.len() == 1 { parts.pop().expect("one element") } else { Filter::And(parts) })
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Filter::And(parts) if parts.is_empty() => json!({}),
            Filter::And(parts) => json!({ "$and": parts.iter().map(Filter::to_json).collect::<Vec<_>>() }),
            Filter::Or(parts) => json!({ "$or": parts.iter().map(Filter::to_json).collect::<Vec<_>>() }),
            Filter::Not(inner) => json!({ "$not": inner.to_json() }),
            Filter::Field { field, op } => {
                let (name, arg) = match op {
                    Op::Eq(v) => ("$eq", v.to_json()),
                    Op::Ne(v) => ("$ne", v.to_json()),
                    Op::Lt(v) => ("$lt", v.to_json()),
                    Op::Lte(v) => ("$lte", v.to_json()),
                    Op::Gt(v) => ("$gt", v.to_json()),
                    Op::Gte(v) => ("$gte", v.to_json()),
                    Op::In(vs) => ("$in", vs.iter().map(Value::to_json).collect()),
                    Op::Exists(b) => ("$exists", (*b).into()),
                    Op::Contains(s) => ("$contains", s.clone().into()),
                };
                json!({ field.clone(): { name: arg } })
            }
        }
    }

    pub fn matches(&self, doc: &Document) -> bool {
        match self {
            Filter::And(parts) => parts.iter().all(|f| f.matches(doc)),
            Filter::Or(parts) => parts.iter().any(|f| f.matches(doc)),
            Filter::Not(inner) => !inner.matches(doc),
            Filter::Field { field, op } => {
                let found = doc.get(field);
                op_matches(op, found.as_ref())
            }
        }
    }
}

impl TryFrom<serde_json::Value> for Filter {
    type Error = FilterError;
    fn try_from(v: serde_json::Value) -> Result<Self, FilterError> {
        Filter::from_json(&v)
    }
}

impl From<Filter> for serde_json::Value {
    fn from(f: Filter) -> Self {
        f.to_json()
    }
}

/// Absent fields compare as null for equality.
fn equal(found: Option<&Value>, want: &Value) -> bool {
    match (found.unwrap_or(&Value::Null), want) {
        (Value::Number(a), Value::Number(b)) => a == b,
        (a, b) => a == b,
    }
}

/// Numbers order numerically and text lexicographically; other pairs are incomparable.
fn compare(found: Option<&Value>, want: &Value) -> Option<Ordering> {
    match (found?, want) {
        (Value::Number(a), Value::Number(b)) => a.partial_cmp(b),
        (Value::Text(a), Value::Text(b)) => Some(a.as_str().cmp(b.as_str())),
        _ => None,
    }
}

fn op_matches(op: &Op, found: Option<&Value>) -> bool {
    use Ordering::*;
    match op {
        Op::Eq(v) => equal(found, v),
        Op::Ne(v) => !equal(found, v),
        Op::Lt(v) => compare(found, v) == Some(Less),
        Op::Lte(v) => matches!(compare(found, v), Some(Less | Equal)),
        Op::Gt(v) => compare(found, v) == Some(Greater),
        Op::Gte(v) => matches!(compare(found, v), Some(Greater | Equal)),
        Op::In(vs) => vs.iter().any(|v| equal(found, v)),
        Op::Exists(want) => found.is_some_and(|v| !v.is_null()) == *want,
        Op::Contains(s) => found.and_then(Value::as_str).is_some_and(|t| t.contains(s.as_str())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> Filter {
        Filter::from_json(&serde_json::from_str(s).unwrap()).unwrap()
    }

    #[test]
    fn basic_predicates() {
        let doc = Document::new("a", "CCO").with("mass", Value::Number(150.0));
        assert!(f(r#"{"mass": {"$gt": 100}}"#).matches(&doc));
        assert!(!f(r#"{"mass": {"$gt": 100, "$lt": 120}}"#).matches(&doc));
        assert!(f(r#"{"$not": {"boiling": {"$exists": true}}}"#).matches(&doc));
        assert!(f(r#"{"smiles": {"$contains": "CO"}}"#).matches(&doc));
        assert!(!f(r#"{"smiles": {"$contains": "co"}}"#).matches(&doc));
        assert!(f(r#"{"id": "a"}"#).matches(&doc));
        assert!(f(r#"{}"#).matches(&doc));
    }

    #[test]
    fn mixed_types_never_match_orderings() {
        let doc = Document::new("a", "C").with("mass", Value::Text("n/a".into()));
        assert!(!f(r#"{"mass": {"$gt": 1}}"#).matches(&doc));
        assert!(!f(r#"{"mass": {"$lte": 1}}"#).matches(&doc));
        assert!(f(r#"{"mass": {"$gt": "a"}}"#).matches(&doc));
    }

    #[test]
    fn rejects_bad_grammar() {
        for bad in [r#"{"a": {"$in": []}}"#, r#"{"": 1}"#, r#"{"$xor": []}"#, r#"{"a": {"$gt": [1]}}"#, "[1]"] {
            assert!(Filter::from_json(&serde_json::from_str(bad).unwrap()).is_err(), "{bad}");
        }
    }

    #[test]
    fn json_round_trip() {
        let src = f(r#"{"$or": [{"a": {"$in": [1, "x"]}}, {"$not": {"b": {"$exists": false}}}], "c": {"$lte": 2.5}}"#);
        let back: Filter = serde_json::from_value(serde_json::to_value(&src).unwrap()).unwrap();
        assert_eq!(back, src);
    }
}
