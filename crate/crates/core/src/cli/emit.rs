//! CSV and JSON-lines writers for flat records.

use std::io::Write;
use std::path::Path;

use super::spec::Format;
use crate::error::{Error, Result};

/// One cell of an output record.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Float(f64),
    MaybeFloat(Option<f64>),
    Int(u64),
    Bool(bool),
    MaybeBool(Option<bool>),
    Text(String),
    MaybeText(Option<String>),
}

/// A flat record with a fixed column order.
pub trait Record {
    fn header() -> &'static [&'static str];
    fn values(&self) -> Vec<Value>;
}

/// Seventeen significant digits, enough to read back the same `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Float(x) => format_float(*x),
        Value::MaybeFloat(x) => x.map(format_float).unwrap_or_default(),
        Value::Int(i) => i.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::MaybeBool(b) => b.map(|b| b.to_string()).unwrap_or_default(),
        Value::Text(s) => s.clone(),
        Value::MaybeText(s) => s.clone().unwrap_or_default(),
    }
}

fn json_value(v: &Value) -> serde_json::Value {
    use serde_json::Value as J;
    let float = |x: f64| serde_json::Number::from_f64(x).map_or(J::Null, J::Number);
    match v {
        Value::Float(x) => float(*x),
        Value::MaybeFloat(x) => x.map_or(J::Null, float),
        Value::Int(i) => J::from(*i),
        Value::Bool(b) => J::Bool(*b),
        Value::MaybeBool(b) => b.map_or(J::Null, J::Bool),
        Value::Text(s) => J::String(s.clone()),
        Value::MaybeText(s) => s.clone().map_or(J::Null, J::String),
    }
}

/// Render `records` in `format`.
pub fn render<R: Record>(records: &[R], format: Format) -> Result<Vec<u8>> {
    let header = R::header();
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let err = |e: csv::Error| Error::param("csv", e.to_string());
            w.write_record(header).map_err(err)?;
            for r in records {
                w.write_record(r.values().iter().map(csv_cell)).map_err(err)?;
            }
            w.into_inner().map_err(|e| Error::param("csv", e.to_string()))
        }
        Format::Json => {
            let mut out = Vec::new();
            for r in records {
                // Fields in header order.
                out.push(b'{');
                for (i, (name, v)) in header.iter().zip(r.values()).enumerate() {
                    if i > 0 {
                        out.push(b',');
                    }
                    let key = serde_json::to_string(name).expect("string key");
                    out.extend_from_slice(key.as_bytes());
                    out.push(b':');
                    out.extend_from_slice(json_value(&v).to_string().as_bytes());
                }
                out.extend_from_slice(b"}\n");
            }
            Ok(out)
        }
    }
}

/// Write rendered bytes to `path`, or to stdout when `path` is `None`.
pub fn write_payload(bytes: &[u8], path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

/// Render and write in one go.
pub fn emit<R: Record>(records: &[R], format: Format, path: Option<&Path>) -> Result<()> {
    write_payload(&render(records, format)?, path)
}

/// Rows of a CSV or JSON-lines table, keyed by column name. JSON numbers
/// are kept as their text; `null` becomes an empty cell.
pub fn read_table(path: &Path) -> Result<Vec<std::collections::BTreeMap<String, String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    if text.trim_start().starts_with('{') {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let obj: serde_json::Map<String, serde_json::Value> =
                serde_json::from_str(line).map_err(|e| parse_err(i + 1, e.to_string()))?;
            rows.push(
                obj.into_iter()
                    .map(|(k, v)| {
                        let cell = match v {
                            serde_json::Value::Null => String::new(),
                            serde_json::Value::String(s) => s,
                            other => other.to_string(),
                        };
                        (k, cell)
                    })
                    .collect(),
            );
        }
        return Ok(rows);
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(i + 2, e.to_string()))?;
        rows.push(header.iter().map(String::from).zip(rec.iter().map(String::from)).collect());
    }
    Ok(rows)
}
