//! Edge and feature file formats.
//!
//! Edge files are UTF-8 CSV (ratings as a pipe-separated field, `3|4|4`) or
//! JSONL (ratings as an integer array). A [`SchemaMap`] says which source
//! field holds the edge id, the ratings, the optional feature id, and each
//! attribute, so differently shaped metadata files load through one path.
//!
//! Feature matrices are stored as a little-endian binary file
//! (`QOEFEAT1`, row count `u64`, dimension `u64`, then `rows * dim` `f64`
//! values row-major) with a sidecar `.idx` file holding one feature id per
//! line, line `i` naming row `i`. A textual CSV (`feature_id,x0,x1,...`) is
//! accepted as well when the path ends in `.csv`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::ratings::{EdgeRecord, EdgeSet, FeatureStore, MAX_RATING, MIN_RATING};

const FEATURE_MAGIC: &[u8; 8] = b"QOEFEAT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeFormat {
    Csv,
    Jsonl,
}

impl EdgeFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(EdgeFormat::Csv),
            "jsonl" | "ndjson" => Some(EdgeFormat::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for EdgeFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(EdgeFormat::Csv),
            "jsonl" => Ok(EdgeFormat::Jsonl),
            other => Err(Error::Config(format!(
                "unknown edge format {other:?} (expected csv or jsonl)"
            ))),
        }
    }
}

impl fmt::Display for EdgeFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeFormat::Csv => "csv",
            EdgeFormat::Jsonl => "jsonl",
        })
    }
}

/// Maps source field names onto edge fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaMap {
    pub edge_id: String,
    pub ratings: String,
    pub feature_id: Option<String>,
    /// attribute key -> source field name
    pub attrs: BTreeMap<String, String>,
}

impl Default for SchemaMap {
    fn default() -> Self {
        Self::identity(["system_id", "system_type"])
    }
}

impl SchemaMap {
    /// Source fields carry the same names as the edge fields.
    pub fn identity<'a>(attr_keys: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            edge_id: "edge_id".into(),
            ratings: "ratings".into(),
            feature_id: Some("feature_id".into()),
            attrs: attr_keys
                .into_iter()
                .map(|k| (k.to_string(), k.to_string()))
                .collect(),
        }
    }

    pub fn attr_keys(&self) -> Vec<String> {
        self.attrs.keys().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based data row (header excluded).
    pub row: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    pub edges: EdgeSet,
    pub accepted: usize,
    pub rejected: Vec<RowError>,
}

/// Reads an edge file. In strict mode any rejected row fails the whole ingestion.
pub fn ingest_edges(
    path: &Path,
    format: EdgeFormat,
    schema: &SchemaMap,
    strict: bool,
) -> Result<IngestReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = match format {
        EdgeFormat::Jsonl => parse_jsonl_rows(&text, schema),
        EdgeFormat::Csv => parse_csv_rows(&text, schema, path)?,
    };

    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    let mut rejected = Vec::new();
    for (row, parsed) in rows {
        match parsed {
            Ok(edge) => {
                if seen.insert(edge.edge_id().to_string()) {
                    edges.push(edge);
                } else {
                    rejected.push(RowError {
                        row,
                        message: format!("duplicate edge_id {:?}", edge.edge_id()),
                    });
                }
            }
            Err(message) => rejected.push(RowError { row, message }),
        }
    }

    if strict && !rejected.is_empty() {
        let shown: Vec<String> = rejected.iter().take(5).map(|r| r.to_string()).collect();
        return Err(Error::Validation(format!(
            "{} of {} rows rejected in {}: {}",
            rejected.len(),
            rejected.len() + edges.len(),
            path.display(),
            shown.join("; ")
        )));
    }

    let accepted = edges.len();
    let edges = EdgeSet::new(edges, schema.attr_keys())?;
    Ok(IngestReport {
        edges,
        accepted,
        rejected,
    })
}

type ParsedRow = (usize, std::result::Result<EdgeRecord, String>);

fn parse_jsonl_rows(text: &str, schema: &SchemaMap) -> Vec<ParsedRow> {
    let mut out = Vec::new();
    let mut row = 0;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        let parsed = serde_json::from_str::<Value>(line)
            .map_err(|e| format!("malformed JSON: {e}"))
            .and_then(|v| jsonl_record(&v, schema, row));
        out.push((row, parsed));
    }
    out
}

fn json_scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn jsonl_record(
    v: &Value,
    schema: &SchemaMap,
    row: usize,
) -> std::result::Result<EdgeRecord, String> {
    let obj = v.as_object().ok_or("row is not a JSON object")?;
    let field = |name: &str| -> std::result::Result<String, String> {
        obj.get(name)
            .and_then(json_scalar)
            .ok_or_else(|| format!("missing or non-scalar field {name:?}"))
    };
    let edge_id = field(&schema.edge_id)?;
    let raw = obj
        .get(&schema.ratings)
        .and_then(Value::as_array)
        .ok_or_else(|| format!("missing rating array {:?}", schema.ratings))?;
    let ratings = raw
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let value = r
                .as_i64()
                .ok_or_else(|| format!("non-integer rating at row {row} (index {i}: {r})"))?;
            check_rating(value, row, i)
        })
        .collect::<std::result::Result<Vec<u8>, String>>()?;
    let feature_id = match &schema.feature_id {
        Some(name) => obj
            .get(name)
            .and_then(json_scalar)
            .filter(|s| !s.is_empty()),
        None => None,
    };
    let attrs = schema
        .attrs
        .iter()
        .map(|(key, src)| field(src).map(|v| (key.clone(), v)))
        .collect::<std::result::Result<BTreeMap<_, _>, _>>()?;
    EdgeRecord::new(edge_id, ratings, attrs, feature_id).map_err(|e| e.to_string())
}

fn check_rating(value: i64, row: usize, index: usize) -> std::result::Result<u8, String> {
    if (MIN_RATING as i64..=MAX_RATING as i64).contains(&value) {
        Ok(value as u8)
    } else {
        Err(format!(
            "rating out of range at row {row} (index {index}: {value})"
        ))
    }
}

fn parse_csv_rows(text: &str, schema: &SchemaMap, path: &Path) -> Result<Vec<ParsedRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::format(path, format!("unreadable CSV header: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let missing: Vec<&str> = [&schema.edge_id, &schema.ratings]
        .into_iter()
        .chain(schema.attrs.values())
        .filter(|n| col(n).is_none())
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(Error::format(
            path,
            format!("CSV header lacks columns {missing:?}"),
        ));
    }
    let id_col = col(&schema.edge_id).expect("checked");
    let ratings_col = col(&schema.ratings).expect("checked");
    let feature_col = schema.feature_id.as_deref().and_then(col);
    let attr_cols: Vec<(String, usize)> = schema
        .attrs
        .iter()
        .map(|(k, src)| (k.clone(), col(src).expect("checked")))
        .collect();

    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let parsed = record
            .map_err(|e| format!("malformed CSV: {e}"))
            .and_then(|rec| {
                let cell = |c: usize| {
                    rec.get(c)
                        .map(str::to_string)
                        .ok_or_else(|| format!("row has only {} fields", rec.len()))
                };
                let edge_id = cell(id_col)?;
                let ratings = cell(ratings_col)?
                    .split('|')
                    .enumerate()
                    .map(|(j, s)| {
                        let v: i64 = s.trim().parse().map_err(|_| {
                            format!("non-integer rating at row {row} (index {j}: {s:?})")
                        })?;
                        check_rating(v, row, j)
                    })
                    .collect::<std::result::Result<Vec<u8>, String>>()?;
                let feature_id = match feature_col {
                    Some(c) => Some(cell(c)?).filter(|s| !s.is_empty()),
                    None => None,
                };
                let attrs = attr_cols
                    .iter()
                    .map(|(k, c)| cell(*c).map(|v| (k.clone(), v)))
                    .collect::<std::result::Result<BTreeMap<_, _>, _>>()?;
                EdgeRecord::new(edge_id, ratings, attrs, feature_id).map_err(|e| e.to_string())
            });
        out.push((row, parsed));
    }
    Ok(out)
}

/// Serializes edges in the identity schema. Attribute columns follow the
/// edge set's schema order; the feature id field is written when any edge has one.
pub fn write_edges<W: Write>(edges: &EdgeSet, format: EdgeFormat, mut out: W) -> Result<()> {
    let with_feature = edges.iter().any(|e| e.feature_id().is_some());
    let io_err = |e: std::io::Error| Error::io(PathBuf::from("<edge writer>"), e);
    match format {
        EdgeFormat::Jsonl => {
            for e in edges {
                let mut line = String::from("{");
                line.push_str(&format!("\"edge_id\":{}", json_str(e.edge_id())));
                let ratings: Vec<String> = e.ratings().iter().map(|r| r.to_string()).collect();
                line.push_str(&format!(",\"ratings\":[{}]", ratings.join(",")));
                if let Some(f) = e.feature_id() {
                    line.push_str(&format!(",\"feature_id\":{}", json_str(f)));
                }
                for key in edges.schema() {
                    let value = e.attr(key).unwrap_or_default();
                    line.push_str(&format!(",{}:{}", json_str(key), json_str(value)));
                }
                line.push_str("}\n");
                out.write_all(line.as_bytes()).map_err(io_err)?;
            }
        }
        EdgeFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let mut header = vec!["edge_id".to_string(), "ratings".to_string()];
            if with_feature {
                header.push("feature_id".into());
            }
            header.extend(edges.schema().iter().cloned());
            w.write_record(&header).map_err(csv_err)?;
            for e in edges {
                let ratings: Vec<String> = e.ratings().iter().map(|r| r.to_string()).collect();
                let mut rec = vec![e.edge_id().to_string(), ratings.join("|")];
                if with_feature {
                    rec.push(e.feature_id().unwrap_or_default().to_string());
                }
                rec.extend(
                    edges
                        .schema()
                        .iter()
                        .map(|k| e.attr(k).unwrap_or_default().to_string()),
                );
                w.write_record(&rec).map_err(csv_err)?;
            }
            w.flush().map_err(io_err)?;
        }
    }
    Ok(())
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn csv_err(e: csv::Error) -> Error {
    Error::format("<csv writer>", e.to_string())
}

pub fn write_edges_file(edges: &EdgeSet, format: EdgeFormat, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_edges(edges, format, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Sidecar index path for a binary feature matrix.
pub fn feature_index_path(matrix: &Path) -> PathBuf {
    matrix.with_extension("idx")
}

pub fn encode_features(store: &FeatureStore) -> (Vec<u8>, String) {
    let mut bin = Vec::with_capacity(24 + store.len() * store.dim() * 8);
    bin.extend_from_slice(FEATURE_MAGIC);
    bin.extend_from_slice(&(store.len() as u64).to_le_bytes());
    bin.extend_from_slice(&(store.dim() as u64).to_le_bytes());
    for r in 0..store.len() {
        for v in store.row(r) {
            bin.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut idx = String::new();
    for id in store.ids() {
        idx.push_str(id);
        idx.push('\n');
    }
    (bin, idx)
}

pub fn write_features(store: &FeatureStore, path: &Path) -> Result<()> {
    let (bin, idx) = encode_features(store);
    fs::write(path, bin).map_err(|e| Error::io(path, e))?;
    let idx_path = feature_index_path(path);
    fs::write(&idx_path, idx).map_err(|e| Error::io(&idx_path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureStore> {
    if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        return read_features_csv(path);
    }
    let bin = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bin.len() < 24 || &bin[..8] != FEATURE_MAGIC {
        return Err(Error::format(path, "not a feature matrix (bad magic)"));
    }
    let rows = u64::from_le_bytes(bin[8..16].try_into().expect("8 bytes")) as usize;
    let dim = u64::from_le_bytes(bin[16..24].try_into().expect("8 bytes")) as usize;
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(24));
    if expected != Some(bin.len()) {
        return Err(Error::format(
            path,
            format!(
                "size mismatch: header says {rows}x{dim}, file has {} bytes",
                bin.len()
            ),
        ));
    }
    let idx_path = feature_index_path(path);
    let idx = fs::File::open(&idx_path).map_err(|e| Error::io(&idx_path, e))?;
    let ids = BufReader::new(idx)
        .lines()
        .collect::<std::io::Result<Vec<String>>>()
        .map_err(|e| Error::io(&idx_path, e))?;
    if ids.len() != rows {
        return Err(Error::format(
            &idx_path,
            format!("index lists {} ids for {rows} rows", ids.len()),
        ));
    }
    let mut store = FeatureStore::new(dim)?;
    let mut row = vec![0.0; dim];
    for (r, id) in ids.into_iter().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let off = 24 + (r * dim + j) * 8;
            *v = f64::from_le_bytes(bin[off..off + 8].try_into().expect("8 bytes"));
        }
        store.insert(id, &row)?;
    }
    Ok(store)
}

fn read_features_csv(path: &Path) -> Result<FeatureStore> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let dim = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .len()
        .saturating_sub(1);
    let mut store = FeatureStore::new(dim)?;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let values = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::format(path, format!("row {}: {e}", i + 1)))?;
        store.insert(id, &values)?;
    }
    Ok(store)
}
