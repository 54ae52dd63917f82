//! Readers for Spider/BIRD-style inputs and writers for generated records.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{AuInstance, ColumnDef, ForeignKey, ModelError, SchemaCatalog, SemanticType, SourcePair, TableDef};
use crate::sql::parse_sql;

/// Version string stamped into every record.
pub const GENERATOR_VERSION: &str = concat!("aubench ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot access {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: malformed input: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("schema entry {index} ({db_id}): {message}")]
    SchemaEntry { index: usize, db_id: String, message: String },
    #[error("duplicate db_id `{0}`")]
    DuplicateDbId(String),
    #[error("pair record {index}: {message}")]
    PairRecord { index: usize, message: String },
    #[error("unknown db_id(s): {}", .0.join(", "))]
    UnknownDbIds(Vec<String>),
    #[error("{}:{line}: {source}", path.display())]
    Record { path: PathBuf, line: usize, source: serde_json::Error },
}

fn read_json(path: &Path) -> Result<Value, IoError> {
    let file = File::open(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}

#[derive(Deserialize)]
struct RawSchema {
    db_id: String,
    #[serde(default)]
    table_names_original: Option<Vec<String>>,
    #[serde(default)]
    table_names: Vec<String>,
    #[serde(default)]
    column_names_original: Option<Vec<(i64, String)>>,
    #[serde(default)]
    column_names: Vec<(i64, String)>,
    #[serde(default)]
    column_types: Vec<String>,
    #[serde(default)]
    foreign_keys: Vec<(usize, usize)>,
}

/// Loads a Spider-format `tables.json`.
pub fn load_schemas(path: &Path) -> Result<Vec<SchemaCatalog>, IoError> {
    let Value::Array(entries) = read_json(path)? else {
        return Err(IoError::SchemaEntry { index: 0, db_id: String::new(), message: "expected a top-level array".into() });
    };
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(entries.len());
    for (index, entry) in entries.into_iter().enumerate() {
        let db_hint = entry.get("db_id").and_then(Value::as_str).unwrap_or("?").to_string();
        let raw: RawSchema = serde_json::from_value(entry)
            .map_err(|e| IoError::SchemaEntry { index, db_id: db_hint.clone(), message: e.to_string() })?;
        if !seen.insert(raw.db_id.clone()) {
            return Err(IoError::DuplicateDbId(raw.db_id));
        }
        let catalog = schema_from_raw(raw)
            .map_err(|(db_id, message)| IoError::SchemaEntry { index, db_id, message })?;
        out.push(catalog);
    }
    Ok(out)
}

fn schema_from_raw(raw: RawSchema) -> Result<SchemaCatalog, (String, String)> {
    let db_id = raw.db_id.clone();
    let fail = |m: String| (db_id.clone(), m);
    let table_names = raw.table_names_original.unwrap_or(raw.table_names);
    let columns = raw.column_names_original.unwrap_or(raw.column_names);
    if !raw.column_types.is_empty() && raw.column_types.len() != columns.len() {
        return Err(fail(format!("{} column types for {} columns", raw.column_types.len(), columns.len())));
    }
    let mut tables: Vec<TableDef> = table_names.iter().map(|n| TableDef::new(n.clone(), Vec::new())).collect();
    // index of each global column inside its table, for foreign keys
    let mut locate: Vec<Option<(usize, usize)>> = Vec::with_capacity(columns.len());
    for (i, (table_idx, name)) in columns.iter().enumerate() {
        if *table_idx < 0 {
            locate.push(None);
            continue;
        }
        let t = *table_idx as usize;
        let table = tables
            .get_mut(t)
            .ok_or_else(|| fail(format!("column `{name}` points at missing table {t}")))?;
        let ty = raw.column_types.get(i).map(|s| SemanticType::from_spider(s)).unwrap_or(SemanticType::Other);
        locate.push(Some((t, table.columns.len())));
        table.columns.push(ColumnDef::new(name.clone(), ty));
    }
    for (local, remote) in raw.foreign_keys {
        let (Some(Some((lt, lc))), Some(Some((rt, rc)))) = (locate.get(local), locate.get(remote)) else {
            return Err(fail(format!("foreign key ({local}, {remote}) out of range")));
        };
        let fk = ForeignKey {
            column: tables[*lt].columns[*lc].name.clone(),
            remote_table: tables[*rt].name.clone(),
            remote_column: tables[*rt].columns[*rc].name.clone(),
        };
        tables[*lt].foreign_keys.push(fk);
    }
    SchemaCatalog::new(raw.db_id, tables).map_err(|e: ModelError| fail(e.to_string()))
}

/// Pairs kept by [`load_pairs`] plus the records dropped for unparseable SQL.
#[derive(Debug, Clone, Default)]
pub struct PairLoad {
    pub pairs: Vec<SourcePair>,
    /// Index in the input file of each kept pair.
    pub source_indices: Vec<usize>,
    pub dropped: Vec<(usize, String)>,
}

impl PairLoad {
    pub fn drop_count(&self) -> usize {
        self.dropped.len()
    }
}

/// Loads question/SQL records (`query`, `sql` or `SQL` as the SQL field).
pub fn load_pairs(path: &Path, catalogs: &[SchemaCatalog]) -> Result<PairLoad, IoError> {
    let Value::Array(records) = read_json(path)? else {
        return Err(IoError::PairRecord { index: 0, message: "expected a top-level array".into() });
    };
    let by_id: BTreeMap<&str, &SchemaCatalog> = catalogs.iter().map(|c| (c.db_id(), c)).collect();
    let mut parsed = Vec::with_capacity(records.len());
    let mut unknown = BTreeSet::new();
    for (index, record) in records.into_iter().enumerate() {
        let Value::Object(mut fields) = record else {
            return Err(IoError::PairRecord { index, message: "expected an object".into() });
        };
        let question = take_text(&mut fields, &["question"]);
        let sql = take_text(&mut fields, &["query", "sql", "SQL"]);
        let db_id = take_text(&mut fields, &["db_id"]);
        let (Some(question), Some(sql), Some(db_id)) = (question, sql, db_id) else {
            return Err(IoError::PairRecord { index, message: "missing question, sql or db_id".into() });
        };
        if !by_id.contains_key(db_id.as_str()) {
            unknown.insert(db_id.clone());
        }
        let mut pair = SourcePair::new(question, sql, db_id);
        pair.passthrough = fields.into_iter().collect();
        parsed.push((index, pair));
    }
    if !unknown.is_empty() {
        return Err(IoError::UnknownDbIds(unknown.into_iter().collect()));
    }
    let mut load = PairLoad::default();
    for (index, pair) in parsed {
        match parse_sql(&pair.sql, by_id[pair.db_id.as_str()]) {
            Ok(_) => {
                load.pairs.push(pair);
                load.source_indices.push(index);
            }
            Err(e) => {
                log::warn!("dropping pair {index}: {e}");
                load.dropped.push((index, e.to_string()));
            }
        }
    }
    Ok(load)
}

fn take_text(fields: &mut serde_json::Map<String, Value>, keys: &[&str]) -> Option<String> {
    for key in keys {
        if let Some(Value::String(_)) = fields.get(*key) {
            if let Some(Value::String(s)) = fields.remove(*key) {
                return Some(s);
            }
        }
    }
    None
}

/// Reproducibility data attached to every emitted instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_index: usize,
    pub generator_version: String,
    pub seed: u64,
    /// Request hashes of every gateway call that produced the instance.
    pub transcripts: Vec<String>,
}

/// Flat on-disk form of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    #[serde(flatten)]
    pub instance: AuInstance,
    pub provenance: Provenance,
}

pub fn write_records<T: Serialize>(records: &[T], path: &Path) -> Result<usize, IoError> {
    let io_err = |source| IoError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
        w.write_all(line.as_bytes()).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(records.len())
}

pub fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = File::open(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| IoError::Record { path: path.to_path_buf(), line: i + 1, source })?;
        out.push(rec);
    }
    Ok(out)
}

/// Writes one record per line; returns the count written.
pub fn write_instances(instances: &[InstanceRecord], path: &Path) -> Result<usize, IoError> {
    write_records(instances, path)
}

pub fn read_instances(path: &Path) -> Result<Vec<InstanceRecord>, IoError> {
    read_records(path)
}

/// Writes a pretty-printed JSON document.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let io_err = |source| IoError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err)
}
