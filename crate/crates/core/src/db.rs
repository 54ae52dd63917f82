//! SQLite access: opening per-database files, executing queries under a
//! timeout and sampling column values.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rusqlite::types::ValueRef;
use rusqlite::Connection;
use thiserror::Error;

use crate::model::{ColumnRef, Literal};
use crate::sql::render::quote_ident;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum DbError {
    #[error("no database file for `{db_id}` under {}", dir.display())]
    NotFound { db_id: String, dir: PathBuf },
    #[error("cannot open {}: {source}", path.display())]
    Open { path: PathBuf, source: rusqlite::Error },
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("query failed: {0}")]
    Query(rusqlite::Error),
    #[error("query exceeded the {0:?} statement timeout")]
    Timeout(Duration),
    #[error("no column {0} in the database")]
    MissingColumn(ColumnRef),
}

/// One result cell. Integral reals compare equal to integers.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
}

impl Cell {
    fn rank(&self) -> u8 {
        match self {
            Cell::Null => 0,
            Cell::Integer(_) | Cell::Real(_) => 1,
            Cell::Text(_) => 2,
            Cell::Blob(_) => 3,
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Integer(i) => Some(*i as f64),
            Cell::Real(r) => Some(*r),
            _ => None,
        }
    }

    /// Total order used for multiset comparison.
    pub fn total_cmp(&self, other: &Cell) -> Ordering {
        match (self, other) {
            (Cell::Integer(a), Cell::Integer(b)) => a.cmp(b),
            (a, b) if a.rank() == 1 && b.rank() == 1 => a.as_f64().unwrap().total_cmp(&b.as_f64().unwrap()),
            (Cell::Text(a), Cell::Text(b)) => a.cmp(b),
            (Cell::Blob(a), Cell::Blob(b)) => a.cmp(b),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }

    pub fn same(&self, other: &Cell) -> bool {
        self.total_cmp(other) == Ordering::Equal
    }

    fn from_value(v: ValueRef<'_>) -> Cell {
        match v {
            ValueRef::Null => Cell::Null,
            ValueRef::Integer(i) => Cell::Integer(i),
            ValueRef::Real(r) => Cell::Real(r),
            ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => Cell::Blob(b.to_vec()),
        }
    }
}

/// Rows returned by a query.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<Vec<Cell>>,
}

fn row_cmp(a: &[Cell], b: &[Cell]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.total_cmp(y);
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

impl ResultTable {
    /// Sequence equality when `ordered`, multiset equality otherwise.
    pub fn matches(&self, other: &ResultTable, ordered: bool) -> bool {
        if self.rows.len() != other.rows.len() {
            return false;
        }
        if ordered {
            return self.rows.iter().zip(&other.rows).all(|(a, b)| row_cmp(a, b) == Ordering::Equal);
        }
        let mut a = self.rows.clone();
        let mut b = other.rows.clone();
        a.sort_by(|x, y| row_cmp(x, y));
        b.sort_by(|x, y| row_cmp(x, y));
        a.iter().zip(&b).all(|(x, y)| row_cmp(x, y) == Ordering::Equal)
    }
}

/// An open SQLite database.
pub struct Database {
    conn: Connection,
}

impl Database {
    /// Opens a database file, read-only.
    pub fn open_file(path: &Path) -> Result<Self, DbError> {
        if path.extension().is_some_and(|e| e == "sql") {
            let script = std::fs::read_to_string(path).map_err(|source| DbError::Io { path: path.to_path_buf(), source })?;
            return Self::from_script(&script).map_err(|e| match e {
                DbError::Query(source) => DbError::Open { path: path.to_path_buf(), source },
                other => other,
            });
        }
        let conn = Connection::open_with_flags(path, rusqlite::OpenFlags::SQLITE_OPEN_READ_ONLY)
            .map_err(|source| DbError::Open { path: path.to_path_buf(), source })?;
        Ok(Self { conn })
    }

    /// In-memory database built from a SQL script.
    pub fn from_script(script: &str) -> Result<Self, DbError> {
        let conn = Connection::open_in_memory().map_err(DbError::Query)?;
        conn.execute_batch(script).map_err(DbError::Query)?;
        Ok(Self { conn })
    }

    /// Locates `db_id` under `dir` using the Spider layout
    /// (`<dir>/<db_id>/<db_id>.sqlite`) or flat `.sqlite`/`.sql` files.
    pub fn locate(dir: &Path, db_id: &str) -> Result<PathBuf, DbError> {
        let candidates = [
            dir.join(db_id).join(format!("{db_id}.sqlite")),
            dir.join(format!("{db_id}.sqlite")),
            dir.join(db_id).join(format!("{db_id}.sql")),
            dir.join(format!("{db_id}.sql")),
        ];
        candidates
            .into_iter()
            .find(|p| p.is_file())
            .ok_or_else(|| DbError::NotFound { db_id: db_id.to_string(), dir: dir.to_path_buf() })
    }

    pub fn open(dir: &Path, db_id: &str) -> Result<Self, DbError> {
        Self::open_file(&Self::locate(dir, db_id)?)
    }

    /// Runs `sql`, interrupting it after `timeout`.
    pub fn execute(&self, sql: &str, timeout: Duration) -> Result<ResultTable, DbError> {
        let start = Instant::now();
        self.conn
            .progress_handler(1000, Some(move || start.elapsed() > timeout))
            .map_err(DbError::Query)?;
        let result = self.run(sql);
        let _ = self.conn.progress_handler(0, None::<fn() -> bool>);
        result.map_err(|e| match e {
            rusqlite::Error::SqliteFailure(f, _) if f.code == rusqlite::ErrorCode::OperationInterrupted => {
                DbError::Timeout(timeout)
            }
            other => DbError::Query(other),
        })
    }

    fn run(&self, sql: &str) -> Result<ResultTable, rusqlite::Error> {
        let mut stmt = self.conn.prepare(sql)?;
        let width = stmt.column_count();
        let mut rows = stmt.query([])?;
        let mut out = Vec::new();
        while let Some(row) = rows.next()? {
            let mut cells = Vec::with_capacity(width);
            for i in 0..width {
                cells.push(Cell::from_value(row.get_ref(i)?));
            }
            out.push(cells);
        }
        Ok(ResultTable { rows: out })
    }

    /// Distinct non-null values of `column`, sorted by their canonical text.
    pub fn distinct_values(&self, column: &ColumnRef) -> Result<Vec<Literal>, DbError> {
        let sql = format!(
            "SELECT DISTINCT {col} FROM {table} WHERE {col} IS NOT NULL",
            col = quote_ident(&column.column, Some('`')),
            table = quote_ident(&column.table, Some('`')),
        );
        let table = self.execute(&sql, DEFAULT_TIMEOUT).map_err(|e| match e {
            DbError::Query(e) if e.to_string().contains("no such") => DbError::MissingColumn(column.clone()),
            other => other,
        })?;
        let mut values: Vec<Literal> = table
            .rows
            .into_iter()
            .filter_map(|row| match row.into_iter().next() {
                Some(Cell::Integer(i)) => Some(Literal::Number(i.to_string())),
                Some(Cell::Real(r)) => Some(Literal::Number(format!("{r}"))),
                Some(Cell::Text(t)) if !t.trim().is_empty() => Some(Literal::Text(t)),
                _ => None,
            })
            .collect();
        values.sort_by_key(Literal::canonical);
        values.dedup_by(|a, b| a.same_value(b));
        Ok(values)
    }

    /// Up to `sample_k` distinct values of `column`, chosen under `seed` from
    /// the sorted value list and returned in sorted order.
    pub fn sample_values(&self, column: &ColumnRef, sample_k: usize, seed: u64) -> Result<Vec<Literal>, DbError> {
        let values = self.distinct_values(column)?;
        if values.len() <= sample_k {
            return Ok(values);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, values.len(), sample_k).into_vec();
        picked.sort_unstable();
        Ok(picked.into_iter().map(|i| values[i].clone()).collect())
    }
}

/// Opens `db_path` and samples values; the dataset-level entry point.
pub fn load_values(db_path: &Path, column: &ColumnRef, sample_k: usize, seed: u64) -> Result<Vec<Literal>, DbError> {
    Database::open_file(db_path)?.sample_values(column, sample_k, seed)
}
