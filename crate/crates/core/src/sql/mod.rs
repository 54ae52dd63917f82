//! SQL parsing, resolution, rendering and rewriting for the SQLite subset
//! used by Spider- and BIRD-style corpora.

pub mod analysis;
pub mod ast;
pub mod lexer;
pub mod parser;
pub mod render;
pub mod sample;
pub mod substitute;

use thiserror::Error;

pub use analysis::{parse_sql, Clause, CmpOp, ColumnValuePair, SqlStructure};
pub use parser::parse_query;
pub use render::{render_canonical, render_query};
pub use sample::{sample_targets, sample_targets_excluding, UnqualifiedForAu};
pub use substitute::{substitute, Replacement, SubstituteError};

use crate::model::SchemaCatalog;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SqlError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("cannot resolve `{token}` at byte {position}: {reason}")]
    Resolution { token: String, position: usize, reason: String },
}

impl SqlError {
    pub(crate) fn syntax(position: usize, message: impl Into<String>) -> Self {
        SqlError::Syntax { position, message: message.into() }
    }

    pub(crate) fn resolution(token: impl Into<String>, position: usize, reason: &str) -> Self {
        SqlError::Resolution { token: token.into(), position, reason: reason.to_string() }
    }
}

/// Canonical text of `sql` under `schema`; equal for queries that differ only
/// in aliases, keyword case, whitespace, quoting or literal spelling.
pub fn canonical_sql(sql: &str, schema: &SchemaCatalog) -> Result<String, SqlError> {
    let structure = parse_sql(sql, schema)?;
    Ok(render_canonical(&structure.query))
}
