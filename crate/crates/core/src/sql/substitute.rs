//! Rewrites a resolved query by replacing column references or compared
//! literals, splicing the original text so formatting survives.

use thiserror::Error;

use super::analysis::{Clause, SqlStructure};
use super::ast::Span;
use super::render::{quote_ident, render_text_literal};
use crate::model::{ColumnRef, Literal};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Replacement {
    Column { from: ColumnRef, to: ColumnRef },
    Value { column: ColumnRef, from: Literal, to: Literal },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubstituteError {
    #[error("no binding of table `{table}` is visible where {column} is referenced")]
    NoBinding { table: String, column: ColumnRef },
    #[error("replacement target {0} does not occur in the query")]
    NotReferenced(String),
    #[error("replacements overlap in the query text")]
    Overlap,
}

/// Applies every replacement and returns the new SQL text.
pub fn substitute(structure: &SqlStructure, replacements: &[Replacement]) -> Result<String, SubstituteError> {
    let mut edits: Vec<(Span, String)> = Vec::new();
    for replacement in replacements {
        match replacement {
            Replacement::Column { from, to } => column_edits(structure, from, to, &mut edits)?,
            Replacement::Value { column, from, to } => {
                let mut hit = false;
                for site in structure.literal_sites.iter().filter(|s| &s.column == column && s.value.same_value(from)) {
                    hit = true;
                    if from == to {
                        continue;
                    }
                    let text = match to {
                        Literal::Text(v) => render_text_literal(v, site.quote.unwrap_or('\'')),
                        Literal::Number(n) => n.clone(),
                        Literal::Null => "NULL".to_string(),
                    };
                    edits.push((site.span, text));
                }
                if !hit {
                    return Err(SubstituteError::NotReferenced(format!("{column} = {from}")));
                }
            }
        }
    }
    apply(&structure.sql, edits)
}

fn column_edits(
    structure: &SqlStructure,
    from: &ColumnRef,
    to: &ColumnRef,
    edits: &mut Vec<(Span, String)>,
) -> Result<(), SubstituteError> {
    let sites: Vec<_> = structure
        .occurrences
        .iter()
        .filter(|o| &o.column == from && o.clause != Clause::JoinOn)
        .collect();
    if sites.is_empty() {
        return Err(SubstituteError::NotReferenced(from.to_string()));
    }
    if from == to {
        return Ok(());
    }
    for occ in sites {
        let column_text = quote_ident(&to.column, occ.quote);
        let same_table = to.table.eq_ignore_ascii_case(&from.table);
        if same_table {
            let binding = structure.binding(occ.binding);
            // an unqualified name must stay unambiguous among the scope's bindings
            let clash = !occ.qualified
                && structure.scopes[occ.scope].bindings.iter().any(|b| {
                    *b != occ.binding && binds_column(structure, *b, &to.column)
                });
            if clash {
                edits.push((occ.span, format!("{}.{column_text}", quote_ident(&binding.name, binding.name_quote))));
            } else {
                edits.push((occ.name_span, column_text));
            }
            continue;
        }
        let binding = structure
            .visible_bindings(occ.scope)
            .into_iter()
            .find(|b| b.table.as_deref().is_some_and(|t| t.eq_ignore_ascii_case(&to.table)))
            .ok_or_else(|| SubstituteError::NoBinding { table: to.table.clone(), column: from.clone() })?;
        edits.push((occ.span, format!("{}.{column_text}", quote_ident(&binding.name, binding.name_quote))));
    }
    Ok(())
}

fn binds_column(structure: &SqlStructure, binding: usize, column: &str) -> bool {
    let b = structure.binding(binding);
    match &b.table {
        Some(table) => structure
            .table_columns
            .get(&table.to_ascii_lowercase())
            .is_some_and(|cols| cols.iter().any(|c| c.eq_ignore_ascii_case(column))),
        None => b.derived_columns.iter().any(|c| c.eq_ignore_ascii_case(column)),
    }
}

fn apply(sql: &str, mut edits: Vec<(Span, String)>) -> Result<String, SubstituteError> {
    edits.sort_by_key(|(span, _)| (span.start, span.end));
    edits.dedup();
    for pair in edits.windows(2) {
        if pair[0].0.end > pair[1].0.start {
            return Err(SubstituteError::Overlap);
        }
    }
    let mut out = String::with_capacity(sql.len() + 16);
    let mut cursor = 0;
    for (span, text) in edits {
        out.push_str(&sql[cursor..span.start]);
        out.push_str(&text);
        cursor = span.end;
    }
    out.push_str(&sql[cursor..]);
    Ok(out)
}
