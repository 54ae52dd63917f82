//! Name resolution and extraction of referenced columns and
//! column-value predicates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::parser::parse_query;
use super::SqlError;
use crate::model::{ColumnRef, Literal, SchemaCatalog};

/// Clause a column token occurs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Clause {
    Select,
    Where,
    GroupBy,
    Having,
    OrderBy,
    JoinOn,
    Limit,
}

/// Comparison operator of a column-value predicate, oriented with the
/// column on the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Is,
    IsNot,
    Like,
    NotLike,
    Glob,
    NotGlob,
    In,
    NotIn,
    Between,
    NotBetween,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::NotEq => "!=",
            CmpOp::Lt => "<",
            CmpOp::LtEq => "<=",
            CmpOp::Gt => ">",
            CmpOp::GtEq => ">=",
            CmpOp::Is => "IS",
            CmpOp::IsNot => "IS NOT",
            CmpOp::Like => "LIKE",
            CmpOp::NotLike => "NOT LIKE",
            CmpOp::Glob => "GLOB",
            CmpOp::NotGlob => "NOT GLOB",
            CmpOp::In => "IN",
            CmpOp::NotIn => "NOT IN",
            CmpOp::Between => "BETWEEN",
            CmpOp::NotBetween => "NOT BETWEEN",
        }
    }

    /// Operator with its operands swapped (`5 < x` is `x > 5`).
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::LtEq => CmpOp::GtEq,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::GtEq => CmpOp::LtEq,
            other => other,
        }
    }

    /// Equality-style operators, whose value reads naturally as a schema value.
    pub fn is_equality(self) -> bool {
        matches!(self, CmpOp::Eq | CmpOp::NotEq | CmpOp::Is | CmpOp::IsNot | CmpOp::In | CmpOp::NotIn)
    }

    pub fn is_pattern(self) -> bool {
        matches!(self, CmpOp::Like | CmpOp::NotLike | CmpOp::Glob | CmpOp::NotGlob)
    }

    fn from_binary(op: BinaryOp) -> Option<CmpOp> {
        Some(match op {
            BinaryOp::Eq => CmpOp::Eq,
            BinaryOp::NotEq => CmpOp::NotEq,
            BinaryOp::Lt => CmpOp::Lt,
            BinaryOp::LtEq => CmpOp::LtEq,
            BinaryOp::Gt => CmpOp::Gt,
            BinaryOp::GtEq => CmpOp::GtEq,
            BinaryOp::Is => CmpOp::Is,
            BinaryOp::IsNot => CmpOp::IsNot,
            _ => return None,
        })
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnValuePair {
    pub column: ColumnRef,
    pub value: Literal,
    pub op: CmpOp,
}

/// One FROM-clause binding (table or derived table).
#[derive(Debug, Clone, PartialEq)]
pub struct BindingInfo {
    pub id: usize,
    /// Name visible to column qualifiers: the alias, else the table name.
    pub name: String,
    pub name_quote: Option<char>,
    /// Schema table for table bindings.
    pub table: Option<String>,
    /// Output columns for derived bindings.
    pub derived_columns: Vec<String>,
    pub scope: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScopeInfo {
    pub parent: Option<usize>,
    pub bindings: Vec<usize>,
}

/// A column token resolved to a schema column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnOccurrence {
    pub column: ColumnRef,
    /// Whole reference, qualifier included.
    pub span: Span,
    pub name_span: Span,
    pub qualified: bool,
    pub quote: Option<char>,
    pub clause: Clause,
    pub scope: usize,
    pub binding: usize,
}

/// A literal compared against a schema column.
#[derive(Debug, Clone, PartialEq)]
pub struct LiteralSite {
    pub column: ColumnRef,
    pub value: Literal,
    pub op: CmpOp,
    pub span: Span,
    pub quote: Option<char>,
}

/// Parsed and resolved query.
#[derive(Debug, Clone, PartialEq)]
pub struct SqlStructure {
    pub sql: String,
    pub query: Query,
    /// Eligible target columns, ordered by first occurrence in the text.
    pub referenced_columns: Vec<ColumnRef>,
    pub column_value_pairs: Vec<ColumnValuePair>,
    pub occurrences: Vec<ColumnOccurrence>,
    pub literal_sites: Vec<LiteralSite>,
    pub bindings: Vec<BindingInfo>,
    pub scopes: Vec<ScopeInfo>,
    /// Column names of every bound schema table, keyed by lowercased table name.
    pub table_columns: BTreeMap<String, Vec<String>>,
}

impl SqlStructure {
    pub fn binding(&self, id: usize) -> &BindingInfo {
        &self.bindings[id - 1]
    }

    /// Bindings visible from `scope`, innermost first.
    pub fn visible_bindings(&self, scope: usize) -> Vec<&BindingInfo> {
        let mut out = Vec::new();
        let mut cur = Some(scope);
        while let Some(s) = cur {
            out.extend(self.scopes[s].bindings.iter().map(|b| self.binding(*b)));
            cur = self.scopes[s].parent;
        }
        out
    }

    /// Schema tables bound in the scopes where `column` is referenced.
    pub fn tables_in_scope_of(&self, column: &ColumnRef) -> BTreeSet<String> {
        self.occurrences
            .iter()
            .filter(|o| &o.column == column && o.clause != Clause::JoinOn)
            .flat_map(|o| self.visible_bindings(o.scope))
            .filter_map(|b| b.table.clone())
            .collect()
    }

    pub fn pairs_for<'a>(&'a self, column: &'a ColumnRef) -> impl Iterator<Item = &'a ColumnValuePair> + 'a {
        self.column_value_pairs.iter().filter(move |p| &p.column == column)
    }

    /// Whether the outermost query carries an ORDER BY.
    pub fn is_ordered(&self) -> bool {
        !self.query.order_by.is_empty()
    }
}

/// Parses and resolves `sql` against `schema`.
pub fn parse_sql(sql: &str, schema: &SchemaCatalog) -> Result<SqlStructure, SqlError> {
    let mut query = parse_query(sql)?;
    let mut resolver = Resolver { schema, bindings: Vec::new(), scopes: Vec::new(), occurrences: Vec::new(), sites: Vec::new() };
    resolver.query(&mut query, None)?;
    let Resolver { bindings, scopes, mut occurrences, mut sites, .. } = resolver;
    occurrences.sort_by_key(|o| (o.span.start, o.span.end));
    sites.sort_by_key(|s| s.span.start);

    let mut referenced_columns: Vec<ColumnRef> = Vec::new();
    for occ in &occurrences {
        if occ.clause != Clause::JoinOn && !referenced_columns.contains(&occ.column) {
            referenced_columns.push(occ.column.clone());
        }
    }
    let mut column_value_pairs: Vec<ColumnValuePair> = Vec::new();
    for site in &sites {
        let pair = ColumnValuePair { column: site.column.clone(), value: site.value.clone(), op: site.op };
        if !column_value_pairs
            .iter()
            .any(|p| p.column == pair.column && p.op == pair.op && p.value.same_value(&pair.value))
        {
            column_value_pairs.push(pair);
        }
    }
    let table_columns = bindings
        .iter()
        .filter_map(|b| b.table.as_deref())
        .filter_map(|t| schema.table(t))
        .map(|t| (t.name.to_ascii_lowercase(), t.columns.iter().map(|c| c.name.clone()).collect()))
        .collect();
    Ok(SqlStructure {
        sql: sql.to_string(),
        query,
        referenced_columns,
        column_value_pairs,
        occurrences,
        literal_sites: sites,
        bindings,
        scopes,
        table_columns,
    })
}

struct Resolver<'s> {
    schema: &'s SchemaCatalog,
    bindings: Vec<BindingInfo>,
    scopes: Vec<ScopeInfo>,
    occurrences: Vec<ColumnOccurrence>,
    sites: Vec<LiteralSite>,
}

/// Result-column aliases of the select core being resolved.
#[derive(Clone, Copy)]
struct AliasCtx<'a> {
    aliases: &'a [(String, usize)],
    enabled: bool,
    first: bool,
}

impl AliasCtx<'_> {
    const NONE: AliasCtx<'static> = AliasCtx { aliases: &[], enabled: false, first: false };

    fn find(&self, name: &str) -> Option<usize> {
        if !self.enabled {
            return None;
        }
        self.aliases.iter().find(|(a, _)| a.eq_ignore_ascii_case(name)).map(|(_, i)| *i)
    }
}

impl<'s> Resolver<'s> {
    fn new_scope(&mut self, parent: Option<usize>) -> usize {
        self.scopes.push(ScopeInfo { parent, bindings: Vec::new() });
        self.scopes.len() - 1
    }

    fn query(&mut self, query: &mut Query, parent: Option<usize>) -> Result<usize, SqlError> {
        let (scope, aliases) = self.set_expr(&mut query.body, parent)?;
        let ctx = AliasCtx { aliases: &aliases, enabled: true, first: true };
        for item in &mut query.order_by {
            self.expr(&mut item.expr, scope, Clause::OrderBy, ctx)?;
        }
        if let Some(limit) = &mut query.limit {
            self.expr(&mut limit.count, scope, Clause::Limit, AliasCtx::NONE)?;
            if let Some(o) = &mut limit.offset {
                self.expr(o, scope, Clause::Limit, AliasCtx::NONE)?;
            }
        }
        Ok(scope)
    }

    /// Returns the scope and aliases of the leftmost core.
    fn set_expr(&mut self, body: &mut SetExpr, parent: Option<usize>) -> Result<(usize, Vec<(String, usize)>), SqlError> {
        match body {
            SetExpr::Select(select) => self.select(select, parent),
            SetExpr::Compound { left, right, .. } => {
                let first = self.set_expr(left, parent)?;
                self.set_expr(right, parent)?;
                Ok(first)
            }
        }
    }

    fn select(&mut self, select: &mut Select, parent: Option<usize>) -> Result<(usize, Vec<(String, usize)>), SqlError> {
        let scope = self.new_scope(parent);
        select.scope = Some(scope);
        for item in &mut select.from {
            self.visit_from_item(item, scope, parent)?;
        }
        let mut aliases = Vec::new();
        for (i, item) in select.projection.iter_mut().enumerate() {
            match item {
                SelectItem::Expr { expr, alias } => {
                    self.expr(expr, scope, Clause::Select, AliasCtx::NONE)?;
                    if let Some(a) = alias {
                        aliases.push((a.name.clone(), i));
                    }
                }
                SelectItem::QualifiedWildcard(t) => {
                    if self.find_binding(scope, &t.name).is_none() {
                        return Err(SqlError::resolution(format!("{}.*", t.name), t.span.start, "unknown table"));
                    }
                }
                SelectItem::Wildcard(_) => {}
            }
        }
        let ctx = AliasCtx { aliases: &aliases, enabled: true, first: false };
        if let Some(w) = &mut select.selection {
            self.expr(w, scope, Clause::Where, ctx)?;
        }
        for g in &mut select.group_by {
            self.expr(g, scope, Clause::GroupBy, ctx)?;
        }
        if let Some(h) = &mut select.having {
            self.expr(h, scope, Clause::Having, ctx)?;
        }
        Ok((scope, aliases))
    }

    fn visit_from_item(&mut self, item: &mut FromItem, scope: usize, outer: Option<usize>) -> Result<(), SqlError> {
        self.table_factor(&mut item.factor, scope, outer)?;
        for join in &mut item.joins {
            self.table_factor(&mut join.factor, scope, outer)?;
            match &mut join.constraint {
                JoinConstraint::On(e) => self.expr(e, scope, Clause::JoinOn, AliasCtx::NONE)?,
                JoinConstraint::Using(cols) => {
                    for c in cols.iter() {
                        let known = self.scopes[scope].bindings.iter().any(|b| self.binding_has(*b, &c.name));
                        if !known {
                            return Err(SqlError::resolution(c.name.clone(), c.span.start, "unknown USING column"));
                        }
                    }
                }
                JoinConstraint::None => {}
            }
        }
        Ok(())
    }

    fn add_binding(&mut self, scope: usize, binding: BindingInfo) -> usize {
        let id = self.bindings.len() + 1;
        self.bindings.push(BindingInfo { id, ..binding });
        self.scopes[scope].bindings.push(id);
        id
    }

    fn table_factor(&mut self, factor: &mut TableFactor, scope: usize, outer: Option<usize>) -> Result<(), SqlError> {
        match factor {
            TableFactor::Table { name, alias, binding } => {
                let table = self
                    .schema
                    .table(&name.name)
                    .ok_or_else(|| SqlError::resolution(name.name.clone(), name.span.start, "unknown table"))?;
                let (visible, quote) = match alias {
                    Some(a) => (a.name.clone(), a.quote),
                    None => (name.name.clone(), name.quote),
                };
                let info = BindingInfo {
                    id: 0,
                    name: visible,
                    name_quote: quote.filter(|q| *q != '\''),
                    table: Some(table.name.clone()),
                    derived_columns: Vec::new(),
                    scope,
                };
                *binding = Some(self.add_binding(scope, info));
            }
            TableFactor::Derived { subquery, alias, binding } => {
                let inner_scope = self.query(subquery, outer)?;
                let derived_columns = self.output_columns(subquery, inner_scope);
                let (visible, quote) = match alias {
                    Some(a) => (a.name.clone(), a.quote),
                    None => (String::new(), None),
                };
                let info = BindingInfo { id: 0, name: visible, name_quote: quote, table: None, derived_columns, scope };
                *binding = Some(self.add_binding(scope, info));
            }
            TableFactor::Nested(inner) => self.visit_from_item(inner, scope, outer)?,
        }
        Ok(())
    }

    fn output_columns(&self, query: &Query, scope: usize) -> Vec<String> {
        let first = query.body.first_select();
        let mut out = Vec::new();
        for item in &first.projection {
            match item {
                SelectItem::Expr { alias: Some(a), .. } => out.push(a.name.clone()),
                SelectItem::Expr { expr: Expr::Column { name, .. }, .. } => out.push(name.name.clone()),
                SelectItem::Expr { expr, .. } => out.push(super::render::render_expr(expr)),
                SelectItem::Wildcard(_) => {
                    for b in &self.scopes[scope].bindings {
                        out.extend(self.binding_columns(*b));
                    }
                }
                SelectItem::QualifiedWildcard(t) => {
                    if let Some(b) = self.find_binding(scope, &t.name) {
                        out.extend(self.binding_columns(b));
                    }
                }
            }
        }
        out
    }

    fn binding_columns(&self, id: usize) -> Vec<String> {
        let b = &self.bindings[id - 1];
        match &b.table {
            Some(t) => self
                .schema
                .table(t)
                .map(|t| t.columns.iter().map(|c| c.name.clone()).collect())
                .unwrap_or_default(),
            None => b.derived_columns.clone(),
        }
    }

    fn binding_has(&self, id: usize, column: &str) -> bool {
        let b = &self.bindings[id - 1];
        match &b.table {
            Some(t) => self.schema.table(t).is_some_and(|t| t.column(column).is_some()),
            None => b.derived_columns.iter().any(|c| c.eq_ignore_ascii_case(column)),
        }
    }

    /// Binding named `name` in `scope` or an enclosing scope.
    fn find_binding(&self, scope: usize, name: &str) -> Option<usize> {
        let mut cur = Some(scope);
        while let Some(s) = cur {
            let bindings = &self.scopes[s].bindings;
            if let Some(b) = bindings.iter().find(|b| self.bindings[**b - 1].name.eq_ignore_ascii_case(name)) {
                return Some(*b);
            }
            // a table may still be named by its own name when aliased
            if let Some(b) = bindings
                .iter()
                .find(|b| self.bindings[**b - 1].table.as_deref().is_some_and(|t| t.eq_ignore_ascii_case(name)))
            {
                return Some(*b);
            }
            cur = self.scopes[s].parent;
        }
        None
    }

    fn target_for(&self, binding: usize, column: &str) -> ColumnTarget {
        let b = &self.bindings[binding - 1];
        match &b.table {
            Some(t) => {
                let column = self.schema.canonical_ref(t, column).expect("binding_has checked the column");
                ColumnTarget::Schema { binding, column }
            }
            None => {
                let name = b
                    .derived_columns
                    .iter()
                    .find(|c| c.eq_ignore_ascii_case(column))
                    .cloned()
                    .unwrap_or_else(|| column.to_string());
                ColumnTarget::Derived { binding, name }
            }
        }
    }

    fn lookup(&self, scope: usize, qualifier: Option<&Ident>, name: &Ident, ctx: AliasCtx<'_>) -> Option<ColumnTarget> {
        if let Some(q) = qualifier {
            let b = self.find_binding(scope, &q.name)?;
            return self.binding_has(b, &name.name).then(|| self.target_for(b, &name.name));
        }
        if ctx.first {
            if let Some(index) = ctx.find(&name.name) {
                return Some(ColumnTarget::SelectAlias { index });
            }
        }
        let mut cur = Some(scope);
        let mut innermost = true;
        while let Some(s) = cur {
            if let Some(b) = self.scopes[s].bindings.iter().find(|b| self.binding_has(**b, &name.name)) {
                return Some(self.target_for(*b, &name.name));
            }
            if innermost {
                if let Some(index) = ctx.find(&name.name) {
                    return Some(ColumnTarget::SelectAlias { index });
                }
                innermost = false;
            }
            cur = self.scopes[s].parent;
        }
        None
    }

    fn expr(&mut self, expr: &mut Expr, scope: usize, clause: Clause, ctx: AliasCtx<'_>) -> Result<(), SqlError> {
        match expr {
            Expr::Column { qualifier, name, span, resolved } => {
                match self.lookup(scope, qualifier.as_ref(), name, ctx) {
                    Some(target) => {
                        if let ColumnTarget::Schema { binding, column } = &target {
                            self.occurrences.push(ColumnOccurrence {
                                column: column.clone(),
                                span: *span,
                                name_span: name.span,
                                qualified: qualifier.is_some(),
                                quote: name.quote.filter(|q| *q != '\''),
                                clause,
                                scope,
                                binding: *binding,
                            });
                        }
                        *resolved = Some(target);
                    }
                    None if qualifier.is_none() && matches!(name.quote, Some('"') | Some('\'')) => {
                        // SQLite reads an unresolvable "word" as a string
                        let value = LiteralValue::Text { value: name.name.clone(), quote: '"' };
                        *expr = Expr::Literal { value, span: *span };
                    }
                    None => {
                        let token = match qualifier {
                            Some(q) => format!("{}.{}", q.name, name.name),
                            None => name.name.clone(),
                        };
                        return Err(SqlError::resolution(token, span.start, "no such column"));
                    }
                }
            }
            Expr::Literal { .. } => {}
            Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } | Expr::Cast { expr, .. } | Expr::Collate { expr, .. } => {
                self.expr(expr, scope, clause, ctx)?
            }
            Expr::Binary { op, left, right, .. } => {
                self.expr(left, scope, clause, ctx)?;
                self.expr(right, scope, clause, ctx)?;
                if let Some(cmp) = CmpOp::from_binary(*op) {
                    if let (Some(col), Some((lit, span, quote))) = (schema_column(left), literal_of(right)) {
                        self.site(clause, col, lit, cmp, span, quote);
                    } else if let (Some((lit, span, quote)), Some(col)) = (literal_of(left), schema_column(right)) {
                        self.site(clause, col, lit, cmp.flipped(), span, quote);
                    }
                }
            }
            Expr::Like { negated, glob, expr: inner, pattern, escape, .. } => {
                self.expr(inner, scope, clause, ctx)?;
                self.expr(pattern, scope, clause, ctx)?;
                if let Some(e) = escape {
                    self.expr(e, scope, clause, ctx)?;
                }
                let op = match (*glob, *negated) {
                    (false, false) => CmpOp::Like,
                    (false, true) => CmpOp::NotLike,
                    (true, false) => CmpOp::Glob,
                    (true, true) => CmpOp::NotGlob,
                };
                if let (Some(col), Some((lit, span, quote))) = (schema_column(inner), literal_of(pattern)) {
                    self.site(clause, col, lit, op, span, quote);
                }
            }
            Expr::Between { negated, expr: inner, low, high, .. } => {
                self.expr(inner, scope, clause, ctx)?;
                self.expr(low, scope, clause, ctx)?;
                self.expr(high, scope, clause, ctx)?;
                let op = if *negated { CmpOp::NotBetween } else { CmpOp::Between };
                if let Some(col) = schema_column(inner) {
                    for bound in [low.as_ref(), high.as_ref()] {
                        if let Some((lit, span, quote)) = literal_of(bound) {
                            self.site(clause, col.clone(), lit, op, span, quote);
                        }
                    }
                }
            }
            Expr::InList { negated, expr: inner, list, .. } => {
                self.expr(inner, scope, clause, ctx)?;
                for e in list.iter_mut() {
                    self.expr(e, scope, clause, ctx)?;
                }
                let op = if *negated { CmpOp::NotIn } else { CmpOp::In };
                if let Some(col) = schema_column(inner) {
                    for e in list.iter() {
                        if let Some((lit, span, quote)) = literal_of(e) {
                            self.site(clause, col.clone(), lit, op, span, quote);
                        }
                    }
                }
            }
            Expr::InSubquery { expr: inner, subquery, .. } => {
                self.expr(inner, scope, clause, ctx)?;
                self.query(subquery, Some(scope))?;
            }
            Expr::Function { args, .. } => {
                if let FunctionArgs::List { args, .. } = args {
                    for a in args {
                        self.expr(a, scope, clause, ctx)?;
                    }
                }
            }
            Expr::Case { operand, whens, else_result, .. } => {
                if let Some(o) = operand {
                    self.expr(o, scope, clause, ctx)?;
                }
                for (w, t) in whens {
                    self.expr(w, scope, clause, ctx)?;
                    self.expr(t, scope, clause, ctx)?;
                }
                if let Some(e) = else_result {
                    self.expr(e, scope, clause, ctx)?;
                }
            }
            Expr::Subquery { query, .. } | Expr::Exists { query, .. } => {
                self.query(query, Some(scope))?;
            }
            Expr::Nested { exprs, .. } => {
                for e in exprs {
                    self.expr(e, scope, clause, ctx)?;
                }
            }
        }
        Ok(())
    }

    fn site(&mut self, clause: Clause, column: ColumnRef, value: Literal, op: CmpOp, span: Span, quote: Option<char>) {
        if clause == Clause::JoinOn {
            return;
        }
        self.sites.push(LiteralSite { column, value, op, span, quote });
    }
}

fn schema_column(expr: &Expr) -> Option<ColumnRef> {
    match expr {
        Expr::Column { resolved: Some(ColumnTarget::Schema { column, .. }), .. } => Some(column.clone()),
        Expr::Collate { expr, .. } => schema_column(expr),
        _ => None,
    }
}

/// A non-null literal operand with its span and quote character.
fn literal_of(expr: &Expr) -> Option<(Literal, Span, Option<char>)> {
    match expr {
        Expr::Literal { value: LiteralValue::Text { value, quote }, span } => Some((Literal::Text(value.clone()), *span, Some(*quote))),
        Expr::Literal { value: LiteralValue::Number(n), span } => Some((Literal::Number(n.clone()), *span, None)),
        Expr::Unary { op: UnaryOp::Neg, expr, span } => match expr.as_ref() {
            Expr::Literal { value: LiteralValue::Number(n), .. } => Some((Literal::Number(format!("-{n}")), *span, None)),
            _ => None,
        },
        _ => None,
    }
}
