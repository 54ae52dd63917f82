//! SQL text generation from the syntax tree.
//!
//! [`render_query`] reproduces the query with its original identifiers.
//! [`render_canonical`] produces a normal form used for equality: keywords
//! upper case, identifiers lower case, table bindings renamed `b1, b2, ...`
//! in occurrence order, literals normalized and result aliases dropped.

use super::ast::*;
use super::parser::is_reserved;
use crate::model::canonical_number;

pub fn render_query(query: &Query) -> String {
    let mut r = Renderer { canonical: false, projections: Vec::new() };
    r.query(query)
}

/// Canonical text of a resolved query.
pub fn render_canonical(query: &Query) -> String {
    let mut r = Renderer { canonical: true, projections: Vec::new() };
    r.query(query)
}

pub fn render_expr(expr: &Expr) -> String {
    let mut r = Renderer { canonical: false, projections: Vec::new() };
    r.expr(expr)
}

/// Identifier text, quoted when SQLite would not accept it bare.
pub fn quote_ident(name: &str, preferred: Option<char>) -> String {
    let simple = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    match preferred {
        Some('`') => format!("`{}`", name.replace('`', "``")),
        Some('[') => format!("[{name}]"),
        Some(_) => format!("\"{}\"", name.replace('"', "\"\"")),
        None if simple && !is_reserved(name) && !is_sqlite_keyword(name) => name.to_string(),
        None => format!("\"{}\"", name.replace('"', "\"\"")),
    }
}

/// SQLite keywords that are not in the parser's reserved list but still
/// cannot appear bare as table names.
fn is_sqlite_keyword(name: &str) -> bool {
    ["TABLE", "INDEX", "VIEW", "CHECK", "DEFAULT", "REFERENCES", "PRIMARY", "FOREIGN", "KEY", "UNIQUE", "CONSTRAINT", "INTO", "VALUES", "SET", "UPDATE", "DELETE", "INSERT", "DROP", "CREATE", "TRANSACTION", "WINDOW", "RETURNING", "LIMIT"]
        .iter()
        .any(|k| k.eq_ignore_ascii_case(name))
}

pub fn render_text_literal(value: &str, quote: char) -> String {
    if quote == '"' {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        format!("'{}'", value.replace('\'', "''"))
    }
}

struct Renderer<'a> {
    canonical: bool,
    projections: Vec<&'a [SelectItem]>,
}

impl<'a> Renderer<'a> {
    fn ident(&self, ident: &Ident) -> String {
        if self.canonical {
            ident.name.to_lowercase()
        } else {
            let quote = ident.quote.filter(|q| *q != '\'');
            quote_ident(&ident.name, quote)
        }
    }

    fn query(&mut self, query: &'a Query) -> String {
        let mut out = self.set_expr(&query.body);
        if !query.order_by.is_empty() {
            // ORDER BY of a compound names the first core's result columns
            let first = query.body.first_select();
            self.projections.push(&first.projection);
            let items: Vec<String> = query
                .order_by
                .iter()
                .map(|item| {
                    let mut s = self.expr(&item.expr);
                    match item.descending {
                        Some(true) => s.push_str(" DESC"),
                        Some(false) if !self.canonical => s.push_str(" ASC"),
                        _ => {}
                    }
                    s
                })
                .collect();
            self.projections.pop();
            out.push_str(" ORDER BY ");
            out.push_str(&items.join(", "));
        }
        if let Some(limit) = &query.limit {
            out.push_str(" LIMIT ");
            out.push_str(&self.expr(&limit.count));
            if let Some(offset) = &limit.offset {
                out.push_str(" OFFSET ");
                out.push_str(&self.expr(offset));
            }
        }
        out
    }

    fn set_expr(&mut self, body: &'a SetExpr) -> String {
        match body {
            SetExpr::Select(s) => self.select(s),
            SetExpr::Compound { op, left, right } => {
                format!("{} {} {}", self.set_expr(left), op.keyword(), self.set_expr(right))
            }
        }
    }

    fn select(&mut self, select: &'a Select) -> String {
        self.projections.push(&select.projection);
        let mut out = String::from("SELECT ");
        if select.distinct {
            out.push_str("DISTINCT ");
        }
        let items: Vec<String> = select.projection.iter().map(|item| self.select_item(item)).collect();
        out.push_str(&items.join(", "));
        if !select.from.is_empty() {
            out.push_str(" FROM ");
            let from: Vec<String> = select.from.iter().map(|f| self.render_from_item(f)).collect();
            out.push_str(&from.join(", "));
        }
        if let Some(w) = &select.selection {
            out.push_str(" WHERE ");
            out.push_str(&self.expr(w));
        }
        if !select.group_by.is_empty() {
            out.push_str(" GROUP BY ");
            let g: Vec<String> = select.group_by.iter().map(|e| self.expr(e)).collect();
            out.push_str(&g.join(", "));
        }
        if let Some(h) = &select.having {
            out.push_str(" HAVING ");
            out.push_str(&self.expr(h));
        }
        self.projections.pop();
        out
    }

    fn select_item(&mut self, item: &'a SelectItem) -> String {
        match item {
            SelectItem::Wildcard(_) => "*".to_string(),
            SelectItem::QualifiedWildcard(t) => format!("{}.*", self.ident(t)),
            SelectItem::Expr { expr, alias } => {
                let mut s = self.expr(expr);
                if let (Some(a), false) = (alias, self.canonical) {
                    s.push_str(" AS ");
                    s.push_str(&self.ident(a));
                }
                s
            }
        }
    }

    fn render_from_item(&mut self, item: &'a FromItem) -> String {
        let mut out = self.table_factor(&item.factor);
        for join in &item.joins {
            let kw = match (join.kind, self.canonical) {
                (JoinKind::Left, _) => "LEFT JOIN",
                (JoinKind::Cross, _) => "CROSS JOIN",
                (JoinKind::Inner, _) | (JoinKind::Comma, _) => "JOIN",
            };
            out.push(' ');
            if join.natural {
                out.push_str("NATURAL ");
            }
            out.push_str(kw);
            out.push(' ');
            out.push_str(&self.table_factor(&join.factor));
            match &join.constraint {
                JoinConstraint::None => {}
                JoinConstraint::On(e) => {
                    out.push_str(" ON ");
                    out.push_str(&self.expr(e));
                }
                JoinConstraint::Using(cols) => {
                    let cols: Vec<String> = cols.iter().map(|c| self.ident(c)).collect();
                    out.push_str(&format!(" USING ({})", cols.join(", ")));
                }
            }
        }
        out
    }

    fn table_factor(&mut self, factor: &'a TableFactor) -> String {
        match factor {
            TableFactor::Table { name, alias, binding } => {
                let mut s = self.ident(name);
                if self.canonical {
                    if let Some(b) = binding {
                        s.push_str(&format!(" AS b{b}"));
                    }
                } else if let Some(a) = alias {
                    s.push_str(" AS ");
                    s.push_str(&self.ident(a));
                }
                s
            }
            TableFactor::Derived { subquery, alias, binding } => {
                let mut inner = Renderer { canonical: self.canonical, projections: Vec::new() };
                let mut s = format!("({})", inner.query(subquery));
                if self.canonical {
                    if let Some(b) = binding {
                        s.push_str(&format!(" AS b{b}"));
                    }
                } else if let Some(a) = alias {
                    s.push_str(" AS ");
                    s.push_str(&self.ident(a));
                }
                s
            }
            TableFactor::Nested(inner) => format!("({})", self.render_from_item(inner)),
        }
    }

    fn sub(&mut self, query: &'a Query) -> String {
        let mut inner = Renderer { canonical: self.canonical, projections: Vec::new() };
        inner.query(query)
    }

    fn child(&mut self, expr: &'a Expr, min: u8) -> String {
        let s = self.expr(expr);
        if self.effective_precedence(expr) < min {
            format!("({s})")
        } else {
            s
        }
    }

    fn effective_precedence(&self, expr: &Expr) -> u8 {
        match expr {
            Expr::Nested { exprs, .. } if self.canonical && exprs.len() == 1 => self.effective_precedence(&exprs[0]),
            _ => expr.precedence(),
        }
    }

    fn expr(&mut self, expr: &'a Expr) -> String {
        match expr {
            Expr::Column { qualifier, name, resolved, .. } => {
                if self.canonical {
                    match resolved {
                        Some(ColumnTarget::Schema { binding, column }) => {
                            return format!("b{binding}.{}", column.column.to_lowercase())
                        }
                        Some(ColumnTarget::Derived { binding, name }) => return format!("b{binding}.{}", name.to_lowercase()),
                        Some(ColumnTarget::SelectAlias { index }) => {
                            let projection = self.projections.last().copied();
                            if let Some(SelectItem::Expr { expr, .. }) = projection.and_then(|p| p.get(*index)) {
                                return self.expr(expr);
                            }
                        }
                        None => {}
                    }
                }
                match qualifier {
                    Some(q) => format!("{}.{}", self.ident(q), self.ident(name)),
                    None => self.ident(name),
                }
            }
            Expr::Literal { value, .. } => match value {
                LiteralValue::Text { value, quote } => {
                    render_text_literal(value, if self.canonical { '\'' } else { *quote })
                }
                LiteralValue::Number(n) => {
                    if self.canonical {
                        canonical_number(n)
                    } else {
                        n.clone()
                    }
                }
                LiteralValue::Null => "NULL".to_string(),
                LiteralValue::Keyword(k) => k.clone(),
            },
            Expr::Unary { op, expr, .. } => match op {
                UnaryOp::Not => format!("NOT {}", self.child(expr, prec::NOT)),
                UnaryOp::Neg => {
                    if self.canonical {
                        if let Expr::Literal { value: LiteralValue::Number(n), .. } = expr.as_ref() {
                            return canonical_number(&format!("-{n}"));
                        }
                    }
                    format!("-{}", self.child(expr, prec::UNARY))
                }
                UnaryOp::Plus => format!("+{}", self.child(expr, prec::UNARY)),
                UnaryOp::BitNot => format!("~{}", self.child(expr, prec::UNARY)),
            },
            Expr::Binary { op, left, right, .. } => {
                let p = op.precedence();
                format!("{} {} {}", self.child(left, p), op.symbol(), self.child(right, p + 1))
            }
            Expr::Like { negated, glob, expr, pattern, escape, .. } => {
                let mut s = format!(
                    "{} {}{} {}",
                    self.child(expr, prec::EQUALITY),
                    if *negated { "NOT " } else { "" },
                    if *glob { "GLOB" } else { "LIKE" },
                    self.child(pattern, prec::RELATIONAL)
                );
                if let Some(e) = escape {
                    s.push_str(" ESCAPE ");
                    s.push_str(&self.child(e, prec::RELATIONAL));
                }
                s
            }
            Expr::Between { negated, expr, low, high, .. } => format!(
                "{} {}BETWEEN {} AND {}",
                self.child(expr, prec::EQUALITY),
                if *negated { "NOT " } else { "" },
                self.child(low, prec::RELATIONAL),
                self.child(high, prec::RELATIONAL)
            ),
            Expr::InList { negated, expr, list, .. } => {
                let items: Vec<String> = list.iter().map(|e| self.expr(e)).collect();
                format!(
                    "{} {}IN ({})",
                    self.child(expr, prec::EQUALITY),
                    if *negated { "NOT " } else { "" },
                    items.join(", ")
                )
            }
            Expr::InSubquery { negated, expr, subquery, .. } => format!(
                "{} {}IN ({})",
                self.child(expr, prec::EQUALITY),
                if *negated { "NOT " } else { "" },
                self.sub(subquery)
            ),
            Expr::IsNull { negated, expr, .. } => {
                format!("{} IS {}NULL", self.child(expr, prec::EQUALITY), if *negated { "NOT " } else { "" })
            }
            Expr::Function { name, args, .. } => {
                let fname = if self.canonical { name.name.to_lowercase() } else { name.name.clone() };
                match args {
                    FunctionArgs::Star => format!("{fname}(*)"),
                    FunctionArgs::List { distinct, args } => {
                        let items: Vec<String> = args.iter().map(|e| self.expr(e)).collect();
                        format!("{fname}({}{})", if *distinct { "DISTINCT " } else { "" }, items.join(", "))
                    }
                }
            }
            Expr::Case { operand, whens, else_result, .. } => {
                let mut s = String::from("CASE");
                if let Some(o) = operand {
                    s.push(' ');
                    s.push_str(&self.expr(o));
                }
                for (w, t) in whens {
                    s.push_str(&format!(" WHEN {} THEN {}", self.expr(w), self.expr(t)));
                }
                if let Some(e) = else_result {
                    s.push_str(&format!(" ELSE {}", self.expr(e)));
                }
                s.push_str(" END");
                s
            }
            Expr::Cast { expr, type_name, .. } => format!("CAST({} AS {type_name})", self.expr(expr)),
            Expr::Collate { expr, collation, .. } => {
                let c = if self.canonical { collation.to_uppercase() } else { collation.clone() };
                format!("{} COLLATE {c}", self.child(expr, prec::COLLATE))
            }
            Expr::Subquery { query, .. } => format!("({})", self.sub(query)),
            Expr::Exists { negated, query, .. } => {
                format!("{}EXISTS ({})", if *negated { "NOT " } else { "" }, self.sub(query))
            }
            Expr::Nested { exprs, .. } => {
                if exprs.len() == 1 {
                    // canonical form: the parent parenthesizes by precedence
                    let s = self.expr(&exprs[0]);
                    if self.canonical {
                        s
                    } else {
                        format!("({s})")
                    }
                } else {
                    let items: Vec<String> = exprs.iter().map(|e| self.expr(e)).collect();
                    format!("({})", items.join(", "))
                }
            }
        }
    }
}
