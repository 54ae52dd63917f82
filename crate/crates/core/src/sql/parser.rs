//! Recursive-descent parser for single `SELECT` statements.

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::SqlError;

/// Words that end an expression or a clause and so can never be a bare
/// alias or column name.
const RESERVED: &[&str] = &[
    "SELECT", "FROM", "WHERE", "GROUP", "ORDER", "BY", "HAVING", "LIMIT", "OFFSET", "UNION", "INTERSECT", "EXCEPT",
    "ALL", "DISTINCT", "AS", "ON", "JOIN", "INNER", "LEFT", "RIGHT", "FULL", "OUTER", "CROSS", "NATURAL", "USING",
    "AND", "OR", "NOT", "IN", "IS", "LIKE", "GLOB", "BETWEEN", "CASE", "WHEN", "THEN", "ELSE", "END", "EXISTS",
    "NULL", "CAST", "ASC", "DESC", "COLLATE", "ESCAPE", "ISNULL", "NOTNULL", "WITH",
];

pub fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(word))
}

/// Parses `sql` into a syntax tree. A single trailing `;` is accepted.
pub fn parse_query(sql: &str) -> Result<Query, SqlError> {
    let tokens = tokenize(sql)?;
    let mut parser = Parser { tokens, pos: 0, len: sql.len() };
    if parser.peek_word("WITH") {
        return Err(parser.error("common table expressions are not supported"));
    }
    let query = parser.query()?;
    parser.eat_op(";");
    if let Some(tok) = parser.peek() {
        return Err(SqlError::syntax(tok.span.start, "unexpected trailing input"));
    }
    Ok(query)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&Token> {
        self.tokens.get(self.pos + offset)
    }

    fn position(&self) -> usize {
        self.peek().map(|t| t.span.start).unwrap_or(self.len)
    }

    fn error(&self, message: impl Into<String>) -> SqlError {
        SqlError::syntax(self.position(), message)
    }

    fn last_end(&self) -> usize {
        self.pos.checked_sub(1).map(|p| self.tokens[p].span.end).unwrap_or(0)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn peek_word(&self, keyword: &str) -> bool {
        self.peek().is_some_and(|t| t.is_word(keyword))
    }

    fn peek_op(&self, op: &str) -> bool {
        self.peek().is_some_and(|t| t.is_op(op))
    }

    fn eat_word(&mut self, keyword: &str) -> bool {
        if self.peek_word(keyword) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.peek_op(op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, keyword: &str) -> Result<(), SqlError> {
        if self.eat_word(keyword) {
            Ok(())
        } else {
            Err(self.error(format!("expected {keyword}")))
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<Span, SqlError> {
        match self.peek() {
            Some(t) if t.is_op(op) => {
                let span = t.span;
                self.pos += 1;
                Ok(span)
            }
            _ => Err(self.error(format!("expected `{op}`"))),
        }
    }

    /// Any word or quoted identifier, keywords included.
    fn any_ident(&mut self) -> Result<Ident, SqlError> {
        match self.peek().map(|t| t.kind.clone()) {
            Some(TokenKind::Word(w)) => {
                let span = self.next().unwrap().span;
                Ok(Ident { name: w, quote: None, span })
            }
            Some(TokenKind::QuotedIdent(name, q)) => {
                let span = self.next().unwrap().span;
                Ok(Ident { name, quote: Some(q), span })
            }
            Some(TokenKind::Str(s)) => {
                // SQLite accepts 'name' where an identifier is required
                let span = self.next().unwrap().span;
                Ok(Ident { name: s, quote: Some('\''), span })
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    fn at_plain_ident(&self) -> bool {
        match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Word(w)) => !is_reserved(w),
            Some(TokenKind::QuotedIdent(..)) => true,
            _ => false,
        }
    }

    fn query(&mut self) -> Result<Query, SqlError> {
        let mut body = SetExpr::Select(Box::new(self.select()?));
        loop {
            let op = if self.eat_word("UNION") {
                if self.eat_word("ALL") {
                    SetOp::UnionAll
                } else {
                    SetOp::Union
                }
            } else if self.eat_word("INTERSECT") {
                SetOp::Intersect
            } else if self.eat_word("EXCEPT") {
                SetOp::Except
            } else {
                break;
            };
            let right = SetExpr::Select(Box::new(self.select()?));
            body = SetExpr::Compound { op, left: Box::new(body), right: Box::new(right) };
        }
        let mut order_by = Vec::new();
        if self.eat_word("ORDER") {
            self.expect_word("BY")?;
            loop {
                let expr = self.expr()?;
                let descending = if self.eat_word("DESC") {
                    Some(true)
                } else if self.eat_word("ASC") {
                    Some(false)
                } else {
                    None
                };
                order_by.push(OrderItem { expr, descending });
                if !self.eat_op(",") {
                    break;
                }
            }
        }
        let mut limit = None;
        if self.eat_word("LIMIT") {
            let first = self.expr()?;
            limit = Some(if self.eat_word("OFFSET") {
                Limit { count: first, offset: Some(self.expr()?) }
            } else if self.eat_op(",") {
                Limit { count: self.expr()?, offset: Some(first) }
            } else {
                Limit { count: first, offset: None }
            });
        }
        Ok(Query { body, order_by, limit })
    }

    fn select(&mut self) -> Result<Select, SqlError> {
        self.expect_word("SELECT")?;
        let distinct = if self.eat_word("DISTINCT") {
            true
        } else {
            self.eat_word("ALL");
            false
        };
        let mut projection = Vec::new();
        loop {
            projection.push(self.select_item()?);
            if !self.eat_op(",") {
                break;
            }
        }
        let mut from = Vec::new();
        if self.eat_word("FROM") {
            from.push(self.parse_from_item()?);
            while self.eat_op(",") {
                from.push(self.parse_from_item()?);
            }
        }
        let selection = if self.eat_word("WHERE") { Some(self.expr()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_word("GROUP") {
            self.expect_word("BY")?;
            loop {
                group_by.push(self.expr()?);
                if !self.eat_op(",") {
                    break;
                }
            }
        }
        let having = if self.eat_word("HAVING") { Some(self.expr()?) } else { None };
        Ok(Select { distinct, projection, from, selection, group_by, having, scope: None })
    }

    fn select_item(&mut self) -> Result<SelectItem, SqlError> {
        if let Some(t) = self.peek() {
            if t.is_op("*") {
                let span = t.span;
                self.pos += 1;
                return Ok(SelectItem::Wildcard(span));
            }
        }
        let is_qualified_star = matches!(self.peek().map(|t| &t.kind), Some(TokenKind::Word(_) | TokenKind::QuotedIdent(..)))
            && self.peek_at(1).is_some_and(|t| t.is_op("."))
            && self.peek_at(2).is_some_and(|t| t.is_op("*"));
        if is_qualified_star {
            let table = self.any_ident()?;
            self.pos += 2;
            return Ok(SelectItem::QualifiedWildcard(table));
        }
        let expr = self.expr()?;
        let alias = self.alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn alias(&mut self) -> Result<Option<Ident>, SqlError> {
        if self.eat_word("AS") {
            return self.any_ident().map(Some);
        }
        if self.at_plain_ident() || matches!(self.peek().map(|t| &t.kind), Some(TokenKind::Str(_))) {
            return self.any_ident().map(Some);
        }
        Ok(None)
    }

    fn parse_from_item(&mut self) -> Result<FromItem, SqlError> {
        let factor = self.table_factor()?;
        let mut joins = Vec::new();
        loop {
            let natural = self.eat_word("NATURAL");
            let kind = if self.eat_word("JOIN") {
                JoinKind::Inner
            } else if self.eat_word("INNER") {
                self.expect_word("JOIN")?;
                JoinKind::Inner
            } else if self.eat_word("LEFT") {
                self.eat_word("OUTER");
                self.expect_word("JOIN")?;
                JoinKind::Left
            } else if self.eat_word("CROSS") {
                self.expect_word("JOIN")?;
                JoinKind::Cross
            } else if natural {
                return Err(self.error("expected JOIN after NATURAL"));
            } else {
                break;
            };
            let factor = self.table_factor()?;
            let constraint = if self.eat_word("ON") {
                JoinConstraint::On(self.expr()?)
            } else if self.eat_word("USING") {
                self.expect_op("(")?;
                let mut cols = vec![self.any_ident()?];
                while self.eat_op(",") {
                    cols.push(self.any_ident()?);
                }
                self.expect_op(")")?;
                JoinConstraint::Using(cols)
            } else {
                JoinConstraint::None
            };
            joins.push(Join { kind, natural, factor, constraint });
        }
        Ok(FromItem { factor, joins })
    }

    fn table_factor(&mut self) -> Result<TableFactor, SqlError> {
        if self.eat_op("(") {
            if self.peek_word("SELECT") {
                let subquery = self.query()?;
                self.expect_op(")")?;
                let alias = self.alias()?;
                return Ok(TableFactor::Derived { subquery: Box::new(subquery), alias, binding: None });
            }
            let inner = self.parse_from_item()?;
            self.expect_op(")")?;
            return Ok(TableFactor::Nested(Box::new(inner)));
        }
        let name = self.any_ident()?;
        let alias = self.alias()?;
        Ok(TableFactor::Table { name, alias, binding: None })
    }

    pub fn expr(&mut self) -> Result<Expr, SqlError> {
        self.expr_bp(prec::OR)
    }

    fn expr_bp(&mut self, min_prec: u8) -> Result<Expr, SqlError> {
        let mut left = self.prefix()?;
        while let Some(tok) = self.peek() {
            let start = left.span().start;
            // postfix and infix forms at equality level
            let negated = tok.is_word("NOT")
                && self
                    .peek_at(1)
                    .is_some_and(|n| n.is_word("IN") || n.is_word("LIKE") || n.is_word("GLOB") || n.is_word("BETWEEN") || n.is_word("NULL"));
            let at = if negated { self.peek_at(1).cloned().unwrap() } else { tok.clone() };
            if at.is_word("IN") || at.is_word("LIKE") || at.is_word("GLOB") || at.is_word("BETWEEN") || (negated && at.is_word("NULL")) {
                if prec::EQUALITY < min_prec {
                    break;
                }
                if negated {
                    self.pos += 1;
                }
                self.pos += 1;
                left = if at.is_word("IN") {
                    self.in_rest(left, negated, start)?
                } else if at.is_word("BETWEEN") {
                    let low = self.expr_bp(prec::RELATIONAL)?;
                    self.expect_word("AND")?;
                    let high = self.expr_bp(prec::RELATIONAL)?;
                    let span = Span::new(start, high.span().end);
                    Expr::Between { negated, expr: Box::new(left), low: Box::new(low), high: Box::new(high), span }
                } else if at.is_word("NULL") {
                    Expr::IsNull { negated: true, expr: Box::new(left), span: Span::new(start, self.last_end()) }
                } else {
                    let glob = at.is_word("GLOB");
                    let pattern = self.expr_bp(prec::RELATIONAL)?;
                    let escape = if self.eat_word("ESCAPE") { Some(Box::new(self.expr_bp(prec::RELATIONAL)?)) } else { None };
                    let end = escape.as_ref().map(|e| e.span().end).unwrap_or(pattern.span().end);
                    Expr::Like { negated, glob, expr: Box::new(left), pattern: Box::new(pattern), escape, span: Span::new(start, end) }
                };
                continue;
            }
            if tok.is_word("ISNULL") || tok.is_word("NOTNULL") {
                if prec::EQUALITY < min_prec {
                    break;
                }
                let negated = tok.is_word("NOTNULL");
                self.pos += 1;
                left = Expr::IsNull { negated, expr: Box::new(left), span: Span::new(start, self.last_end()) };
                continue;
            }
            if tok.is_word("IS") {
                if prec::EQUALITY < min_prec {
                    break;
                }
                self.pos += 1;
                let negated = self.eat_word("NOT");
                if self.peek_word("NULL") {
                    self.pos += 1;
                    left = Expr::IsNull { negated, expr: Box::new(left), span: Span::new(start, self.last_end()) };
                } else {
                    let right = self.expr_bp(prec::EQUALITY + 1)?;
                    let span = Span::new(start, right.span().end);
                    let op = if negated { BinaryOp::IsNot } else { BinaryOp::Is };
                    left = Expr::Binary { op, left: Box::new(left), right: Box::new(right), span };
                }
                continue;
            }
            if tok.is_word("COLLATE") {
                if prec::COLLATE < min_prec {
                    break;
                }
                self.pos += 1;
                let collation = self.any_ident()?.name;
                left = Expr::Collate { expr: Box::new(left), collation, span: Span::new(start, self.last_end()) };
                continue;
            }
            let Some(op) = binary_op(tok) else { break };
            let p = op.precedence();
            if p < min_prec {
                break;
            }
            self.pos += 1;
            let right = self.expr_bp(p + 1)?;
            let span = Span::new(start, right.span().end);
            left = Expr::Binary { op, left: Box::new(left), right: Box::new(right), span };
        }
        Ok(left)
    }

    fn in_rest(&mut self, left: Expr, negated: bool, start: usize) -> Result<Expr, SqlError> {
        self.expect_op("(")?;
        if self.peek_word("SELECT") {
            let subquery = self.query()?;
            let end = self.expect_op(")")?.end;
            return Ok(Expr::InSubquery { negated, expr: Box::new(left), subquery: Box::new(subquery), span: Span::new(start, end) });
        }
        let mut list = Vec::new();
        if !self.peek_op(")") {
            loop {
                list.push(self.expr()?);
                if !self.eat_op(",") {
                    break;
                }
            }
        }
        let end = self.expect_op(")")?.end;
        Ok(Expr::InList { negated, expr: Box::new(left), list, span: Span::new(start, end) })
    }

    fn prefix(&mut self) -> Result<Expr, SqlError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error("unexpected end of input"));
        };
        let start = tok.span.start;
        if tok.is_word("NOT") {
            self.pos += 1;
            if self.eat_word("EXISTS") {
                let (query, end) = self.parenthesized_query()?;
                return Ok(Expr::Exists { negated: true, query: Box::new(query), span: Span::new(start, end) });
            }
            let expr = self.expr_bp(prec::NOT)?;
            let span = Span::new(start, expr.span().end);
            return Ok(Expr::Unary { op: UnaryOp::Not, expr: Box::new(expr), span });
        }
        if tok.is_op("-") || tok.is_op("+") || tok.is_op("~") {
            self.pos += 1;
            let op = match &tok.kind {
                TokenKind::Op("-") => UnaryOp::Neg,
                TokenKind::Op("+") => UnaryOp::Plus,
                _ => UnaryOp::BitNot,
            };
            let expr = self.expr_bp(prec::UNARY)?;
            let span = Span::new(start, expr.span().end);
            return Ok(Expr::Unary { op, expr: Box::new(expr), span });
        }
        match tok.kind {
            TokenKind::Number(n) => {
                self.pos += 1;
                Ok(Expr::Literal { value: LiteralValue::Number(n), span: tok.span })
            }
            TokenKind::Str(s) => {
                self.pos += 1;
                Ok(Expr::Literal { value: LiteralValue::Text { value: s, quote: '\'' }, span: tok.span })
            }
            TokenKind::Op("(") => {
                self.pos += 1;
                if self.peek_word("SELECT") {
                    let query = self.query()?;
                    let end = self.expect_op(")")?.end;
                    return Ok(Expr::Subquery { query: Box::new(query), span: Span::new(start, end) });
                }
                let mut exprs = vec![self.expr()?];
                while self.eat_op(",") {
                    exprs.push(self.expr()?);
                }
                let end = self.expect_op(")")?.end;
                Ok(Expr::Nested { exprs, span: Span::new(start, end) })
            }
            TokenKind::Word(ref w) if w.eq_ignore_ascii_case("NULL") => {
                self.pos += 1;
                Ok(Expr::Literal { value: LiteralValue::Null, span: tok.span })
            }
            TokenKind::Word(ref w) if w.eq_ignore_ascii_case("EXISTS") => {
                self.pos += 1;
                let (query, end) = self.parenthesized_query()?;
                Ok(Expr::Exists { negated: false, query: Box::new(query), span: Span::new(start, end) })
            }
            TokenKind::Word(ref w) if w.eq_ignore_ascii_case("CASE") => {
                self.pos += 1;
                self.case_rest(start)
            }
            TokenKind::Word(ref w) if w.eq_ignore_ascii_case("CAST") => {
                self.pos += 1;
                self.expect_op("(")?;
                let expr = self.expr()?;
                self.expect_word("AS")?;
                let mut parts = Vec::new();
                while let Some(t) = self.peek() {
                    if t.is_op(")") {
                        break;
                    }
                    let t = self.next().unwrap();
                    parts.push(match t.kind {
                        TokenKind::Word(w) => w.to_ascii_uppercase(),
                        TokenKind::Number(n) => n,
                        TokenKind::Op(o) => o.to_string(),
                        _ => return Err(SqlError::syntax(t.span.start, "unexpected token in type name")),
                    });
                }
                let end = self.expect_op(")")?.end;
                let type_name = parts.join(" ").replace(" ( ", "(").replace(" )", ")").replace(" , ", ",");
                Ok(Expr::Cast { expr: Box::new(expr), type_name, span: Span::new(start, end) })
            }
            TokenKind::Word(ref w)
                if ["CURRENT_DATE", "CURRENT_TIME", "CURRENT_TIMESTAMP", "TRUE", "FALSE"].iter().any(|k| k.eq_ignore_ascii_case(w)) =>
            {
                self.pos += 1;
                Ok(Expr::Literal { value: LiteralValue::Keyword(w.to_ascii_uppercase()), span: tok.span })
            }
            TokenKind::Word(ref w) if is_reserved(w) => Err(self.error(format!("unexpected keyword {w}"))),
            TokenKind::Word(_) | TokenKind::QuotedIdent(..) => {
                let first = self.any_ident()?;
                if self.peek_op("(") && first.quote.is_none() {
                    return self.function_rest(first);
                }
                if self.eat_op(".") {
                    let name = self.any_ident()?;
                    let span = Span::new(start, name.span.end);
                    return Ok(Expr::Column { qualifier: Some(first), name, span, resolved: None });
                }
                let span = first.span;
                Ok(Expr::Column { qualifier: None, name: first, span, resolved: None })
            }
            _ => Err(self.error("expected expression")),
        }
    }

    fn parenthesized_query(&mut self) -> Result<(Query, usize), SqlError> {
        self.expect_op("(")?;
        let query = self.query()?;
        let end = self.expect_op(")")?.end;
        Ok((query, end))
    }

    fn function_rest(&mut self, name: Ident) -> Result<Expr, SqlError> {
        let start = name.span.start;
        self.expect_op("(")?;
        let args = if self.eat_op("*") {
            FunctionArgs::Star
        } else {
            let distinct = self.eat_word("DISTINCT");
            let mut args = Vec::new();
            if !self.peek_op(")") {
                loop {
                    args.push(self.expr()?);
                    if !self.eat_op(",") {
                        break;
                    }
                }
            }
            FunctionArgs::List { distinct, args }
        };
        let end = self.expect_op(")")?.end;
        Ok(Expr::Function { name, args, span: Span::new(start, end) })
    }

    fn case_rest(&mut self, start: usize) -> Result<Expr, SqlError> {
        let operand = if self.peek_word("WHEN") { None } else { Some(Box::new(self.expr()?)) };
        let mut whens = Vec::new();
        while self.eat_word("WHEN") {
            let cond = self.expr()?;
            self.expect_word("THEN")?;
            let result = self.expr()?;
            whens.push((cond, result));
        }
        if whens.is_empty() {
            return Err(self.error("CASE requires at least one WHEN"));
        }
        let else_result = if self.eat_word("ELSE") { Some(Box::new(self.expr()?)) } else { None };
        self.expect_word("END")?;
        Ok(Expr::Case { operand, whens, else_result, span: Span::new(start, self.last_end()) })
    }
}

fn binary_op(tok: &Token) -> Option<BinaryOp> {
    Some(match &tok.kind {
        TokenKind::Word(w) if w.eq_ignore_ascii_case("OR") => BinaryOp::Or,
        TokenKind::Word(w) if w.eq_ignore_ascii_case("AND") => BinaryOp::And,
        TokenKind::Op(op) => match *op {
            "=" | "==" => BinaryOp::Eq,
            "!=" | "<>" => BinaryOp::NotEq,
            "<" => BinaryOp::Lt,
            "<=" => BinaryOp::LtEq,
            ">" => BinaryOp::Gt,
            ">=" => BinaryOp::GtEq,
            "&" => BinaryOp::BitAnd,
            "|" => BinaryOp::BitOr,
            "<<" => BinaryOp::ShiftLeft,
            ">>" => BinaryOp::ShiftRight,
            "+" => BinaryOp::Plus,
            "-" => BinaryOp::Minus,
            "*" => BinaryOp::Mul,
            "/" => BinaryOp::Div,
            "%" => BinaryOp::Mod,
            "||" => BinaryOp::Concat,
            _ => return None,
        },
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn where_of(sql: &str) -> Expr {
        match parse_query(sql).unwrap().body {
            SetExpr::Select(s) => s.selection.unwrap(),
            _ => panic!("compound"),
        }
    }

    #[test]
    fn keyword_named_table() {
        let q = parse_query("SELECT paymentDate, amount FROM Order").unwrap();
        let s = q.body.first_select();
        assert_eq!(s.projection.len(), 2);
        match &s.from[0].factor {
            TableFactor::Table { name, alias, .. } => {
                assert_eq!(name.name, "Order");
                assert!(alias.is_none());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn and_binds_tighter_than_or() {
        match where_of("SELECT a FROM t WHERE a = 1 OR b = 2 AND c = 3") {
            Expr::Binary { op: BinaryOp::Or, right, .. } => assert!(matches!(*right, Expr::Binary { op: BinaryOp::And, .. })),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn not_covers_comparison() {
        match where_of("SELECT a FROM t WHERE NOT a = 1 AND b") {
            Expr::Binary { op: BinaryOp::And, left, .. } => {
                assert!(matches!(*left, Expr::Unary { op: UnaryOp::Not, .. }))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn between_bounds_stop_at_and() {
        match where_of("SELECT a FROM t WHERE a BETWEEN 1 AND 5 AND b = 2") {
            Expr::Binary { op: BinaryOp::And, left, .. } => assert!(matches!(*left, Expr::Between { .. })),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negated_postfix_forms() {
        assert!(matches!(where_of("SELECT a FROM t WHERE a NOT IN (1, 2)"), Expr::InList { negated: true, .. }));
        assert!(matches!(where_of("SELECT a FROM t WHERE a NOT LIKE '%x'"), Expr::Like { negated: true, .. }));
        assert!(matches!(where_of("SELECT a FROM t WHERE a IS NOT NULL"), Expr::IsNull { negated: true, .. }));
        assert!(matches!(
            where_of("SELECT a FROM t WHERE a NOT IN (SELECT b FROM u)"),
            Expr::InSubquery { negated: true, .. }
        ));
    }

    #[test]
    fn compound_with_order_and_limit() {
        let q = parse_query("SELECT a FROM t UNION SELECT b FROM u ORDER BY 1 DESC LIMIT 3;").unwrap();
        assert!(matches!(q.body, SetExpr::Compound { op: SetOp::Union, .. }));
        assert_eq!(q.order_by.len(), 1);
        assert!(q.limit.is_some());
    }

    #[test]
    fn joins_aliases_and_functions() {
        let q = parse_query(
            "SELECT T1.name, count(DISTINCT T2.id) AS n FROM a AS T1 JOIN b T2 ON T1.id = T2.aid GROUP BY T1.name HAVING count(*) > 1",
        )
        .unwrap();
        let s = q.body.first_select();
        assert_eq!(s.from[0].joins.len(), 1);
        assert!(s.having.is_some());
        match &s.projection[1] {
            SelectItem::Expr { alias: Some(a), expr: Expr::Function { args: FunctionArgs::List { distinct: true, .. }, .. } } => {
                assert_eq!(a.name, "n")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_query("SELECT a FROM t WHERE") {
            Err(SqlError::Syntax { position, .. }) => assert_eq!(position, 21),
            other => panic!("{other:?}"),
        }
        assert!(parse_query("SELECT a FROM t t2 t3").is_err());
    }

    #[test]
    fn spans_cover_source_text() {
        let sql = "SELECT x FROM t WHERE t.theme != 'Fantasy'";
        match where_of(sql) {
            Expr::Binary { left, right, span, .. } => {
                assert_eq!(&sql[left.span().start..left.span().end], "t.theme");
                assert_eq!(&sql[right.span().start..right.span().end], "'Fantasy'");
                assert_eq!(&sql[span.start..span.end], "t.theme != 'Fantasy'");
            }
            other => panic!("{other:?}"),
        }
    }
}
