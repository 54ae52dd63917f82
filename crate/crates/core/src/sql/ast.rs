//! Syntax tree for the SQLite `SELECT` subset.
//!
//! Nodes carry byte spans into the source text so that rewrites can splice
//! the original query instead of regenerating it. The resolver fills the
//! `resolved` annotations in place.

use crate::model::ColumnRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn to(self, other: Span) -> Span {
        Span { start: self.start.min(other.start), end: self.end.max(other.end) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ident {
    pub name: String,
    /// Opening quote character (`"`, `` ` `` or `[`) when the identifier was quoted.
    pub quote: Option<char>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub body: SetExpr,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<Limit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetOp {
    Union,
    UnionAll,
    Intersect,
    Except,
}

impl SetOp {
    pub fn keyword(self) -> &'static str {
        match self {
            SetOp::Union => "UNION",
            SetOp::UnionAll => "UNION ALL",
            SetOp::Intersect => "INTERSECT",
            SetOp::Except => "EXCEPT",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetExpr {
    Select(Box<Select>),
    Compound { op: SetOp, left: Box<SetExpr>, right: Box<SetExpr> },
}

impl SetExpr {
    /// Leftmost select core; its projection names the compound's columns.
    pub fn first_select(&self) -> &Select {
        match self {
            SetExpr::Select(s) => s,
            SetExpr::Compound { left, .. } => left.first_select(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub distinct: bool,
    pub projection: Vec<SelectItem>,
    pub from: Vec<FromItem>,
    pub selection: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
    /// Index of this core's scope, set by the resolver.
    pub scope: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Wildcard(Span),
    QualifiedWildcard(Ident),
    Expr { expr: Expr, alias: Option<Ident> },
}

/// A table factor followed by explicit joins.
#[derive(Debug, Clone, PartialEq)]
pub struct FromItem {
    pub factor: TableFactor,
    pub joins: Vec<Join>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableFactor {
    Table { name: Ident, alias: Option<Ident>, binding: Option<usize> },
    Derived { subquery: Box<Query>, alias: Option<Ident>, binding: Option<usize> },
    Nested(Box<FromItem>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    Left,
    Cross,
    Comma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Join {
    pub kind: JoinKind,
    pub natural: bool,
    pub factor: TableFactor,
    pub constraint: JoinConstraint,
}

#[derive(Debug, Clone, PartialEq)]
pub enum JoinConstraint {
    None,
    On(Expr),
    Using(Vec<Ident>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderItem {
    pub expr: Expr,
    pub descending: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Limit {
    pub count: Expr,
    pub offset: Option<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Not,
    Neg,
    Plus,
    BitNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Or,
    And,
    Eq,
    NotEq,
    Is,
    IsNot,
    Lt,
    LtEq,
    Gt,
    GtEq,
    BitAnd,
    BitOr,
    ShiftLeft,
    ShiftRight,
    Plus,
    Minus,
    Mul,
    Div,
    Mod,
    Concat,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Or => "OR",
            BinaryOp::And => "AND",
            BinaryOp::Eq => "=",
            BinaryOp::NotEq => "!=",
            BinaryOp::Is => "IS",
            BinaryOp::IsNot => "IS NOT",
            BinaryOp::Lt => "<",
            BinaryOp::LtEq => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::GtEq => ">=",
            BinaryOp::BitAnd => "&",
            BinaryOp::BitOr => "|",
            BinaryOp::ShiftLeft => "<<",
            BinaryOp::ShiftRight => ">>",
            BinaryOp::Plus => "+",
            BinaryOp::Minus => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Mod => "%",
            BinaryOp::Concat => "||",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => prec::OR,
            BinaryOp::And => prec::AND,
            BinaryOp::Eq | BinaryOp::NotEq | BinaryOp::Is | BinaryOp::IsNot => prec::EQUALITY,
            BinaryOp::Lt | BinaryOp::LtEq | BinaryOp::Gt | BinaryOp::GtEq => prec::RELATIONAL,
            BinaryOp::BitAnd | BinaryOp::BitOr | BinaryOp::ShiftLeft | BinaryOp::ShiftRight => prec::BITWISE,
            BinaryOp::Plus | BinaryOp::Minus => prec::ADDITIVE,
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Mod => prec::MULTIPLICATIVE,
            BinaryOp::Concat => prec::CONCAT,
        }
    }
}

/// Binding strength, lowest first, following SQLite's operator table.
pub mod prec {
    pub const OR: u8 = 1;
    pub const AND: u8 = 2;
    pub const NOT: u8 = 3;
    pub const EQUALITY: u8 = 4;
    pub const RELATIONAL: u8 = 5;
    pub const BITWISE: u8 = 6;
    pub const ADDITIVE: u8 = 7;
    pub const MULTIPLICATIVE: u8 = 8;
    pub const CONCAT: u8 = 9;
    pub const UNARY: u8 = 10;
    pub const COLLATE: u8 = 11;
    pub const ATOM: u8 = 12;
}

#[derive(Debug, Clone, PartialEq)]
pub enum LiteralValue {
    /// String literal with the quote character it was written with.
    Text { value: String, quote: char },
    Number(String),
    Null,
    /// `CURRENT_DATE`, `TRUE` and similar keyword constants.
    Keyword(String),
}

/// What a column token turned out to denote.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnTarget {
    Schema { binding: usize, column: ColumnRef },
    Derived { binding: usize, name: String },
    /// Reference to a result-column alias of the enclosing select core.
    SelectAlias { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionArgs {
    Star,
    List { distinct: bool, args: Vec<Expr> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column { qualifier: Option<Ident>, name: Ident, span: Span, resolved: Option<ColumnTarget> },
    Literal { value: LiteralValue, span: Span },
    Unary { op: UnaryOp, expr: Box<Expr>, span: Span },
    Binary { op: BinaryOp, left: Box<Expr>, right: Box<Expr>, span: Span },
    Like { negated: bool, glob: bool, expr: Box<Expr>, pattern: Box<Expr>, escape: Option<Box<Expr>>, span: Span },
    Between { negated: bool, expr: Box<Expr>, low: Box<Expr>, high: Box<Expr>, span: Span },
    InList { negated: bool, expr: Box<Expr>, list: Vec<Expr>, span: Span },
    InSubquery { negated: bool, expr: Box<Expr>, subquery: Box<Query>, span: Span },
    IsNull { negated: bool, expr: Box<Expr>, span: Span },
    Function { name: Ident, args: FunctionArgs, span: Span },
    Case { operand: Option<Box<Expr>>, whens: Vec<(Expr, Expr)>, else_result: Option<Box<Expr>>, span: Span },
    Cast { expr: Box<Expr>, type_name: String, span: Span },
    Collate { expr: Box<Expr>, collation: String, span: Span },
    Subquery { query: Box<Query>, span: Span },
    Exists { negated: bool, query: Box<Query>, span: Span },
    /// Parenthesized expression or row value `(a, b)`.
    Nested { exprs: Vec<Expr>, span: Span },
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::Column { span, .. }
            | Expr::Literal { span, .. }
            | Expr::Unary { span, .. }
            | Expr::Binary { span, .. }
            | Expr::Like { span, .. }
            | Expr::Between { span, .. }
            | Expr::InList { span, .. }
            | Expr::InSubquery { span, .. }
            | Expr::IsNull { span, .. }
            | Expr::Function { span, .. }
            | Expr::Case { span, .. }
            | Expr::Cast { span, .. }
            | Expr::Collate { span, .. }
            | Expr::Subquery { span, .. }
            | Expr::Exists { span, .. }
            | Expr::Nested { span, .. } => *span,
        }
    }

    /// Binding strength of the outermost operator, for parenthesization.
    pub fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Unary { op: UnaryOp::Not, .. } => prec::NOT,
            Expr::Unary { .. } => prec::UNARY,
            Expr::Like { .. } | Expr::Between { .. } | Expr::InList { .. } | Expr::InSubquery { .. } | Expr::IsNull { .. } => {
                prec::EQUALITY
            }
            Expr::Exists { negated: true, .. } => prec::NOT,
            Expr::Collate { .. } => prec::COLLATE,
            _ => prec::ATOM,
        }
    }
}
