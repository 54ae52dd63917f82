use super::ast::Span;
use super::SqlError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    /// Bare word: identifier or keyword, original spelling.
    Word(String),
    /// Quoted identifier with its opening quote character.
    QuotedIdent(String, char),
    /// Single-quoted string literal, unescaped.
    Str(String),
    Number(String),
    Op(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

impl Token {
    pub fn is_word(&self, keyword: &str) -> bool {
        matches!(&self.kind, TokenKind::Word(w) if w.eq_ignore_ascii_case(keyword))
    }

    pub fn is_op(&self, op: &str) -> bool {
        matches!(&self.kind, TokenKind::Op(o) if *o == op)
    }
}

const OPERATORS: [&str; 26] = [
    "||", "<=", ">=", "<>", "!=", "==", "<<", ">>", "=", "<", ">", "+", "-", "*", "/", "%", "(", ")", ",", ".", ";",
    "&", "|", "~", "?", ":",
];

pub fn tokenize(sql: &str) -> Result<Vec<Token>, SqlError> {
    let bytes = sql.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            let close = sql[i + 2..]
                .find("*/")
                .ok_or_else(|| SqlError::syntax(i, "unterminated comment"))?;
            i += close + 4;
            continue;
        }
        let start = i;
        let kind = match c {
            b'\'' => {
                let (value, end) = quoted(sql, i, b'\'', b'\'')?;
                i = end;
                TokenKind::Str(value)
            }
            b'"' => {
                let (value, end) = quoted(sql, i, b'"', b'"')?;
                i = end;
                TokenKind::QuotedIdent(value, '"')
            }
            b'`' => {
                let (value, end) = quoted(sql, i, b'`', b'`')?;
                i = end;
                TokenKind::QuotedIdent(value, '`')
            }
            b'[' => {
                let close = sql[i + 1..]
                    .find(']')
                    .ok_or_else(|| SqlError::syntax(i, "unterminated bracket identifier"))?;
                let value = sql[i + 1..i + 1 + close].to_string();
                i += close + 2;
                TokenKind::QuotedIdent(value, '[')
            }
            b'0'..=b'9' => {
                i = number_end(bytes, i);
                TokenKind::Number(sql[start..i].to_string())
            }
            b'.' if bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                i = number_end(bytes, i);
                TokenKind::Number(sql[start..i].to_string())
            }
            c if c.is_ascii_alphabetic() || c == b'_' || c >= 0x80 => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$' || bytes[i] >= 0x80) {
                    i += 1;
                }
                TokenKind::Word(sql[start..i].to_string())
            }
            _ => {
                let op = OPERATORS
                    .iter()
                    .find(|op| sql[i..].starts_with(**op))
                    .ok_or_else(|| SqlError::syntax(i, format!("unexpected character `{}`", sql[i..].chars().next().unwrap_or(' '))))?;
                i += op.len();
                TokenKind::Op(op)
            }
        };
        tokens.push(Token { kind, span: Span::new(start, i) });
    }
    Ok(tokens)
}

/// Reads a quoted run starting at `start`; a doubled closing quote escapes it.
fn quoted(sql: &str, start: usize, open: u8, close: u8) -> Result<(String, usize), SqlError> {
    debug_assert_eq!(sql.as_bytes()[start], open);
    let bytes = sql.as_bytes();
    let mut out = String::new();
    let mut i = start + 1;
    let mut run_start = i;
    while i < bytes.len() {
        if bytes[i] == close {
            out.push_str(&sql[run_start..i]);
            if bytes.get(i + 1) == Some(&close) {
                out.push(close as char);
                i += 2;
                run_start = i;
                continue;
            }
            return Ok((out, i + 1));
        }
        i += 1;
    }
    Err(SqlError::syntax(start, "unterminated quoted text"))
}

fn number_end(bytes: &[u8], mut i: usize) -> usize {
    if bytes[i] == b'0' && matches!(bytes.get(i + 1), Some(b'x' | b'X')) {
        i += 2;
        while i < bytes.len() && bytes[i].is_ascii_hexdigit() {
            i += 1;
        }
        return i;
    }
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
        let mut j = i + 1;
        if j < bytes.len() && matches!(bytes[j], b'+' | b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            i = j;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    i
}
