//! Hand-built SQL corpus and an independent token-walk extractor.

use std::collections::BTreeSet;

use aubench_core::model::{ColumnDef, Literal, SchemaCatalog, SemanticType, TableDef};
use aubench_core::sql::parse_sql;

pub fn schema() -> SchemaCatalog {
    let t = |name: &str, cols: &[&str]| TableDef::new(name, cols.iter().map(|c| ColumnDef::new(*c, SemanticType::Text)).collect());
    SchemaCatalog::new(
        "corpus",
        vec![
            t("singer", &["Singer_ID", "Name", "Country", "Song_Name", "Age", "Is_male"]),
            t("concert", &["concert_ID", "concert_Name", "Theme", "Stadium_ID", "Year"]),
            t("stadium", &["Stadium_ID", "Location", "Capacity", "Highest", "Average"]),
            t("singer_in_concert", &["concert_ID", "Singer_ID"]),
            t("farm_competition", &["Competition_ID", "Hosts", "Host_Name", "Total_Participants", "Host_city_ID"]),
            t("city", &["City_ID", "Official_Name", "Population", "Area_km_2"]),
        ],
    )
    .unwrap()
}

pub const CORPUS: &[&str] = &[
    "SELECT Name, Country, Age FROM singer",
    "SELECT count(*) FROM singer",
    "SELECT Name FROM singer WHERE Age > 30",
    "SELECT Name FROM singer WHERE Country = 'France' AND Age >= 20",
    "SELECT Host_Name FROM farm_competition WHERE Hosts != 'Fantasy' AND Total_Participants <= 50",
    "SELECT Song_Name FROM singer WHERE Age < 25 ORDER BY Age DESC",
    "SELECT Country, count(*) FROM singer GROUP BY Country",
    "SELECT Country FROM singer GROUP BY Country HAVING count(*) > 2",
    "SELECT Country FROM singer GROUP BY Country HAVING avg(Age) > 30",
    "SELECT avg(Capacity), max(Capacity) FROM stadium",
    "SELECT T1.Name, T2.concert_Name FROM singer AS T1 JOIN singer_in_concert AS T3 ON T1.Singer_ID = T3.Singer_ID JOIN concert AS T2 ON T3.concert_ID = T2.concert_ID",
    "SELECT T2.Location FROM concert AS T1 JOIN stadium AS T2 ON T1.Stadium_ID = T2.Stadium_ID WHERE T1.Year = 2014",
    "SELECT T2.Location, T1.Theme FROM concert AS T1 JOIN stadium AS T2 ON T1.Stadium_ID = T2.Stadium_ID WHERE T1.Year = 2014 OR T1.Year = 2015",
    "SELECT Name FROM singer WHERE Singer_ID IN (SELECT Singer_ID FROM singer_in_concert)",
    "SELECT Name FROM singer WHERE Singer_ID NOT IN (SELECT Singer_ID FROM singer_in_concert WHERE concert_ID = 3)",
    "SELECT Location FROM stadium WHERE Capacity > (SELECT avg(Capacity) FROM stadium)",
    "SELECT concert_Name FROM concert WHERE Year BETWEEN 2010 AND 2015",
    "SELECT Name FROM singer WHERE Country IN ('France', 'Netherlands')",
    "SELECT Name FROM singer WHERE Name LIKE '%Hey%'",
    "SELECT Song_Name FROM singer WHERE Song_Name NOT LIKE 'A%'",
    "SELECT DISTINCT Country FROM singer WHERE Age > 20",
    "SELECT Name, Age FROM singer ORDER BY Age LIMIT 3",
    "SELECT Official_Name FROM city WHERE Population > 1500 OR Population < 500",
    "SELECT Official_Name FROM city WHERE 1500 < Population",
    "SELECT count(DISTINCT Country) FROM singer",
    "SELECT T1.Official_Name FROM city AS T1 JOIN farm_competition AS T2 ON T1.City_ID = T2.Host_city_ID GROUP BY T2.Host_city_ID HAVING count(*) > 1",
    "SELECT T1.Official_Name, T2.Hosts FROM city AS T1 JOIN farm_competition AS T2 ON T1.City_ID = T2.Host_city_ID WHERE T1.Population > 1000",
    "SELECT Hosts FROM farm_competition WHERE Host_city_ID NOT IN (SELECT City_ID FROM city WHERE Area_km_2 < 10)",
    "SELECT Name FROM singer WHERE Age = (SELECT max(Age) FROM singer)",
    "SELECT Country FROM singer WHERE Age > 40 INTERSECT SELECT Country FROM singer WHERE Age < 30",
    "SELECT Theme, count(*) FROM concert GROUP BY Theme ORDER BY count(*) DESC LIMIT 1",
    "SELECT s.Name FROM singer s WHERE s.Is_male = 'T'",
    "SELECT sg.Name FROM singer AS sg JOIN singer_in_concert AS sic ON sg.Singer_ID = sic.Singer_ID WHERE sic.concert_ID = 2 ORDER BY sg.Age",
    "SELECT Year, count(*) FROM concert WHERE Year >= 2014 GROUP BY Year",
    "SELECT Location, Highest FROM stadium WHERE Average > 5000 AND Capacity <> 10000",
    "SELECT Location FROM stadium EXCEPT SELECT T2.Location FROM concert AS T1 JOIN stadium AS T2 ON T1.Stadium_ID = T2.Stadium_ID WHERE T1.Year = 2014",
    "SELECT Name FROM singer WHERE Age > 30 UNION SELECT Name FROM singer WHERE Country = 'Japan'",
    "SELECT min(Age), max(Age), avg(Age) FROM singer WHERE Country = 'France'",
    "SELECT Song_Name, Age FROM singer WHERE Age > (SELECT avg(Age) FROM singer) ORDER BY Song_Name",
    "SELECT CASE WHEN Age > 30 THEN 'old' ELSE 'young' END FROM singer",
    "SELECT Official_Name FROM city WHERE Population BETWEEN 100 AND 2000 AND Area_km_2 > 5.5",
    "SELECT T1.Theme FROM concert AS T1 WHERE EXISTS (SELECT 1 FROM singer_in_concert AS T9 WHERE T9.concert_ID = T1.concert_ID)",
    "SELECT \"Name\" FROM singer WHERE \"Country\" = 'Spain'",
    "SELECT Name FROM singer WHERE Age <= -1",
    "SELECT count(*) FROM concert WHERE Theme = 'Free choice' AND Stadium_ID = 1",
    "SELECT Total_Participants FROM farm_competition ORDER BY Total_Participants DESC, Hosts ASC",
    "SELECT Name FROM singer WHERE Country = 'United States' ORDER BY Age LIMIT 1",
    "SELECT T1.Official_Name FROM city AS T1 JOIN farm_competition AS T2 ON T1.City_ID = T2.Host_city_ID WHERE T2.Competition_ID IN (1, 2, 3)",
    "SELECT count(*) FROM singer AS T1 JOIN singer_in_concert AS T2 ON T1.Singer_ID = T2.Singer_ID WHERE T1.Age > 25 GROUP BY T2.concert_ID",
    "SELECT 1",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Quoted(String),
    Str(String),
    Num(String),
    Sym(String),
}

fn tokenize(sql: &str) -> Vec<Tok> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '\'' {
            let mut s = String::new();
            i += 1;
            loop {
                if chars[i] == '\'' {
                    if chars.get(i + 1) == Some(&'\'') {
                        s.push('\'');
                        i += 2;
                        continue;
                    }
                    i += 1;
                    break;
                }
                s.push(chars[i]);
                i += 1;
            }
            out.push(Tok::Str(s));
        } else if c == '"' || c == '`' {
            let end = chars[i + 1..].iter().position(|x| *x == c).unwrap() + i + 1;
            out.push(Tok::Quoted(chars[i + 1..end].iter().collect()));
            i = end + 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            out.push(Tok::Num(chars[start..i].iter().collect()));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Word(chars[start..i].iter().collect()));
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            if ["<=", ">=", "!=", "<>", "=="].contains(&two.as_str()) {
                out.push(Tok::Sym(two));
                i += 2;
            } else {
                out.push(Tok::Sym(c.to_string()));
                i += 1;
            }
        }
    }
    out
}

const KEYWORDS: &[&str] = &[
    "select", "from", "where", "and", "or", "not", "join", "inner", "left", "outer", "on", "as", "group", "by", "order",
    "having", "limit", "asc", "desc", "distinct", "in", "between", "like", "is", "null", "union", "intersect", "except",
    "all", "exists", "case", "when", "then", "else", "end", "offset",
];

fn is_kw(t: &Tok, kw: &str) -> bool {
    matches!(t, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
}

fn ident(t: &Tok) -> Option<String> {
    match t {
        Tok::Word(w) if !KEYWORDS.contains(&w.to_ascii_lowercase().as_str()) => Some(w.to_ascii_lowercase()),
        Tok::Quoted(w) => Some(w.to_ascii_lowercase()),
        _ => None,
    }
}

fn sym(t: Option<&Tok>, s: &str) -> bool {
    matches!(t, Some(Tok::Sym(x)) if x == s)
}

struct Scope {
    parent: Option<usize>,
    depth: i32,
    /// alias (or table name) to schema table; `None` for derived tables.
    bindings: Vec<(String, Option<String>)>,
}

#[derive(Debug, Default, PartialEq)]
pub struct OracleOut {
    pub columns: BTreeSet<(String, String)>,
    /// (table, column, op, literal) with numbers rendered as f64 text.
    pub pairs: BTreeSet<(String, String, String, String)>,
}

fn lit_key(t: &[Tok], at: usize) -> Option<(String, usize)> {
    match (t.get(at), t.get(at + 1)) {
        (Some(Tok::Str(s)), _) => Some((format!("t:{s}"), 1)),
        (Some(Tok::Num(n)), _) => Some((format!("n:{}", n.parse::<f64>().unwrap()), 1)),
        (Some(Tok::Sym(m)), Some(Tok::Num(n))) if m == "-" => Some((format!("n:{}", -n.parse::<f64>().unwrap()), 2)),
        _ => None,
    }
}

fn arith(t: Option<&Tok>) -> bool {
    ["+", "-", "*", "/", "||"].iter().any(|s| sym(t, s))
}

fn flip(op: &str) -> &str {
    match op {
        "<" => ">",
        ">" => "<",
        "<=" => ">=",
        ">=" => "<=",
        o => o,
    }
}

fn cmp_op(t: Option<&Tok>) -> Option<&'static str> {
    match t? {
        Tok::Sym(s) => match s.as_str() {
            "=" | "==" => Some("="),
            "!=" | "<>" => Some("!="),
            "<" => Some("<"),
            ">" => Some(">"),
            "<=" => Some("<="),
            ">=" => Some(">="),
            _ => None,
        },
        _ => None,
    }
}

pub fn oracle(sql: &str, schema: &SchemaCatalog) -> OracleOut {
    let t = tokenize(sql);
    let has_col = |table: &str, col: &str| {
        schema.table(table).or_else(|| schema.tables().iter().find(|x| x.name.eq_ignore_ascii_case(table))).is_some_and(|tbl| tbl.columns.iter().any(|c| c.name.eq_ignore_ascii_case(col)))
    };
    let is_table = |w: &str| schema.tables().iter().any(|x| x.name.eq_ignore_ascii_case(w));

    // pass A: scopes, clause of every token, and FROM bindings
    let mut scopes: Vec<Scope> = Vec::new();
    let mut scope_of = vec![usize::MAX; t.len()];
    let mut clause_of = vec![String::new(); t.len()];
    let mut binding_tok = vec![false; t.len()];
    let mut stack: Vec<usize> = Vec::new();
    let mut clause: Vec<String> = Vec::new();
    let mut depth = 0;
    let mut i = 0;
    while i < t.len() {
        if sym(t.get(i), "(") {
            depth += 1;
        } else if sym(t.get(i), ")") {
            depth -= 1;
            while stack.last().is_some_and(|s| scopes[*s].depth > depth) {
                stack.pop();
                clause.pop();
            }
        }
        if is_kw(&t[i], "select") {
            if stack.last().is_some_and(|s| scopes[*s].depth == depth) {
                stack.pop();
                clause.pop();
            }
            scopes.push(Scope { parent: stack.last().copied(), depth, bindings: Vec::new() });
            stack.push(scopes.len() - 1);
            clause.push("select".into());
        }
        let Some(&cur) = stack.last() else {
            i += 1;
            continue;
        };
        let at_depth = scopes[cur].depth == depth;
        if at_depth {
            for kw in ["from", "where", "group", "having", "order", "limit", "on"] {
                if is_kw(&t[i], kw) {
                    *clause.last_mut().unwrap() = kw.into();
                }
            }
            if is_kw(&t[i], "join") {
                *clause.last_mut().unwrap() = "from".into();
            }
        }
        scope_of[i] = cur;
        clause_of[i] = clause.last().cloned().unwrap_or_default();
        let starts_from_item = at_depth
            && (is_kw(&t[i], "from") || is_kw(&t[i], "join") || (sym(t.get(i), ",") && clause.last().is_some_and(|c| c == "from")));
        if starts_from_item {
            let j = i + 1;
            if sym(t.get(j), "(") {
                // derived table: skip to the matching paren, then its alias
                let mut d = 0;
                let mut k = j;
                loop {
                    if sym(t.get(k), "(") {
                        d += 1;
                    } else if sym(t.get(k), ")") {
                        d -= 1;
                        if d == 0 {
                            break;
                        }
                    }
                    k += 1;
                }
                let a = if is_kw(&t[k + 1], "as") { k + 2 } else { k + 1 };
                if let Some(alias) = t.get(a).and_then(ident) {
                    scopes[cur].bindings.push((alias, None));
                    binding_tok[a] = true;
                }
            } else if let Some(name) = t.get(j).and_then(ident).filter(|n| is_table(n)) {
                binding_tok[j] = true;
                let a = if t.get(j + 1).is_some_and(|x| is_kw(x, "as")) { j + 2 } else { j + 1 };
                match t.get(a).and_then(ident) {
                    Some(alias) => {
                        binding_tok[a] = true;
                        scopes[cur].bindings.push((alias, Some(name)));
                    }
                    None => scopes[cur].bindings.push((name.clone(), Some(name))),
                }
            }
        }
        i += 1;
    }

    let visible = |s: usize| {
        let mut out = Vec::new();
        let mut cur = Some(s);
        while let Some(c) = cur {
            out.extend(scopes[c].bindings.iter().cloned());
            cur = scopes[c].parent;
        }
        out
    };

    // pass B: columns and their literal comparisons
    let mut out = OracleOut::default();
    let mut i = 0;
    while i < t.len() {
        let Some(word) = ident(&t[i]) else {
            i += 1;
            continue;
        };
        if binding_tok[i] || sym(t.get(i + 1), "(") || (i > 0 && is_kw(&t[i - 1], "as")) || scope_of[i] == usize::MAX {
            i += 1;
            continue;
        }
        let scope = scope_of[i];
        let (table, col, first, last) = if sym(t.get(i + 1), ".") {
            let col = ident(&t[i + 2]).unwrap();
            let table = visible(scope).into_iter().find(|(a, _)| *a == word).and_then(|(_, tbl)| tbl);
            (table, col, i, i + 2)
        } else {
            let table = visible(scope).into_iter().filter_map(|(_, tbl)| tbl).find(|tbl| has_col(tbl, &word));
            (table, word, i, i)
        };
        i = last + 1;
        let Some(table) = table else { continue };
        if clause_of[first] == "on" {
            continue;
        }
        let key = |tbl: &str, c: &str| {
            let td = schema.tables().iter().find(|x| x.name.eq_ignore_ascii_case(tbl)).unwrap();
            let cd = td.columns.iter().find(|x| x.name.eq_ignore_ascii_case(c)).unwrap();
            (td.name.to_ascii_lowercase(), cd.name.to_ascii_lowercase())
        };
        let (tk, ck) = key(&table, &col);
        out.columns.insert((tk.clone(), ck.clone()));
        let mut push = |op: &str, lit: String| {
            out.pairs.insert((tk.clone(), ck.clone(), op.to_string(), lit));
        };
        let n = last + 1;
        let negated = t.get(n).is_some_and(|x| is_kw(x, "not"));
        let m = if negated { n + 1 } else { n };
        if arith(t.get(n)) || (first > 0 && arith(t.get(first - 1))) {
            continue;
        }
        if let Some(op) = cmp_op(t.get(n)) {
            if let Some((lit, len)) = lit_key(&t, n + 1) {
                if !arith(t.get(n + 1 + len)) {
                    push(op, lit);
                }
            }
        } else if t.get(m).is_some_and(|x| is_kw(x, "like")) {
            if let Some((lit, _)) = lit_key(&t, m + 1) {
                push(if negated { "NOT LIKE" } else { "LIKE" }, lit);
            }
        } else if t.get(m).is_some_and(|x| is_kw(x, "between")) {
            let op = if negated { "NOT BETWEEN" } else { "BETWEEN" };
            if let Some((lo, len)) = lit_key(&t, m + 1) {
                push(op, lo);
                if let Some((hi, _)) = lit_key(&t, m + 2 + len) {
                    push(op, hi);
                }
            }
        } else if t.get(m).is_some_and(|x| is_kw(x, "in")) && sym(t.get(m + 1), "(") && !t.get(m + 2).is_some_and(|x| is_kw(x, "select")) {
            let op = if negated { "NOT IN" } else { "IN" };
            let mut k = m + 2;
            while let Some((lit, len)) = lit_key(&t, k) {
                push(op, lit);
                k += len;
                if !sym(t.get(k), ",") {
                    break;
                }
                k += 1;
            }
        }
        // literal on the left
        if first >= 2 {
            if let Some(op) = cmp_op(t.get(first - 1)) {
                let lit = if first >= 3 && sym(t.get(first - 3), "-") { lit_key(&t, first - 3) } else { lit_key(&t, first - 2) };
                let start = if first >= 3 && sym(t.get(first - 3), "-") { first - 3 } else { first - 2 };
                if let Some((lit, _)) = lit {
                    if start == 0 || !arith(t.get(start - 1)) {
                        push(flip(op), lit);
                    }
                }
            }
        }
    }
    out
}

fn literal_key(l: &Literal) -> String {
    match l {
        Literal::Text(s) => format!("t:{s}"),
        Literal::Number(n) => format!("n:{}", n.parse::<f64>().unwrap()),
        Literal::Null => "null".into(),
    }
}

pub fn parser_out(sql: &str, schema: &SchemaCatalog) -> OracleOut {
    let s = parse_sql(sql, schema).unwrap_or_else(|e| panic!("{sql}: {e}"));
    OracleOut {
        columns: s.referenced_columns.iter().map(|c| (c.table.to_ascii_lowercase(), c.column.to_ascii_lowercase())).collect(),
        pairs: s
            .column_value_pairs
            .iter()
            .map(|p| (p.column.table.to_ascii_lowercase(), p.column.column.to_ascii_lowercase(), p.op.symbol().to_string(), literal_key(&p.value)))
            .collect(),
    }
}

pub fn corpus() -> Vec<&'static str> {
    CORPUS.to_vec()
}
