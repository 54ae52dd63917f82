//! Name normalization shared by schema indexing, retrieval and every
//! mechanical check that compares surface forms.
//!
//! The rule set is closed and fixed:
//!
//! 1. camel-case boundaries (`paymentDate`, `HTTPServer`) become spaces;
//! 2. text is lowercased and split on whitespace, `_` and `-`;
//! 3. `#` and the token `no.` become `number`;
//! 4. remaining non-alphanumeric characters are dropped from each token;
//! 5. one trailing plural suffix is stripped per token;
//! 6. `identifier` / `identity` become `id`.
//!
//! Token order is preserved. Order-insensitive comparison goes through
//! [`token_multiset`].

use std::collections::BTreeMap;

/// Normalizes a schema name or free-text phrase.
///
/// The function is idempotent and total; an input consisting only of
/// separators normalizes to the empty string.
pub fn normalize_name(raw: &str) -> String {
    normalized_tokens(raw).join(" ")
}

/// Normalized tokens of `raw`, in their original order.
pub fn normalized_tokens(raw: &str) -> Vec<String> {
    surface_words(raw)
        .into_iter()
        .flat_map(|word| canonical_word(&word))
        .collect()
}

/// Lowercased words of `raw` after camel-case and separator splitting, with
/// no plural or synonym folding. Used when a phrase has to be rebuilt in a
/// human-readable form.
pub fn surface_words(raw: &str) -> Vec<String> {
    let spaced = split_camel_case(raw);
    spaced
        .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// Multiset of normalized tokens, used for order-insensitive comparison.
pub fn token_multiset(raw: &str) -> BTreeMap<String, usize> {
    let mut bag = BTreeMap::new();
    for token in normalized_tokens(raw) {
        *bag.entry(token).or_insert(0) += 1;
    }
    bag
}

/// Order-insensitive key: the sorted normalized tokens joined by spaces.
pub fn token_key(raw: &str) -> String {
    let mut tokens = normalized_tokens(raw);
    tokens.sort();
    tokens.join(" ")
}

/// Whether two phrases denote the same name once case, separators, plural
/// forms and token order are ignored.
pub fn same_name(a: &str, b: &str) -> bool {
    token_key(a) == token_key(b)
}

/// Number of (possibly overlapping) occurrences of `phrase` as a contiguous
/// run inside `tokens`. Both sides are compared in normalized form; an empty
/// phrase occurs zero times.
pub fn count_phrase(tokens: &[String], phrase: &str) -> usize {
    let needle = normalized_tokens(phrase);
    if needle.is_empty() || needle.len() > tokens.len() {
        return 0;
    }
    tokens.windows(needle.len()).filter(|w| *w == needle.as_slice()).count()
}

/// Token offset of every occurrence of `phrase` in `tokens`.
pub fn phrase_positions(tokens: &[String], phrase: &str) -> Vec<usize> {
    let needle = normalized_tokens(phrase);
    if needle.is_empty() || needle.len() > tokens.len() {
        return Vec::new();
    }
    tokens
        .windows(needle.len())
        .enumerate()
        .filter(|(_, w)| *w == needle.as_slice())
        .map(|(i, _)| i)
        .collect()
}

/// Whether `phrase` occurs in `text` after normalization.
pub fn contains_phrase(text: &str, phrase: &str) -> bool {
    count_phrase(&normalized_tokens(text), phrase) > 0
}

/// Multiset Jaccard overlap of normalized tokens: shared count over union
/// count. Two empty phrases score 1.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let (x, y) = (token_multiset(a), token_multiset(b));
    let mut shared = 0usize;
    let mut union = 0usize;
    for (token, &n) in &x {
        let m = y.get(token).copied().unwrap_or(0);
        shared += n.min(m);
        union += n.max(m);
    }
    union += y.iter().filter(|(t, _)| !x.contains_key(*t)).map(|(_, &n)| n).sum::<usize>();
    if union == 0 {
        return 1.0;
    }
    shared as f64 / union as f64
}

/// A whitespace-delimited chunk of free text with its normalized tokens.
/// `start..end` excludes leading and trailing punctuation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextWord {
    pub start: usize,
    pub end: usize,
    pub tokens: Vec<String>,
}

/// Chunks of `text` that carry at least one normalized token.
pub fn text_words(text: &str) -> Vec<TextWord> {
    let mut out = Vec::new();
    let mut offset = 0;
    for chunk in text.split_inclusive(char::is_whitespace) {
        let body = chunk.trim_end();
        let lead = body.len() - body.trim_start_matches(|c: char| !c.is_alphanumeric() && c != '#').len();
        let core = body.trim_start_matches(|c: char| !c.is_alphanumeric() && c != '#');
        let core = core.trim_end_matches(|c: char| !c.is_alphanumeric());
        let tokens = normalized_tokens(core);
        if !tokens.is_empty() {
            out.push(TextWord { start: offset + lead, end: offset + lead + core.len(), tokens });
        }
        offset += chunk.len();
    }
    out
}

fn split_camel_case(raw: &str) -> String {
    let chars: Vec<char> = raw.chars().collect();
    let mut out = String::with_capacity(raw.len() + 8);
    for (i, &c) in chars.iter().enumerate() {
        if i > 0 && c.is_uppercase() {
            let prev = chars[i - 1];
            let next_is_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if prev.is_lowercase() || prev.is_ascii_digit() || (prev.is_uppercase() && next_is_lower) {
                out.push(' ');
            }
        }
        if c == '#' {
            out.push_str(" number ");
            continue;
        }
        out.push(c);
    }
    out
}

/// Maps one lowercased word to zero or more normalized tokens.
fn canonical_word(word: &str) -> Vec<String> {
    if word == "no." || word == "number" {
        return vec!["number".to_string()];
    }
    // Punctuation inside a word separates tokens ("u.s." stays one token,
    // "a/b" becomes two).
    let mut tokens = Vec::new();
    for piece in word.split(['/', ',', ';', ':']) {
        let cleaned: String = piece.chars().filter(|c| c.is_alphanumeric()).collect();
        if cleaned.is_empty() {
            continue;
        }
        tokens.push(canonical_token(&strip_plural(&cleaned)));
    }
    tokens
}

fn canonical_token(token: &str) -> String {
    match token {
        "identifier" | "identity" | "ids" => "id".to_string(),
        // token-level forms of "no." reaching here (via "#")
        "numbers" => "number".to_string(),
        _ => token.to_string(),
    }
}

/// Strips one English plural suffix. The stripped form never ends in a
/// strippable suffix again, which keeps normalization idempotent.
fn strip_plural(token: &str) -> String {
    let n = token.chars().count();
    if !token.is_ascii() || n <= 3 {
        return token.to_string();
    }
    if let Some(stem) = token.strip_suffix("ies") {
        return format!("{stem}y");
    }
    for suffix in ["sses", "shes", "ches", "xes", "zes"] {
        if token.ends_with(suffix) {
            return token[..token.len() - 2].to_string();
        }
    }
    if token.ends_with('s') && !token.ends_with("ss") && !token.ends_with("us") && !token.ends_with("is") {
        return token[..token.len() - 1].to_string();
    }
    token.to_string()
}
