//! Deterministic offline stand-ins for the chat and embedding providers.
//!
//! The simulated provider answers every registered template with simple
//! lexical and lexicon rules. It exists so that the whole pipeline can be
//! recorded and replayed without network access; it is not a model of any
//! real LLM.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::backend::{BackendError, ChatBackend, EmbeddingBackend};
use super::lexicon::{self, concepts_of, CONCEPTS, FAKE_COLUMNS, FAKE_THRESHOLDS, FAKE_VALUES};
use super::payload::{Attempt, CandidateList, PivotBrief, PivotProposal, QueryProposal, TermList, TextReply, Verdict};
use super::templates as t;
use super::GatewayRequest;
use crate::normalize::{jaccard, normalize_name, normalized_tokens, same_name, surface_words, text_words};

pub const LEXICON_DIMENSION: usize = 64;

fn seed_of(label: &str) -> u64 {
    let digest = Sha256::digest(label.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 8 bytes"))
}

fn unit_vector(label: &str) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_of(label));
    let mut v: Vec<f32> = (0..LEXICON_DIMENSION).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Bag-of-concepts embedder: tokens in the same lexicon concept share a
/// dominant direction, other tokens get near-orthogonal hashed directions.
#[derive(Debug, Default, Clone)]
pub struct LexiconEmbedder;

impl LexiconEmbedder {
    pub fn new() -> Self {
        Self
    }

    pub fn vector(text: &str) -> Vec<f32> {
        let tokens = normalized_tokens(text);
        let mut v = vec![0f32; LEXICON_DIMENSION];
        let mut add = |u: Vec<f32>, w: f32| v.iter_mut().zip(u).for_each(|(a, b)| *a += w * b);
        for token in &tokens {
            match lexicon::concept_of_token(token) {
                Some(c) => {
                    add(unit_vector(&format!("concept:{}", c.label)), 1.0);
                    add(unit_vector(&format!("token:{token}")), 0.25);
                }
                None => add(unit_vector(&format!("token:{token}")), 1.0),
            }
        }
        let joined = tokens.join(" ");
        for c in CONCEPTS {
            if c.umbrella.iter().any(|u| normalize_name(u) == joined) {
                add(unit_vector(&format!("concept:{}", c.label)), 1.0);
            }
        }
        if tokens.is_empty() {
            add(unit_vector(&format!("raw:{text}")), 1.0);
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingBackend for LexiconEmbedder {
    fn name(&self) -> &str {
        "lexicon:64"
    }

    fn dimension(&self) -> usize {
        LEXICON_DIMENSION
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        Ok(texts.iter().map(|t| Self::vector(t)).collect())
    }
}

/// Rule-based chat backend.
pub struct SimulatedProvider {
    name: String,
}

impl SimulatedProvider {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into() }
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("simulated replies serialize")
}

fn list(r: &GatewayRequest, name: &str) -> Vec<String> {
    r.json_variable(name).unwrap_or_default()
}

fn var<'a>(r: &'a GatewayRequest, name: &str) -> &'a str {
    r.variable(name).unwrap_or("")
}

fn token_set(s: &str) -> BTreeSet<String> {
    normalized_tokens(s).into_iter().collect()
}

/// Rebuilds a phrase from `source`'s words whose normalized token is in
/// `tokens`, lowercasing everything but acronyms.
fn phrase_from(source: &str, tokens: &[String]) -> String {
    let mut words = Vec::new();
    let originals: Vec<&str> = source
        .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
        .filter(|w| !w.is_empty())
        .collect();
    for token in tokens {
        let found = originals.iter().find(|w| normalized_tokens(w).contains(token));
        let word = match found {
            Some(w) if w.len() > 1 && w.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit()) => w.to_string(),
            Some(w) if normalized_tokens(w).len() == 1 => w.to_lowercase(),
            _ => surface_words(token).join(" "),
        };
        words.push(word);
    }
    words.join(" ")
}

struct Taken {
    names: Vec<String>,
}

impl Taken {
    fn from(r: &GatewayRequest) -> Self {
        let mut names = list(r, "exclusions");
        names.extend(list(r, "columns"));
        names.extend(list(r, "values"));
        let history: Vec<Attempt> = r.json_variable("history").unwrap_or_default();
        names.extend(history.into_iter().map(|a| a.candidate));
        Self { names }
    }

    fn allows(&self, candidate: &str) -> bool {
        !normalize_name(candidate).is_empty() && !self.names.iter().any(|n| normalize_name(n) == normalize_name(candidate))
    }
}

fn shared_token_proposal(target: &str, group: &[String], taken: &Taken) -> PivotProposal {
    let target_tokens: Vec<String> = {
        let mut seen = BTreeSet::new();
        normalized_tokens(target).into_iter().filter(|t| seen.insert(t.clone())).collect()
    };
    let member_sets: Vec<BTreeSet<String>> = group.iter().map(|m| token_set(m)).collect();
    let mut candidates: Vec<Vec<String>> = Vec::new();
    for set in &member_sets {
        let shared: Vec<String> = target_tokens.iter().filter(|t| set.contains(*t)).cloned().collect();
        if !shared.is_empty() && !candidates.contains(&shared) {
            candidates.push(shared);
        }
    }
    for token in &target_tokens {
        let single = vec![token.clone()];
        if member_sets.iter().any(|s| s.contains(token)) && !candidates.contains(&single) {
            candidates.push(single);
        }
    }
    let support = |c: &Vec<String>| member_sets.iter().filter(|s| c.iter().all(|t| s.contains(t))).count();
    candidates.sort_by(|a, b| support(b).cmp(&support(a)).then(b.len().cmp(&a.len())));
    for tokens in candidates {
        let term = phrase_from(target, &tokens);
        if !taken.allows(&term) {
            continue;
        }
        let members = group
            .iter()
            .zip(&member_sets)
            .filter(|(_, s)| tokens.iter().all(|t| s.contains(t)))
            .map(|(m, _)| m.clone())
            .collect();
        return PivotProposal { term, group: members, reason: "shares wording with several candidates".into() };
    }
    PivotProposal { term: String::new(), group: Vec::new(), reason: "no shared wording left to use".into() }
}

fn concept_proposal(target: &str, group: &[String], taken: &Taken) -> PivotProposal {
    for label in concepts_of(target) {
        let members: Vec<String> = group.iter().filter(|m| concepts_of(m).contains(&label)).cloned().collect();
        if members.is_empty() {
            continue;
        }
        let concept = lexicon::concept(label).expect("label comes from the lexicon");
        if let Some(term) = concept.umbrella.iter().find(|u| taken.allows(u)) {
            return PivotProposal { term: term.to_string(), group: members, reason: format!("all relate to {label}") };
        }
    }
    PivotProposal { term: String::new(), group: Vec::new(), reason: "no related meaning found".into() }
}

fn rotation(r: &GatewayRequest) -> usize {
    seed_of(&format!("{}|{}", var(r, "target"), var(r, "question"))) as usize
}

fn invented_proposal(pool: &[&str], r: &GatewayRequest, taken: &Taken, existing: &[String]) -> PivotProposal {
    let start = rotation(r) % pool.len();
    for i in 0..pool.len() {
        let term = pool[(start + i) % pool.len()];
        if taken.allows(term) && existing.iter().all(|e| jaccard(e, term) < 0.5) {
            return PivotProposal { term: term.to_string(), group: Vec::new(), reason: "not present in the data".into() };
        }
    }
    PivotProposal { term: String::new(), group: Vec::new(), reason: "ran out of invented names".into() }
}

fn looks_numeric(s: &str) -> bool {
    s.trim().parse::<f64>().is_ok()
}

/// Whether `candidate` can denote `element` under `flavor`.
fn compatible(candidate: &str, element: &str, flavor: &str) -> bool {
    match flavor {
        "semantic" => concepts_of(candidate).iter().any(|c| concepts_of(element).contains(c)),
        _ => {
            let c = token_set(candidate);
            !c.is_empty() && c.is_subset(&token_set(element))
        }
    }
}

fn flavor_of(mode: &str) -> &str {
    if mode.starts_with("val_amb") {
        "value"
    } else if mode.ends_with(":semantic") {
        "semantic"
    } else {
        "lexical"
    }
}

fn judge_pivot(r: &GatewayRequest) -> String {
    let mode = var(r, "mode");
    let candidate = var(r, "candidate");
    let target = var(r, "target");
    let group = list(r, "group");
    let mut existing = list(r, "columns");
    existing.extend(list(r, "values"));
    let mut out = std::collections::BTreeMap::new();

    let validity = if normalize_name(candidate).is_empty() {
        Verdict::fail("empty term")
    } else if surface_words(candidate).len() > 5 {
        Verdict::fail("term is too long to be a natural reference")
    } else if let Some(hit) = existing.iter().find(|e| same_name(e, candidate)) {
        Verdict::fail(format!("exact match with \"{hit}\""))
    } else {
        Verdict::pass()
    };
    out.insert("pivot_validity".to_string(), validity);

    let unanswerable = mode.contains("unans");
    let dissimilar = if let Some(hit) = std::iter::once(target.to_string()).chain(group.clone()).find(|m| same_name(m, candidate)) {
        Verdict::fail(format!("copies \"{hit}\""))
    } else if unanswerable {
        match existing.iter().find(|e| jaccard(e, candidate) >= 0.5) {
            Some(hit) => Verdict::fail(format!("too close to existing \"{hit}\"")),
            None => Verdict::pass(),
        }
    } else {
        Verdict::pass()
    };
    out.insert("pivot_dissimilarity_all".to_string(), dissimilar);

    if !unanswerable {
        let flavor = flavor_of(mode);
        let fits_target = compatible(candidate, target, flavor);
        let fits_member = group.iter().any(|m| compatible(candidate, m, flavor));
        let v = if fits_target && fits_member {
            Verdict::pass()
        } else if !fits_target {
            Verdict::fail(format!("\"{candidate}\" does not suggest \"{target}\""))
        } else {
            Verdict::fail(format!("\"{candidate}\" fits no other candidate"))
        };
        out.insert("pivot_term_for_target_group".to_string(), v);
    }
    json(&out)
}

/// Byte range in `question` that mentions `brief.target`, if any.
fn mention_span(question: &str, brief: &PivotBrief) -> Option<(usize, usize)> {
    let words = text_words(question);
    let wanted = normalized_tokens(&brief.target);
    if wanted.is_empty() {
        return None;
    }
    if brief.kind == "value" {
        for i in 0..words.len() {
            let mut acc: Vec<String> = Vec::new();
            for j in i..words.len() {
                acc.extend(words[j].tokens.iter().cloned());
                if acc == wanted {
                    return Some((words[i].start, words[j].end));
                }
                if acc.len() >= wanted.len() {
                    break;
                }
            }
        }
        return None;
    }
    let wanted: BTreeSet<String> = wanted.into_iter().collect();
    let mut best: Option<(usize, usize, usize)> = None;
    for i in 0..words.len() {
        let mut covered = BTreeSet::new();
        for word in &words[i..] {
            if !word.tokens.iter().all(|t| wanted.contains(t)) {
                break;
            }
            covered.extend(word.tokens.iter().cloned());
        }
        let len = words[i..].iter().take_while(|w| w.tokens.iter().all(|t| wanted.contains(t))).count();
        if len > 0 && best.is_none_or(|(n, _, _)| covered.len() > n) {
            best = Some((covered.len(), words[i].start, words[i + len - 1].end));
        }
    }
    best.map(|(_, s, e)| (s, e))
}

fn rewrite(r: &GatewayRequest) -> String {
    let question = var(r, "question");
    let pivots: Vec<PivotBrief> = r.json_variable("pivots").unwrap_or_default();
    let mut spans: Vec<((usize, usize), &str)> = Vec::new();
    for p in &pivots {
        let Some(span) = mention_span(question, p) else { continue };
        if spans.iter().any(|((s, e), _)| span.0 < *e && *s < span.1) {
            continue;
        }
        spans.push((span, p.term.as_str()));
    }
    spans.sort_by_key(|((s, _), _)| std::cmp::Reverse(*s));
    let mut out = question.to_string();
    for ((s, e), term) in spans {
        out.replace_range(s..e, term);
    }
    json(&QueryProposal { query: out })
}

fn interpretations(pivots: &[PivotBrief]) -> Vec<String> {
    pivots.iter().flat_map(|p| std::iter::once(p.target.clone()).chain(p.group.clone())).collect()
}

fn judge_query(r: &GatewayRequest) -> String {
    let mode = var(r, "mode");
    let question = var(r, "question");
    let rewritten = var(r, "rewrite");
    let pivots: Vec<PivotBrief> = r.json_variable("pivots").unwrap_or_default();
    let mut out = std::collections::BTreeMap::new();
    let leaked = if mode.contains("unans") {
        None
    } else {
        interpretations(&pivots).into_iter().find(|name| crate::normalize::contains_phrase(rewritten, name))
    };
    let validity = match leaked {
        Some(name) => Verdict::fail(format!("query context implicitly resolves the ambiguity via \"{name}\"")),
        None if normalize_name(rewritten) == normalize_name(question) => Verdict::fail("the query was not changed"),
        None => Verdict::pass(),
    };
    out.insert("validity".to_string(), validity);

    let mut remaining = crate::normalize::token_multiset(rewritten);
    for p in &pivots {
        for token in normalized_tokens(&p.term) {
            if let Some(n) = remaining.get_mut(&token) {
                *n -= 1;
            }
        }
    }
    let original = crate::normalize::token_multiset(question);
    let extra: Vec<String> = remaining
        .iter()
        .filter(|(t, n)| **n > original.get(*t).copied().unwrap_or(0))
        .map(|(t, _)| t.clone())
        .collect();
    let consistency = if extra.is_empty() {
        Verdict::pass()
    } else {
        Verdict::fail(format!("introduces wording not in the original: {}", extra.join(", ")))
    };
    out.insert("consistency".to_string(), consistency);
    json(&out)
}

const LEAD_INS: &[&str] = &["", "Quick check before I write the query. ", "Happy to help. ", "I want to get this right. "];

fn clarify(r: &GatewayRequest) -> String {
    let draft = var(r, "draft");
    let lead = LEAD_INS[(seed_of(draft) as usize) % LEAD_INS.len()];
    json(&TextReply { text: format!("{lead}{draft}") })
}

fn quoted(text: &str) -> Vec<String> {
    text.split('"').skip(1).step_by(2).map(str::to_string).collect()
}

fn detect_terms(r: &GatewayRequest) -> String {
    let conversation = var(r, "conversation");
    let user = conversation.lines().find_map(|l| l.strip_prefix("USER: ")).unwrap_or("");
    let agent = conversation.lines().find_map(|l| l.strip_prefix("AGENT: ")).unwrap_or("");
    let mut terms: Vec<String> = Vec::new();
    for q in quoted(agent) {
        if crate::normalize::contains_phrase(user, &q) && !terms.iter().any(|t| same_name(t, &q)) {
            terms.push(q);
        }
    }
    json(&TermList { terms })
}

fn overlap(r: &GatewayRequest) -> String {
    let detected = list(r, "detected");
    let expected = list(r, "expected");
    let missing: Vec<&String> = expected
        .iter()
        .filter(|e| !detected.iter().any(|d| same_name(d, e) || jaccard(d, e) >= 0.5))
        .collect();
    let v = if missing.is_empty() {
        Verdict::pass()
    } else {
        Verdict::fail(format!("not detected: {}", missing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")))
    };
    json(&v)
}

fn screen_case(r: &GatewayRequest) -> String {
    let case_id = var(r, "case_id");
    let pivots: Vec<PivotBrief> = r.json_variable("pivots").unwrap_or_default();
    let mut elements = list(r, "columns");
    elements.extend(list(r, "values"));
    let conversation = var(r, "conversation");
    let user = conversation.lines().find_map(|l| l.strip_prefix("USER: ")).unwrap_or("");
    let v = match case_id {
        "maps_to_multiple" => {
            let weak: Vec<&str> = pivots
                .iter()
                .filter(|p| {
                    let count = std::iter::once(&p.target)
                        .chain(&p.group)
                        .filter(|m| elements.iter().any(|e| same_name(e, m)))
                        .count();
                    count < 2
                })
                .map(|p| p.term.as_str())
                .collect();
            if weak.is_empty() {
                Verdict::pass()
            } else {
                Verdict::fail(format!("weak ambiguity signal for {}", weak.join(", ")))
            }
        }
        "no_pre_resolution" => match interpretations(&pivots).into_iter().find(|n| crate::normalize::contains_phrase(user, n)) {
            Some(n) => Verdict::fail(format!("\"{n}\" is already named before clarification")),
            None => Verdict::pass(),
        },
        "maps_to_nothing" => {
            match pivots.iter().find(|p| elements.iter().any(|e| same_name(e, &p.term) || jaccard(e, &p.term) >= 0.5)) {
                Some(p) => Verdict::fail(format!("\"{}\" resembles something in the database", p.term)),
                None => Verdict::pass(),
            }
        }
        _ => Verdict::pass(),
    };
    json(&v)
}

fn retrieve(r: &GatewayRequest) -> String {
    let target = var(r, "target");
    let flavor = var(r, "flavor");
    let space = list(r, "space");
    let group = space
        .into_iter()
        .filter(|m| !same_name(m, target))
        .filter(|m| match flavor {
            "semantic" => jaccard(m, target) < 0.34 && concepts_of(m).iter().any(|c| concepts_of(target).contains(c)),
            _ => token_set(m).intersection(&token_set(target)).next().is_some(),
        })
        .collect();
    json(&CandidateList { group })
}

fn match_judge(r: &GatewayRequest) -> String {
    let predicted = list(r, "predicted");
    let expected = list(r, "expected");
    let ok = expected.iter().all(|e| predicted.iter().any(|p| same_name(p, e)));
    json(&if ok { Verdict::pass() } else { Verdict::fail("some reference elements are missing") })
}

impl ChatBackend for SimulatedProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, r: &GatewayRequest, _prompt: &str) -> Result<String, BackendError> {
        let taken = || Taken::from(r);
        let reply = match r.template_id() {
            t::PIVOT_LEXICAL => json(&shared_token_proposal(var(r, "target"), &list(r, "group"), &taken())),
            t::PIVOT_VALUE => json(&shared_token_proposal(var(r, "target"), &list(r, "group"), &taken())),
            t::PIVOT_SEMANTIC => json(&concept_proposal(var(r, "target"), &list(r, "group"), &taken())),
            t::PIVOT_UNANS_COLUMN => json(&invented_proposal(FAKE_COLUMNS, r, &taken(), &list(r, "columns"))),
            t::PIVOT_UNANS_VALUE => {
                let pool = if looks_numeric(var(r, "target")) { FAKE_THRESHOLDS } else { FAKE_VALUES };
                json(&invented_proposal(pool, r, &taken(), &list(r, "values")))
            }
            t::PIVOT_JUDGE => judge_pivot(r),
            t::QUERY_REWRITE => rewrite(r),
            t::QUERY_JUDGE => judge_query(r),
            t::CONVERSATION_CLARIFY => clarify(r),
            t::CONVERSATION_REPLY => json(&TextReply { text: var(r, "draft").to_string() }),
            t::SCREEN_TERMS => detect_terms(r),
            t::SCREEN_OVERLAP => overlap(r),
            t::SCREEN_CASE => screen_case(r),
            t::RETRIEVE_GROUP => retrieve(r),
            t::EVAL_MATCH => match_judge(r),
            other => return Err(BackendError::Permanent(format!("simulated provider has no rule for `{other}`"))),
        };
        Ok(reply)
    }
}
