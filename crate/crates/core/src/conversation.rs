//! Clarification dialogues built on top of an accepted A/U query.

use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::gateway::payload::TextReply;
use crate::gateway::{templates, Gateway, GatewayError, GatewayRequest, Role};
use crate::model::{Conversation, ConversationType, GroupMember, PivotTerm, SchemaCatalog, Turn};
use crate::normalize::{contains_phrase, normalize_name, normalized_tokens};
use crate::sql::{canonical_sql, substitute, Replacement, SqlStructure};

/// Phrase every refusal turn carries.
pub const REFUSAL_MARKER: &str = "cannot";

const NOT_HELPFUL_REPLIES: &[&str] = &["i don't know", "no idea, just run it", "whatever works", "not sure, you pick"];

#[derive(Debug, Error)]
pub enum ConversationError {
    #[error("conversation needs at least one pivot")]
    NoPivots,
    #[error("the chosen reading does not match any gold SQL: {0}")]
    UnmatchedGold(String),
    #[error("cannot render the chosen reading: {0}")]
    Render(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

pub fn is_refusal(text: &str) -> bool {
    text.to_lowercase().contains(REFUSAL_MARKER)
}

fn quote_list(items: &[String], last_joiner: &str) -> String {
    let quoted: Vec<String> = items.iter().map(|s| format!("\"{s}\"")).collect();
    match quoted.len() {
        0 => String::new(),
        1 => quoted[0].clone(),
        2 => format!("{} {last_joiner} {}", quoted[0], quoted[1]),
        n => format!("{}, {last_joiner} {}", quoted[..n - 1].join(", "), quoted[n - 1]),
    }
}

/// Interpretations in a neutral order so the target is not always listed first.
fn options(p: &PivotTerm) -> Vec<String> {
    let mut out: Vec<String> = p.interpretations().iter().map(GroupMember::surface).collect();
    out.sort_by_key(|s| normalize_name(s));
    out
}

fn ask_one(p: &PivotTerm, first: bool) -> String {
    let opts = options(p);
    let head = if first { format!("When you say \"{}\",", p.surface) } else { format!("Also, for \"{}\",", p.surface) };
    if p.target.mode().is_value() {
        format!("{head} which value of {} do you mean: {}?", p.target.column().column, quote_list(&opts, "or"))
    } else {
        format!("{head} do you mean {}?", quote_list(&opts, "or"))
    }
}

fn missing_one(p: &PivotTerm) -> String {
    if p.target.mode().is_value() {
        format!("the value \"{}\" isn't found in {}", p.surface, p.target.column().column)
    } else {
        format!("the column \"{}\" isn't found in the database", p.surface)
    }
}

/// Raw clarification or refusal turn before LLM rewording.
pub fn clarification_template(pivots: &[PivotTerm]) -> String {
    let unanswerable: Vec<&PivotTerm> = pivots.iter().filter(|p| !p.target.mode().is_ambiguity()).collect();
    if !unanswerable.is_empty() {
        let reasons: Vec<String> = unanswerable.iter().map(|p| missing_one(p)).collect();
        let mut text = format!("Sorry, I {REFUSAL_MARKER} answer this because {}.", reasons.join(" and "));
        for p in pivots.iter().filter(|p| p.target.mode().is_ambiguity()) {
            let _ = write!(text, " Note that \"{}\" could also mean {}.", p.surface, quote_list(&options(p), "or"));
        }
        return text;
    }
    pivots.iter().enumerate().map(|(i, p)| ask_one(p, i == 0)).collect::<Vec<_>>().join(" ")
}

/// Mentions the reworded clarification must keep.
fn required_mentions(pivots: &[PivotTerm]) -> Vec<String> {
    let mut out = Vec::new();
    for p in pivots {
        out.push(p.surface.clone());
        if p.target.mode().is_ambiguity() {
            out.extend(options(p));
        }
    }
    out
}

fn keeps_all(text: &str, mentions: &[String]) -> bool {
    mentions.iter().all(|m| text.contains(m.as_str()) || contains_phrase(text, m))
}

fn reword(llm: &Gateway, template: &str, vars: &[(&str, String)]) -> Result<String, GatewayError> {
    let mut request = GatewayRequest::new(Role::Generator, template)?;
    for (k, v) in vars {
        request = request.var(k, v.clone());
    }
    let reply: TextReply = llm.complete_json(&request)?;
    Ok(reply.text.trim().to_string())
}

/// First agent turn: asks about every pivot, or refuses for unanswerable ones.
pub fn clarification_turn(pivots: &[PivotTerm], llm: &Gateway) -> Result<String, ConversationError> {
    if pivots.is_empty() {
        return Err(ConversationError::NoPivots);
    }
    let draft = clarification_template(pivots);
    let mentions = required_mentions(pivots);
    let text = reword(
        llm,
        templates::CONVERSATION_CLARIFY,
        &[("draft", draft.clone()), ("mentions", serde_json::to_string(&mentions).expect("strings serialize"))],
    )?;
    let refusal_ok = pivots.iter().all(|p| p.target.mode().is_ambiguity()) || is_refusal(&text);
    if keeps_all(&text, &mentions) && refusal_ok {
        Ok(text)
    } else {
        log::debug!("reworded clarification dropped a mention, keeping the template");
        Ok(draft)
    }
}

/// Shortest prefix of a distinctive word of `choice` that no other option
/// shares, e.g. "prod" for "Product Name" against "Customer Name".
pub fn partial_surface(choice: &str, others: &[String]) -> String {
    let words = normalized_tokens(choice);
    let other_words: Vec<Vec<String>> = others.iter().map(|o| normalized_tokens(o)).collect();
    let unique = |prefix: &str| !other_words.iter().flatten().any(|w| w.starts_with(prefix));
    let distinctive = words.iter().position(|w| !other_words.iter().flatten().any(|o| o == w));
    let Some(i) = distinctive else { return words.join(" ") };
    let word = &words[i];
    let chars: Vec<char> = word.chars().collect();
    let mut len = chars.len().min(4);
    while len < chars.len() && !unique(&chars[..len].iter().collect::<String>()) {
        len += 1;
    }
    let mut out = words.clone();
    out[i] = chars[..len].iter().collect();
    out.join(" ")
}

fn user_draft(conversation_type: ConversationType, pivots: &[PivotTerm], picks: &[GroupMember]) -> (String, Vec<String>) {
    let named: Vec<String> = picks.iter().map(GroupMember::surface).collect();
    let single = pivots.len() == 1;
    match conversation_type {
        ConversationType::ConciseHelpful => {
            if single {
                (named[0].clone(), named)
            } else {
                let parts: Vec<String> = pivots.iter().zip(&named).map(|(p, n)| format!("{n} for \"{}\"", p.surface)).collect();
                (parts.join(", "), named)
            }
        }
        ConversationType::VerboseHelpful => {
            let parts: Vec<String> = pivots.iter().zip(&named).map(|(p, n)| format!("by \"{}\" I mean {n}", p.surface)).collect();
            (format!("Sorry for being vague, {}. That is what I need for this question.", parts.join(" and ")), named)
        }
        ConversationType::PartiallyHelpful => {
            let partials: Vec<String> = pivots
                .iter()
                .zip(&named)
                .map(|(p, n)| {
                    let others: Vec<String> = options(p).into_iter().filter(|o| o != n).collect();
                    partial_surface(n, &others)
                })
                .collect();
            (partials.join(" and "), partials)
        }
        ConversationType::NotHelpful => (String::new(), Vec::new()),
    }
}

fn reading_sql(structure: &SqlStructure, pivots: &[PivotTerm], picks: &[GroupMember]) -> Result<String, ConversationError> {
    let reps: Vec<Replacement> = pivots
        .iter()
        .zip(picks)
        .filter_map(|(p, m)| match (m, p.target.value()) {
            (GroupMember::Column(c), None) if c != p.target.column() => {
                Some(Replacement::Column { from: p.target.column().clone(), to: c.clone() })
            }
            (GroupMember::Value(v), Some(from)) if !v.same_value(from) => {
                Some(Replacement::Value { column: p.target.column().clone(), from: from.clone(), to: v.clone() })
            }
            _ => None,
        })
        .collect();
    substitute(structure, &reps).map_err(|e| ConversationError::Render(e.to_string()))
}

fn not_helpful_refusal(pivots: &[PivotTerm]) -> String {
    let terms: Vec<String> = pivots.iter().map(|p| p.surface.clone()).collect();
    let what = if pivots.iter().all(|p| p.target.mode().is_value()) { "a valid value" } else { "a valid column" };
    format!("The query {REFUSAL_MARKER} be generated because {} {} be mapped to {what}.", quote_list(&terms, "and"), REFUSAL_MARKER)
}

/// Inputs for one dialogue.
#[derive(Debug, Clone, Copy)]
pub struct DialogueSpec<'a> {
    pub au_query: &'a str,
    pub clarification: &'a str,
    pub conversation_type: ConversationType,
    pub structure: &'a SqlStructure,
    pub schema: &'a SchemaCatalog,
    pub pivots: &'a [PivotTerm],
    pub gold_sqls: &'a [String],
}

/// Full dialogue for one conversation type. The simulated user picks one
/// interpretation per pivot uniformly at random.
pub fn build_conversation<R: Rng + ?Sized>(spec: &DialogueSpec<'_>, llm: &Gateway, rng: &mut R) -> Result<Conversation, ConversationError> {
    if spec.pivots.is_empty() {
        return Err(ConversationError::NoPivots);
    }
    let mut turns = vec![Turn::user(spec.au_query), Turn::agent(spec.clarification)];
    if spec.pivots.iter().any(|p| !p.target.mode().is_ambiguity()) {
        return Ok(Conversation { turns, final_sql: None });
    }
    if spec.conversation_type == ConversationType::NotHelpful {
        let draft = NOT_HELPFUL_REPLIES.choose(rng).expect("non-empty").to_string();
        let text = reword(llm, templates::CONVERSATION_REPLY, &[("draft", draft.clone()), ("style", "unhelpful".into())])?;
        let leaks = spec.pivots.iter().flat_map(|p| p.interpretations()).any(|m| contains_phrase(&text, &m.surface()));
        turns.push(Turn::user(if leaks || text.is_empty() { draft } else { text }));
        turns.push(Turn::agent(not_helpful_refusal(spec.pivots)));
        return Ok(Conversation { turns, final_sql: None });
    }

    let picks: Vec<GroupMember> =
        spec.pivots.iter().map(|p| p.interpretations().choose(rng).expect("target is always present").clone()).collect();
    let (draft, keep) = user_draft(spec.conversation_type, spec.pivots, &picks);
    let style = match spec.conversation_type {
        ConversationType::ConciseHelpful => "short and direct",
        ConversationType::VerboseHelpful => "chatty and detailed",
        _ => "casual, abbreviated",
    };
    let text = reword(llm, templates::CONVERSATION_REPLY, &[("draft", draft.clone()), ("style", style.into())])?;
    turns.push(Turn::user(if keeps_all(&text, &keep) { text } else { draft }));

    let sql = reading_sql(spec.structure, spec.pivots, &picks)?;
    let canonical = canonical_sql(&sql, spec.schema).map_err(|e| ConversationError::Render(e.to_string()))?;
    let gold = spec
        .gold_sqls
        .iter()
        .find(|g| canonical_sql(g, spec.schema).is_ok_and(|c| c == canonical))
        .ok_or_else(|| ConversationError::UnmatchedGold(sql.clone()))?;
    turns.push(Turn::agent(gold.clone()));
    Ok(Conversation { turns, final_sql: Some(gold.clone()) })
}
