//! Versioned prompt assets. Identifiers take the form `<name>@<version>`.

use std::collections::BTreeMap;

use super::GatewayError;

pub const PIVOT_LEXICAL: &str = "pivot.lexical@1";
pub const PIVOT_SEMANTIC: &str = "pivot.semantic@1";
pub const PIVOT_VALUE: &str = "pivot.value@1";
pub const PIVOT_UNANS_COLUMN: &str = "pivot.unans_column@1";
pub const PIVOT_UNANS_VALUE: &str = "pivot.unans_value@1";
pub const PIVOT_JUDGE: &str = "pivot.judge@1";
pub const QUERY_REWRITE: &str = "query.rewrite@1";
pub const QUERY_JUDGE: &str = "query.judge@1";
pub const CONVERSATION_CLARIFY: &str = "conversation.clarify@1";
pub const CONVERSATION_REPLY: &str = "conversation.reply@1";
pub const SCREEN_TERMS: &str = "screen.terms@1";
pub const SCREEN_OVERLAP: &str = "screen.overlap@1";
pub const SCREEN_CASE: &str = "screen.case@1";
pub const RETRIEVE_GROUP: &str = "retrieve.group@1";
pub const EVAL_MATCH: &str = "eval.match@1";

/// Filled with a fixed reminder on the structured-output retry, empty otherwise.
pub const FORMAT_REMINDER: &str = "format_reminder";
pub const FORMAT_REMINDER_TEXT: &str =
    "Your previous answer could not be parsed. Reply with a single JSON object in exactly the format shown and nothing else.";

const REGISTRY: &[(&str, &str)] = &[
    (PIVOT_LEXICAL, include_str!("../../assets/prompts/pivot.lexical.txt")),
    (PIVOT_SEMANTIC, include_str!("../../assets/prompts/pivot.semantic.txt")),
    (PIVOT_VALUE, include_str!("../../assets/prompts/pivot.value.txt")),
    (PIVOT_UNANS_COLUMN, include_str!("../../assets/prompts/pivot.unans_column.txt")),
    (PIVOT_UNANS_VALUE, include_str!("../../assets/prompts/pivot.unans_value.txt")),
    (PIVOT_JUDGE, include_str!("../../assets/prompts/pivot.judge.txt")),
    (QUERY_REWRITE, include_str!("../../assets/prompts/query.rewrite.txt")),
    (QUERY_JUDGE, include_str!("../../assets/prompts/query.judge.txt")),
    (CONVERSATION_CLARIFY, include_str!("../../assets/prompts/conversation.clarify.txt")),
    (CONVERSATION_REPLY, include_str!("../../assets/prompts/conversation.reply.txt")),
    (SCREEN_TERMS, include_str!("../../assets/prompts/screen.terms.txt")),
    (SCREEN_OVERLAP, include_str!("../../assets/prompts/screen.overlap.txt")),
    (SCREEN_CASE, include_str!("../../assets/prompts/screen.case.txt")),
    (RETRIEVE_GROUP, include_str!("../../assets/prompts/retrieve.group.txt")),
    (EVAL_MATCH, include_str!("../../assets/prompts/eval.match.txt")),
];

pub fn template(id: &str) -> Option<&'static str> {
    REGISTRY.iter().find(|(k, _)| *k == id).map(|(_, body)| *body)
}

pub fn ids() -> impl Iterator<Item = &'static str> {
    REGISTRY.iter().map(|(k, _)| *k)
}

/// Placeholder names used by a template body, in order of first use.
pub fn placeholders(body: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else { break };
        let name = after[..end].trim();
        if !out.contains(&name) {
            out.push(name);
        }
        rest = &after[end + 2..];
    }
    out
}

/// Substitutes `{{name}}` placeholders. Every placeholder other than the
/// format reminder must have a value.
pub fn render(id: &str, variables: &BTreeMap<String, String>) -> Result<String, GatewayError> {
    let body = template(id).ok_or_else(|| GatewayError::UnknownTemplate(id.to_string()))?;
    let mut out = String::with_capacity(body.len());
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            out.push_str(&rest[start..]);
            rest = "";
            break;
        };
        let name = after[..end].trim();
        match variables.get(name) {
            Some(v) => out.push_str(v),
            None if name == FORMAT_REMINDER => {}
            None => {
                return Err(GatewayError::MissingVariable { template_id: id.to_string(), name: name.to_string() })
            }
        }
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out.trim_end().to_string())
}
