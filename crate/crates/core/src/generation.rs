//! Generator/evaluator loops for pivot terms and rewritten queries, and
//! gold SQL resolution.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::gateway::payload::{Attempt, CriteriaVerdict, PivotBrief, PivotProposal, QueryProposal};
use crate::gateway::{templates, Gateway, GatewayError, GatewayRequest, Role};
use crate::model::{
    AmbiguityFlavor, AuKind, AuMode, CriterionOutcome, GroupMember, JudgeVerdict, PivotTerm, SchemaCatalog, SourcePair,
    TargetGroup, TargetSelection,
};
use crate::normalize::{count_phrase, normalize_name, normalized_tokens, same_name, token_multiset};
use crate::sql::{canonical_sql, parse_sql, substitute, Replacement, SqlStructure};

pub const DEFAULT_MAX_ITERATIONS: usize = 5;

pub const PIVOT_VALIDITY: &str = "pivot_validity";
pub const PIVOT_DISSIMILARITY: &str = "pivot_dissimilarity_all";
pub const PIVOT_FOR_GROUP: &str = "pivot_term_for_target_group";
pub const PIVOT_IN_UTTERANCE: &str = "pivot_in_utterance";
pub const QUERY_VALIDITY: &str = "validity";
pub const QUERY_CONSISTENCY: &str = "consistency";

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("no pivot for {target} passed review in {attempts} attempts: {feedback}")]
    TermEvaluatorFailure { target: String, attempts: usize, feedback: String },
    #[error("no rewrite passed review in {attempts} attempts: {feedback}")]
    QueryEvaluatorFailure { attempts: usize, feedback: String },
    #[error("at least one judge is required")]
    NoJudges,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Attempts and verdicts of one generator/evaluator loop.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackState {
    max_iterations: usize,
    history: Vec<(String, JudgeVerdict)>,
    succeeded: bool,
}

impl FeedbackState {
    pub fn new(max_iterations: usize) -> Self {
        assert!(max_iterations > 0, "a loop needs at least one iteration");
        Self { max_iterations, history: Vec::new(), succeeded: false }
    }

    pub fn attempts(&self) -> usize {
        self.history.len()
    }

    pub fn max_iterations(&self) -> usize {
        self.max_iterations
    }

    /// Failed attempts so far (the accepted one, if any, is not included).
    pub fn history(&self) -> &[(String, JudgeVerdict)] {
        let n = self.history.len() - usize::from(self.succeeded);
        &self.history[..n]
    }

    pub fn exhausted(&self) -> bool {
        !self.succeeded && self.history.len() >= self.max_iterations
    }

    pub fn succeeded(&self) -> bool {
        self.succeeded
    }

    fn can_try(&self) -> bool {
        !self.succeeded && self.history.len() < self.max_iterations
    }

    fn record(&mut self, candidate: String, verdict: JudgeVerdict) {
        debug_assert!(self.can_try());
        self.succeeded = verdict.all_pass();
        self.history.push((candidate, verdict));
    }

    fn prompt_history(&self) -> Vec<Attempt> {
        self.history().iter().map(|(c, v)| Attempt { candidate: c.clone(), feedback: v.feedback() }).collect()
    }

    fn last_feedback(&self) -> String {
        self.history.last().map(|(_, v)| v.feedback()).unwrap_or_default()
    }
}

/// Everything the pivot generator and evaluator see for one target.
#[derive(Debug, Clone, Copy)]
pub struct PivotContext<'a> {
    pub target: &'a TargetSelection,
    pub group: &'a TargetGroup,
    pub space: &'a [GroupMember],
    pub schema: &'a SchemaCatalog,
    pub question: &'a str,
    pub exclusions: &'a [String],
}

impl PivotContext<'_> {
    fn column_names(&self) -> Vec<String> {
        self.schema.columns().map(|c| c.column).collect()
    }

    fn known_values(&self) -> Vec<String> {
        if !self.target.mode().is_value() {
            return Vec::new();
        }
        let mut out: Vec<String> = self.target.value().map(|v| v.surface().to_string()).into_iter().collect();
        out.extend(self.space.iter().map(GroupMember::surface));
        out
    }
}

fn pivot_template(mode: AuMode) -> &'static str {
    match (mode.kind(), mode.flavor()) {
        (AuKind::ColAmb, Some(AmbiguityFlavor::Semantic)) => templates::PIVOT_SEMANTIC,
        (AuKind::ColAmb, _) => templates::PIVOT_LEXICAL,
        (AuKind::ValAmb, _) => templates::PIVOT_VALUE,
        (AuKind::ColUnans, _) => templates::PIVOT_UNANS_COLUMN,
        (AuKind::ValUnans, _) => templates::PIVOT_UNANS_VALUE,
    }
}

/// Asks the generator for one candidate pivot.
pub fn generate_pivot(ctx: &PivotContext<'_>, feedback: &FeedbackState, llm: &Gateway) -> Result<PivotProposal, GenerationError> {
    let mode = ctx.target.mode();
    let known = ctx.known_values();
    let request = GatewayRequest::new(Role::Generator, pivot_template(mode))?
        .var("mode", mode.to_string())
        .var("target", ctx.target.surface())
        .var("column", ctx.target.column().column.clone())
        .json_var("group", &ctx.group.surfaces())
        .json_var("exclusions", &ctx.exclusions)
        .var("schema", ctx.schema.describe())
        .json_var("columns", &ctx.column_names())
        .json_var("values", &known)
        .var("known_values", known.join(", "))
        .var("question", ctx.question)
        .json_var("history", &feedback.prompt_history());
    Ok(llm.complete_json(&request)?)
}

/// Members of `group` named by the generator; the whole group when it
/// names none of them.
fn chosen_group(ctx: &PivotContext<'_>, proposal: &PivotProposal) -> TargetGroup {
    if ctx.group.is_empty() {
        return TargetGroup::empty();
    }
    let members: Vec<GroupMember> = ctx
        .group
        .members
        .iter()
        .filter(|m| proposal.group.iter().any(|g| *g == m.surface() || same_name(g, &m.surface())))
        .cloned()
        .collect();
    if members.is_empty() {
        ctx.group.clone()
    } else {
        TargetGroup { members, flavor: ctx.group.flavor }
    }
}

fn fail(criterion: &str, feedback: String) -> JudgeVerdict {
    JudgeVerdict::single(criterion, false, feedback)
}

fn subset(small: &BTreeMap<String, usize>, big: &BTreeMap<String, usize>) -> bool {
    small.iter().all(|(t, n)| big.get(t).is_some_and(|m| m >= n))
}

fn intersect(a: &BTreeMap<String, usize>, b: &BTreeMap<String, usize>) -> BTreeMap<String, usize> {
    a.iter().filter_map(|(t, n)| b.get(t).map(|m| (t.clone(), *n.min(m)))).collect()
}

/// Checks (a) schema collision, (b) exclusions, (c) lexical derivability.
pub fn mechanical_pivot_checks(candidate: &str, ctx: &PivotContext<'_>, group: &TargetGroup) -> Option<JudgeVerdict> {
    if normalize_name(candidate).is_empty() {
        return Some(fail(PIVOT_VALIDITY, "empty candidate".into()));
    }
    if let Some(hit) = ctx.schema.matching_columns(candidate).first() {
        return Some(fail(PIVOT_VALIDITY, format!("exact match with schema column \"{}\"", hit.column)));
    }
    if let Some(hit) = ctx.exclusions.iter().find(|e| same_name(e, candidate)) {
        return Some(fail(PIVOT_DISSIMILARITY, format!("\"{hit}\" is already used")));
    }
    if ctx.target.mode().flavor() == Some(AmbiguityFlavor::Lexical) {
        let c = token_multiset(candidate);
        let t = token_multiset(&ctx.target.surface());
        let derivable = group.members.iter().any(|m| subset(&c, &intersect(&t, &token_multiset(&m.surface()))));
        if !derivable {
            return Some(fail(
                PIVOT_FOR_GROUP,
                format!("\"{candidate}\" is not built from words the target shares with a group member"),
            ));
        }
    }
    None
}

/// ANDs every judge's verdict per criterion. A judge that omits an
/// expected criterion fails it.
fn unanimous(results: Vec<(String, CriteriaVerdict)>, expected: &[&str]) -> JudgeVerdict {
    let mut merged: BTreeMap<String, CriterionOutcome> =
        expected.iter().map(|c| (c.to_string(), CriterionOutcome { pass: true, feedback: String::new() })).collect();
    for (judge, verdict) in results {
        for criterion in expected {
            let slot = merged.get_mut(*criterion).expect("seeded above");
            match verdict.get(*criterion) {
                Some(v) if v.pass => {}
                Some(v) => {
                    slot.pass = false;
                    push_feedback(&mut slot.feedback, &judge, &v.feedback);
                }
                None => {
                    slot.pass = false;
                    push_feedback(&mut slot.feedback, &judge, "no verdict given");
                }
            }
        }
    }
    JudgeVerdict::new(merged)
}

fn push_feedback(buf: &mut String, judge: &str, text: &str) {
    if !buf.is_empty() {
        buf.push_str("; ");
    }
    buf.push_str(judge);
    buf.push_str(": ");
    buf.push_str(text);
}

fn ask_judges(judges: &[Gateway], request: &GatewayRequest) -> Result<Vec<(String, CriteriaVerdict)>, GenerationError> {
    if judges.is_empty() {
        return Err(GenerationError::NoJudges);
    }
    judges
        .par_iter()
        .map(|j| Ok((j.backend_name().to_string(), j.complete_json::<CriteriaVerdict>(request)?)))
        .collect()
}

pub fn evaluate_pivot(
    candidate: &str,
    ctx: &PivotContext<'_>,
    group: &TargetGroup,
    judges: &[Gateway],
) -> Result<JudgeVerdict, GenerationError> {
    if let Some(v) = mechanical_pivot_checks(candidate, ctx, group) {
        return Ok(v);
    }
    let mode = ctx.target.mode();
    let space: Vec<String> = ctx.space.iter().map(GroupMember::surface).collect();
    let request = GatewayRequest::new(Role::Judge, templates::PIVOT_JUDGE)?
        .var("mode", mode.to_string())
        .var("candidate", candidate)
        .var("target", ctx.target.surface())
        .json_var("group", &group.surfaces())
        .json_var("space", &space)
        .var("schema", ctx.schema.describe())
        .json_var("columns", &ctx.column_names())
        .json_var("values", &ctx.known_values());
    let expected: &[&str] = if mode.is_ambiguity() {
        &[PIVOT_VALIDITY, PIVOT_DISSIMILARITY, PIVOT_FOR_GROUP]
    } else {
        &[PIVOT_VALIDITY, PIVOT_DISSIMILARITY]
    };
    Ok(unanimous(ask_judges(judges, &request)?, expected))
}

/// Generates and reviews pivots until one passes every check.
pub fn pivot_loop(
    ctx: &PivotContext<'_>,
    judges: &[Gateway],
    llm: &Gateway,
    max_iterations: usize,
) -> Result<(PivotTerm, FeedbackState), GenerationError> {
    let mut state = FeedbackState::new(max_iterations);
    while state.can_try() {
        let proposal = generate_pivot(ctx, &state, llm)?;
        let term = proposal.term.trim().to_string();
        let group = chosen_group(ctx, &proposal);
        let verdict = evaluate_pivot(&term, ctx, &group, judges)?;
        state.record(term.clone(), verdict);
        if state.succeeded() {
            let pivot = PivotTerm { surface: term, target: ctx.target.clone(), group };
            return Ok((pivot, state));
        }
    }
    Err(GenerationError::TermEvaluatorFailure {
        target: ctx.target.surface(),
        attempts: state.attempts(),
        feedback: state.last_feedback(),
    })
}

pub fn pivot_brief(p: &PivotTerm) -> PivotBrief {
    PivotBrief {
        term: p.surface.clone(),
        target: p.target.surface(),
        group: p.group.surfaces(),
        kind: if p.target.mode().is_value() { "value".into() } else { "column".into() },
    }
}

fn modes_label(pivots: &[PivotTerm]) -> String {
    pivots.iter().map(|p| p.target.mode().to_string()).collect::<Vec<_>>().join(",")
}

/// Asks the generator for a rewrite of the source question using `pivots`.
pub fn generate_query(
    source: &SourcePair,
    pivots: &[PivotTerm],
    feedback: &FeedbackState,
    llm: &Gateway,
) -> Result<String, GenerationError> {
    if pivots.is_empty() {
        return Ok(source.question.clone());
    }
    let briefs: Vec<PivotBrief> = pivots.iter().map(pivot_brief).collect();
    let request = GatewayRequest::new(Role::Generator, templates::QUERY_REWRITE)?
        .var("question", source.question.clone())
        .var("sql", source.sql.clone())
        .var("mode", modes_label(pivots))
        .json_var("pivots", &briefs)
        .json_var("history", &feedback.prompt_history());
    let proposal: QueryProposal = llm.complete_json(&request)?;
    Ok(proposal.query.trim().to_string())
}

/// Whether every pivot occurs exactly once, on normalized word boundaries.
pub fn pivots_in_utterance(au_query: &str, pivots: &[PivotTerm]) -> Result<(), String> {
    let tokens = normalized_tokens(au_query);
    for p in pivots {
        let n = count_phrase(&tokens, &p.surface);
        if n != 1 {
            return Err(format!("\"{}\" appears {n} times", p.surface));
        }
    }
    Ok(())
}

pub fn evaluate_query(
    au_query: &str,
    source: &SourcePair,
    pivots: &[PivotTerm],
    schema: &SchemaCatalog,
    judges: &[Gateway],
) -> Result<JudgeVerdict, GenerationError> {
    if au_query.trim().is_empty() {
        return Ok(fail(PIVOT_IN_UTTERANCE, "empty rewrite".into()));
    }
    if let Err(msg) = pivots_in_utterance(au_query, pivots) {
        return Ok(fail(PIVOT_IN_UTTERANCE, msg));
    }
    let briefs: Vec<PivotBrief> = pivots.iter().map(pivot_brief).collect();
    let request = GatewayRequest::new(Role::Judge, templates::QUERY_JUDGE)?
        .var("mode", modes_label(pivots))
        .var("question", source.question.clone())
        .var("sql", source.sql.clone())
        .var("rewrite", au_query)
        .json_var("pivots", &briefs)
        .var("schema", schema.describe());
    let mut verdict = unanimous(ask_judges(judges, &request)?, &[QUERY_VALIDITY, QUERY_CONSISTENCY]);
    let mut criteria = verdict.criteria().clone();
    criteria.insert(PIVOT_IN_UTTERANCE.into(), CriterionOutcome { pass: true, feedback: String::new() });
    verdict = JudgeVerdict::new(criteria);
    Ok(verdict)
}

pub fn query_loop(
    source: &SourcePair,
    pivots: &[PivotTerm],
    schema: &SchemaCatalog,
    judges: &[Gateway],
    llm: &Gateway,
    max_iterations: usize,
) -> Result<(String, FeedbackState), GenerationError> {
    let mut state = FeedbackState::new(max_iterations);
    while state.can_try() {
        let au_query = generate_query(source, pivots, &state, llm)?;
        let verdict = evaluate_query(&au_query, source, pivots, schema, judges)?;
        state.record(au_query.clone(), verdict);
        if state.succeeded() {
            return Ok((au_query, state));
        }
    }
    Err(GenerationError::QueryEvaluatorFailure { attempts: state.attempts(), feedback: state.last_feedback() })
}

fn replacement(pivot: &PivotTerm, member: &GroupMember) -> Option<Replacement> {
    let target = &pivot.target;
    match (member, target.value()) {
        (GroupMember::Column(c), None) if c != target.column() => {
            Some(Replacement::Column { from: target.column().clone(), to: c.clone() })
        }
        (GroupMember::Value(v), Some(from)) if !v.same_value(from) => {
            Some(Replacement::Value { column: target.column().clone(), from: from.clone(), to: v.clone() })
        }
        _ => None,
    }
}

/// Every SQL reading of the pivots: the cross product of each pivot's
/// interpretations, substituted into the source query and deduplicated by
/// canonical form. Empty when any pivot is unanswerable.
pub fn resolve_gold_sqls(structure: &SqlStructure, pivots: &[PivotTerm], schema: &SchemaCatalog) -> Vec<String> {
    if pivots.is_empty() || pivots.iter().any(|p| !p.target.mode().is_ambiguity()) {
        return Vec::new();
    }
    let options: Vec<Vec<GroupMember>> = pivots.iter().map(PivotTerm::interpretations).collect();
    let mut out: Vec<String> = Vec::new();
    let mut seen: Vec<String> = Vec::new();
    let mut choice = vec![0usize; pivots.len()];
    loop {
        let reps: Vec<Replacement> =
            pivots.iter().enumerate().filter_map(|(j, p)| replacement(p, &options[j][choice[j]])).collect();
        match substitute(structure, &reps) {
            Ok(sql) => match canonical_sql(&sql, schema).and_then(|c| parse_sql(&sql, schema).map(|_| c)) {
                Ok(canonical) if !seen.contains(&canonical) => {
                    seen.push(canonical);
                    out.push(sql);
                }
                Ok(_) => {}
                Err(e) => log::debug!("dropping reading {sql}: {e}"),
            },
            Err(e) => log::debug!("dropping reading of {}: {e}", structure.sql),
        }
        // advance the mixed-radix counter
        let mut j = pivots.len();
        loop {
            if j == 0 {
                return out;
            }
            j -= 1;
            choice[j] += 1;
            if choice[j] < options[j].len() {
                break;
            }
            choice[j] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{CacheMode, ResponseCache, ScriptedBackend};
    use crate::model::{ColumnDef, ColumnRef, GroupFlavor, Literal, SemanticType, TableDef};
    use std::sync::Arc;

    fn schema() -> SchemaCatalog {
        let cols = |names: &[&str]| names.iter().map(|n| ColumnDef::new(*n, SemanticType::Text)).collect();
        SchemaCatalog::new(
            "shop",
            vec![
                TableDef::new("Order", cols(&["paymentDate", "dispatchDate", "amount", "status"])),
                TableDef::new("Customer", cols(&["Customer_ID", "CustomerName", "ProductName"])),
            ],
        )
        .unwrap()
    }

    fn gateway(name: &str, reply: &'static str) -> Gateway {
        Gateway::new(Arc::new(ScriptedBackend::constant(name, reply)), Arc::new(ResponseCache::in_memory()), CacheMode::Record)
    }

    fn scripted(name: &str, f: impl Fn(usize) -> String + Send + Sync + 'static) -> (Gateway, Arc<ScriptedBackend>) {
        let b = Arc::new(ScriptedBackend::new(name, move |_, n| Ok(f(n))));
        (Gateway::new(b.clone(), Arc::new(ResponseCache::in_memory()), CacheMode::Record), b)
    }

    const PASS3: &str = r#"{"pivot_validity":{"pass":true},"pivot_dissimilarity_all":{"pass":true},"pivot_term_for_target_group":{"pass":true}}"#;
    const FAIL3: &str = r#"{"pivot_validity":{"pass":false,"feedback":"too vague"},"pivot_dissimilarity_all":{"pass":true},"pivot_term_for_target_group":{"pass":true}}"#;

    struct Fixture {
        schema: SchemaCatalog,
        target: TargetSelection,
        group: TargetGroup,
        space: Vec<GroupMember>,
    }

    fn fixture() -> Fixture {
        let schema = schema();
        let target = TargetSelection::new(
            AuMode::col_amb(AmbiguityFlavor::Lexical),
            ColumnRef::new("Order", "dispatchDate"),
            None,
        )
        .unwrap();
        let group =
            TargetGroup { members: vec![GroupMember::Column(ColumnRef::new("Order", "paymentDate"))], flavor: GroupFlavor::Lexical };
        let space = schema.columns().filter(|c| c.column != "dispatchDate").map(GroupMember::Column).collect();
        Fixture { schema, target, group, space }
    }

    impl Fixture {
        fn ctx<'a>(&'a self, exclusions: &'a [String]) -> PivotContext<'a> {
            PivotContext {
                target: &self.target,
                group: &self.group,
                space: &self.space,
                schema: &self.schema,
                question: "Show the dispatch date and amount",
                exclusions,
            }
        }
    }

    #[test]
    fn mechanical_checks_run_before_judges() {
        let f = fixture();
        let excl = vec!["date".to_string()];
        let ctx = f.ctx(&excl);
        let (judge, calls) = scripted("j", |_| PASS3.to_string());
        let v = evaluate_pivot("date", &ctx, &f.group, std::slice::from_ref(&judge)).unwrap();
        assert_eq!(v.passed(PIVOT_DISSIMILARITY), Some(false));
        let v = evaluate_pivot("payment date", &ctx, &f.group, std::slice::from_ref(&judge)).unwrap();
        assert_eq!(v.passed(PIVOT_VALIDITY), Some(false));
        assert!(v.feedback().contains("exact match"));
        let v = evaluate_pivot("moment", &ctx, &f.group, std::slice::from_ref(&judge)).unwrap();
        assert_eq!(v.passed(PIVOT_FOR_GROUP), Some(false));
        assert_eq!(calls.calls(), 0);
        let v = evaluate_pivot("date", &f.ctx(&[]), &f.group, std::slice::from_ref(&judge)).unwrap();
        assert!(v.all_pass());
        assert_eq!(calls.calls(), 1);
    }

    #[test]
    fn one_dissenting_judge_fails_the_criterion() {
        let f = fixture();
        let judges = vec![gateway("a", PASS3), gateway("b", FAIL3), gateway("c", PASS3)];
        let v = evaluate_pivot("date", &f.ctx(&[]), &f.group, &judges).unwrap();
        assert!(!v.all_pass());
        assert_eq!(v.passed(PIVOT_VALIDITY), Some(false));
        assert_eq!(v.passed(PIVOT_DISSIMILARITY), Some(true));
        assert!(v.feedback().contains("b: too vague"));
    }

    #[test]
    fn missing_criterion_counts_as_failure() {
        let f = fixture();
        let judges = vec![gateway("a", r#"{"pivot_validity":{"pass":true}}"#)];
        let v = evaluate_pivot("date", &f.ctx(&[]), &f.group, &judges).unwrap();
        assert_eq!(v.passed(PIVOT_FOR_GROUP), Some(false));
    }

    fn generator() -> Gateway {
        gateway("gen", r#"{"term":"date","group":["paymentDate"],"reason":"shared word"}"#)
    }

    #[test]
    fn loop_returns_on_first_pass() {
        let f = fixture();
        let (pivot, state) = pivot_loop(&f.ctx(&[]), &[gateway("j", PASS3)], &generator(), 5).unwrap();
        assert_eq!(pivot.surface, "date");
        assert_eq!(state.attempts(), 1);
        assert!(state.history().is_empty());
        assert!(!state.exhausted());
    }

    #[test]
    fn loop_exhausts_after_max_iterations() {
        let f = fixture();
        let (gen, calls) = scripted("gen", |n| format!(r#"{{"term":"date","group":[],"reason":"try {n}"}}"#));
        let err = pivot_loop(&f.ctx(&[]), &[gateway("j", FAIL3)], &gen, 5).unwrap_err();
        assert!(matches!(err, GenerationError::TermEvaluatorFailure { attempts: 5, .. }));
        assert_eq!(calls.calls(), 5);
    }

    #[test]
    fn loop_passes_on_third_attempt_with_history_two() {
        let f = fixture();
        let mut f = f;
        f.target = TargetSelection::new(AuMode::col_amb(AmbiguityFlavor::Semantic), f.target.column().clone(), None).unwrap();
        f.group.flavor = GroupFlavor::Semantic;
        let terms = ["moment", "when", "timing"];
        let (gen, _) = scripted("gen", move |n| format!(r#"{{"term":"{}","group":[],"reason":""}}"#, terms[n]));
        let (judge, _) = scripted("j", |n| if n < 2 { FAIL3.to_string() } else { PASS3.to_string() });
        let (pivot, state) = pivot_loop(&f.ctx(&[]), &[judge], &gen, 5).unwrap();
        assert_eq!(pivot.surface, "timing");
        assert_eq!(state.attempts(), 3);
        assert_eq!(state.history().len(), 2);
    }

    fn date_pivot(f: &Fixture) -> PivotTerm {
        PivotTerm { surface: "date".into(), target: f.target.clone(), group: f.group.clone() }
    }

    #[test]
    fn gold_sqls_cover_every_reading() {
        let f = fixture();
        let s = parse_sql("SELECT paymentDate, amount FROM `Order`", &f.schema).unwrap();
        let p = PivotTerm {
            surface: "date".into(),
            target: TargetSelection::new(
                AuMode::col_amb(AmbiguityFlavor::Lexical),
                ColumnRef::new("Order", "paymentDate"),
                None,
            )
            .unwrap(),
            group: TargetGroup {
                members: vec![GroupMember::Column(ColumnRef::new("Order", "dispatchDate"))],
                flavor: GroupFlavor::Lexical,
            },
        };
        let gold = resolve_gold_sqls(&s, &[p], &f.schema);
        assert_eq!(gold, vec!["SELECT paymentDate, amount FROM `Order`", "SELECT dispatchDate, amount FROM `Order`"]);
    }

    #[test]
    fn two_pivots_give_at_most_four_readings() {
        let f = fixture();
        let s = parse_sql("SELECT dispatchDate FROM `Order` WHERE status = 'open'", &f.schema).unwrap();
        let value = PivotTerm {
            surface: "pending".into(),
            target: TargetSelection::new(AuMode::val_amb(), ColumnRef::new("Order", "status"), Some(Literal::text("open")))
                .unwrap(),
            group: TargetGroup { members: vec![GroupMember::Value(Literal::text("held"))], flavor: GroupFlavor::None },
        };
        let gold = resolve_gold_sqls(&s, &[date_pivot(&f), value], &f.schema);
        assert_eq!(gold.len(), 4);
        assert!(gold.contains(&"SELECT paymentDate FROM `Order` WHERE status = 'held'".to_string()));
    }

    #[test]
    fn unanswerable_pivots_have_no_gold() {
        let f = fixture();
        let s = parse_sql("SELECT amount FROM `Order`", &f.schema).unwrap();
        let p = PivotTerm {
            surface: "loyalty tier".into(),
            target: TargetSelection::new(AuMode::col_unans(), ColumnRef::new("Order", "amount"), None).unwrap(),
            group: TargetGroup::empty(),
        };
        assert!(resolve_gold_sqls(&s, &[p], &f.schema).is_empty());
    }

    #[test]
    fn query_checks() {
        let f = fixture();
        let source = SourcePair::new("Show the dispatch date and amount", "SELECT dispatchDate, amount FROM `Order`", "shop");
        let pivots = vec![date_pivot(&f)];
        let judge = gateway("j", r#"{"validity":{"pass":true},"consistency":{"pass":true}}"#);
        let missing = evaluate_query("Show the amount", &source, &pivots, &f.schema, std::slice::from_ref(&judge)).unwrap();
        assert_eq!(missing.passed(PIVOT_IN_UTTERANCE), Some(false));
        let twice = evaluate_query("date and date", &source, &pivots, &f.schema, std::slice::from_ref(&judge)).unwrap();
        assert!(!twice.all_pass());
        let ok = evaluate_query("Show the date and amount", &source, &pivots, &f.schema, &[judge]).unwrap();
        assert!(ok.all_pass());
        assert_eq!(ok.criteria().len(), 3);
        let no_pivots = generate_query(&source, &[], &FeedbackState::new(5), &generator()).unwrap();
        assert_eq!(no_pivots, source.question);
    }

    #[test]
    fn query_loop_history() {
        let f = fixture();
        let source = SourcePair::new("Show the dispatch date and amount", "SELECT dispatchDate, amount FROM `Order`", "shop");
        let (gen, _) = scripted("gen", |n| {
            if n == 0 { r#"{"query":"Show the date and amount"}"#.into() } else { r#"{"query":"List the date and amount"}"#.into() }
        });
        let (judge, _) = scripted("j", |n| {
            if n == 0 {
                r#"{"validity":{"pass":false,"feedback":"leaks"},"consistency":{"pass":true}}"#.into()
            } else {
                r#"{"validity":{"pass":true},"consistency":{"pass":true}}"#.into()
            }
        });
        let (au_query, state) = query_loop(&source, &[date_pivot(&f)], &f.schema, &[judge], &gen, 5).unwrap();
        assert_eq!(au_query, "List the date and amount");
        assert_eq!(state.history().len(), 1);
        let always_fail = gateway("j2", r#"{"validity":{"pass":false},"consistency":{"pass":true}}"#);
        let err = query_loop(&source, &[date_pivot(&f)], &f.schema, &[always_fail], &gen, 5).unwrap_err();
        assert!(matches!(err, GenerationError::QueryEvaluatorFailure { attempts: 5, .. }));
    }
}
