//! Final quality gate: mode-specific test cases, each decided by mechanics
//! and a strict judge majority.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conversation::is_refusal;
use crate::db::{Database, DbError};
use crate::gateway::payload::{PivotBrief, TermList, Verdict};
use crate::gateway::{templates, Gateway, GatewayError, GatewayRequest, Role};
use crate::generation::pivot_brief;
use crate::model::{AuInstance, GroupMember, PivotTerm, SchemaCatalog};
use crate::normalize::{contains_phrase, same_name};
use crate::report::{FailureStage, RunReport};
use crate::sql::canonical_sql;

#[derive(Debug, Error)]
pub enum ScreeningError {
    #[error("screening needs an odd number of judges, got {0}")]
    JudgeCount(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestCase {
    /// Every ambiguous pivot denotes at least two real schema elements.
    MapsToMultiple,
    /// The first user turn does not already name an interpretation.
    NoPreResolution,
    /// The final SQL agrees with a gold reading, and exists exactly when the
    /// user resolved every pivot.
    FinalSqlConsistent,
    /// An independent reader finds every pivot in the first user turn.
    PivotsDetected,
    /// Every unanswerable pivot fits nothing in the database.
    MapsToNothing,
    RefusalPresent,
    NoSqlEmitted,
}

impl TestCase {
    pub fn id(self) -> &'static str {
        match self {
            TestCase::MapsToMultiple => "maps_to_multiple",
            TestCase::NoPreResolution => "no_pre_resolution",
            TestCase::FinalSqlConsistent => "final_sql_consistent",
            TestCase::PivotsDetected => "pivots_detected",
            TestCase::MapsToNothing => "maps_to_nothing",
            TestCase::RefusalPresent => "refusal_present",
            TestCase::NoSqlEmitted => "no_sql_emitted",
        }
    }

    fn description(self) -> &'static str {
        match self {
            TestCase::MapsToMultiple => "each vague term could stand for two or more different schema elements",
            TestCase::NoPreResolution => "the user's first message does not already say which meaning is intended",
            TestCase::MapsToNothing => "no vague term corresponds to any column or stored value of the schema",
            _ => "",
        }
    }

    fn judged(self) -> bool {
        matches!(self, TestCase::MapsToMultiple | TestCase::NoPreResolution | TestCase::MapsToNothing)
    }
}

/// The test-case suite for an instance.
pub fn test_cases(instance: &AuInstance) -> Vec<TestCase> {
    if instance.is_ambiguity() {
        vec![TestCase::MapsToMultiple, TestCase::NoPreResolution, TestCase::FinalSqlConsistent, TestCase::PivotsDetected]
    } else {
        vec![TestCase::MapsToNothing, TestCase::RefusalPresent, TestCase::NoSqlEmitted, TestCase::PivotsDetected]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: TestCase,
    /// `None` when the case has no mechanical part.
    pub mechanical: Option<bool>,
    pub votes: Vec<bool>,
    pub pass: bool,
    pub feedback: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningOutcome {
    pub flag: bool,
    pub cases: Vec<CaseResult>,
    /// Set when a judge could not be reached; the flag is then false.
    pub error: Option<String>,
}

impl ScreeningOutcome {
    pub fn failed_cases(&self) -> Vec<TestCase> {
        self.cases.iter().filter(|c| !c.pass).map(|c| c.case).collect()
    }
}

pub fn strict_majority(votes: &[bool]) -> bool {
    2 * votes.iter().filter(|v| **v).count() > votes.len()
}

fn element_exists(schema: &SchemaCatalog, pivot: &PivotTerm, m: &GroupMember) -> bool {
    match m {
        GroupMember::Column(c) => schema.column(c).is_some(),
        GroupMember::Value(v) => {
            v.same_value(pivot.target.value().unwrap_or(v))
                || schema
                    .column(pivot.target.column())
                    .and_then(|d| d.sampled_values.as_ref())
                    .is_some_and(|vals| vals.iter().any(|x| x.same_value(v)))
        }
    }
}

fn known_values(schema: &SchemaCatalog) -> Vec<String> {
    schema
        .tables()
        .iter()
        .flat_map(|t| &t.columns)
        .flat_map(|c| c.sampled_values.iter().flatten())
        .map(|v| v.surface().to_string())
        .collect()
}

fn mechanical(case: TestCase, inst: &AuInstance, schema: &SchemaCatalog) -> Option<(bool, String)> {
    let first_user = inst.query();
    let ok = |b: bool, why: String| Some((b, if b { String::new() } else { why }));
    match case {
        TestCase::MapsToMultiple => {
            let weak = inst.pivots.iter().find(|p| {
                let interps = p.interpretations();
                interps.len() < 2 || !interps.iter().all(|m| element_exists(schema, p, m))
            });
            ok(weak.is_none(), format!("\"{}\" has fewer than two real readings", weak.map_or("", |p| p.surface.as_str())))
        }
        TestCase::NoPreResolution => {
            let hit = inst
                .pivots
                .iter()
                .flat_map(PivotTerm::interpretations)
                .map(|m| m.surface())
                .find(|s| contains_phrase(first_user, s));
            ok(hit.is_none(), format!("\"{}\" is named in the question", hit.unwrap_or_default()))
        }
        TestCase::FinalSqlConsistent => {
            let resolved = inst.conversation_type.resolves();
            match (&inst.conversation.final_sql, resolved) {
                (Some(sql), true) => {
                    let c = canonical_sql(sql, schema).ok();
                    let in_gold = c.is_some() && inst.gold_sqls.iter().any(|g| canonical_sql(g, schema).ok() == c);
                    let stated = inst.conversation.last_agent_turn().is_some_and(|t| t.text == *sql);
                    ok(in_gold && stated, "final SQL is not one of the gold readings".into())
                }
                (None, false) => {
                    let refused = inst.conversation.last_agent_turn().is_some_and(|t| is_refusal(&t.text));
                    ok(refused, "unresolved conversation does not end in a refusal".into())
                }
                (Some(_), false) => ok(false, "unresolved conversation emits SQL".into()),
                (None, true) => ok(false, "resolved conversation emits no SQL".into()),
            }
        }
        TestCase::MapsToNothing => {
            let values = known_values(schema);
            let hit = inst.pivots.iter().filter(|p| !p.target.mode().is_ambiguity()).find(|p| {
                schema.matches_column(&p.surface) || values.iter().any(|v| same_name(v, &p.surface))
            });
            ok(hit.is_none(), format!("\"{}\" exists in the database", hit.map_or("", |p| p.surface.as_str())))
        }
        TestCase::RefusalPresent => {
            let refused = inst.conversation.last_agent_turn().is_some_and(|t| is_refusal(&t.text));
            ok(refused, "no refusal turn".into())
        }
        TestCase::NoSqlEmitted => {
            ok(inst.conversation.final_sql.is_none() && inst.gold_sqls.is_empty(), "SQL emitted for an unanswerable query".into())
        }
        TestCase::PivotsDetected => None,
    }
}

struct Shared<'a> {
    schema_text: String,
    conversation: String,
    pivots: Vec<PivotBrief>,
    /// The pivots a maps-to-nothing judge should look at.
    unanswerable: Vec<PivotBrief>,
    columns: Vec<String>,
    values: Vec<String>,
    schema: &'a SchemaCatalog,
}

fn judge_case(case: TestCase, shared: &Shared<'_>, judge: &Gateway) -> Result<bool, GatewayError> {
    let request = GatewayRequest::new(Role::Judge, templates::SCREEN_CASE)?
        .var("case_id", case.id())
        .var("case", case.description())
        .json_var("pivots", if case == TestCase::MapsToNothing { &shared.unanswerable } else { &shared.pivots })
        .var("schema", shared.schema_text.clone())
        .json_var("columns", &shared.columns)
        .json_var("values", &shared.values)
        .var("conversation", shared.conversation.clone());
    Ok(judge.complete_json::<Verdict>(&request)?.pass)
}

/// One judge lists the vague terms it sees; the list is compared with the
/// pivots mechanically, and the judge settles only a mechanical miss.
fn judge_detection(shared: &Shared<'_>, judge: &Gateway) -> Result<bool, GatewayError> {
    let request = GatewayRequest::new(Role::Judge, templates::SCREEN_TERMS)?
        .var("schema", shared.schema_text.clone())
        .var("conversation", shared.conversation.clone());
    let detected = judge.complete_json::<TermList>(&request)?.terms;
    let expected: Vec<String> = shared.pivots.iter().map(|p| p.term.clone()).collect();
    if expected.iter().all(|e| detected.iter().any(|d| same_name(d, e))) {
        return Ok(true);
    }
    if detected.is_empty() {
        return Ok(false);
    }
    let request = GatewayRequest::new(Role::Judge, templates::SCREEN_OVERLAP)?
        .json_var("detected", &detected)
        .json_var("expected", &expected);
    Ok(judge.complete_json::<Verdict>(&request)?.pass)
}

/// Runs every test case of the instance. A mechanical failure cannot be
/// overruled by judges.
/// `schema` with every distinct value of the instance's value-target
/// columns attached, so value readings can be checked outside a run.
pub fn with_database_values(instance: &AuInstance, schema: &SchemaCatalog, db: &Database) -> Result<SchemaCatalog, DbError> {
    let mut out = schema.clone();
    for p in instance.pivots.iter().filter(|p| p.target.mode().is_value()) {
        out.set_sampled_values(p.target.column(), db.distinct_values(p.target.column())?);
    }
    Ok(out)
}

pub fn screen(instance: &AuInstance, schema: &SchemaCatalog, judges: &[Gateway]) -> Result<ScreeningOutcome, ScreeningError> {
    if judges.len().is_multiple_of(2) {
        return Err(ScreeningError::JudgeCount(judges.len()));
    }
    let shared = Shared {
        schema_text: schema.describe(),
        conversation: instance.conversation.render(),
        pivots: instance.pivots.iter().map(pivot_brief).collect(),
        unanswerable: instance.pivots.iter().filter(|p| !p.target.mode().is_ambiguity()).map(pivot_brief).collect(),
        columns: schema.columns().map(|c| c.column).collect(),
        values: known_values(schema),
        schema,
    };
    let mut cases = Vec::new();
    let mut error = None;
    for case in test_cases(instance) {
        let mech = mechanical(case, instance, shared.schema);
        let needs_judges = case.judged() || case == TestCase::PivotsDetected;
        let votes: Result<Vec<bool>, GatewayError> = if !needs_judges || mech.as_ref().is_some_and(|(ok, _)| !ok) {
            Ok(Vec::new())
        } else {
            judges
                .par_iter()
                .map(|j| if case == TestCase::PivotsDetected { judge_detection(&shared, j) } else { judge_case(case, &shared, j) })
                .collect()
        };
        let votes = match votes {
            Ok(v) => v,
            Err(e) => {
                error = Some(e.to_string());
                Vec::new()
            }
        };
        let mech_pass = mech.as_ref().is_none_or(|(ok, _)| *ok);
        let judged_pass = !needs_judges || (!votes.is_empty() && strict_majority(&votes));
        let pass = mech_pass && judged_pass && error.is_none();
        let feedback = match (&mech, pass) {
            (_, true) => String::new(),
            (Some((false, why)), _) => why.clone(),
            _ => match &error {
                Some(e) => e.clone(),
                None => format!("{} of {} judges passed", votes.iter().filter(|v| **v).count(), votes.len()),
            },
        };
        cases.push(CaseResult { case, mechanical: mech.map(|(ok, _)| ok), votes, pass, feedback });
        if error.is_some() {
            break;
        }
    }
    let flag = error.is_none() && cases.iter().all(|c| c.pass);
    Ok(ScreeningOutcome { flag, cases, error })
}

/// Counts emitted instances and screening failures per category.
pub fn screening_report<'a>(results: impl IntoIterator<Item = (&'a AuInstance, &'a ScreeningOutcome)>) -> RunReport {
    let mut report = RunReport::new();
    for (inst, outcome) in results {
        if outcome.flag {
            report.record_emitted(inst.category(), inst.conversation_type);
        } else {
            report.record_failure(inst.category(), FailureStage::DataScreeningFailure);
        }
    }
    report
}
