//! Scoring of NL2SQL predictions against generated instances.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::db::{Database, DbError};
use crate::gateway::payload::Verdict;
use crate::gateway::{templates, Gateway, GatewayError, GatewayRequest, Role};
use crate::model::{AuInstance, Category, ConversationType, Facet, GroupMember, SchemaCatalog};
use crate::normalize::same_name;
use crate::sql::{canonical_sql, parse_sql};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions reference unknown instances: {}", .0.join(", "))]
    UnknownIds(Vec<String>),
    #[error("prediction for {id} does not have the {task} shape")]
    Shape { id: String, task: Task },
    #[error("no schema for database `{0}`")]
    UnknownDb(String),
    #[error("not enough instances in {category}: need {needed}, have {available}")]
    Insufficient { category: String, needed: usize, available: usize },
    #[error("macro accuracy needs at least one category")]
    NoCategories,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    SingleTurn,
    MultiTurn,
    Detection,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::SingleTurn => "single_turn",
            Task::MultiTurn => "multi_turn",
            Task::Detection => "detection",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single_turn" | "single-turn" => Ok(Task::SingleTurn),
            "multi_turn" | "multi-turn" => Ok(Task::MultiTurn),
            "detection" => Ok(Task::Detection),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DetectorOutput {
    pub flagged: bool,
    /// Schema elements (or vague terms, for unanswerable queries) the
    /// detector says the query may refer to.
    #[serde(default)]
    pub suggested: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clarification: Option<String>,
}

/// One line of a predictions file. Single-turn predictions carry `sqls`,
/// multi-turn ones `sql` (absent or null meaning no query), detection ones
/// `detector`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sqls: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sql: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorOutput>,
}

impl Prediction {
    pub fn single_turn(id: impl Into<String>, sqls: Vec<String>) -> Self {
        Self { instance_id: id.into(), sqls: Some(sqls), sql: None, detector: None }
    }

    pub fn multi_turn(id: impl Into<String>, sql: Option<String>) -> Self {
        Self { instance_id: id.into(), sqls: None, sql, detector: None }
    }

    pub fn detection(id: impl Into<String>, detector: DetectorOutput) -> Self {
        Self { instance_id: id.into(), sqls: None, sql: None, detector: Some(detector) }
    }

    pub fn fits(&self, task: Task) -> bool {
        match task {
            Task::SingleTurn => self.sqls.is_some() && self.sql.is_none(),
            Task::MultiTurn => self.sqls.is_none(),
            Task::Detection => self.detector.is_some(),
        }
    }
}

/// Structural SQL equality via canonical rendering. Unparseable input is
/// never equal to anything.
pub fn sql_equal(a: &str, b: &str, schema: &SchemaCatalog) -> bool {
    match (canonical_sql(a, schema), canonical_sql(b, schema)) {
        (Ok(x), Ok(y)) => x == y,
        (Err(e), _) | (_, Err(e)) => {
            log::warn!("comparing unparseable SQL: {e}");
            false
        }
    }
}

fn canonical_keys(sqls: &[String], schema: &SchemaCatalog) -> Vec<Option<String>> {
    sqls.iter().map(|s| canonical_sql(s, schema).ok()).collect()
}

/// A perfect pairing of predicted and gold queries exists.
pub fn strict_exact_match(pred: &[String], gold: &[String], schema: &SchemaCatalog) -> bool {
    if pred.len() != gold.len() {
        return false;
    }
    let p = canonical_keys(pred, schema);
    let g = canonical_keys(gold, schema);
    if p.iter().chain(&g).any(Option::is_none) {
        return false;
    }
    // canonical equality is an equivalence, so a bijection exists iff the
    // multisets agree
    let mut p: Vec<String> = p.into_iter().flatten().collect();
    let mut g: Vec<String> = g.into_iter().flatten().collect();
    p.sort();
    g.sort();
    p == g
}

/// At least `min_matches` gold queries are hit by some prediction.
pub fn lenient_exact_match_at_least(pred: &[String], gold: &[String], schema: &SchemaCatalog, min_matches: usize) -> bool {
    let p: BTreeSet<String> = canonical_keys(pred, schema).into_iter().flatten().collect();
    let hits: BTreeSet<String> = canonical_keys(gold, schema).into_iter().flatten().filter(|g| p.contains(g)).collect();
    hits.len() >= min_matches.max(1)
}

pub fn lenient_exact_match(pred: &[String], gold: &[String], schema: &SchemaCatalog) -> bool {
    lenient_exact_match_at_least(pred, gold, schema, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecOutcome {
    Correct,
    Incorrect,
    /// The gold query itself fails; excluded from the denominator.
    InvalidGold,
}

/// Null is the only correct answer to a null gold; otherwise both queries
/// run and their tables are compared, in order only under a top-level
/// ORDER BY in the gold query.
pub fn execution_accuracy(
    pred: Option<&str>,
    gold: Option<&str>,
    db: Option<&Database>,
    schema: &SchemaCatalog,
    timeout: Duration,
) -> ExecOutcome {
    let (p, g) = match (pred, gold) {
        (None, None) => return ExecOutcome::Correct,
        (Some(_), None) | (None, Some(_)) => return ExecOutcome::Incorrect,
        (Some(p), Some(g)) => (p, g),
    };
    let Some(db) = db else {
        log::warn!("no database available to execute gold SQL");
        return ExecOutcome::InvalidGold;
    };
    let gold_table = match db.execute(g, timeout) {
        Ok(t) => t,
        Err(e) => {
            log::warn!("gold SQL fails: {e}");
            return ExecOutcome::InvalidGold;
        }
    };
    let ordered = parse_sql(g, schema).map(|s| s.is_ordered()).unwrap_or(false);
    match db.execute(p, timeout) {
        Ok(t) if t.matches(&gold_table, ordered) => ExecOutcome::Correct,
        _ => ExecOutcome::Incorrect,
    }
}

/// Every pivot is covered by the suggestions: all its readings for an
/// ambiguous pivot, the vague term itself for an unanswerable one.
pub fn suggestions_match(detector: &DetectorOutput, instance: &AuInstance) -> bool {
    let has = |s: &str| detector.suggested.iter().any(|x| same_name(x, s));
    instance.pivots.iter().all(|p| {
        if p.target.mode().is_ambiguity() {
            p.interpretations().iter().all(|m| has(&m.surface()))
        } else {
            has(&p.surface)
        }
    })
}

/// Judge pathway for match accuracy: the judge compares the suggestions
/// with the reference elements.
pub fn suggestions_match_judged(detector: &DetectorOutput, instance: &AuInstance, judge: &Gateway) -> Result<bool, EvalError> {
    let expected: Vec<String> = instance
        .pivots
        .iter()
        .flat_map(|p| if p.target.mode().is_ambiguity() { p.interpretations().iter().map(GroupMember::surface).collect() } else { vec![p.surface.clone()] })
        .collect();
    let request = GatewayRequest::new(Role::Judge, templates::EVAL_MATCH)?
        .json_var("predicted", &detector.suggested)
        .json_var("expected", &expected);
    Ok(judge.complete_json::<Verdict>(&request)?.pass)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionHit {
    pub detected: bool,
    pub matched: bool,
}

pub fn detection_hit(pred: Option<&DetectorOutput>, instance: &AuInstance) -> DetectionHit {
    match pred {
        Some(d) if d.flagged => DetectionHit { detected: true, matched: suggestions_match(d, instance) },
        _ => DetectionHit { detected: false, matched: false },
    }
}

/// (DA, MA) per category.
pub fn detection_scores(preds: &[Prediction], instances: &[AuInstance]) -> BTreeMap<Category, (f64, f64)> {
    let by_id: BTreeMap<&str, &Prediction> = preds.iter().map(|p| (p.instance_id.as_str(), p)).collect();
    let mut tallies: BTreeMap<Category, (usize, usize, usize)> = BTreeMap::new();
    for inst in instances {
        let hit = detection_hit(by_id.get(inst.id.as_str()).and_then(|p| p.detector.as_ref()), inst);
        let t = tallies.entry(inst.category()).or_default();
        t.0 += usize::from(hit.detected);
        t.1 += usize::from(hit.matched);
        t.2 += 1;
    }
    tallies.into_iter().map(|(c, (d, m, n))| (c, (d as f64 / n as f64, m as f64 / n as f64))).collect()
}

/// Unweighted mean over categories.
pub fn macro_accuracy<K>(per_category: &BTreeMap<K, f64>) -> Result<f64, EvalError> {
    if per_category.is_empty() {
        return Err(EvalError::NoCategories);
    }
    Ok(per_category.values().sum::<f64>() / per_category.len() as f64)
}

pub const DEFAULT_RESAMPLES: usize = 10_000;

/// Percentile bootstrap interval of the mean at confidence `level`.
pub fn bootstrap_ci<R: Rng + ?Sized>(outcomes: &[bool], resamples: usize, level: f64, rng: &mut R) -> (f64, f64) {
    assert!(!outcomes.is_empty(), "bootstrap needs at least one outcome");
    assert!(resamples > 0 && level > 0.0 && level < 1.0);
    let n = outcomes.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let hits = (0..n).filter(|_| outcomes[rng.gen_range(0..n)]).count();
            hits as f64 / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let lo = ((alpha * resamples as f64).floor() as usize).min(resamples - 1);
    let hi = (((1.0 - alpha) * resamples as f64).ceil() as usize).clamp(1, resamples) - 1;
    (means[lo], means[hi])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FewShotPolicy {
    None,
    NoMetaUni,
    NoMetaUniMulti,
    MetaUni,
    MetaUniMulti,
}

impl FewShotPolicy {
    fn with_metadata(self) -> bool {
        matches!(self, FewShotPolicy::MetaUni | FewShotPolicy::MetaUniMulti)
    }

    fn facets(self) -> &'static [Facet] {
        match self {
            FewShotPolicy::None => &[],
            FewShotPolicy::NoMetaUni | FewShotPolicy::MetaUni => &[Facet::Uni],
            FewShotPolicy::NoMetaUniMulti | FewShotPolicy::MetaUniMulti => &[Facet::Uni, Facet::Multi],
        }
    }
}

impl std::str::FromStr for FewShotPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown few-shot policy `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub instance_id: String,
    pub question: String,
    pub sqls: Vec<String>,
    /// Pivot surface to its candidate elements; metadata policies only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<BTreeMap<String, Vec<String>>>,
}

impl Exemplar {
    pub fn render(&self) -> String {
        let mut out = format!("Question: {}\n", self.question);
        if self.sqls.is_empty() {
            out.push_str("SQL: none, the question cannot be answered from this database\n");
        } else {
            out.push_str("SQL readings:\n");
            for (i, s) in self.sqls.iter().enumerate() {
                let _ = writeln!(out, "{}. {s}", i + 1);
            }
        }
        if let Some(groups) = &self.groups {
            let terms: Vec<String> = groups.keys().map(|k| format!("\"{k}\"")).collect();
            let _ = writeln!(out, "Vague terms: {}", terms.join(", "));
            out.push_str("Candidate elements per term:\n");
            for (k, v) in groups {
                let _ = writeln!(out, "- \"{k}\": {}", v.join(", "));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewShotSplit {
    pub exemplars: Vec<Exemplar>,
    pub held_out: Vec<AuInstance>,
}

impl FewShotSplit {
    pub fn prompt_block(&self) -> String {
        self.exemplars.iter().map(Exemplar::render).collect::<Vec<_>>().join("\n")
    }
}

/// Withholds `n_per_case` exemplars per category allowed by `policy`.
pub fn few_shot_exemplars<R: Rng + ?Sized>(
    instances: &[AuInstance],
    policy: FewShotPolicy,
    n_per_case: usize,
    rng: &mut R,
) -> Result<FewShotSplit, EvalError> {
    // one candidate per query; its other conversation types are withheld with it
    let mut by_cat: BTreeMap<Category, Vec<usize>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (i, inst) in instances.iter().enumerate() {
        if seen.insert(single_turn_key(&inst.id)) {
            by_cat.entry(inst.category()).or_default().push(i);
        }
    }
    let mut chosen: BTreeSet<usize> = BTreeSet::new();
    for category in Category::table_order().into_iter().filter(|c| policy.facets().contains(&c.facet)) {
        let pool = by_cat.get(&category).map(Vec::as_slice).unwrap_or_default();
        if pool.len() < n_per_case {
            return Err(EvalError::Insufficient { category: category.to_string(), needed: n_per_case, available: pool.len() });
        }
        chosen.extend(index::sample(rng, pool.len(), n_per_case).into_iter().map(|i| pool[i]));
    }
    let exemplars = chosen
        .iter()
        .map(|&i| {
            let inst = &instances[i];
            let groups = policy.with_metadata().then(|| {
                inst.pivots
                    .iter()
                    .map(|p| (p.surface.clone(), p.interpretations().iter().map(GroupMember::surface).collect()))
                    .collect()
            });
            Exemplar { instance_id: inst.id.clone(), question: inst.query().to_string(), sqls: inst.gold_sqls.clone(), groups }
        })
        .collect();
    let withheld: BTreeSet<&str> = chosen.iter().map(|&i| single_turn_key(&instances[i].id)).collect();
    let held_out = instances.iter().filter(|x| !withheld.contains(single_turn_key(&x.id))).cloned().collect();
    Ok(FewShotSplit { exemplars, held_out })
}

/// Id of an instance with its conversation-type suffix removed.
pub fn single_turn_key(id: &str) -> &str {
    ConversationType::ALL
        .iter()
        .find_map(|t| id.strip_suffix(t.as_str()).and_then(|s| s.strip_suffix('-')))
        .unwrap_or(id)
}

/// One record per A/U query: conversation-type expansions collapse onto the
/// first occurrence.
pub fn single_turn_view(instances: &[AuInstance]) -> Vec<AuInstance> {
    let mut seen = BTreeSet::new();
    instances.iter().filter(|i| seen.insert(single_turn_key(&i.id).to_string())).cloned().collect()
}

/// Predictions copied from the instances' own metadata.
pub fn oracle_predictions(instances: &[AuInstance], task: Task) -> Vec<Prediction> {
    instances
        .iter()
        .map(|i| match task {
            Task::SingleTurn => Prediction::single_turn(&i.id, i.gold_sqls.clone()),
            Task::MultiTurn => Prediction::multi_turn(&i.id, i.conversation.final_sql.clone()),
            Task::Detection => {
                let suggested = i
                    .pivots
                    .iter()
                    .flat_map(|p| {
                        if p.target.mode().is_ambiguity() {
                            p.interpretations().iter().map(GroupMember::surface).collect()
                        } else {
                            vec![p.surface.clone()]
                        }
                    })
                    .collect();
                Prediction::detection(&i.id, DetectorOutput { flagged: true, suggested, clarification: None })
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub metric: String,
    /// Row label to cell, in table order.
    pub rows: Vec<(String, MetricCell)>,
    pub macro_accuracy: Option<f64>,
}

impl MetricTable {
    fn build<R: Rng + ?Sized>(metric: &str, groups: Vec<(String, Vec<bool>)>, rng: &mut R, resamples: usize) -> Self {
        let rows: Vec<(String, MetricCell)> = groups
            .into_iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(label, v)| {
                let correct = v.iter().filter(|b| **b).count();
                let (ci_low, ci_high) = bootstrap_ci(&v, resamples, 0.95, rng);
                (label, MetricCell { correct, total: v.len(), accuracy: correct as f64 / v.len() as f64, ci_low, ci_high })
            })
            .collect();
        let per: BTreeMap<&str, f64> = rows.iter().map(|(l, c)| (l.as_str(), c.accuracy)).collect();
        Self { metric: metric.to_string(), macro_accuracy: macro_accuracy(&per).ok(), rows }
    }

    pub fn cell(&self, label: &str) -> Option<&MetricCell> {
        self.rows.iter().find(|(l, _)| l == label).map(|(_, c)| c)
    }

    pub fn render(&self) -> String {
        let mut out = format!("### {}\n\n| Category | Correct | Total | Accuracy (%) | 95% CI |\n|---|---|---|---|---|\n", self.metric);
        for (label, c) in &self.rows {
            let _ = writeln!(
                out,
                "| {label} | {} | {} | {:.1} | [{:.1}, {:.1}] |",
                c.correct,
                c.total,
                100.0 * c.accuracy,
                100.0 * c.ci_low,
                100.0 * c.ci_high
            );
        }
        if let Some(m) = self.macro_accuracy {
            let _ = writeln!(out, "| Macro | | | {:.1} | |", 100.0 * m);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub instances: usize,
    pub tables: Vec<MetricTable>,
    /// Instances left out of the denominator because their gold SQL fails.
    pub invalid_gold: Vec<String>,
}

impl EvalReport {
    pub fn table(&self, metric: &str) -> Option<&MetricTable> {
        self.tables.iter().find(|t| t.metric == metric)
    }

    pub fn render(&self) -> String {
        let mut out = format!("## {} evaluation over {} instances\n\n", self.task, self.instances);
        for t in &self.tables {
            out.push_str(&t.render());
            out.push('\n');
        }
        if !self.invalid_gold.is_empty() {
            let _ = writeln!(out, "Excluded for failing gold SQL: {}", self.invalid_gold.join(", "));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub resamples: usize,
    pub seed: u64,
    pub statement_timeout: Duration,
    /// Also report "at least two matches" lenient accuracy.
    pub lenient_two_or_more: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { resamples: DEFAULT_RESAMPLES, seed: 0, statement_timeout: crate::db::DEFAULT_TIMEOUT, lenient_two_or_more: false }
    }
}

fn grouped<T: Ord + ToString>(items: impl IntoIterator<Item = (T, bool)>) -> Vec<(String, Vec<bool>)> {
    let mut m: BTreeMap<T, Vec<bool>> = BTreeMap::new();
    for (k, v) in items {
        m.entry(k).or_default().push(v);
    }
    m.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn table_rank(label: &str) -> usize {
    Category::table_order().iter().position(|c| c.to_string() == label).unwrap_or(usize::MAX)
}

fn sorted_by_table(mut g: Vec<(String, Vec<bool>)>) -> Vec<(String, Vec<bool>)> {
    g.sort_by_key(|(l, _)| (table_rank(l), l.clone()));
    g
}

fn open_db(db_dir: Option<&Path>, db_id: &str) -> Option<Database> {
    let dir = db_dir?;
    Database::open(dir, db_id).map_err(|e: DbError| log::warn!("{db_id}: {e}")).ok()
}

/// Scores `preds` on `instances`. Missing predictions count as empty or
/// null; unknown ids and wrong shapes are errors.
pub fn evaluate(
    instances: &[AuInstance],
    preds: &[Prediction],
    catalogs: &[SchemaCatalog],
    db_dir: Option<&Path>,
    task: Task,
    options: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let known: BTreeSet<&str> = instances.iter().map(|i| i.id.as_str()).collect();
    let unknown: Vec<String> = preds.iter().filter(|p| !known.contains(p.instance_id.as_str())).map(|p| p.instance_id.clone()).collect();
    if !unknown.is_empty() {
        return Err(EvalError::UnknownIds(unknown));
    }
    if let Some(p) = preds.iter().find(|p| !p.fits(task)) {
        return Err(EvalError::Shape { id: p.instance_id.clone(), task });
    }
    let schema_of = |db_id: &str| catalogs.iter().find(|c| c.db_id() == db_id).ok_or_else(|| EvalError::UnknownDb(db_id.to_string()));
    for i in instances {
        schema_of(&i.source.db_id)?;
    }
    let by_id: BTreeMap<&str, &Prediction> = preds.iter().map(|p| (p.instance_id.as_str(), p)).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(options.seed);
    let mut tables = Vec::new();
    let mut invalid_gold = Vec::new();

    match task {
        Task::SingleTurn => {
            let mut sem = Vec::new();
            let mut lem = Vec::new();
            let mut lem2 = Vec::new();
            for inst in instances {
                let schema = schema_of(&inst.source.db_id)?;
                let pred: &[String] = by_id.get(inst.id.as_str()).and_then(|p| p.sqls.as_deref()).unwrap_or_default();
                let c = inst.category().to_string();
                if inst.gold_sqls.is_empty() {
                    // abstaining is the only correct answer
                    sem.push((c.clone(), pred.is_empty()));
                    lem.push((c.clone(), pred.is_empty()));
                    lem2.push((c, pred.is_empty()));
                } else {
                    sem.push((c.clone(), strict_exact_match(pred, &inst.gold_sqls, schema)));
                    lem.push((c.clone(), lenient_exact_match(pred, &inst.gold_sqls, schema)));
                    lem2.push((c, lenient_exact_match_at_least(pred, &inst.gold_sqls, schema, 2)));
                }
            }
            tables.push(MetricTable::build("SEM", sorted_by_table(grouped(sem)), &mut rng, options.resamples));
            tables.push(MetricTable::build("LEM", sorted_by_table(grouped(lem)), &mut rng, options.resamples));
            if options.lenient_two_or_more {
                tables.push(MetricTable::build("LEM (two or more)", sorted_by_table(grouped(lem2)), &mut rng, options.resamples));
            }
        }
        Task::MultiTurn => {
            let mut by_db: BTreeMap<&str, Vec<&AuInstance>> = BTreeMap::new();
            for inst in instances {
                by_db.entry(inst.source.db_id.as_str()).or_default().push(inst);
            }
            let results: Vec<(String, ExecOutcome, Category, ConversationType)> = by_db
                .into_par_iter()
                .map(|(db_id, group)| {
                    let schema = schema_of(db_id).expect("checked above");
                    let needs_db = group.iter().any(|i| i.conversation.final_sql.is_some());
                    let db = if needs_db { open_db(db_dir, db_id) } else { None };
                    group
                        .into_iter()
                        .map(|inst| {
                            let pred = by_id.get(inst.id.as_str()).and_then(|p| p.sql.as_deref());
                            let o = execution_accuracy(pred, inst.conversation.final_sql.as_deref(), db.as_ref(), schema, options.statement_timeout);
                            (inst.id.clone(), o, inst.category(), inst.conversation_type)
                        })
                        .collect::<Vec<_>>()
                })
                .flatten()
                .collect();
            let mut by_cat = Vec::new();
            let mut by_type = Vec::new();
            for (id, o, c, t) in results {
                if o == ExecOutcome::InvalidGold {
                    invalid_gold.push(id);
                    continue;
                }
                by_cat.push((c.to_string(), o == ExecOutcome::Correct));
                by_type.push((t.label().to_string(), o == ExecOutcome::Correct));
            }
            invalid_gold.sort();
            let mut type_groups = grouped(by_type);
            type_groups.sort_by_key(|(l, _)| ConversationType::ALL.iter().position(|t| t.label() == l));
            tables.push(MetricTable::build("EA", sorted_by_table(grouped(by_cat)), &mut rng, options.resamples));
            tables.push(MetricTable::build("EA by conversation type", type_groups, &mut rng, options.resamples));
        }
        Task::Detection => {
            let mut da = Vec::new();
            let mut ma = Vec::new();
            for inst in instances {
                let hit = detection_hit(by_id.get(inst.id.as_str()).and_then(|p| p.detector.as_ref()), inst);
                da.push((inst.category().to_string(), hit.detected));
                ma.push((inst.category().to_string(), hit.matched));
            }
            tables.push(MetricTable::build("DA", sorted_by_table(grouped(da)), &mut rng, options.resamples));
            tables.push(MetricTable::build("MA", sorted_by_table(grouped(ma)), &mut rng, options.resamples));
        }
    }
    Ok(EvalReport { task, instances: instances.len(), tables, invalid_gold })
}

/// Stratified sample for human annotation: up to `per_category` per
/// category, with a warning for short categories.
pub fn sample_for_annotation<R: Rng + ?Sized>(instances: &[AuInstance], per_category: usize, rng: &mut R) -> (Vec<AuInstance>, Vec<String>) {
    let mut by_cat: BTreeMap<Category, Vec<&AuInstance>> = BTreeMap::new();
    for i in instances {
        by_cat.entry(i.category()).or_default().push(i);
    }
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for (c, pool) in by_cat {
        if pool.len() < per_category {
            warnings.push(format!("{c}: only {} instances, taking all", pool.len()));
            out.extend(pool.into_iter().cloned());
            continue;
        }
        let mut picked = index::sample(rng, pool.len(), per_category).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| pool[i].clone()));
    }
    (out, warnings)
}
