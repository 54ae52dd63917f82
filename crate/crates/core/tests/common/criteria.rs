//! One check per headline acceptance criterion. Each returns a short
//! summary on success and the first violation otherwise.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aubench_core::conversation::is_refusal;
use aubench_core::eval::{self, DetectorOutput, EvalOptions, ExecOutcome, Prediction, Task};
use aubench_core::gateway::{CacheMode, Embedder, Gateway, LexiconEmbedder, ResponseCache, ScriptedBackend, SimulatedProvider};
use aubench_core::generation::{pivot_loop, query_loop, GenerationError, PivotContext, DEFAULT_MAX_ITERATIONS};
use aubench_core::model::{
    AmbiguityFlavor, AuMode, ColumnDef, ColumnRef, ConversationType, GroupFlavor, GroupMember, PivotTerm, SchemaCatalog,
    SemanticType, SourcePair, TableDef, TargetGroup, TargetSelection,
};
use aubench_core::normalize::{normalized_tokens, same_name};
use aubench_core::pipeline::Manifest;
use aubench_core::retrieval::{lexical_score, retrieve_scored, target_space, RetrievalConfig, Strategy};
use aubench_core::sql::parse_sql;

use super::fixtures::shared;
use super::sql_oracle;

pub type Outcome = Result<String, String>;
pub type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn parser_oracle() -> Outcome {
    let s = sql_oracle::schema();
    let corpus = sql_oracle::corpus();
    ensure(corpus.len() == 50, || format!("corpus has {} queries", corpus.len()))?;
    let start = Instant::now();
    for q in &corpus {
        let (p, o) = (sql_oracle::parser_out(q, &s), sql_oracle::oracle(q, &s));
        ensure(p == o, || format!("{q}: parser {p:?} vs oracle {o:?}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("50/50 queries agree in {elapsed:.2?}"))
}

pub fn pivot_safety() -> Outcome {
    let sh = shared();
    let instances = sh.instances();
    ensure(instances.len() >= 200, || format!("only {} instances emitted", instances.len()))?;
    for i in &instances {
        let schema = sh.schema(&i.source.db_id);
        for (a, p) in i.pivots.iter().enumerate() {
            ensure(!schema.matches_column(&p.surface), || format!("{}: pivot `{}` names a column", i.id, p.surface))?;
            for q in &i.pivots[a + 1..] {
                ensure(!same_name(&p.surface, &q.surface), || format!("{}: duplicate pivot `{}`", i.id, p.surface))?;
            }
        }
    }
    Ok(format!("{} instances, no pivot names a column or repeats", instances.len()))
}

fn budget_schema() -> SchemaCatalog {
    let c = |n: &str| ColumnDef::new(n, SemanticType::Number);
    SchemaCatalog::new("budget", vec![TableDef::new("Trips", vec![c("ticketPrice"), c("fuelCost"), c("distance")])]).unwrap()
}

fn fresh(backend: Arc<ScriptedBackend>) -> Gateway {
    Gateway::new(backend, Arc::new(ResponseCache::in_memory()), CacheMode::Record)
}

pub fn loop_budget() -> Outcome {
    let schema = budget_schema();
    let target = TargetSelection::new(AuMode::col_amb(AmbiguityFlavor::Semantic), ColumnRef::new("Trips", "ticketPrice"), None).unwrap();
    let group = TargetGroup { members: vec![GroupMember::Column(ColumnRef::new("Trips", "fuelCost"))], flavor: GroupFlavor::Semantic };
    let space: Vec<GroupMember> = schema.columns().filter(|c| c.column != "ticketPrice").map(GroupMember::Column).collect();
    let ctx = PivotContext { target: &target, group: &group, space: &space, schema: &schema, question: "Show ticket price", exclusions: &[] };
    let words = ["outlay", "charge amount", "money figure", "billing figure", "spend figure", "extra"];
    let generator = Arc::new(ScriptedBackend::new("gen", move |_, n| Ok(format!(r#"{{"term":"{}","group":["fuelCost"]}}"#, words[n]))));
    let judge_reply = r#"{"pivot_validity":{"pass":false,"feedback":"no"},"pivot_dissimilarity_all":{"pass":false,"feedback":"no"},"pivot_term_for_target_group":{"pass":false,"feedback":"no"},"validity":{"pass":false,"feedback":"no"},"consistency":{"pass":false,"feedback":"no"}}"#;
    let judges: Vec<Arc<ScriptedBackend>> = (0..3).map(|i| Arc::new(ScriptedBackend::constant(format!("judge-{i}"), judge_reply))).collect();
    let panel: Vec<Gateway> = judges.iter().map(|j| fresh(j.clone())).collect();
    match pivot_loop(&ctx, &panel, &fresh(generator.clone()), DEFAULT_MAX_ITERATIONS) {
        Err(GenerationError::TermEvaluatorFailure { attempts: 5, .. }) => {}
        other => return Err(format!("pivot loop ended with {:?}", other.map(|(p, s)| (p.surface, s.attempts())))),
    }
    ensure(generator.calls() == 5, || format!("pivot generator called {} times", generator.calls()))?;
    for j in &judges {
        ensure(j.calls() == 5, || format!("pivot judge called {} times", j.calls()))?;
    }

    let source = SourcePair::new("Show the ticket price of each trip", "SELECT ticketPrice FROM Trips", "budget");
    let pivot = PivotTerm { surface: "outlay".into(), target, group };
    let rewrites = Arc::new(ScriptedBackend::new("gen2", |_, n| Ok(format!(r#"{{"query":"Show the outlay of trip {n}"}}"#))));
    let judges: Vec<Arc<ScriptedBackend>> = (0..3).map(|i| Arc::new(ScriptedBackend::constant(format!("qjudge-{i}"), judge_reply))).collect();
    let panel: Vec<Gateway> = judges.iter().map(|j| fresh(j.clone())).collect();
    match query_loop(&source, &[pivot], &schema, &panel, &fresh(rewrites.clone()), DEFAULT_MAX_ITERATIONS) {
        Err(GenerationError::QueryEvaluatorFailure { attempts: 5, .. }) => {}
        other => return Err(format!("query loop ended with {:?}", other.map(|(q, _)| q))),
    }
    ensure(rewrites.calls() == 5, || format!("query generator called {} times", rewrites.calls()))?;
    for j in &judges {
        ensure(j.calls() == 5, || format!("query judge called {} times", j.calls()))?;
    }
    Ok("pivot and query loops stop after exactly 5 failed attempts".into())
}

pub fn gold_validity() -> Outcome {
    let sh = shared();
    let timeout = Duration::from_secs(30);
    let mut checked = 0;
    for i in sh.instances() {
        let schema = sh.schema(&i.source.db_id);
        if i.is_ambiguity() {
            ensure(i.gold_sqls.len() >= 2, || format!("{}: {} gold queries", i.id, i.gold_sqls.len()))?;
            let db = sh.database(&i.source.db_id);
            for g in &i.gold_sqls {
                parse_sql(g, schema).map_err(|e| format!("{}: `{g}` does not parse: {e}", i.id))?;
                db.execute(g, timeout).map_err(|e| format!("{}: `{g}` fails: {e}", i.id))?;
                let o = eval::execution_accuracy(Some(g), Some(g), Some(&db), schema, timeout);
                ensure(o == ExecOutcome::Correct, || format!("{}: EA(gold, gold) = {o:?}", i.id))?;
                checked += 1;
            }
        } else {
            ensure(i.gold_sqls.is_empty(), || format!("{}: unanswerable with gold SQL", i.id))?;
        }
    }
    Ok(format!("{checked} gold queries parse, execute and self-match"))
}

fn sql_pool() -> Vec<String> {
    sql_oracle::corpus().into_iter().filter(|q| *q != "SELECT 1").map(String::from).collect()
}

fn cosmetic(sql: &str, rng: &mut ChaCha8Rng) -> String {
    if rng.gen_bool(0.5) {
        sql.replacen("SELECT ", "select ", 1).replacen(" FROM ", " from ", 1)
    } else {
        format!("  {sql} ")
    }
}

/// A random gold set and a prediction drawn partly from it.
pub fn random_sets(rng: &mut ChaCha8Rng, pool: &[String]) -> (Vec<String>, Vec<String>) {
    let n = rng.gen_range(1..=4);
    let gold: Vec<String> = pool.choose_multiple(rng, n).cloned().collect();
    let mut pred = Vec::new();
    for g in &gold {
        if rng.gen_bool(0.7) {
            pred.push(cosmetic(g, rng));
        }
    }
    for _ in 0..rng.gen_range(0..=2) {
        pred.push(pool.choose(rng).unwrap().clone());
    }
    pred.shuffle(rng);
    (gold, pred)
}

pub fn random_detector(rng: &mut ChaCha8Rng, truth: &[String]) -> DetectorOutput {
    let extras = ["price", "date", "status", "nothing"];
    let mut suggested: Vec<String> = truth.iter().filter(|_| rng.gen_bool(0.6)).cloned().collect();
    if rng.gen_bool(0.3) {
        suggested.push(extras.choose(rng).unwrap().to_string());
    }
    DetectorOutput { flagged: rng.gen_bool(0.7), suggested, clarification: None }
}

pub fn metric_oracles() -> Outcome {
    let sc = sql_oracle::schema();
    let pool = sql_pool();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut strict = 0;
    for _ in 0..500 {
        let (gold, pred) = random_sets(&mut rng, &pool);
        if eval::strict_exact_match(&pred, &gold, &sc) {
            strict += 1;
            ensure(eval::lenient_exact_match(&pred, &gold, &sc), || format!("SEM without LEM: {pred:?} vs {gold:?}"))?;
        }
    }
    ensure(strict > 0, || "no randomized fixture was a strict match".into())?;

    let sh = shared();
    let instances = sh.instances();
    for round in 0..20 {
        let preds: Vec<Prediction> = instances
            .iter()
            .map(|i| {
                let truth = match eval::oracle_predictions(std::slice::from_ref(i), Task::Detection).remove(0).detector {
                    Some(d) => d.suggested,
                    None => Vec::new(),
                };
                Prediction::detection(&i.id, random_detector(&mut rng, &truth))
            })
            .collect();
        for (c, (da, ma)) in eval::detection_scores(&preds, &instances) {
            ensure(ma <= da, || format!("round {round}, {c}: MA {ma} > DA {da}"))?;
        }
    }

    let options = EvalOptions { resamples: 200, ..EvalOptions::default() };
    let db_dir = super::fixtures::db_dir();
    let single = eval::single_turn_view(&instances);
    let mut perfect = BTreeMap::new();
    for (task, set) in [(Task::SingleTurn, &single), (Task::MultiTurn, &instances), (Task::Detection, &instances)] {
        let preds = eval::oracle_predictions(set, task);
        let report = eval::evaluate(set, &preds, &sh.catalogs, Some(&db_dir), task, &options).map_err(|e| e.to_string())?;
        ensure(report.invalid_gold.is_empty(), || format!("{task}: invalid gold {:?}", report.invalid_gold))?;
        for t in &report.tables {
            for (label, cell) in &t.rows {
                ensure(cell.correct == cell.total, || format!("{task} {} {label}: {}/{}", t.metric, cell.correct, cell.total))?;
            }
            perfect.insert(t.metric.clone(), t.rows.len());
        }
    }
    for m in ["SEM", "LEM", "EA", "DA", "MA"] {
        ensure(perfect.contains_key(m), || format!("{m} was not reported"))?;
    }

    let timeout = Duration::from_secs(30);
    for i in instances.iter().filter(|i| !i.is_ambiguity()) {
        let schema = sh.schema(&i.source.db_id);
        let db = sh.database(&i.source.db_id);
        let null = eval::execution_accuracy(None, i.conversation.final_sql.as_deref(), Some(&db), schema, timeout);
        let some = eval::execution_accuracy(Some(&i.source.sql), i.conversation.final_sql.as_deref(), Some(&db), schema, timeout);
        ensure(null == ExecOutcome::Correct && some == ExecOutcome::Incorrect, || format!("{}: null {null:?}, sql {some:?}", i.id))?;
    }
    Ok(format!("SEM=>LEM on 500 fixtures ({strict} strict), MA<=DA, oracle at 100% on {} instances", instances.len()))
}

const VOCAB: &[&str] = &[
    "price", "cost", "fee", "salary", "city", "region", "town", "score", "rating", "grade", "phone", "email", "stock", "volume",
    "job", "role", "venue", "stadium", "weight", "speed", "duration", "name", "date", "id", "code", "total", "annual", "monthly",
    "first", "last", "order", "customer", "product", "home", "office", "start", "end", "count",
];

fn camel(words: &[&str]) -> String {
    words
        .iter()
        .enumerate()
        .map(|(i, w)| if i == 0 { w.to_string() } else { format!("{}{}", w[..1].to_uppercase(), &w[1..]) })
        .collect()
}

fn synthetic_schema(rng: &mut ChaCha8Rng) -> SchemaCatalog {
    let mut names = std::collections::BTreeSet::new();
    let n = rng.gen_range(4..=14);
    while names.len() < n {
        let k = rng.gen_range(1..=3);
        let words: Vec<&str> = VOCAB.choose_multiple(rng, k).copied().collect();
        names.insert(camel(&words));
    }
    let cols = names.into_iter().map(|n| ColumnDef::new(n, SemanticType::Text)).collect();
    SchemaCatalog::new("synthetic", vec![TableDef::new("T", cols)]).unwrap()
}

pub fn retrieval_properties() -> Outcome {
    let exact = lexical_score("Monthly Orders", "Yearly Orders");
    ensure(exact == 1.0 / 3.0, || format!("lexical_score example is {exact}"))?;
    let cache = Arc::new(ResponseCache::in_memory());
    let embedder = Embedder::new(Arc::new(LexiconEmbedder::new()), cache.clone(), CacheMode::Record);
    let llm = Gateway::new(Arc::new(SimulatedProvider::new("sim")), cache, CacheMode::Record);
    let config = RetrievalConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut lexical_groups, mut semantic_groups) = (0, 0);
    for _ in 0..1000 {
        let schema = synthetic_schema(&mut rng);
        let cols: Vec<ColumnRef> = schema.columns().collect();
        let column = cols.choose(&mut rng).unwrap().clone();
        for flavor in [AmbiguityFlavor::Lexical, AmbiguityFlavor::Semantic] {
            let target = TargetSelection::new(AuMode::col_amb(flavor), column.clone(), None).unwrap();
            let space = target_space(&target, &schema, 50).map_err(|e| e.to_string())?;
            let Ok(scored) = retrieve_scored(&target, &space, Some(flavor).into(), Strategy::Hybrid, &embedder, &llm, &config) else {
                continue;
            };
            let t = target.surface();
            for c in &scored {
                let m = c.member.surface();
                match flavor {
                    AmbiguityFlavor::Lexical => {
                        let tt = normalized_tokens(&t);
                        ensure(normalized_tokens(&m).iter().any(|x| tt.contains(x)), || format!("{m} shares no token with {t}"))?;
                    }
                    AmbiguityFlavor::Semantic => {
                        let lex = c.lexical_score.unwrap_or(1.0);
                        let sem = c.semantic_score.unwrap_or(0.0);
                        ensure(lex < config.lexical_ceiling && sem >= config.semantic_floor, || format!("{m} for {t}: lexical {lex}, semantic {sem}"))?;
                    }
                }
            }
            match flavor {
                AmbiguityFlavor::Lexical => lexical_groups += 1,
                AmbiguityFlavor::Semantic => semantic_groups += 1,
            }
        }
    }
    ensure(lexical_groups > 0 && semantic_groups > 0, || format!("groups formed: {lexical_groups} lexical, {semantic_groups} semantic"))?;
    Ok(format!("1000 schemas: {lexical_groups} lexical and {semantic_groups} semantic groups obey their filters"))
}

pub fn bootstrap() -> Outcome {
    let outcomes: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
    let start = Instant::now();
    let (lo, hi) = eval::bootstrap_ci(&outcomes, 10_000, 0.95, &mut ChaCha8Rng::seed_from_u64(0));
    let elapsed = start.elapsed();
    let normal = 2.0 * 1.96 * (0.25f64 / 1000.0).sqrt();
    ensure(lo < 0.5 && 0.5 < hi, || format!("[{lo}, {hi}] misses 0.5"))?;
    ensure(((hi - lo) - normal).abs() <= 0.2 * normal, || format!("width {} vs {normal}", hi - lo))?;
    ensure(elapsed < Duration::from_secs(2), || format!("took {elapsed:?}"))?;
    Ok(format!("[{lo:.3}, {hi:.3}], width {:.4} vs {normal:.4}, {elapsed:.2?}", hi - lo))
}

pub fn determinism() -> Outcome {
    let sh = shared();
    ensure(sh.replay.instances == sh.replay_again.instances, || "instance files differ".into())?;
    ensure(sh.replay.manifest == sh.replay_again.manifest, || "manifests differ".into())?;
    ensure(!sh.replay.instances.is_empty(), || "empty instance file".into())?;
    Ok(format!("{} instance bytes and {} manifest bytes identical", sh.replay.instances.len(), sh.replay.manifest.len()))
}

pub fn statistics_conformance() -> Outcome {
    let sh = shared();
    let manifest: Manifest = serde_json::from_slice(&sh.replay.manifest).map_err(|e| e.to_string())?;
    let rows: Vec<_> = manifest.report.rows().collect();
    ensure(rows.len() == 10, || format!("{} categories", rows.len()))?;
    for r in &rows {
        ensure(r.emitted.len() == 4, || format!("{}: {} conversation columns", r.category(), r.emitted.len()))?;
        ensure(r.attempted == r.emitted_total() + r.failed_total(), || format!("{} does not reconcile", r.category()))?;
    }
    ensure(manifest.attempted == manifest.emitted + manifest.failed, || "totals do not reconcile".into())?;
    ensure(manifest.emitted == sh.replay.output.instances.len(), || "emitted count differs from the instance file".into())?;
    let header = manifest.statistics_table.lines().next().unwrap_or_default().to_string();
    for t in ConversationType::ALL {
        ensure(header.contains(t.label()), || format!("statistics table lacks {}", t.label()))?;
    }
    ensure(manifest.statistics_table.lines().count() == 7, || "statistics table should have 5 case rows".into())?;
    Ok(format!("10 categories x 4 conversation types; {} attempted = {} emitted + {} failed", manifest.attempted, manifest.emitted, manifest.failed))
}

pub fn conversation_contract() -> Outcome {
    let sh = shared();
    let mut resolved = 0;
    let mut refused = 0;
    for i in sh.instances() {
        let c = &i.conversation;
        ensure(c.alternates(), || format!("{}: turns do not alternate", i.id))?;
        if i.is_ambiguity() && i.conversation_type.resolves() {
            let sql = c.final_sql.as_ref().ok_or_else(|| format!("{}: no final SQL", i.id))?;
            ensure(i.gold_sqls.contains(sql), || format!("{}: final SQL not among gold", i.id))?;
            resolved += 1;
        } else {
            let last = c.last_agent_turn().map(|t| t.text.as_str()).unwrap_or_default();
            ensure(is_refusal(last), || format!("{}: no refusal in `{last}`", i.id))?;
            ensure(c.final_sql.is_none(), || format!("{}: refusal with final SQL", i.id))?;
            refused += 1;
        }
    }
    Ok(format!("{resolved} resolved conversations end in gold SQL, {refused} end in a refusal"))
}

pub const ALL: &[Criterion] = &[
    ("parser oracle", parser_oracle),
    ("pivot safety", pivot_safety),
    ("loop budget", loop_budget),
    ("gold-SQL validity", gold_validity),
    ("metric oracles", metric_oracles),
    ("retrieval properties", retrieval_properties),
    ("bootstrap", bootstrap),
    ("determinism", determinism),
    ("statistics-table conformance", statistics_conformance),
    ("conversation contract", conversation_contract),
];
