//! End-to-end generation: target sampling, retrieval, pivot and query
//! loops, conversations and screening, one work unit per (pair, mode, K).

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::conversation::{build_conversation, clarification_turn, DialogueSpec};
use crate::db::{Database, DEFAULT_TIMEOUT};
use crate::gateway::{Backends, Gateway, TranscriptLog};
use crate::generation::{pivot_loop, query_loop, resolve_gold_sqls, GenerationError, PivotContext, DEFAULT_MAX_ITERATIONS};
use crate::io::{InstanceRecord, Provenance, GENERATOR_VERSION};
use crate::model::{
    AuCase, AuInstance, AuMode, Category, ColumnRef, ConversationType, Facet, GroupFlavor, GroupMember, PivotTerm, SchemaCatalog,
    SourcePair, TargetGroup, TargetSelection,
};
use crate::report::{FailureStage, RunReport};
use crate::retrieval::{retrieve_group, target_space, RetrievalConfig, RetrievalError, Strategy};
use crate::screening::screen;
use crate::sql::{parse_sql, sample_targets_excluding, SqlStructure, UnqualifiedForAu};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("screening needs an odd number of judges, got {0}")]
    JudgeCount(usize),
    #[error("no schema for database `{0}`")]
    UnknownDb(String),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error("invalid plan: {0}")]
    Plan(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub modes: Vec<AuMode>,
    /// Facet counts to attempt, each in 1..=max_facets.
    pub facets: Vec<usize>,
    pub max_facets: usize,
    pub conversation_types: Vec<ConversationType>,
    pub max_iterations: usize,
    pub strategy: Strategy,
    pub retrieval: RetrievalConfig,
    /// Values sampled per column for value modes.
    pub value_sample_k: usize,
    pub statement_timeout_secs: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Also attempt multi-facet instances whose targets use different modes.
    #[serde(default)]
    pub mix_modes: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            modes: vec![
                AuMode::col_amb(crate::model::AmbiguityFlavor::Lexical),
                AuMode::col_amb(crate::model::AmbiguityFlavor::Semantic),
                AuMode::val_amb(),
                AuMode::col_unans(),
                AuMode::val_unans(),
            ],
            facets: vec![1, 2],
            max_facets: 2,
            conversation_types: ConversationType::ALL.to_vec(),
            max_iterations: DEFAULT_MAX_ITERATIONS,
            strategy: Strategy::Hybrid,
            retrieval: RetrievalConfig::default(),
            value_sample_k: 50,
            statement_timeout_secs: DEFAULT_TIMEOUT.as_secs(),
            workers: None,
            mix_modes: false,
        }
    }
}

impl PipelineConfig {
    fn validate(&self) -> Result<(), PipelineError> {
        if self.conversation_types.is_empty() {
            return Err(PipelineError::Plan("at least one conversation type is required".into()));
        }
        if let Some(k) = self.facets.iter().find(|k| **k == 0 || **k > self.max_facets) {
            return Err(PipelineError::Plan(format!("facet count {k} outside 1..={}", self.max_facets)));
        }
        if self.max_iterations == 0 {
            return Err(PipelineError::Plan("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// One generation attempt and the conversation types it is expanded into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkUnit {
    pub pair_index: usize,
    pub source_index: usize,
    /// One mode per target, in target order.
    pub modes: Vec<AuMode>,
    pub facet_count: usize,
    pub conversation_types: Vec<ConversationType>,
    pub seed: u64,
}

impl WorkUnit {
    pub fn category(&self) -> Category {
        let first = self.modes[0].case();
        let case = if self.modes.iter().all(|m| m.case() == first) { first } else { AuCase::Mixed };
        Category { facet: Facet::from_count(self.facet_count), case }
    }

    pub fn is_ambiguity(&self) -> bool {
        self.modes.iter().all(AuMode::is_ambiguity)
    }
}

fn case_slug(case: AuCase) -> &'static str {
    match case {
        AuCase::LexicalAmb => "lexical_amb",
        AuCase::SemanticAmb => "semantic_amb",
        AuCase::ValueAmb => "value_amb",
        AuCase::UnansColumn => "unans_column",
        AuCase::UnansValue => "unans_value",
        AuCase::Mixed => "mixed",
    }
}

pub fn instance_id(db_id: &str, source_index: usize, category: Category, t: ConversationType) -> String {
    format!("{db_id}-{source_index:05}-{}-{}-{}", case_slug(category.case), category.facet.label(), t.as_str())
}

fn derive_seed(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Modes of the mixed unit for the `turn`-th pair at facet count `k`: `k`
/// consecutive modes of `pool`, starting at `turn`.
fn mixed_modes(pool: &[AuMode], k: usize, turn: usize) -> Vec<AuMode> {
    (0..k).map(|j| pool[(turn + j) % pool.len()]).collect()
}

/// Every pair is attempted under every configured mode and facet count.
/// Ambiguity units expand into all conversation types; unanswerable units
/// take one type, round-robin over pairs within each (mode, facet count).
/// With `mix_modes`, each pair also gets one mixed unit per facet count of
/// two or more, rotating through the configured modes.
pub fn plan(pairs: &[SourcePair], source_indices: &[usize], config: &PipelineConfig) -> Vec<WorkUnit> {
    let mut units = Vec::new();
    let mut unans_turn: BTreeMap<(String, usize), usize> = BTreeMap::new();
    let mut mixed_turn: BTreeMap<usize, usize> = BTreeMap::new();
    let mut distinct_cases: Vec<AuCase> = config.modes.iter().map(AuMode::case).collect();
    distinct_cases.sort();
    distinct_cases.dedup();
    for (i, pair) in pairs.iter().enumerate() {
        let source_index = source_indices.get(i).copied().unwrap_or(i);
        let mut push = |modes: Vec<AuMode>, k: usize, key: String| {
            let conversation_types = if modes.iter().all(AuMode::is_ambiguity) {
                config.conversation_types.clone()
            } else {
                let turn = unans_turn.entry((key.clone(), k)).or_default();
                let t = config.conversation_types[*turn % config.conversation_types.len()];
                *turn += 1;
                vec![t]
            };
            let seed = derive_seed(&[&config.seed.to_string(), &pair.db_id, &source_index.to_string(), &key, &k.to_string()]);
            units.push(WorkUnit { pair_index: i, source_index, modes, facet_count: k, conversation_types, seed });
        };
        for mode in &config.modes {
            for &k in &config.facets {
                push(vec![*mode; k], k, mode.to_string());
            }
        }
        if config.mix_modes && distinct_cases.len() > 1 {
            for &k in config.facets.iter().filter(|k| **k > 1) {
                let turn = mixed_turn.entry(k).or_default();
                let mut modes = mixed_modes(&config.modes, k, *turn);
                *turn += 1;
                // a rotation can land on a single case when modes repeat
                if modes.iter().all(|m| m.case() == modes[0].case()) {
                    let other = config.modes.iter().find(|m| m.case() != modes[0].case()).expect("two cases present");
                    modes[k - 1] = *other;
                }
                let key = modes.iter().map(AuMode::to_string).collect::<Vec<_>>().join("+");
                push(modes, k, key);
            }
        }
    }
    units
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub id: String,
    pub stage: FailureStage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UnitOutcome {
    pub emitted: Vec<InstanceRecord>,
    pub failures: Vec<FailureRecord>,
}

struct StageFailure {
    stage: FailureStage,
    message: String,
}

impl StageFailure {
    fn new(stage: FailureStage, message: impl Into<String>) -> Self {
        Self { stage, message: message.into() }
    }
}

impl From<GenerationError> for StageFailure {
    fn from(e: GenerationError) -> Self {
        let stage = match e {
            GenerationError::TermEvaluatorFailure { .. } => FailureStage::TermEvaluatorFailure,
            GenerationError::QueryEvaluatorFailure { .. } => FailureStage::QueryEvaluatorFailure,
            _ => FailureStage::Other,
        };
        Self::new(stage, e.to_string())
    }
}

/// Shared read-only inputs of a run.
pub struct RunInputs<'a> {
    pub catalogs: &'a [SchemaCatalog],
    pub pairs: &'a [SourcePair],
    pub source_indices: &'a [usize],
    /// Directory holding one SQLite file (or SQL script) per database.
    pub db_dir: Option<PathBuf>,
}

struct Accepted {
    schema: SchemaCatalog,
    structure: SqlStructure,
    pivots: Vec<PivotTerm>,
    au_query: String,
    gold_sqls: Vec<String>,
    clarification: String,
}

fn with_values(
    schema: &SchemaCatalog,
    targets: &[TargetSelection],
    db: Option<&Database>,
    sample_k: usize,
    seed: u64,
) -> Result<SchemaCatalog, StageFailure> {
    let mut out = schema.clone();
    for t in targets.iter().filter(|t| t.mode().is_value()) {
        let Some(db) = db else {
            return Err(StageFailure::new(FailureStage::Other, format!("no database to sample values of {}", t.column())));
        };
        let values = db
            .sample_values(t.column(), sample_k, seed)
            .map_err(|e| StageFailure::new(FailureStage::Other, e.to_string()))?;
        out.set_sampled_values(t.column(), values);
    }
    Ok(out)
}

fn scoped_space(target: &TargetSelection, schema: &SchemaCatalog, structure: &SqlStructure, sample_k: usize) -> Result<Vec<GroupMember>, RetrievalError> {
    let space = target_space(target, schema, sample_k)?;
    if target.mode().is_value() {
        return Ok(space);
    }
    // readings must stay substitutable: only tables the target can see
    let tables = structure.tables_in_scope_of(target.column());
    Ok(space.into_iter().filter(|m| matches!(m, GroupMember::Column(c) if tables.contains(&c.table))).collect())
}

fn retrieval_failure(e: RetrievalError) -> StageFailure {
    let stage = match e {
        RetrievalError::NonexistentTargetGroup { .. } => FailureStage::NonexistentTargetGroup,
        RetrievalError::EmptyValueSpace { .. } => FailureStage::UnqualifiedForAu,
        _ => FailureStage::Other,
    };
    StageFailure::new(stage, e.to_string())
}

struct Context<'a> {
    config: &'a PipelineConfig,
    backends: &'a Backends,
    generator: Gateway,
    judges: Vec<Gateway>,
}

fn generate_unit(unit: &WorkUnit, source: &SourcePair, schema: &SchemaCatalog, db: Option<&Database>, cx: &Context<'_>) -> Result<Accepted, StageFailure> {
    let structure = parse_sql(&source.sql, schema).map_err(|e| StageFailure::new(FailureStage::Other, e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(unit.seed);
    let unqualified = |e: UnqualifiedForAu| StageFailure::new(FailureStage::UnqualifiedForAu, e.to_string());
    let targets = if unit.modes.iter().all(|m| *m == unit.modes[0]) {
        sample_targets_excluding(&structure, unit.modes[0], unit.facet_count, &[], &mut rng).map_err(unqualified)?
    } else {
        let mut targets: Vec<TargetSelection> = Vec::with_capacity(unit.facet_count);
        for mode in &unit.modes {
            let taken: Vec<ColumnRef> = targets.iter().map(|t| t.column().clone()).collect();
            targets.extend(sample_targets_excluding(&structure, *mode, 1, &taken, &mut rng).map_err(unqualified)?);
        }
        targets
    };
    let schema = with_values(schema, &targets, db, cx.config.value_sample_k, unit.seed)?;

    let mut pivots: Vec<PivotTerm> = Vec::with_capacity(targets.len());
    for target in &targets {
        let mode = target.mode();
        let flavor = GroupFlavor::from(mode.flavor());
        let space = match scoped_space(target, &schema, &structure, cx.config.value_sample_k) {
            Ok(s) => s,
            Err(RetrievalError::EmptyValueSpace { .. }) if !mode.is_ambiguity() => Vec::new(),
            Err(e) => return Err(retrieval_failure(e)),
        };
        let group = if mode.is_ambiguity() {
            retrieve_group(target, &space, flavor, cx.config.strategy, &cx.backends.embedder, &cx.generator, &cx.config.retrieval)
                .map_err(retrieval_failure)?
        } else {
            TargetGroup::empty()
        };
        let exclusions: Vec<String> = pivots.iter().map(|p| p.surface.clone()).collect();
        let ctx = PivotContext {
            target,
            group: &group,
            space: &space,
            schema: &schema,
            question: &source.question,
            exclusions: &exclusions,
        };
        let (pivot, _) = pivot_loop(&ctx, &cx.judges, &cx.generator, cx.config.max_iterations)?;
        pivots.push(pivot);
    }

    let (au_query, _) = query_loop(source, &pivots, &schema, &cx.judges, &cx.generator, cx.config.max_iterations)?;
    let gold_sqls = resolve_gold_sqls(&structure, &pivots, &schema);
    if unit.is_ambiguity() {
        if gold_sqls.len() < 2 {
            return Err(StageFailure::new(FailureStage::Other, format!("weak ambiguity signal: {} gold SQL", gold_sqls.len())));
        }
        if let Some(db) = db {
            let timeout = Duration::from_secs(cx.config.statement_timeout_secs);
            for g in &gold_sqls {
                db.execute(g, timeout).map_err(|e| StageFailure::new(FailureStage::Other, format!("gold SQL fails: {e}")))?;
            }
        }
    }
    let clarification = clarification_turn(&pivots, &cx.generator).map_err(|e| StageFailure::new(FailureStage::Other, e.to_string()))?;
    Ok(Accepted { schema, structure, pivots, au_query, gold_sqls, clarification })
}

fn sorted_hashes(logs: &[&TranscriptLog]) -> Vec<String> {
    let mut out: Vec<String> = logs.iter().flat_map(|l| l.hashes()).collect();
    out.sort();
    out.dedup();
    out
}

/// Runs one unit to completion. Never fails: every problem becomes a
/// failure record for each planned conversation type.
pub fn run_unit(unit: &WorkUnit, inputs: &RunInputs<'_>, config: &PipelineConfig, backends: &Backends) -> UnitOutcome {
    let source = &inputs.pairs[unit.pair_index];
    let category = unit.category();
    let ids: Vec<String> =
        unit.conversation_types.iter().map(|t| instance_id(&source.db_id, unit.source_index, category, *t)).collect();
    let fail_all = |f: StageFailure| UnitOutcome {
        emitted: Vec::new(),
        failures: ids.iter().map(|id| FailureRecord { id: id.clone(), stage: f.stage, message: f.message.clone() }).collect(),
    };
    let Some(schema) = inputs.catalogs.iter().find(|c| c.db_id() == source.db_id) else {
        return fail_all(StageFailure::new(FailureStage::Other, format!("no schema for {}", source.db_id)));
    };
    let db = inputs.db_dir.as_ref().and_then(|dir| match Database::open(dir, &source.db_id) {
        Ok(db) => Some(db),
        Err(e) => {
            log::warn!("{}: {e}", source.db_id);
            None
        }
    });

    let gen_log = TranscriptLog::new();
    let cx = Context {
        config,
        backends,
        generator: backends.generator.with_log(&gen_log),
        judges: backends.judges.iter().map(|j| j.with_log(&gen_log)).collect(),
    };
    let accepted = match generate_unit(unit, source, schema, db.as_ref(), &cx) {
        Ok(a) => a,
        Err(f) => return fail_all(f),
    };

    let mut out = UnitOutcome::default();
    for (t, id) in unit.conversation_types.iter().zip(&ids) {
        let conv_log = TranscriptLog::new();
        let generator = backends.generator.with_log(&conv_log);
        let judges: Vec<Gateway> = backends.judges.iter().map(|j| j.with_log(&conv_log)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[&unit.seed.to_string(), t.as_str()]));
        let spec = DialogueSpec {
            au_query: &accepted.au_query,
            clarification: &accepted.clarification,
            conversation_type: *t,
            structure: &accepted.structure,
            schema: &accepted.schema,
            pivots: &accepted.pivots,
            gold_sqls: &accepted.gold_sqls,
        };
        let conversation = match build_conversation(&spec, &generator, &mut rng) {
            Ok(c) => c,
            Err(e) => {
                out.failures.push(FailureRecord { id: id.clone(), stage: FailureStage::Other, message: e.to_string() });
                continue;
            }
        };
        let mut instance = AuInstance {
            id: id.clone(),
            source: source.clone(),
            modes: unit.modes.clone(),
            facet_count: unit.facet_count,
            pivots: accepted.pivots.clone(),
            conversation_type: *t,
            conversation,
            gold_sqls: accepted.gold_sqls.clone(),
            validation_flag: false,
        };
        if let Err(e) = instance.validate(config.max_facets) {
            out.failures.push(FailureRecord { id: id.clone(), stage: FailureStage::Other, message: e.to_string() });
            continue;
        }
        let outcome = match screen(&instance, &accepted.schema, &judges) {
            Ok(o) => o,
            Err(e) => {
                out.failures.push(FailureRecord { id: id.clone(), stage: FailureStage::Other, message: e.to_string() });
                continue;
            }
        };
        if !outcome.flag {
            let why: Vec<String> = outcome.cases.iter().filter(|c| !c.pass).map(|c| format!("{}: {}", c.case.id(), c.feedback)).collect();
            let message = outcome.error.clone().unwrap_or_else(|| why.join("; "));
            out.failures.push(FailureRecord { id: id.clone(), stage: FailureStage::DataScreeningFailure, message });
            continue;
        }
        instance.validation_flag = true;
        out.emitted.push(InstanceRecord {
            instance,
            provenance: Provenance {
                source_index: unit.source_index,
                generator_version: GENERATOR_VERSION.to_string(),
                seed: unit.seed,
                transcripts: sorted_hashes(&[&gen_log, &conv_log]),
            },
        });
    }
    out
}

/// Everything a run produces, in plan order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub instances: Vec<InstanceRecord>,
    pub failures: Vec<FailureRecord>,
    pub report: RunReport,
    pub units: usize,
}

pub fn run(inputs: &RunInputs<'_>, config: &PipelineConfig, backends: &Backends) -> Result<RunOutput, PipelineError> {
    config.validate()?;
    if backends.judges.len().is_multiple_of(2) {
        return Err(PipelineError::JudgeCount(backends.judges.len()));
    }
    if let Some(p) = inputs.pairs.iter().find(|p| !inputs.catalogs.iter().any(|c| c.db_id() == p.db_id)) {
        return Err(PipelineError::UnknownDb(p.db_id.clone()));
    }
    let units = plan(inputs.pairs, inputs.source_indices, config);
    let work = || -> Vec<UnitOutcome> { units.par_iter().map(|u| run_unit(u, inputs, config, backends)).collect() };
    let outcomes = match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| PipelineError::Pool(e.to_string()))?
            .install(work),
        None => work(),
    };

    let mut report = RunReport::new();
    let mut instances = Vec::new();
    let mut failures = Vec::new();
    for (unit, outcome) in units.iter().zip(outcomes) {
        for rec in &outcome.emitted {
            report.record_emitted(unit.category(), rec.instance.conversation_type);
        }
        for f in &outcome.failures {
            report.record_failure(unit.category(), f.stage);
        }
        instances.extend(outcome.emitted);
        failures.extend(outcome.failures);
    }
    Ok(RunOutput { instances, failures, report, units: units.len() })
}

/// Reproducibility record of a run. Holds no timestamps or output paths so
/// that identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator_version: String,
    pub config: PipelineConfig,
    pub backends: BTreeMap<String, Vec<String>>,
    pub cache: Option<String>,
    pub cache_mode: String,
    pub input_pairs: usize,
    pub dropped_pairs: usize,
    pub units: usize,
    pub attempted: usize,
    pub emitted: usize,
    pub failed: usize,
    pub report: RunReport,
    pub statistics_table: String,
    pub failure_table: String,
}

impl Manifest {
    pub fn new(output: &RunOutput, config: &PipelineConfig, backends: &Backends, cache: Option<String>, input_pairs: usize, dropped_pairs: usize) -> Self {
        let mut names = BTreeMap::new();
        names.insert("generator".to_string(), vec![backends.generator.backend_name().to_string()]);
        names.insert("judges".to_string(), backends.judges.iter().map(|j| j.backend_name().to_string()).collect());
        names.insert("embedding".to_string(), vec![backends.embedder.backend_name().to_string()]);
        Self {
            generator_version: GENERATOR_VERSION.to_string(),
            config: config.clone(),
            backends: names,
            cache,
            cache_mode: format!("{:?}", backends.generator.mode()).to_lowercase(),
            input_pairs,
            dropped_pairs,
            units: output.units,
            attempted: output.report.attempted(),
            emitted: output.report.emitted(),
            failed: output.report.failed(),
            report: output.report.clone(),
            statistics_table: output.report.statistics_table(),
            failure_table: output.report.failure_table(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{CacheMode, GatewayConfig, ResponseCache};
    use crate::model::{AmbiguityFlavor, ColumnDef, SemanticType, TableDef};
    use std::sync::Arc;

    fn schema() -> SchemaCatalog {
        let c = |n: &str, t| ColumnDef::new(n, t);
        SchemaCatalog::new(
            "shop",
            vec![TableDef::new(
                "Orders",
                vec![
                    c("paymentDate", SemanticType::Time),
                    c("dispatchDate", SemanticType::Time),
                    c("amount", SemanticType::Number),
                    c("status", SemanticType::Text),
                ],
            )],
        )
        .unwrap()
    }

    fn backends() -> Backends {
        GatewayConfig::default().connect(Arc::new(ResponseCache::in_memory()), CacheMode::Record).unwrap()
    }

    #[test]
    fn plan_expands_ambiguity_and_rotates_unanswerable() {
        let pairs = vec![SourcePair::new("q", "SELECT amount FROM Orders", "shop"); 2];
        let config = PipelineConfig { modes: vec![AuMode::col_amb(AmbiguityFlavor::Lexical), AuMode::col_unans()], facets: vec![1], ..Default::default() };
        let units = plan(&pairs, &[0, 1], &config);
        assert_eq!(units.len(), 4);
        assert_eq!(units[0].conversation_types.len(), 4);
        assert_eq!(units[1].conversation_types, vec![ConversationType::ConciseHelpful]);
        assert_eq!(units[3].conversation_types, vec![ConversationType::VerboseHelpful]);
        assert_ne!(units[0].seed, units[2].seed);
        assert_eq!(plan(&pairs, &[0, 1], &config), units);
    }

    #[test]
    fn mixing_adds_one_multi_facet_unit_per_pair() {
        let pairs = vec![SourcePair::new("q", "SELECT amount, status FROM Orders", "shop"); 3];
        let lexical = AuMode::col_amb(AmbiguityFlavor::Lexical);
        let config = PipelineConfig { modes: vec![lexical, AuMode::col_unans()], facets: vec![1, 2], ..Default::default() };
        let plain = plan(&pairs, &[0, 1, 2], &config);
        assert!(plain.iter().all(|u| u.category().case != AuCase::Mixed));
        let mixed = plan(&pairs, &[0, 1, 2], &PipelineConfig { mix_modes: true, ..config });
        assert_eq!(mixed.len(), plain.len() + 3);
        let extra: Vec<&WorkUnit> = mixed.iter().filter(|u| u.category().case == AuCase::Mixed).collect();
        assert_eq!(extra.len(), 3);
        assert!(extra.iter().all(|u| u.facet_count == 2 && u.modes.len() == 2 && u.conversation_types.len() == 1));
        assert_eq!(extra[0].modes, vec![lexical, AuMode::col_unans()]);
        assert_eq!(extra[1].modes, vec![AuMode::col_unans(), lexical]);
        // single-mode units keep their seeds
        assert!(plain.iter().all(|u| mixed.contains(u)));
    }

    #[test]
    fn mixed_units_run_end_to_end() {
        let catalogs = vec![schema()];
        let pairs = vec![SourcePair::new("List the payment and dispatch dates", "SELECT paymentDate, dispatchDate FROM Orders", "shop")];
        let inputs = RunInputs { catalogs: &catalogs, pairs: &pairs, source_indices: &[0], db_dir: None };
        let config = PipelineConfig {
            modes: vec![AuMode::col_amb(AmbiguityFlavor::Lexical), AuMode::col_unans()],
            facets: vec![2],
            mix_modes: true,
            ..Default::default()
        };
        let out = run(&inputs, &config, &backends()).unwrap();
        assert!(out.report.reconciles());
        let mixed = Category { facet: Facet::Multi, case: AuCase::Mixed };
        assert_eq!(out.report.row(mixed).map(|r| r.attempted), Some(1));
        assert!(out.instances.iter().any(|r| r.instance.category() == mixed), "{:?}", out.failures);
        for rec in out.instances.iter().filter(|r| r.instance.category() == mixed) {
            let i = &rec.instance;
            assert!(i.gold_sqls.is_empty() && i.conversation.final_sql.is_none());
            assert_ne!(i.pivots[0].target.column(), i.pivots[1].target.column());
        }
    }

    #[test]
    fn ids_follow_the_layout() {
        let c = Category { facet: Facet::Multi, case: AuCase::ValueAmb };
        assert_eq!(instance_id("shop", 7, c, ConversationType::NotHelpful), "shop-00007-value_amb-multi-not_helpful");
    }

    #[test]
    fn lexical_date_instance_end_to_end() {
        let catalogs = vec![schema()];
        let pairs = vec![SourcePair::new("List the payment date and amount", "SELECT paymentDate, amount FROM Orders", "shop")];
        let inputs = RunInputs { catalogs: &catalogs, pairs: &pairs, source_indices: &[0], db_dir: None };
        let config = PipelineConfig { modes: vec![AuMode::col_amb(AmbiguityFlavor::Lexical)], facets: vec![1], ..Default::default() };
        let out = run(&inputs, &config, &backends()).unwrap();
        assert!(out.report.reconciles());
        assert_eq!(out.report.attempted(), 4);
        for rec in &out.instances {
            let i = &rec.instance;
            assert!(i.validation_flag);
            assert!(!schema().matches_column(&i.pivots[0].surface));
            assert!(i.gold_sqls.len() >= 2);
        }
        assert!(!out.instances.is_empty(), "{:?}", out.failures);
    }

    #[test]
    fn value_modes_without_pairs_are_unqualified() {
        let catalogs = vec![schema()];
        let pairs = vec![SourcePair::new("List amounts", "SELECT amount FROM Orders", "shop")];
        let inputs = RunInputs { catalogs: &catalogs, pairs: &pairs, source_indices: &[0], db_dir: None };
        let config = PipelineConfig { modes: vec![AuMode::val_amb()], facets: vec![1], ..Default::default() };
        let out = run(&inputs, &config, &backends()).unwrap();
        assert!(out.instances.is_empty());
        assert!(out.failures.iter().all(|f| f.stage == FailureStage::UnqualifiedForAu));
        assert_eq!(out.failures.len(), 4);
    }

    #[test]
    fn even_judge_panels_are_refused() {
        let mut b = backends();
        b.judges.pop();
        let inputs = RunInputs { catalogs: &[], pairs: &[], source_indices: &[], db_dir: None };
        assert!(matches!(run(&inputs, &PipelineConfig::default(), &b), Err(PipelineError::JudgeCount(2))));
    }

    #[test]
    fn empty_input_gives_an_empty_report() {
        let inputs = RunInputs { catalogs: &[], pairs: &[], source_indices: &[], db_dir: None };
        let out = run(&inputs, &PipelineConfig::default(), &backends()).unwrap();
        assert_eq!(out.report.attempted(), 0);
        assert!(out.instances.is_empty());
    }
}
