use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use aubench_core::db::Database;
use aubench_core::eval::{self, EvalOptions, FewShotPolicy, Prediction, Task};
use aubench_core::gateway::config::{BackendConfig, Provider};
use aubench_core::gateway::{Backends, CacheMode, GatewayConfig, ResponseCache};
use aubench_core::io::{self, InstanceRecord};
use aubench_core::model::{AmbiguityFlavor, AuInstance, AuMode, ConversationType, SchemaCatalog};
use aubench_core::pipeline::{self, Manifest, PipelineConfig, RunInputs};
use aubench_core::report::RunReport;
use aubench_core::screening;

#[derive(Parser)]
#[command(name = "aubench", version, about = "Generate, screen and score ambiguous/unanswerable NL2SQL benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the generation pipeline over source pairs.
    Generate(GenerateArgs),
    /// Re-run data screening over an instances file.
    Screen(ScreenArgs),
    /// Score a predictions file against an instances file.
    Evaluate(EvaluateArgs),
    /// Print the statistics and failure tables of a run manifest.
    Report(ReportArgs),
    /// Draw a stratified sample of instances for human review.
    SampleForAnnotation(SampleArgs),
    /// Withhold few-shot exemplars and write the remaining instances.
    FewShot(FewShotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    ColAmb,
    ValAmb,
    ColUnans,
    ValUnans,
}

#[derive(Clone, Copy, ValueEnum)]
enum FlavorArg {
    Lexical,
    Semantic,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Simulated,
    Openai,
}

#[derive(Args)]
struct GatewayArgs {
    /// Gateway TOML file; defaults to offline simulated backends.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generator provider, overriding the config file.
    #[arg(long, value_enum)]
    provider: Option<ProviderArg>,
    /// Size of the judge panel.
    #[arg(long)]
    judges: Option<usize>,
    /// Response cache file (JSON lines).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Serve every request from the cache; a miss is an error.
    #[arg(long, conflicts_with = "record")]
    replay: bool,
    /// Serve hits from the cache and record misses (the default).
    #[arg(long)]
    record: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    schemas: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    db_dir: Option<PathBuf>,
    /// A/U modes to generate; all when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    mode: Vec<ModeArg>,
    /// Ambiguity flavor for col_amb.
    #[arg(long, value_enum, default_value = "both")]
    flavor: FlavorArg,
    /// Facet counts to generate.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2])]
    facets: Vec<usize>,
    /// Conversation types; all when omitted.
    #[arg(long = "conv-types", value_delimiter = ',')]
    conv_types: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "max-iters", default_value_t = 5)]
    max_iters: usize,
    #[arg(long)]
    workers: Option<usize>,
    /// Also attempt multi-facet instances that combine different modes.
    #[arg(long)]
    mix_modes: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Args)]
struct ScreenArgs {
    #[arg(long)]
    schemas: PathBuf,
    #[arg(long)]
    instances: PathBuf,
    /// SQLite databases; value readings are checked against them.
    #[arg(long)]
    db_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    schemas: PathBuf,
    #[arg(long)]
    instances: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    db_dir: Option<PathBuf>,
    /// single_turn, multi_turn or detection.
    #[arg(long)]
    task: Task,
    /// Seed of the bootstrap resampler.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = eval::DEFAULT_RESAMPLES)]
    resamples: usize,
    /// Also report the "two or more matches" lenient variant.
    #[arg(long)]
    lenient_two: bool,
    /// Write the report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    instances: PathBuf,
    #[arg(long, default_value_t = 8)]
    per_category: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FewShotArgs {
    #[arg(long)]
    instances: PathBuf,
    /// none, no_meta_uni, no_meta_uni_multi, meta_uni or meta_uni_multi.
    #[arg(long)]
    policy: FewShotPolicy,
    #[arg(long, default_value_t = 2)]
    per_case: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for exemplars.json and held_out.jsonl.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(2);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Screen(a) => screen(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
        Command::SampleForAnnotation(a) => sample(a),
        Command::FewShot(a) => few_shot(a),
    }
}

struct Connected {
    backends: Backends,
    cache_name: Option<String>,
    mode: CacheMode,
}

fn connect(args: &GatewayArgs) -> Result<Connected> {
    let mut config = match &args.config {
        Some(p) => GatewayConfig::load(p)?,
        None => GatewayConfig::default(),
    };
    match args.provider {
        Some(ProviderArg::Simulated) => config.generator = BackendConfig::simulated("simulated:generator"),
        Some(ProviderArg::Openai) if config.generator.provider != Provider::Openai => {
            bail!("--provider openai needs a --config with an openai generator section")
        }
        _ => {}
    }
    if let Some(n) = args.judges {
        if n == 0 {
            bail!("--judges must be positive");
        }
        if config.judges.len() != n {
            if config.judges.iter().any(|j| j.provider != Provider::Simulated) {
                bail!("--judges {n} disagrees with the {} judges in the config file", config.judges.len());
            }
            config.judges = (1..=n).map(|i| BackendConfig::simulated(&format!("simulated:judge-{i}"))).collect();
        }
    }
    config.validate()?;
    let mode = if args.replay { CacheMode::Replay } else { CacheMode::Record };
    let cache = match &args.cache {
        Some(p) => ResponseCache::open(p).with_context(|| format!("opening cache {}", p.display()))?,
        None if args.replay => bail!("--replay needs --cache"),
        None => ResponseCache::in_memory(),
    };
    let backends = config.connect(Arc::new(cache), mode)?;
    let cache_name = args.cache.as_ref().and_then(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned());
    Ok(Connected { backends, cache_name, mode })
}

fn modes(selected: &[ModeArg], flavor: FlavorArg) -> Vec<AuMode> {
    let flavors: &[AmbiguityFlavor] = match flavor {
        FlavorArg::Lexical => &[AmbiguityFlavor::Lexical],
        FlavorArg::Semantic => &[AmbiguityFlavor::Semantic],
        FlavorArg::Both => &[AmbiguityFlavor::Lexical, AmbiguityFlavor::Semantic],
    };
    let all = [ModeArg::ColAmb, ModeArg::ValAmb, ModeArg::ColUnans, ModeArg::ValUnans];
    let selected = if selected.is_empty() { &all[..] } else { selected };
    let mut out = Vec::new();
    for m in selected {
        match m {
            ModeArg::ColAmb => out.extend(flavors.iter().map(|f| AuMode::col_amb(*f))),
            ModeArg::ValAmb => out.push(AuMode::val_amb()),
            ModeArg::ColUnans => out.push(AuMode::col_unans()),
            ModeArg::ValUnans => out.push(AuMode::val_unans()),
        }
    }
    let mut seen = BTreeSet::new();
    out.retain(|m| seen.insert(format!("{m:?}")));
    out
}

fn conversation_types(raw: &[String]) -> Result<Vec<ConversationType>> {
    if raw.is_empty() {
        return Ok(ConversationType::ALL.to_vec());
    }
    raw.iter()
        .map(|s| {
            ConversationType::ALL
                .into_iter()
                .find(|t| t.as_str() == s.as_str())
                .with_context(|| format!("unknown conversation type `{s}`"))
        })
        .collect()
}

fn generate(a: GenerateArgs) -> Result<()> {
    let catalogs = io::load_schemas(&a.schemas)?;
    let load = io::load_pairs(&a.pairs, &catalogs)?;
    for (i, why) in &load.dropped {
        log::warn!("pair {i} dropped: {why}");
    }
    let config = PipelineConfig {
        seed: a.seed,
        modes: modes(&a.mode, a.flavor),
        facets: a.facets.clone(),
        conversation_types: conversation_types(&a.conv_types)?,
        max_iterations: a.max_iters,
        workers: a.workers,
        mix_modes: a.mix_modes,
        ..PipelineConfig::default()
    };
    let connected = connect(&a.gateway)?;
    let inputs = RunInputs {
        catalogs: &catalogs,
        pairs: &load.pairs,
        source_indices: &load.source_indices,
        db_dir: a.db_dir.clone(),
    };
    let output = pipeline::run(&inputs, &config, &connected.backends)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    io::write_instances(&output.instances, &a.out.join("instances.jsonl"))?;
    io::write_records(&output.failures, &a.out.join("failures.jsonl"))?;
    let input_pairs = load.pairs.len() + load.drop_count();
    let manifest = Manifest::new(&output, &config, &connected.backends, connected.cache_name, input_pairs, load.drop_count());
    io::write_json(&manifest, &a.out.join("manifest.json"))?;
    if connected.mode == CacheMode::Record {
        log::info!("cache holds {} responses", connected.backends.generator.cache().len());
    }
    println!("{}", manifest.statistics_table);
    println!("emitted {} of {} attempted ({} failed)", manifest.emitted, manifest.attempted, manifest.failed);
    Ok(())
}

fn catalog<'a>(catalogs: &'a [SchemaCatalog], db_id: &str) -> Result<&'a SchemaCatalog> {
    catalogs.iter().find(|c| c.db_id() == db_id).with_context(|| format!("no schema for database `{db_id}`"))
}

fn screen(a: ScreenArgs) -> Result<()> {
    let catalogs = io::load_schemas(&a.schemas)?;
    let mut records = io::read_instances(&a.instances)?;
    let connected = connect(&a.gateway)?;
    let mut outcomes = Vec::with_capacity(records.len());
    for r in &mut records {
        let schema = catalog(&catalogs, &r.instance.source.db_id)?;
        let schema = match &a.db_dir {
            Some(dir) => screening::with_database_values(&r.instance, schema, &Database::open(dir, &r.instance.source.db_id)?)?,
            None => schema.clone(),
        };
        let outcome = screening::screen(&r.instance, &schema, &connected.backends.judges)?;
        r.instance.validation_flag = outcome.flag;
        outcomes.push(outcome);
    }
    let report = screening::screening_report(records.iter().map(|r| &r.instance).zip(&outcomes));
    std::fs::create_dir_all(&a.out)?;
    let kept: Vec<InstanceRecord> = records.iter().filter(|r| r.instance.validation_flag).cloned().collect();
    io::write_instances(&kept, &a.out.join("instances.jsonl"))?;
    let lines: Vec<serde_json::Value> = records
        .iter()
        .zip(&outcomes)
        .map(|(r, o)| serde_json::json!({ "instance_id": r.instance.id, "outcome": o }))
        .collect();
    io::write_records(&lines, &a.out.join("screening.jsonl"))?;
    io::write_json(&report, &a.out.join("report.json"))?;
    println!("{}", report.failure_table());
    println!("kept {} of {}", kept.len(), records.len());
    Ok(())
}

fn instances_of(path: &Path) -> Result<Vec<AuInstance>> {
    Ok(io::read_instances(path)?.into_iter().map(|r| r.instance).collect())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let catalogs = io::load_schemas(&a.schemas)?;
    let mut instances = instances_of(&a.instances)?;
    if a.task == Task::SingleTurn {
        instances = eval::single_turn_view(&instances);
    }
    let preds: Vec<Prediction> = io::read_records(&a.predictions)?;
    let options = EvalOptions {
        resamples: a.resamples,
        seed: a.seed,
        statement_timeout: Duration::from_secs(30),
        lenient_two_or_more: a.lenient_two,
    };
    let report = eval::evaluate(&instances, &preds, &catalogs, a.db_dir.as_deref(), a.task, &options)?;
    if let Some(out) = &a.out {
        io::write_json(&report, out)?;
    }
    println!("{}", report.render());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let manifest: serde_json::Value = serde_json::from_str(&text)?;
    let report: RunReport = serde_json::from_value(manifest["report"].clone()).context("manifest has no report")?;
    if !report.reconciles() {
        bail!("manifest counts do not reconcile");
    }
    println!("{}\n{}", report.statistics_table(), report.failure_table());
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let records = io::read_instances(&a.instances)?;
    let instances: Vec<AuInstance> = records.iter().map(|r| r.instance.clone()).collect();
    let (picked, warnings) = eval::sample_for_annotation(&instances, a.per_category, &mut ChaCha8Rng::seed_from_u64(a.seed));
    for w in &warnings {
        log::warn!("{w}");
        eprintln!("warning: {w}");
    }
    let ids: BTreeSet<&str> = picked.iter().map(|i| i.id.as_str()).collect();
    let out: Vec<InstanceRecord> = records.into_iter().filter(|r| ids.contains(r.instance.id.as_str())).collect();
    io::write_instances(&out, &a.out)?;
    println!("sampled {} instances", out.len());
    Ok(())
}

fn few_shot(a: FewShotArgs) -> Result<()> {
    let records = io::read_instances(&a.instances)?;
    let instances: Vec<AuInstance> = records.iter().map(|r| r.instance.clone()).collect();
    let split = eval::few_shot_exemplars(&instances, a.policy, a.per_case, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    let kept: std::collections::BTreeSet<&str> = split.held_out.iter().map(|i| i.id.as_str()).collect();
    let held_out: Vec<InstanceRecord> = records.into_iter().filter(|r| kept.contains(r.instance.id.as_str())).collect();
    std::fs::create_dir_all(&a.out)?;
    io::write_json(&split.exemplars, &a.out.join("exemplars.json"))?;
    io::write_instances(&held_out, &a.out.join("held_out.jsonl"))?;
    println!("{} exemplars withheld, {} instances left", split.exemplars.len(), split.held_out.len());
    Ok(())
}
