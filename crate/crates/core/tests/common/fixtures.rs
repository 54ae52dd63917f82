//! The fixture corpus run end to end: recorded once against the offline
//! simulated backends, then replayed from the recorded cache.

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use aubench_core::db::Database;
use aubench_core::gateway::{Backends, CacheMode, GatewayConfig, ResponseCache};
use aubench_core::io::{self, PairLoad};
use aubench_core::model::{AuInstance, SchemaCatalog};
use aubench_core::pipeline::{self, Manifest, PipelineConfig, RunInputs, RunOutput};

pub const SEED: u64 = 7;

pub fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn db_dir() -> PathBuf {
    dir().join("db")
}

pub fn catalogs() -> Vec<SchemaCatalog> {
    io::load_schemas(&dir().join("tables.json")).unwrap()
}

pub fn pairs(catalogs: &[SchemaCatalog]) -> PairLoad {
    io::load_pairs(&dir().join("pairs.json"), catalogs).unwrap()
}

pub fn backends(cache: &Path, mode: CacheMode) -> Backends {
    GatewayConfig::default().connect(Arc::new(ResponseCache::open(cache).unwrap()), mode).unwrap()
}

pub struct Files {
    pub output: RunOutput,
    pub instances: Vec<u8>,
    pub manifest: Vec<u8>,
}

/// Runs the pipeline over the fixture corpus and returns the written files.
pub fn run(config: &PipelineConfig, cache: &Path, mode: CacheMode, out: &Path) -> Files {
    let catalogs = catalogs();
    let load = pairs(&catalogs);
    let inputs = RunInputs { catalogs: &catalogs, pairs: &load.pairs, source_indices: &load.source_indices, db_dir: Some(db_dir()) };
    let b = backends(cache, mode);
    let output = pipeline::run(&inputs, config, &b).unwrap();
    std::fs::create_dir_all(out).unwrap();
    io::write_instances(&output.instances, &out.join("instances.jsonl")).unwrap();
    let manifest = Manifest::new(&output, config, &b, Some("cache.jsonl".into()), load.pairs.len() + load.drop_count(), load.drop_count());
    io::write_json(&manifest, &out.join("manifest.json")).unwrap();
    Files {
        output,
        instances: std::fs::read(out.join("instances.jsonl")).unwrap(),
        manifest: std::fs::read(out.join("manifest.json")).unwrap(),
    }
}

pub struct Shared {
    pub dir: tempfile::TempDir,
    pub catalogs: Vec<SchemaCatalog>,
    pub replay: Files,
    pub replay_again: Files,
}

impl Shared {
    pub fn cache(&self) -> PathBuf {
        self.dir.path().join("cache.jsonl")
    }

    pub fn instances(&self) -> Vec<AuInstance> {
        self.replay.output.instances.iter().map(|r| r.instance.clone()).collect()
    }

    pub fn schema(&self, db_id: &str) -> &SchemaCatalog {
        self.catalogs.iter().find(|c| c.db_id() == db_id).unwrap()
    }

    pub fn database(&self, db_id: &str) -> Database {
        Database::open(&db_dir(), db_id).unwrap()
    }
}

pub fn config() -> PipelineConfig {
    PipelineConfig { seed: SEED, ..PipelineConfig::default() }
}

/// Record once, then two replay runs from the recorded cache.
pub fn shared() -> &'static Shared {
    static SHARED: OnceLock<Shared> = OnceLock::new();
    SHARED.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("cache.jsonl");
        let config = config();
        run(&config, &cache, CacheMode::Record, &dir.path().join("record"));
        let replay = run(&config, &cache, CacheMode::Replay, &dir.path().join("replay1"));
        let replay_again = run(&config, &cache, CacheMode::Replay, &dir.path().join("replay2"));
        Shared { dir, catalogs: catalogs(), replay, replay_again }
    })
}
