use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aubench_core::eval::{self, Task};
use aubench_core::io;
use aubench_core::pipeline::FailureRecord;
use aubench_core::report::FailureStage;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn aubench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aubench")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(out: &Path, cache: &Path, extra: &[&str]) -> Output {
    let f = fixtures();
    let (schemas, pairs, db) = (f.join("tables.json"), f.join("pairs.json"), f.join("db"));
    let mut args = vec!["generate", "--schemas", s(&schemas), "--pairs", s(&pairs), "--db-dir", s(&db), "--seed", "7", "--out", s(out), "--cache", s(cache)];
    args.extend_from_slice(extra);
    aubench(&args)
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn generate_record_then_replay_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache.jsonl");
    let stdout = ok(&generate(&tmp.path().join("rec"), &cache, &["--record"]));
    assert!(stdout.contains("emitted"), "{stdout}");
    let m = manifest(&tmp.path().join("rec"));
    assert!(m["emitted"].as_u64().unwrap() >= 200);
    assert_eq!(m["attempted"].as_u64(), Some(m["emitted"].as_u64().unwrap() + m["failed"].as_u64().unwrap()));

    ok(&generate(&tmp.path().join("a"), &cache, &["--replay"]));
    ok(&generate(&tmp.path().join("b"), &cache, &["--replay"]));
    for file in ["instances.jsonl", "failures.jsonl", "manifest.json"] {
        let a = std::fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs between replays");
    }
    assert_eq!(
        std::fs::read(tmp.path().join("rec/instances.jsonl")).unwrap(),
        std::fs::read(tmp.path().join("a/instances.jsonl")).unwrap()
    );

    let report = ok(&aubench(&["report", "--manifest", s(&tmp.path().join("a/manifest.json"))]));
    assert!(report.contains("Lexical Amb") && report.contains("Unans Value"), "{report}");
}

#[test]
fn replay_with_an_empty_cache_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = generate(&tmp.path().join("o"), &tmp.path().join("none.jsonl"), &["--replay", "--mode", "col-amb"]);
    // a miss is reported per unit, not as a crash
    assert!(out.status.success());
    let failures: Vec<FailureRecord> = io::read_records(&tmp.path().join("o/failures.jsonl")).unwrap();
    assert!(failures.iter().any(|f| f.message.contains("cache")), "{failures:?}");
}

#[test]
fn empty_pairs_give_an_empty_run() {
    let tmp = tempfile::tempdir().unwrap();
    let pairs = tmp.path().join("pairs.json");
    std::fs::write(&pairs, "[]").unwrap();
    let schemas = fixtures().join("tables.json");
    let out_dir = tmp.path().join("o");
    ok(&aubench(&["generate", "--schemas", s(&schemas), "--pairs", s(&pairs), "--out", s(&out_dir)]));
    assert_eq!(std::fs::read(out_dir.join("instances.jsonl")).unwrap(), b"");
    let m = manifest(&out_dir);
    assert_eq!((m["emitted"].as_u64(), m["attempted"].as_u64(), m["failed"].as_u64()), (Some(0), Some(0), Some(0)));
}

#[test]
fn value_ambiguity_without_values_is_unqualified() {
    let tmp = tempfile::tempdir().unwrap();
    let pairs = tmp.path().join("pairs.json");
    std::fs::write(
        &pairs,
        r#"[{"db_id":"shop","question":"List every customer name","query":"SELECT customerName FROM Customers"},
            {"db_id":"school","question":"How many courses are there?","query":"SELECT count(*) FROM Courses"}]"#,
    )
    .unwrap();
    let f = fixtures();
    let (schemas, db) = (f.join("tables.json"), f.join("db"));
    let out_dir = tmp.path().join("o");
    ok(&aubench(&["generate", "--schemas", s(&schemas), "--pairs", s(&pairs), "--db-dir", s(&db), "--mode", "val-amb", "--out", s(&out_dir)]));
    assert!(io::read_instances(&out_dir.join("instances.jsonl")).unwrap().is_empty());
    let failures: Vec<FailureRecord> = io::read_records(&out_dir.join("failures.jsonl")).unwrap();
    assert!(!failures.is_empty());
    assert!(failures.iter().all(|f| f.stage == FailureStage::UnqualifiedForAu), "{failures:?}");
}

struct Run {
    _tmp: tempfile::TempDir,
    dir: PathBuf,
}

fn fixture_run() -> Run {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    ok(&generate(&dir, &tmp.path().join("cache.jsonl"), &[]));
    Run { _tmp: tmp, dir }
}

fn write_predictions(run: &Run, task: Task) -> PathBuf {
    let instances: Vec<_> = io::read_instances(&run.dir.join("instances.jsonl")).unwrap().into_iter().map(|r| r.instance).collect();
    let set = if task == Task::SingleTurn { eval::single_turn_view(&instances) } else { instances };
    let path = run.dir.join(format!("pred-{task}.jsonl"));
    io::write_records(&eval::oracle_predictions(&set, task), &path).unwrap();
    path
}

fn evaluate(run: &Run, task: Task, predictions: &Path) -> Output {
    let f = fixtures();
    let (schemas, db, instances) = (f.join("tables.json"), f.join("db"), run.dir.join("instances.jsonl"));
    let task = task.to_string();
    aubench(&["evaluate", "--schemas", s(&schemas), "--instances", s(&instances), "--predictions", s(predictions), "--db-dir", s(&db), "--task", &task, "--resamples", "200"])
}

#[test]
fn oracle_predictions_score_perfectly() {
    let run = fixture_run();
    for task in [Task::SingleTurn, Task::MultiTurn, Task::Detection] {
        let preds = write_predictions(&run, task);
        let stdout = ok(&evaluate(&run, task, &preds));
        let macros: Vec<&str> = stdout.lines().filter(|l| l.starts_with("| Macro")).collect();
        assert!(!macros.is_empty(), "{stdout}");
        assert!(macros.iter().all(|l| l.contains("100.0")), "{task}: {stdout}");
    }
}

#[test]
fn unknown_ids_fail_and_poor_scores_do_not() {
    let run = fixture_run();
    let bad = run.dir.join("bad.jsonl");
    std::fs::write(&bad, "{\"instance_id\":\"no-such-instance\",\"sql\":null}\n").unwrap();
    let out = evaluate(&run, Task::MultiTurn, &bad);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-instance"));

    let empty = run.dir.join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let stdout = ok(&evaluate(&run, Task::MultiTurn, &empty));
    assert!(stdout.contains("| Macro"), "{stdout}");
}

#[test]
fn screening_keeps_every_emitted_instance() {
    let run = fixture_run();
    let f = fixtures();
    let (schemas, db, instances, out) = (f.join("tables.json"), f.join("db"), run.dir.join("instances.jsonl"), run.dir.join("screened"));
    let stdout = ok(&aubench(&["screen", "--schemas", s(&schemas), "--instances", s(&instances), "--db-dir", s(&db), "--out", s(&out)]));
    assert!(stdout.contains("kept"), "{stdout}");
    assert_eq!(std::fs::read(out.join("instances.jsonl")).unwrap(), std::fs::read(&instances).unwrap());
}

#[test]
fn annotation_sampling_warns_on_short_categories() {
    let run = fixture_run();
    let instances = run.dir.join("instances.jsonl");
    let out = run.dir.join("sample.jsonl");
    let res = aubench(&["sample-for-annotation", "--instances", s(&instances), "--per-category", "1000", "--out", s(&out)]);
    ok(&res);
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning:"));
    let all = io::read_instances(&instances).unwrap();
    assert_eq!(io::read_instances(&out).unwrap().len(), all.len());
}

#[test]
fn few_shot_withholds_exemplars() {
    let run = fixture_run();
    let instances = run.dir.join("instances.jsonl");
    let out = run.dir.join("fewshot");
    ok(&aubench(&["few-shot", "--instances", s(&instances), "--policy", "meta_uni", "--per-case", "1", "--out", s(&out)]));
    let exemplars: Vec<serde_json::Value> = serde_json::from_slice(&std::fs::read(out.join("exemplars.json")).unwrap()).unwrap();
    assert_eq!(exemplars.len(), 5);
    let held_out = io::read_instances(&out.join("held_out.jsonl")).unwrap();
    let all = io::read_instances(&instances).unwrap();
    assert!(held_out.len() + 5 <= all.len());
    let withheld: Vec<&str> = exemplars.iter().map(|e| eval::single_turn_key(e["instance_id"].as_str().unwrap())).collect();
    assert!(held_out.iter().all(|r| !withheld.contains(&eval::single_turn_key(&r.instance.id))));
    assert!(held_out.iter().all(|r| !r.provenance.transcripts.is_empty()));
}

#[test]
fn mixing_is_opt_in() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache.jsonl");
    let plain = tmp.path().join("plain");
    ok(&generate(&plain, &cache, &["--mode", "col-amb,col-unans", "--flavor", "lexical", "--facets", "2"]));
    let mixed = tmp.path().join("mixed");
    let stdout = ok(&generate(&mixed, &cache, &["--mode", "col-amb,col-unans", "--flavor", "lexical", "--facets", "2", "--mix-modes"]));
    let ids = |dir: &Path| -> Vec<String> { io::read_instances(&dir.join("instances.jsonl")).unwrap().into_iter().map(|r| r.instance.id).collect() };
    assert!(ids(&plain).iter().all(|id| !id.contains("-mixed-")));
    let with_mixing = ids(&mixed);
    assert!(with_mixing.iter().any(|id| id.contains("-mixed-")), "{stdout}");
    assert!(ids(&plain).iter().all(|id| with_mixing.contains(id)));
    assert!(stdout.contains("| Mixed |"), "{stdout}");
}
