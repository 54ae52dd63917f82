//! Fixture-corpus checks beyond the headline criteria.

mod common;

use std::collections::BTreeSet;

use aubench_core::gateway::{GatewayConfig, ResponseCache, CacheMode};
use aubench_core::model::Category;
use aubench_core::report::FailureStage;
use aubench_core::screening;
use std::sync::Arc;

use common::fixtures::shared;

#[test]
fn instance_ids_are_unique() {
    let ids: Vec<_> = shared().replay.output.instances.iter().map(|r| r.instance.id.clone()).collect();
    let unique: BTreeSet<_> = ids.iter().collect();
    assert_eq!(ids.len(), unique.len());
}

#[test]
fn every_category_is_populated() {
    let sh = shared();
    let seen: BTreeSet<Category> = sh.instances().iter().map(|i| i.category()).collect();
    for c in Category::table_order() {
        assert!(seen.contains(&c), "{c} has no instances");
    }
}

#[test]
fn failures_carry_ids_and_stages() {
    let out = &shared().replay.output;
    assert!(!out.failures.is_empty());
    assert!(out.failures.iter().all(|f| !f.id.is_empty() && !f.message.is_empty()));
    assert!(out.failures.iter().any(|f| f.stage == FailureStage::UnqualifiedForAu));
}

#[test]
fn provenance_is_complete_and_stable() {
    let sh = shared();
    for (a, b) in sh.replay.output.instances.iter().zip(&sh.replay_again.output.instances) {
        assert_eq!(a.provenance, b.provenance);
        assert!(!a.provenance.transcripts.is_empty(), "{}", a.instance.id);
        assert!(!a.provenance.generator_version.is_empty());
    }
    let seeds: BTreeSet<u64> = sh.replay.output.instances.iter().map(|r| r.provenance.seed).collect();
    assert!(seeds.len() > 1, "unit seeds should differ across work units");
}

#[test]
fn emitted_instances_pass_screening() {
    let sh = shared();
    let backends = GatewayConfig::default().connect(Arc::new(ResponseCache::in_memory()), CacheMode::Record).unwrap();
    let instances = sh.instances();
    let mut outcomes = Vec::new();
    for i in &instances {
        let schema = screening::with_database_values(i, sh.schema(&i.source.db_id), &sh.database(&i.source.db_id)).unwrap();
        let o = screening::screen(i, &schema, &backends.judges).unwrap();
        assert!(o.flag && o.error.is_none(), "{}: {:?}", i.id, o);
        assert!(i.validation_flag);
        outcomes.push(o);
    }
    let report = screening::screening_report(instances.iter().zip(&outcomes));
    assert!(report.reconciles());
}
