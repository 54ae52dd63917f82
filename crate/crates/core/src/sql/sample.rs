//! Sampling of A/U targets from a resolved query.

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use super::analysis::SqlStructure;
use crate::model::{AuMode, ColumnRef, TargetSelection};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("query has {available} eligible targets for {mode}, {required} required")]
pub struct UnqualifiedForAu {
    pub mode: String,
    pub available: usize,
    pub required: usize,
}

/// Draws `k` targets for `mode` without replacement; no column is chosen
/// twice and the result is in sampling order.
pub fn sample_targets<R: Rng + ?Sized>(
    structure: &SqlStructure,
    mode: AuMode,
    k: usize,
    rng: &mut R,
) -> Result<Vec<TargetSelection>, UnqualifiedForAu> {
    sample_targets_excluding(structure, mode, k, &[], rng)
}

/// Like [`sample_targets`], skipping columns already used by other targets.
pub fn sample_targets_excluding<R: Rng + ?Sized>(
    structure: &SqlStructure,
    mode: AuMode,
    k: usize,
    taken: &[ColumnRef],
    rng: &mut R,
) -> Result<Vec<TargetSelection>, UnqualifiedForAu> {
    let unqualified = |available: usize| UnqualifiedForAu { mode: mode.to_string(), available, required: k };
    if !mode.is_value() {
        let pool: Vec<&ColumnRef> = structure.referenced_columns.iter().filter(|c| !taken.contains(c)).collect();
        if pool.len() < k {
            return Err(unqualified(pool.len()));
        }
        return Ok(index::sample(rng, pool.len(), k)
            .into_iter()
            .map(|i| TargetSelection::new(mode, pool[i].clone(), None).expect("column mode carries no value"))
            .collect());
    }
    // pattern operands are not column values
    let pool: Vec<_> = structure
        .column_value_pairs
        .iter()
        .filter(|p| !p.op.is_pattern() && !taken.contains(&p.column))
        .collect();
    let mut distinct_columns: Vec<&ColumnRef> = pool.iter().map(|p| &p.column).collect();
    distinct_columns.dedup();
    distinct_columns.sort();
    distinct_columns.dedup();
    if distinct_columns.len() < k {
        return Err(unqualified(distinct_columns.len()));
    }
    let mut out: Vec<TargetSelection> = Vec::with_capacity(k);
    for i in index::sample(rng, pool.len(), pool.len()) {
        let pair = pool[i];
        if out.iter().any(|t| t.column() == &pair.column) {
            continue;
        }
        out.push(TargetSelection::new(mode, pair.column.clone(), Some(pair.value.clone())).expect("value mode carries a value"));
        if out.len() == k {
            break;
        }
    }
    Ok(out)
}
