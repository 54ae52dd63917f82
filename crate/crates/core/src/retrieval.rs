//! Target spaces and candidate groups: which schema elements a pivot term
//! could be confused with.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::payload::CandidateList;
use crate::gateway::{templates, Embedder, Gateway, GatewayError, GatewayRequest, Role};
use crate::model::{GroupFlavor, GroupMember, SchemaCatalog, TargetGroup, TargetSelection};
use crate::normalize::{jaccard, normalized_tokens, same_name};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("column {column} has no sampled values to build a value space from")]
    EmptyValueSpace { column: String },
    #[error("target {target} is not in the schema")]
    UnknownTarget { target: String },
    #[error("no candidate group for `{target}`")]
    NonexistentTargetGroup { target: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// The LLM lists candidates.
    Llm,
    /// Embedding similarity.
    Dense,
    /// Equal-weight fusion of lexical and embedding similarity.
    Hybrid,
    /// Hybrid top-k, then filtered by the LLM.
    Combined,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "llm" => Ok(Strategy::Llm),
            "dense" => Ok(Strategy::Dense),
            "hybrid" => Ok(Strategy::Hybrid),
            "combined" => Ok(Strategy::Combined),
            other => Err(format!("unknown retrieval strategy `{other}` (expected llm, dense, hybrid or combined)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Semantic candidates must score strictly below this lexical overlap.
    pub lexical_ceiling: f64,
    /// Semantic candidates must reach this mapped cosine score.
    pub semantic_floor: f64,
    pub max_top_k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { lexical_ceiling: 0.34, semantic_floor: 0.75, max_top_k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub member: GroupMember,
    pub lexical_score: Option<f64>,
    pub semantic_score: Option<f64>,
    pub fused_score: f64,
}

/// Every element a target could be confused with: the other columns for
/// column modes, the other sampled values of the column for value modes.
pub fn target_space(target: &TargetSelection, schema: &SchemaCatalog, sample_k: usize) -> Result<Vec<GroupMember>, RetrievalError> {
    let column = schema
        .column(target.column())
        .ok_or_else(|| RetrievalError::UnknownTarget { target: target.column().to_string() })?;
    match target.value() {
        None => Ok(schema.columns().filter(|c| c != target.column()).map(GroupMember::Column).collect()),
        Some(value) => {
            let values = column.sampled_values.as_deref().unwrap_or_default();
            if values.is_empty() {
                return Err(RetrievalError::EmptyValueSpace { column: target.column().to_string() });
            }
            Ok(values
                .iter()
                .filter(|v| !v.same_value(value))
                .take(sample_k)
                .cloned()
                .map(GroupMember::Value)
                .collect())
        }
    }
}

/// Multiset Jaccard overlap of normalized tokens.
pub fn lexical_score(a: &str, b: &str) -> f64 {
    jaccard(a, b)
}

/// Cosine similarity mapped from [-1, 1] to [0, 1]. A zero vector scores 0.5.
pub fn cosine_score(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum();
    if na == 0.0 || nb == 0.0 {
        return 0.5;
    }
    // sqrt(n * n) == n keeps identical vectors at exactly 1.
    (((dot / (na * nb).sqrt()) + 1.0) / 2.0).clamp(0.0, 1.0)
}

pub fn semantic_score(a: &str, b: &str, embedder: &Embedder) -> Result<f64, RetrievalError> {
    let v = embedder.embed(&[a.to_string(), b.to_string()])?;
    Ok(cosine_score(&v[0], &v[1]))
}

/// Group size cap: `ceil(sqrt(n))`, at least 2, at most `max` (10 by default).
pub fn heuristic_top_k(space_size: usize) -> usize {
    heuristic_top_k_capped(space_size, 10)
}

pub fn heuristic_top_k_capped(space_size: usize, max: usize) -> usize {
    let root = (space_size as f64).sqrt().ceil() as usize;
    root.max(2).min(max)
}

/// Min-max normalization over one batch. A constant batch maps positive
/// scores to 1 and zeros to 0.
fn min_max(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .map(|&s| {
            if hi > lo {
                (s - lo) / (hi - lo)
            } else if s > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

fn shares_token(a: &str, b: &str) -> bool {
    let x = normalized_tokens(a);
    normalized_tokens(b).iter().any(|t| x.contains(t))
}

fn flavor_name(flavor: GroupFlavor, target: &TargetSelection) -> &'static str {
    match flavor {
        GroupFlavor::Lexical => "lexical",
        GroupFlavor::Semantic => "semantic",
        GroupFlavor::None if target.value().is_some() => "values",
        GroupFlavor::None => "lexical",
    }
}

/// Members the LLM lists for `target`, matched back to `candidates` by
/// surface form.
fn llm_listing(
    target: &TargetSelection,
    candidates: &[GroupMember],
    flavor: GroupFlavor,
    llm: &Gateway,
) -> Result<Vec<usize>, RetrievalError> {
    let mut surfaces: Vec<String> = candidates.iter().map(GroupMember::surface).collect();
    surfaces.dedup();
    let request = GatewayRequest::new(Role::Generator, templates::RETRIEVE_GROUP)?
        .var("target", target.surface())
        .var("flavor", flavor_name(flavor, target))
        .json_var("space", &surfaces);
    let listed: CandidateList = llm.complete_json(&request)?;
    let mut picked = Vec::new();
    for name in &listed.group {
        for (i, c) in candidates.iter().enumerate() {
            let s = c.surface();
            if (s == *name || same_name(&s, name)) && !picked.contains(&i) {
                picked.push(i);
            }
        }
    }
    Ok(picked)
}

/// Scores, filters and ranks the candidates for `target`.
pub fn retrieve_scored(
    target: &TargetSelection,
    space: &[GroupMember],
    flavor: GroupFlavor,
    strategy: Strategy,
    embedder: &Embedder,
    llm: &Gateway,
    config: &RetrievalConfig,
) -> Result<Vec<ScoredCandidate>, RetrievalError> {
    let me = target.as_member();
    let target_surface = target.surface();
    let candidates: Vec<GroupMember> = space.iter().filter(|m| !m.same_as(&me)).cloned().collect();
    if candidates.is_empty() {
        return Err(RetrievalError::NonexistentTargetGroup { target: target_surface });
    }
    let surfaces: Vec<String> = candidates.iter().map(GroupMember::surface).collect();
    let lexical: Vec<f64> = surfaces.iter().map(|s| lexical_score(&target_surface, s)).collect();
    let needs_embeddings = strategy != Strategy::Llm || flavor == GroupFlavor::Semantic;
    let semantic: Option<Vec<f64>> = if needs_embeddings {
        let mut texts = vec![target_surface.clone()];
        texts.extend(surfaces.iter().cloned());
        let vectors = embedder.embed(&texts)?;
        Some(vectors[1..].iter().map(|v| cosine_score(&vectors[0], v)).collect())
    } else {
        None
    };
    let fused: Vec<f64> = match (strategy, &semantic) {
        (Strategy::Hybrid | Strategy::Combined, Some(sem)) => {
            let (l, s) = (min_max(&lexical), min_max(sem));
            l.iter().zip(&s).map(|(a, b)| 0.5 * a + 0.5 * b).collect()
        }
        (Strategy::Dense, Some(sem)) => sem.clone(),
        (_, Some(sem)) if flavor == GroupFlavor::Semantic => sem.clone(),
        _ => lexical.clone(),
    };

    let passes_flavor = |i: usize| match flavor {
        GroupFlavor::Lexical => shares_token(&target_surface, &surfaces[i]),
        GroupFlavor::Semantic => {
            let sem = semantic.as_ref().map(|s| s[i]).unwrap_or(0.0);
            lexical[i] < config.lexical_ceiling && sem >= config.semantic_floor
        }
        GroupFlavor::None => true,
    };

    let mut order: Vec<usize> = match strategy {
        Strategy::Llm => llm_listing(target, &candidates, flavor, llm)?,
        _ => (0..candidates.len()).collect(),
    };
    order.retain(|&i| passes_flavor(i));
    if strategy != Strategy::Llm {
        order.sort_by(|&a, &b| fused[b].total_cmp(&fused[a]).then(a.cmp(&b)));
    }
    order.truncate(heuristic_top_k_capped(space.len(), config.max_top_k));
    if strategy == Strategy::Combined && !order.is_empty() {
        let shortlisted: Vec<GroupMember> = order.iter().map(|&i| candidates[i].clone()).collect();
        let keep = llm_listing(target, &shortlisted, flavor, llm)?;
        order = order.into_iter().enumerate().filter(|(pos, _)| keep.contains(pos)).map(|(_, i)| i).collect();
    }
    if order.is_empty() {
        return Err(RetrievalError::NonexistentTargetGroup { target: target_surface });
    }
    Ok(order
        .into_iter()
        .map(|i| ScoredCandidate {
            member: candidates[i].clone(),
            lexical_score: Some(lexical[i]),
            semantic_score: semantic.as_ref().map(|s| s[i]),
            fused_score: fused[i].clamp(0.0, 1.0),
        })
        .collect())
}

pub fn retrieve_group(
    target: &TargetSelection,
    space: &[GroupMember],
    flavor: GroupFlavor,
    strategy: Strategy,
    embedder: &Embedder,
    llm: &Gateway,
    config: &RetrievalConfig,
) -> Result<TargetGroup, RetrievalError> {
    let scored = retrieve_scored(target, space, flavor, strategy, embedder, llm, config)?;
    Ok(TargetGroup { members: scored.into_iter().map(|c| c.member).collect(), flavor })
}
