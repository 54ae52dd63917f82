//! Structured shapes exchanged with chat backends.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{CriterionOutcome, JudgeVerdict};

/// A single pass/fail judgement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    #[serde(default)]
    pub feedback: String,
}

impl Verdict {
    pub fn pass() -> Self {
        Self { pass: true, feedback: String::new() }
    }

    pub fn fail(feedback: impl Into<String>) -> Self {
        Self { pass: false, feedback: feedback.into() }
    }
}

impl From<Verdict> for CriterionOutcome {
    fn from(v: Verdict) -> Self {
        CriterionOutcome { pass: v.pass, feedback: v.feedback }
    }
}

/// One verdict per named check.
pub type CriteriaVerdict = BTreeMap<String, Verdict>;

pub fn to_judge_verdict(criteria: CriteriaVerdict) -> JudgeVerdict {
    JudgeVerdict::new(criteria.into_iter().map(|(k, v)| (k, v.into())).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PivotProposal {
    pub term: String,
    #[serde(default)]
    pub group: Vec<String>,
    #[serde(default)]
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryProposal {
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextReply {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermList {
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateList {
    pub group: Vec<String>,
}

/// Earlier attempt shown to a generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub candidate: String,
    pub feedback: String,
}

/// A pivot as described to rewrite and review prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PivotBrief {
    pub term: String,
    /// Surface of the target column or value the term stands for.
    pub target: String,
    /// Other meanings the term admits; empty for unanswerable pivots.
    pub group: Vec<String>,
    /// `column` or `value`.
    pub kind: String,
}
