//! Per-category accounting of attempted, emitted and failed instances.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{AuCase, Category, ConversationType, Facet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    UnqualifiedForAu,
    NonexistentTargetGroup,
    TermEvaluatorFailure,
    QueryEvaluatorFailure,
    DataScreeningFailure,
    /// Transport errors, collapsed ambiguity and anything else outside the
    /// five named stages.
    Other,
}

impl FailureStage {
    pub const ALL: [FailureStage; 6] = [
        FailureStage::UnqualifiedForAu,
        FailureStage::NonexistentTargetGroup,
        FailureStage::TermEvaluatorFailure,
        FailureStage::QueryEvaluatorFailure,
        FailureStage::DataScreeningFailure,
        FailureStage::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FailureStage::UnqualifiedForAu => "Unqualified for A/U",
            FailureStage::NonexistentTargetGroup => "Non-existent Target Group",
            FailureStage::TermEvaluatorFailure => "Term Evaluator Failure",
            FailureStage::QueryEvaluatorFailure => "Query Evaluator Failure",
            FailureStage::DataScreeningFailure => "Data Screening Failure",
            FailureStage::Other => "Other",
        }
    }
}

/// One row of the report, in serialized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub facet: Facet,
    pub case: AuCase,
    pub attempted: usize,
    pub emitted: BTreeMap<ConversationType, usize>,
    pub failures: BTreeMap<FailureStage, usize>,
}

impl ReportRow {
    pub fn category(&self) -> Category {
        Category { facet: self.facet, case: self.case }
    }

    pub fn emitted_total(&self) -> usize {
        self.emitted.values().sum()
    }

    pub fn failed_total(&self) -> usize {
        self.failures.values().sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<ReportRow>", into = "Vec<ReportRow>")]
pub struct RunReport {
    rows: BTreeMap<Category, ReportRow>,
}

impl From<Vec<ReportRow>> for RunReport {
    fn from(rows: Vec<ReportRow>) -> Self {
        let mut out = RunReport::new();
        for r in rows {
            out.rows.insert(r.category(), r);
        }
        out
    }
}

impl From<RunReport> for Vec<ReportRow> {
    fn from(r: RunReport) -> Self {
        r.rows.into_values().collect()
    }
}

impl RunReport {
    /// A report with every table category present at zero.
    pub fn new() -> Self {
        let mut rows = BTreeMap::new();
        for category in Category::table_order() {
            rows.insert(category, Self::empty_row(category));
        }
        Self { rows }
    }

    fn empty_row(c: Category) -> ReportRow {
        ReportRow {
            facet: c.facet,
            case: c.case,
            attempted: 0,
            emitted: ConversationType::ALL.iter().map(|t| (*t, 0)).collect(),
            failures: FailureStage::ALL.iter().map(|s| (*s, 0)).collect(),
        }
    }

    fn row_mut(&mut self, c: Category) -> &mut ReportRow {
        self.rows.entry(c).or_insert_with(|| Self::empty_row(c))
    }

    pub fn record_emitted(&mut self, c: Category, t: ConversationType) {
        let row = self.row_mut(c);
        row.attempted += 1;
        *row.emitted.entry(t).or_default() += 1;
    }

    pub fn record_failure(&mut self, c: Category, stage: FailureStage) {
        let row = self.row_mut(c);
        row.attempted += 1;
        *row.failures.entry(stage).or_default() += 1;
    }

    pub fn merge(&mut self, other: &RunReport) {
        for (c, r) in &other.rows {
            let row = self.row_mut(*c);
            row.attempted += r.attempted;
            for (t, n) in &r.emitted {
                *row.emitted.entry(*t).or_default() += n;
            }
            for (s, n) in &r.failures {
                *row.failures.entry(*s).or_default() += n;
            }
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.values()
    }

    pub fn row(&self, c: Category) -> Option<&ReportRow> {
        self.rows.get(&c)
    }

    pub fn attempted(&self) -> usize {
        self.rows().map(|r| r.attempted).sum()
    }

    pub fn emitted(&self) -> usize {
        self.rows().map(ReportRow::emitted_total).sum()
    }

    pub fn failed(&self) -> usize {
        self.rows().map(ReportRow::failed_total).sum()
    }

    pub fn failures_at(&self, c: Category, stage: FailureStage) -> usize {
        self.rows.get(&c).and_then(|r| r.failures.get(&stage)).copied().unwrap_or(0)
    }

    /// Failures plus emitted equals attempted, for every row.
    pub fn reconciles(&self) -> bool {
        self.rows().all(|r| r.attempted == r.emitted_total() + r.failed_total())
    }

    /// Emitted counts: uni-facet, multi-facet, and one column per
    /// conversation type, per A/U case.
    pub fn statistics_table(&self) -> String {
        let mut out = String::from("| Use Case | Uni-Facet | Multi-Facet |");
        for t in ConversationType::ALL {
            let _ = write!(out, " {} |", t.label());
        }
        out.push('\n');
        out.push_str(&"|---".repeat(3 + ConversationType::ALL.len()));
        out.push_str("|\n");
        let mixed = self.rows.keys().any(|c| c.case == AuCase::Mixed);
        for case in AuCase::TABLE.into_iter().chain(mixed.then_some(AuCase::Mixed)) {
            let get = |facet| self.rows.get(&Category { facet, case });
            let uni = get(Facet::Uni).map_or(0, ReportRow::emitted_total);
            let multi = get(Facet::Multi).map_or(0, ReportRow::emitted_total);
            let _ = write!(out, "| {} | {uni} | {multi} |", case.label());
            for t in ConversationType::ALL {
                let n: usize = [Facet::Uni, Facet::Multi]
                    .iter()
                    .filter_map(|f| get(*f))
                    .map(|r| r.emitted.get(&t).copied().unwrap_or(0))
                    .sum();
                let _ = write!(out, " {n} |");
            }
            out.push('\n');
        }
        out
    }

    /// Failure percentages per category and stage.
    pub fn failure_table(&self) -> String {
        let mut out = String::from("| Category | Attempted |");
        for s in FailureStage::ALL {
            let _ = write!(out, " {} |", s.label());
        }
        out.push_str(" Emitted |\n");
        out.push_str(&"|---".repeat(3 + FailureStage::ALL.len()));
        out.push_str("|\n");
        for r in self.rows() {
            let _ = write!(out, "| {} | {} |", r.category(), r.attempted);
            for s in FailureStage::ALL {
                let n = r.failures.get(&s).copied().unwrap_or(0);
                let _ = write!(out, " {} |", percent(n, r.attempted));
            }
            let _ = writeln!(out, " {} |", r.emitted_total());
        }
        out
    }
}

fn percent(n: usize, d: usize) -> String {
    if d == 0 {
        "0.00".into()
    } else {
        format!("{:.2}", 100.0 * n as f64 / d as f64)
    }
}
