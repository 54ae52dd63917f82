//! Domain types shared by the synthesis pipeline and the evaluation harness.
//!
//! Everything here is an immutable value object. Constructors that can
//! violate an invariant return [`ModelError`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::{normalize_name, token_key};

/// Default cap on the number of A/U cases injected into one query.
pub const DEFAULT_MAX_FACETS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("ambiguity flavor must be set for col_amb and only for col_amb (kind {kind})")]
    FlavorMismatch { kind: AuKind },
    #[error("target value must be present exactly for value modes (kind {kind})")]
    TargetValueMismatch { kind: AuKind },
    #[error("duplicate column `{column}` in table `{table}` after normalization")]
    DuplicateColumn { table: String, column: String },
    #[error("duplicate table `{0}` after normalization")]
    DuplicateTable(String),
    #[error("sampled values of {0} are not distinct")]
    DuplicateSampledValue(ColumnRef),
    #[error("foreign key references unknown column {0}")]
    DanglingForeignKey(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
}

/// The four A/U families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuKind {
    ColAmb,
    ValAmb,
    ColUnans,
    ValUnans,
}

impl AuKind {
    pub const ALL: [AuKind; 4] = [AuKind::ColAmb, AuKind::ValAmb, AuKind::ColUnans, AuKind::ValUnans];

    pub fn is_ambiguity(self) -> bool {
        matches!(self, AuKind::ColAmb | AuKind::ValAmb)
    }

    pub fn is_value(self) -> bool {
        matches!(self, AuKind::ValAmb | AuKind::ValUnans)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AuKind::ColAmb => "col_amb",
            AuKind::ValAmb => "val_amb",
            AuKind::ColUnans => "col_unans",
            AuKind::ValUnans => "val_unans",
        }
    }
}

impl fmt::Display for AuKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AuKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "col_amb" => Ok(AuKind::ColAmb),
            "val_amb" => Ok(AuKind::ValAmb),
            "col_unans" => Ok(AuKind::ColUnans),
            "val_unans" | "value_unans" => Ok(AuKind::ValUnans),
            other => Err(format!("unknown A/U mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbiguityFlavor {
    Lexical,
    Semantic,
}

impl AmbiguityFlavor {
    pub fn as_str(self) -> &'static str {
        match self {
            AmbiguityFlavor::Lexical => "lexical",
            AmbiguityFlavor::Semantic => "semantic",
        }
    }
}

impl std::str::FromStr for AmbiguityFlavor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lexical" => Ok(AmbiguityFlavor::Lexical),
            "semantic" => Ok(AmbiguityFlavor::Semantic),
            other => Err(format!("unknown ambiguity flavor `{other}`")),
        }
    }
}

/// One A/U mode. The flavor is present iff the kind is `col_amb`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawMode")]
pub struct AuMode {
    kind: AuKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    ambiguity_flavor: Option<AmbiguityFlavor>,
}

#[derive(Deserialize)]
struct RawMode {
    kind: AuKind,
    #[serde(default)]
    ambiguity_flavor: Option<AmbiguityFlavor>,
}

impl TryFrom<RawMode> for AuMode {
    type Error = ModelError;

    fn try_from(raw: RawMode) -> Result<Self, Self::Error> {
        AuMode::new(raw.kind, raw.ambiguity_flavor)
    }
}

impl AuMode {
    pub fn new(kind: AuKind, ambiguity_flavor: Option<AmbiguityFlavor>) -> Result<Self, ModelError> {
        if (kind == AuKind::ColAmb) != ambiguity_flavor.is_some() {
            return Err(ModelError::FlavorMismatch { kind });
        }
        Ok(Self { kind, ambiguity_flavor })
    }

    pub fn col_amb(flavor: AmbiguityFlavor) -> Self {
        Self { kind: AuKind::ColAmb, ambiguity_flavor: Some(flavor) }
    }

    pub fn val_amb() -> Self {
        Self { kind: AuKind::ValAmb, ambiguity_flavor: None }
    }

    pub fn col_unans() -> Self {
        Self { kind: AuKind::ColUnans, ambiguity_flavor: None }
    }

    pub fn val_unans() -> Self {
        Self { kind: AuKind::ValUnans, ambiguity_flavor: None }
    }

    pub fn kind(&self) -> AuKind {
        self.kind
    }

    pub fn flavor(&self) -> Option<AmbiguityFlavor> {
        self.ambiguity_flavor
    }

    pub fn is_ambiguity(&self) -> bool {
        self.kind.is_ambiguity()
    }

    pub fn is_value(&self) -> bool {
        self.kind.is_value()
    }

    /// Statistics-table case this mode falls under.
    pub fn case(&self) -> AuCase {
        match (self.kind, self.ambiguity_flavor) {
            (AuKind::ColAmb, Some(AmbiguityFlavor::Semantic)) => AuCase::SemanticAmb,
            (AuKind::ColAmb, _) => AuCase::LexicalAmb,
            (AuKind::ValAmb, _) => AuCase::ValueAmb,
            (AuKind::ColUnans, _) => AuCase::UnansColumn,
            (AuKind::ValUnans, _) => AuCase::UnansValue,
        }
    }
}

impl fmt::Display for AuMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.ambiguity_flavor {
            Some(flavor) => write!(f, "{}:{}", self.kind, flavor.as_str()),
            None => write!(f, "{}", self.kind),
        }
    }
}

/// Row of the statistics and failure tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuCase {
    LexicalAmb,
    SemanticAmb,
    ValueAmb,
    UnansColumn,
    UnansValue,
    /// Instances mixing several modes; only produced when mixing is enabled.
    Mixed,
}

impl AuCase {
    pub const TABLE: [AuCase; 5] = [
        AuCase::LexicalAmb,
        AuCase::SemanticAmb,
        AuCase::ValueAmb,
        AuCase::UnansColumn,
        AuCase::UnansValue,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AuCase::LexicalAmb => "Lexical Amb",
            AuCase::SemanticAmb => "Semantic Amb",
            AuCase::ValueAmb => "Value Amb",
            AuCase::UnansColumn => "Unans Column",
            AuCase::UnansValue => "Unans Value",
            AuCase::Mixed => "Mixed",
        }
    }

    pub fn is_ambiguity(self) -> bool {
        matches!(self, AuCase::LexicalAmb | AuCase::SemanticAmb | AuCase::ValueAmb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Facet {
    Uni,
    Multi,
}

impl Facet {
    pub fn from_count(k: usize) -> Self {
        if k <= 1 {
            Facet::Uni
        } else {
            Facet::Multi
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Facet::Uni => "uni",
            Facet::Multi => "multi",
        }
    }
}

/// Evaluation and reporting category: facet count crossed with A/U case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Category {
    pub facet: Facet,
    pub case: AuCase,
}

impl Category {
    /// The ten categories of the statistics table, in table order.
    pub fn table_order() -> Vec<Category> {
        let mut out = Vec::with_capacity(10);
        for case in AuCase::TABLE {
            for facet in [Facet::Uni, Facet::Multi] {
                out.push(Category { facet, case });
            }
        }
        out
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let facet = match self.facet {
            Facet::Uni => "Uni",
            Facet::Multi => "Multi",
        };
        write!(f, "{facet} {}", self.case.label())
    }
}

/// Canonical column reference: (table, column) using the schema's original
/// spelling.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        Self { table: table.into(), column: column.into() }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

/// A literal value as it appears in SQL or in a database column.
///
/// Numbers keep their lexeme so that rendering is exact; [`Literal::canonical`]
/// folds `5`, `5.0` and `5e0` together for comparisons.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Literal {
    Text(String),
    Number(String),
    Null,
}

impl Literal {
    pub fn text(s: impl Into<String>) -> Self {
        Literal::Text(s.into())
    }

    pub fn number(s: impl Into<String>) -> Self {
        Literal::Number(s.into())
    }

    /// Human-facing surface: text without quotes, numbers as written.
    pub fn surface(&self) -> &str {
        match self {
            Literal::Text(s) | Literal::Number(s) => s,
            Literal::Null => "NULL",
        }
    }

    pub fn canonical(&self) -> String {
        match self {
            Literal::Text(s) => format!("'{}'", s.replace('\'', "''")),
            Literal::Number(s) => canonical_number(s),
            Literal::Null => "NULL".to_string(),
        }
    }

    pub fn same_value(&self, other: &Literal) -> bool {
        match (self, other) {
            (Literal::Number(a), Literal::Text(b)) | (Literal::Text(b), Literal::Number(a)) => {
                canonical_number(a) == canonical_number(b)
            }
            _ => self.canonical() == other.canonical(),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.surface())
    }
}

/// Canonical decimal rendering of a numeric lexeme; non-numeric text is
/// returned unchanged.
pub fn canonical_number(lexeme: &str) -> String {
    match lexeme.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => {
            if v.fract() == 0.0 && v.abs() < 1e15 {
                format!("{}", v as i64)
            } else {
                format!("{v}")
            }
        }
        _ => lexeme.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticType {
    Text,
    Number,
    Time,
    Boolean,
    Other,
}

impl SemanticType {
    pub fn from_spider(raw: &str) -> Self {
        match raw.to_ascii_lowercase().as_str() {
            "text" => SemanticType::Text,
            "number" | "integer" | "real" => SemanticType::Number,
            "time" | "date" | "datetime" => SemanticType::Time,
            "boolean" => SemanticType::Boolean,
            _ => SemanticType::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub semantic_type: SemanticType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled_values: Option<Vec<Literal>>,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, semantic_type: SemanticType) -> Self {
        Self { name: name.into(), semantic_type, sampled_values: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub column: String,
    pub remote_table: String,
    pub remote_column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
}

impl TableDef {
    pub fn new(name: impl Into<String>, columns: Vec<ColumnDef>) -> Self {
        Self { name: name.into(), columns, foreign_keys: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

/// A database schema with a normalization index over its columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaCatalog {
    db_id: String,
    tables: Vec<TableDef>,
    /// normalized column name -> every column carrying that name
    normalization_index: BTreeMap<String, Vec<ColumnRef>>,
    /// order-insensitive key -> columns, for "Count Customer" == "Customer Count"
    token_index: BTreeMap<String, Vec<ColumnRef>>,
}

impl SchemaCatalog {
    pub fn new(db_id: impl Into<String>, tables: Vec<TableDef>) -> Result<Self, ModelError> {
        let mut seen_tables = BTreeSet::new();
        let mut normalization_index: BTreeMap<String, Vec<ColumnRef>> = BTreeMap::new();
        let mut token_index: BTreeMap<String, Vec<ColumnRef>> = BTreeMap::new();
        for table in &tables {
            if !seen_tables.insert(normalize_name(&table.name)) {
                return Err(ModelError::DuplicateTable(table.name.clone()));
            }
            let mut seen_columns = BTreeSet::new();
            for column in &table.columns {
                if !seen_columns.insert(normalize_name(&column.name)) {
                    return Err(ModelError::DuplicateColumn {
                        table: table.name.clone(),
                        column: column.name.clone(),
                    });
                }
                let reference = ColumnRef::new(&table.name, &column.name);
                if let Some(values) = &column.sampled_values {
                    let distinct: BTreeSet<String> = values.iter().map(Literal::canonical).collect();
                    if distinct.len() != values.len() {
                        return Err(ModelError::DuplicateSampledValue(reference));
                    }
                }
                normalization_index
                    .entry(normalize_name(&column.name))
                    .or_default()
                    .push(reference.clone());
                token_index.entry(token_key(&column.name)).or_default().push(reference);
            }
        }
        let catalog = Self { db_id: db_id.into(), tables, normalization_index, token_index };
        for table in &catalog.tables {
            for fk in &table.foreign_keys {
                let local_ok = table.column(&fk.column).is_some();
                let remote_ok = catalog
                    .table(&fk.remote_table)
                    .is_some_and(|t| t.column(&fk.remote_column).is_some());
                if !local_ok || !remote_ok {
                    return Err(ModelError::DanglingForeignKey(format!(
                        "{}.{} -> {}.{}",
                        table.name, fk.column, fk.remote_table, fk.remote_column
                    )));
                }
            }
        }
        Ok(catalog)
    }

    pub fn db_id(&self) -> &str {
        &self.db_id
    }

    pub fn tables(&self) -> &[TableDef] {
        &self.tables
    }

    pub fn normalization_index(&self) -> &BTreeMap<String, Vec<ColumnRef>> {
        &self.normalization_index
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, reference: &ColumnRef) -> Option<&ColumnDef> {
        self.table(&reference.table)?.column(&reference.column)
    }

    /// Canonical reference for a (table, column) spelled in any case.
    pub fn canonical_ref(&self, table: &str, column: &str) -> Option<ColumnRef> {
        let t = self.table(table)?;
        let c = t.column(column)?;
        Some(ColumnRef::new(&t.name, &c.name))
    }

    /// Every column, in schema order.
    pub fn columns(&self) -> impl Iterator<Item = ColumnRef> + '_ {
        self.tables
            .iter()
            .flat_map(|t| t.columns.iter().map(move |c| ColumnRef::new(&t.name, &c.name)))
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    /// Columns whose name matches `surface` once case, separators, plural
    /// forms, synonyms and token order are ignored.
    pub fn matching_columns(&self, surface: &str) -> Vec<ColumnRef> {
        let mut out: Vec<ColumnRef> = self
            .normalization_index
            .get(&normalize_name(surface))
            .cloned()
            .unwrap_or_default();
        if let Some(extra) = self.token_index.get(&token_key(surface)) {
            for r in extra {
                if !out.contains(r) {
                    out.push(r.clone());
                }
            }
        }
        out
    }

    pub fn matches_column(&self, surface: &str) -> bool {
        !self.matching_columns(surface).is_empty()
    }

    /// Whether a bare column name occurs in more than one table.
    pub fn is_shared_column_name(&self, column: &str) -> bool {
        self.tables.iter().filter(|t| t.column(column).is_some()).count() > 1
    }

    /// Returns a copy with `values` attached to `column`. Duplicate values are
    /// dropped, keeping first occurrences.
    pub fn with_sampled_values(&self, column: &ColumnRef, values: Vec<Literal>) -> Self {
        let mut copy = self.clone();
        copy.set_sampled_values(column, values);
        copy
    }

    pub fn set_sampled_values(&mut self, column: &ColumnRef, values: Vec<Literal>) {
        let mut seen = BTreeSet::new();
        let distinct: Vec<Literal> = values.into_iter().filter(|v| seen.insert(v.canonical())).collect();
        if let Some(table) = self.tables.iter_mut().find(|t| t.name.eq_ignore_ascii_case(&column.table)) {
            if let Some(col) = table.columns.iter_mut().find(|c| c.name.eq_ignore_ascii_case(&column.column)) {
                col.sampled_values = Some(distinct);
            }
        }
    }

    /// Compact `table(col, col, ...)` listing used inside prompts.
    pub fn describe(&self) -> String {
        self.tables
            .iter()
            .map(|t| {
                let cols: Vec<&str> = t.columns.iter().map(|c| c.name.as_str()).collect();
                format!("{}({})", t.name, cols.join(", "))
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// An executable NL2SQL pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePair {
    pub question: String,
    pub sql: String,
    pub db_id: String,
    /// Fields of the source record this crate does not interpret (for
    /// example BIRD's `evidence`), kept verbatim.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub passthrough: BTreeMap<String, serde_json::Value>,
}

impl SourcePair {
    pub fn new(question: impl Into<String>, sql: impl Into<String>, db_id: impl Into<String>) -> Self {
        Self {
            question: question.into(),
            sql: sql.into(),
            db_id: db_id.into(),
            passthrough: BTreeMap::new(),
        }
    }
}

/// A sampled A/U target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTarget")]
pub struct TargetSelection {
    mode: AuMode,
    column: ColumnRef,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<Literal>,
}

#[derive(Deserialize)]
struct RawTarget {
    mode: AuMode,
    column: ColumnRef,
    #[serde(default)]
    value: Option<Literal>,
}

impl TryFrom<RawTarget> for TargetSelection {
    type Error = ModelError;

    fn try_from(raw: RawTarget) -> Result<Self, Self::Error> {
        TargetSelection::new(raw.mode, raw.column, raw.value)
    }
}

impl TargetSelection {
    pub fn new(mode: AuMode, column: ColumnRef, value: Option<Literal>) -> Result<Self, ModelError> {
        if mode.is_value() != value.is_some() {
            return Err(ModelError::TargetValueMismatch { kind: mode.kind() });
        }
        Ok(Self { mode, column, value })
    }

    pub fn mode(&self) -> AuMode {
        self.mode
    }

    pub fn column(&self) -> &ColumnRef {
        &self.column
    }

    pub fn value(&self) -> Option<&Literal> {
        self.value.as_ref()
    }

    /// The element this target denotes, as a group member.
    pub fn as_member(&self) -> GroupMember {
        match &self.value {
            Some(v) => GroupMember::Value(v.clone()),
            None => GroupMember::Column(self.column.clone()),
        }
    }

    /// Surface form used in prompts and conversations.
    pub fn surface(&self) -> String {
        match &self.value {
            Some(v) => v.surface().to_string(),
            None => self.column.column.clone(),
        }
    }
}

/// Element of a target space or target group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupMember {
    Column(ColumnRef),
    Value(Literal),
}

impl GroupMember {
    pub fn surface(&self) -> String {
        match self {
            GroupMember::Column(c) => c.column.clone(),
            GroupMember::Value(v) => v.surface().to_string(),
        }
    }

    pub fn same_as(&self, other: &GroupMember) -> bool {
        match (self, other) {
            (GroupMember::Column(a), GroupMember::Column(b)) => a == b,
            (GroupMember::Value(a), GroupMember::Value(b)) => a.same_value(b),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupFlavor {
    Lexical,
    Semantic,
    None,
}

impl From<Option<AmbiguityFlavor>> for GroupFlavor {
    fn from(f: Option<AmbiguityFlavor>) -> Self {
        match f {
            Some(AmbiguityFlavor::Lexical) => GroupFlavor::Lexical,
            Some(AmbiguityFlavor::Semantic) => GroupFlavor::Semantic,
            None => GroupFlavor::None,
        }
    }
}

/// The competing schema elements a pivot term may refer to. Empty for
/// unanswerable modes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TargetGroup {
    pub members: Vec<GroupMember>,
    pub flavor: GroupFlavor,
}

impl TargetGroup {
    pub fn empty() -> Self {
        Self { members: Vec::new(), flavor: GroupFlavor::None }
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn surfaces(&self) -> Vec<String> {
        self.members.iter().map(GroupMember::surface).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PivotTerm {
    pub surface: String,
    pub target: TargetSelection,
    pub group: TargetGroup,
}

impl PivotTerm {
    /// Target followed by the group: every element the pivot may denote.
    pub fn interpretations(&self) -> Vec<GroupMember> {
        let mut out = vec![self.target.as_member()];
        for m in &self.group.members {
            if !out.iter().any(|o| o.same_as(m)) {
                out.push(m.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversationType {
    ConciseHelpful,
    VerboseHelpful,
    PartiallyHelpful,
    NotHelpful,
}

impl ConversationType {
    pub const ALL: [ConversationType; 4] = [
        ConversationType::ConciseHelpful,
        ConversationType::VerboseHelpful,
        ConversationType::PartiallyHelpful,
        ConversationType::NotHelpful,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConversationType::ConciseHelpful => "concise_helpful",
            ConversationType::VerboseHelpful => "verbose_helpful",
            ConversationType::PartiallyHelpful => "partially_helpful",
            ConversationType::NotHelpful => "not_helpful",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ConversationType::ConciseHelpful => "Concise Helpful",
            ConversationType::VerboseHelpful => "Verbose Helpful",
            ConversationType::PartiallyHelpful => "Partially Helpful",
            ConversationType::NotHelpful => "Not Helpful",
        }
    }

    pub fn resolves(self) -> bool {
        !matches!(self, ConversationType::NotHelpful)
    }
}

impl std::str::FromStr for ConversationType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "concise_helpful" | "concise" => Ok(ConversationType::ConciseHelpful),
            "verbose_helpful" | "verbose" => Ok(ConversationType::VerboseHelpful),
            "partially_helpful" | "partial" => Ok(ConversationType::PartiallyHelpful),
            "not_helpful" | "unhelpful" => Ok(ConversationType::NotHelpful),
            other => Err(format!("unknown conversation type `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Speaker {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

impl Turn {
    pub fn user(text: impl Into<String>) -> Self {
        Self { speaker: Speaker::User, text: text.into() }
    }

    pub fn agent(text: impl Into<String>) -> Self {
        Self { speaker: Speaker::Agent, text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub turns: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_sql: Option<String>,
}

impl Conversation {
    /// Turns alternate user/agent, starting with the user.
    pub fn alternates(&self) -> bool {
        !self.turns.is_empty()
            && self.turns.iter().enumerate().all(|(i, t)| {
                t.speaker == if i % 2 == 0 { Speaker::User } else { Speaker::Agent }
            })
    }

    pub fn last_agent_turn(&self) -> Option<&Turn> {
        self.turns.iter().rev().find(|t| t.speaker == Speaker::Agent)
    }

    /// `USER: ...` / `AGENT: ...` transcript.
    pub fn render(&self) -> String {
        self.turns
            .iter()
            .map(|t| {
                let who = match t.speaker {
                    Speaker::User => "USER",
                    Speaker::Agent => "AGENT",
                };
                format!("{who}: {}", t.text)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// One generated A/U item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuInstance {
    pub id: String,
    pub source: SourcePair,
    pub modes: Vec<AuMode>,
    pub facet_count: usize,
    pub pivots: Vec<PivotTerm>,
    pub conversation_type: ConversationType,
    pub conversation: Conversation,
    pub gold_sqls: Vec<String>,
    pub validation_flag: bool,
}

impl AuInstance {
    pub fn is_ambiguity(&self) -> bool {
        self.modes.iter().all(AuMode::is_ambiguity)
    }

    pub fn category(&self) -> Category {
        let facet = Facet::from_count(self.facet_count);
        let first = self.modes.first().map(AuMode::case).unwrap_or(AuCase::Mixed);
        let case = if self.modes.iter().all(|m| m.case() == first) { first } else { AuCase::Mixed };
        Category { facet, case }
    }

    /// The A/U query, i.e. the first user turn.
    pub fn query(&self) -> &str {
        self.conversation.turns.first().map(|t| t.text.as_str()).unwrap_or("")
    }

    /// Checks the structural invariants of an emitted instance.
    pub fn validate(&self, max_facets: usize) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidInstance(format!("{}: {msg}", self.id)));
        if self.facet_count == 0 || self.facet_count > max_facets {
            return bad(format!("facet count {} outside 1..={max_facets}", self.facet_count));
        }
        if self.pivots.len() != self.facet_count || self.modes.len() != self.facet_count {
            return bad("the facet count must equal the number of pivots and modes".into());
        }
        if !self.conversation.alternates() {
            return bad("turns must alternate user/agent starting with the user".into());
        }
        let query_tokens = crate::normalize::normalized_tokens(self.query());
        for pivot in &self.pivots {
            let count = crate::normalize::count_phrase(&query_tokens, &pivot.surface);
            if count != 1 {
                return bad(format!("pivot `{}` appears {count} times in the A/U query", pivot.surface));
            }
        }
        let any_unans = self.modes.iter().any(|m| !m.is_ambiguity());
        if any_unans != self.gold_sqls.is_empty() {
            return bad("gold SQLs must be empty exactly when a mode is unanswerable".into());
        }
        if any_unans && self.conversation.final_sql.is_some() {
            return bad("unanswerable instances carry no final SQL".into());
        }
        Ok(())
    }
}

/// Outcome of one evaluation criterion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub pass: bool,
    pub feedback: String,
}

/// Structured evaluator outcome. `all_pass` is the conjunction of every
/// criterion and is recomputed on construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    criteria: BTreeMap<String, CriterionOutcome>,
    all_pass: bool,
}

impl JudgeVerdict {
    pub fn new(criteria: BTreeMap<String, CriterionOutcome>) -> Self {
        let all_pass = !criteria.is_empty() && criteria.values().all(|c| c.pass);
        Self { criteria, all_pass }
    }

    pub fn single(name: &str, pass: bool, feedback: impl Into<String>) -> Self {
        let mut criteria = BTreeMap::new();
        criteria.insert(name.to_string(), CriterionOutcome { pass, feedback: feedback.into() });
        Self::new(criteria)
    }

    pub fn criteria(&self) -> &BTreeMap<String, CriterionOutcome> {
        &self.criteria
    }

    pub fn all_pass(&self) -> bool {
        self.all_pass
    }

    pub fn passed(&self, criterion: &str) -> Option<bool> {
        self.criteria.get(criterion).map(|c| c.pass)
    }

    /// Feedback of every failed criterion, one per line.
    pub fn feedback(&self) -> String {
        self.criteria
            .iter()
            .filter(|(_, c)| !c.pass)
            .map(|(name, c)| format!("{name}: {}", c.feedback))
            .collect::<Vec<_>>()
            .join("\n")
    }
}
