//! Tabular datasets: CSV loading, column-kind inference and k-fold splits.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed schema {path}: {source}")]
    Schema {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate column name `{0}` in header")]
    DuplicateColumn(String),
    #[error("target column `{0}` not found")]
    MissingTarget(String),
    #[error("override references unknown column `{0}`")]
    UnknownOverride(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as {kind}")]
    Unparseable {
        row: usize,
        column: String,
        value: String,
        kind: ColumnKind,
    },
    #[error("file has no data rows")]
    NoRows,
    #[error("row {row} has {found} cells, header has {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("target `{column}` has kind {kind}, which is incompatible with {task:?}")]
    TargetKind {
        column: String,
        kind: ColumnKind,
        task: Task,
    },
    #[error("target `{0}` has missing cells")]
    MissingTargetCells(String),
    #[error("cannot split {n_rows} rows into {k} folds")]
    BadFoldCount { k: usize, n_rows: usize },
    #[error("stratified folds require a classification task")]
    StratifiedRegression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Boolean,
    Date,
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Boolean => "boolean",
            ColumnKind::Date => "date",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

/// A calendar date kept both as days since 1970-01-01 and as the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DateCell {
    pub days: i64,
    pub text: String,
}

impl DateCell {
    pub fn parse(text: &str) -> Option<Self> {
        let date = NaiveDate::parse_from_str(text, "%Y-%m-%d").ok()?;
        Some(Self {
            days: date.signed_duration_since(epoch()).num_days(),
            text: text.to_string(),
        })
    }

    pub fn date(&self) -> NaiveDate {
        epoch() + chrono::Duration::days(self.days)
    }

    pub fn day(&self) -> u32 {
        self.date().day()
    }

    pub fn month(&self) -> u32 {
        self.date().month()
    }

    pub fn year(&self) -> i32 {
        self.date().year()
    }

    pub fn is_weekend(&self) -> bool {
        matches!(
            self.date().weekday(),
            chrono::Weekday::Sat | chrono::Weekday::Sun
        )
    }
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

/// Cell storage per kind; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
    Boolean(Vec<Option<bool>>),
    Date(Vec<Option<DateCell>>),
}

impl ColumnData {
    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Categorical(_) => ColumnKind::Categorical,
            ColumnData::Boolean(_) => ColumnKind::Boolean,
            ColumnData::Date(_) => ColumnKind::Date,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
            ColumnData::Boolean(v) => v.len(),
            ColumnData::Date(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Distinct non-missing categorical levels in lexicographic order.
    pub fn levels(&self) -> Vec<String> {
        match self {
            ColumnData::Categorical(v) => v
                .iter()
                .flatten()
                .cloned()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Numeric encoding used by learners and correlation scoring.
    ///
    /// Booleans become 0/1, dates become days since epoch, categoricals
    /// become the index of their level with missing cells mapped to an extra
    /// trailing level, so categorical encodings are never missing.
    pub fn encoded(&self) -> Vec<Option<f64>> {
        match self {
            ColumnData::Numeric(v) => v.clone(),
            ColumnData::Boolean(v) => v
                .iter()
                .map(|c| c.map(|b| if b { 1.0 } else { 0.0 }))
                .collect(),
            ColumnData::Date(v) => v.iter().map(|c| c.as_ref().map(|d| d.days as f64)).collect(),
            ColumnData::Categorical(v) => {
                let levels = self.levels();
                let missing_code = levels.len() as f64;
                v.iter()
                    .map(|c| {
                        Some(match c {
                            Some(s) => levels.binary_search(s).expect("level present") as f64,
                            None => missing_code,
                        })
                    })
                    .collect()
            }
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            ColumnData::Numeric(v) => v[row].is_none(),
            ColumnData::Categorical(v) => v[row].is_none(),
            ColumnData::Boolean(v) => v[row].is_none(),
            ColumnData::Date(v) => v[row].is_none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn kind(&self) -> ColumnKind {
        self.data.kind()
    }

    pub fn levels(&self) -> Vec<String> {
        self.data.levels()
    }

    pub fn encoded(&self) -> Vec<Option<f64>> {
        self.data.encoded()
    }
}

/// Schema for loading a CSV: which column is the target and how to treat
/// the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub target_name: String,
    pub task: Task,
    #[serde(default)]
    pub column_kind_overrides: BTreeMap<String, ColumnKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept_map_path: Option<PathBuf>,
}

impl SchemaConfig {
    pub fn new(target_name: impl Into<String>, task: Task) -> Self {
        Self {
            target_name: target_name.into(),
            task,
            column_kind_overrides: BTreeMap::new(),
            concept_map_path: None,
        }
    }

    /// Reads a schema document; a relative `concept_map_path` is resolved
    /// against the schema file's directory.
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut schema: SchemaConfig =
            serde_json::from_str(&text).map_err(|source| DataError::Schema {
                path: path.to_path_buf(),
                source,
            })?;
        if let (Some(rel), Some(dir)) = (&schema.concept_map_path, path.parent()) {
            if rel.is_relative() {
                schema.concept_map_path = Some(dir.join(rel));
            }
        }
        Ok(schema)
    }
}

/// An immutable table with one designated target column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    target: usize,
    task: Task,
    n_rows: usize,
}

impl Dataset {
    pub fn new(columns: Vec<Column>, target_name: &str, task: Task) -> Result<Self, DataError> {
        let target = columns
            .iter()
            .position(|c| c.name == target_name)
            .ok_or_else(|| DataError::MissingTarget(target_name.to_string()))?;
        let n_rows = columns.first().map(|c| c.data.len()).unwrap_or(0);
        if n_rows == 0 {
            return Err(DataError::NoRows);
        }
        if let Some(bad) = columns.iter().find(|c| c.data.len() != n_rows) {
            return Err(DataError::RaggedRow {
                row: bad.data.len(),
                found: bad.data.len(),
                expected: n_rows,
            });
        }
        let t = &columns[target];
        let kind_ok = match task {
            Task::Classification => {
                matches!(t.kind(), ColumnKind::Categorical | ColumnKind::Boolean)
            }
            Task::Regression => t.kind() == ColumnKind::Numeric,
        };
        if !kind_ok {
            return Err(DataError::TargetKind {
                column: t.name.clone(),
                kind: t.kind(),
                task,
            });
        }
        if (0..n_rows).any(|r| t.data.is_missing(r)) {
            return Err(DataError::MissingTargetCells(t.name.clone()));
        }
        Ok(Self {
            columns,
            target,
            task,
            n_rows,
        })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn target(&self) -> &Column {
        &self.columns[self.target]
    }

    pub fn target_name(&self) -> &str {
        &self.columns[self.target].name
    }

    /// All columns except the target, in file order.
    pub fn feature_columns(&self) -> impl Iterator<Item = &Column> {
        let target = self.target;
        self.columns
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != target)
            .map(|(_, c)| c)
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Class labels of the target in lexicographic order. Booleans order as
    /// `false` < `true`. Empty for regression.
    pub fn class_labels(&self) -> Vec<String> {
        match &self.target().data {
            ColumnData::Categorical(_) => self.target().levels(),
            ColumnData::Boolean(_) => vec!["false".to_string(), "true".to_string()],
            _ => Vec::new(),
        }
    }

    /// Target encoded as class indices into [`Dataset::class_labels`].
    pub fn class_indices(&self) -> Option<Vec<usize>> {
        match &self.target().data {
            ColumnData::Categorical(v) => {
                let labels = self.class_labels();
                Some(
                    v.iter()
                        .map(|c| {
                            let s = c.as_ref().expect("target has no missing cells");
                            labels.binary_search(s).expect("label present")
                        })
                        .collect(),
                )
            }
            ColumnData::Boolean(v) => Some(
                v.iter()
                    .map(|c| usize::from(c.expect("target has no missing cells")))
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Target as real values: regression values, or class indices as floats.
    pub fn target_values(&self) -> Vec<f64> {
        match &self.target().data {
            ColumnData::Numeric(v) => v.iter().map(|c| c.expect("target has no missing cells")).collect(),
            _ => self
                .class_indices()
                .expect("classification target")
                .into_iter()
                .map(|c| c as f64)
                .collect(),
        }
    }

    /// Returns a copy with the given rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                data: match &c.data {
                    ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
                    ColumnData::Categorical(v) => {
                        ColumnData::Categorical(rows.iter().map(|&r| v[r].clone()).collect())
                    }
                    ColumnData::Boolean(v) => ColumnData::Boolean(rows.iter().map(|&r| v[r]).collect()),
                    ColumnData::Date(v) => ColumnData::Date(rows.iter().map(|&r| v[r].clone()).collect()),
                },
            })
            .collect();
        Dataset {
            columns,
            target: self.target,
            task: self.task,
            n_rows: rows.len(),
        }
    }
}

fn is_missing_text(s: &str) -> bool {
    s.trim().is_empty()
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

/// Infers a column kind from raw cells. Only non-missing cells count; a
/// column with no values at all falls back to categorical.
pub fn infer_kind<'a>(cells: impl IntoIterator<Item = &'a str>) -> ColumnKind {
    let present: Vec<&str> = cells
        .into_iter()
        .filter(|c| !is_missing_text(c))
        .map(str::trim)
        .collect();
    if present.is_empty() {
        return ColumnKind::Categorical;
    }
    if present.iter().all(|c| parse_number(c).is_some()) {
        return ColumnKind::Numeric;
    }
    if present.iter().all(|c| DateCell::parse(c).is_some()) {
        return ColumnKind::Date;
    }
    let distinct: HashSet<String> = present.iter().map(|c| c.to_ascii_lowercase()).collect();
    if distinct.len() <= 2 && present.iter().all(|c| parse_bool(c).is_some()) {
        return ColumnKind::Boolean;
    }
    ColumnKind::Categorical
}

fn build_column(name: &str, cells: &[String], kind: ColumnKind) -> Result<ColumnData, DataError> {
    let fail = |row: usize, value: &str| DataError::Unparseable {
        row: row + 1,
        column: name.to_string(),
        value: value.to_string(),
        kind,
    };
    let data = match kind {
        ColumnKind::Numeric => ColumnData::Numeric(
            cells
                .iter()
                .enumerate()
                .map(|(r, c)| {
                    if is_missing_text(c) {
                        Ok(None)
                    } else {
                        parse_number(c).map(Some).ok_or_else(|| fail(r, c))
                    }
                })
                .collect::<Result<_, _>>()?,
        ),
        ColumnKind::Boolean => ColumnData::Boolean(
            cells
                .iter()
                .enumerate()
                .map(|(r, c)| {
                    if is_missing_text(c) {
                        Ok(None)
                    } else {
                        parse_bool(c).map(Some).ok_or_else(|| fail(r, c))
                    }
                })
                .collect::<Result<_, _>>()?,
        ),
        ColumnKind::Date => ColumnData::Date(
            cells
                .iter()
                .enumerate()
                .map(|(r, c)| {
                    if is_missing_text(c) {
                        Ok(None)
                    } else {
                        DateCell::parse(c.trim()).map(Some).ok_or_else(|| fail(r, c))
                    }
                })
                .collect::<Result<_, _>>()?,
        ),
        ColumnKind::Categorical => ColumnData::Categorical(
            cells
                .iter()
                .map(|c| (!is_missing_text(c)).then(|| c.trim().to_string()))
                .collect(),
        ),
    };
    Ok(data)
}

/// Parses CSV text into a dataset.
pub fn parse_csv(text: &str, schema: &SchemaConfig) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut seen = HashSet::new();
    for h in &header {
        // Display names upper-case column names, so names must differ beyond case.
        if !seen.insert(h.to_uppercase()) {
            return Err(DataError::DuplicateColumn(h.clone()));
        }
    }
    if !header.contains(&schema.target_name) {
        return Err(DataError::MissingTarget(schema.target_name.clone()));
    }
    if let Some(bad) = schema
        .column_kind_overrides
        .keys()
        .find(|k| !header.contains(k))
    {
        return Err(DataError::UnknownOverride(bad.clone()));
    }

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(DataError::RaggedRow {
                row: i + 1,
                found: record.len(),
                expected: header.len(),
            });
        }
        for (col, value) in cells.iter_mut().zip(record.iter()) {
            col.push(value.to_string());
        }
    }
    if cells.first().is_none_or(Vec::is_empty) {
        return Err(DataError::NoRows);
    }

    let columns = header
        .iter()
        .zip(&cells)
        .map(|(name, col)| {
            let kind = match schema.column_kind_overrides.get(name) {
                Some(k) => *k,
                None => {
                    let inferred = infer_kind(col.iter().map(String::as_str));
                    // Integer-coded class labels (e.g. 0/1 outcomes) are read as text.
                    if name == &schema.target_name
                        && schema.task == Task::Classification
                        && inferred == ColumnKind::Numeric
                    {
                        ColumnKind::Categorical
                    } else {
                        inferred
                    }
                }
            };
            Ok(Column {
                name: name.clone(),
                data: build_column(name, col, kind)?,
            })
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    Dataset::new(columns, &schema.target_name, schema.task)
}

pub fn load_csv(path: &Path, schema: &SchemaConfig) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, schema)
}

/// One cross-validation fold: training rows and validation rows, each sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

/// Deterministic k-fold split.
///
/// Rows are shuffled with `seed` (per class when stratified, classes taken
/// in label order) and dealt round-robin, so validation sizes differ by at
/// most one and every class is spread over the folds within one row.
pub fn split_kfold(d: &Dataset, k: usize, seed: u64, stratified: bool) -> Result<Vec<Fold>, DataError> {
    let n = d.n_rows();
    if k < 2 || k > n {
        return Err(DataError::BadFoldCount { k, n_rows: n });
    }
    if stratified && d.task() != Task::Classification {
        return Err(DataError::StratifiedRegression);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = if stratified {
        let classes = d.class_indices().expect("classification target");
        let n_classes = classes.iter().copied().max().map_or(0, |m| m + 1);
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
        for (row, &c) in classes.iter().enumerate() {
            by_class[c].push(row);
        }
        by_class
            .into_iter()
            .flat_map(|mut rows| {
                rows.shuffle(&mut rng);
                rows
            })
            .collect()
    } else {
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        rows
    };

    let mut valid: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, row) in order.into_iter().enumerate() {
        valid[pos % k].push(row);
    }
    Ok(valid
        .into_iter()
        .map(|mut v| {
            v.sort_unstable();
            let in_valid: HashSet<usize> = v.iter().copied().collect();
            let train = (0..n).filter(|r| !in_valid.contains(r)).collect();
            Fold { train, valid: v }
        })
        .collect())
}
