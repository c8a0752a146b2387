//! CSV loading: type inference, categorical encoding and median imputation.
//!
//! A column is numeric iff every non-missing cell parses as a number
//! (overridable per column). Missing numeric cells become the column median
//! of the observed values; missing categorical cells become the dedicated
//! level `⟨NA⟩`. Rows with a missing target are dropped and counted. Loading
//! is deterministic and order-preserving, so reloading the same file yields
//! an identical dataset.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::data::{Column, Dataset, Task};
use crate::error::{Error, Result};

/// Missing-cell markers: the empty string and `NA`.
fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

/// The level used for missing categorical cells.
pub const NA_LEVEL: &str = "⟨NA⟩";

/// Caller-declared kind for a column, overriding inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeclaredKind {
    Numeric,
    Categorical,
}

/// How to load a file.
#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub target: String,
    pub task: Task,
    /// Per-column kind overrides, keyed by header name.
    pub overrides: HashMap<String, DeclaredKind>,
    pub delimiter: u8,
}

impl LoadOptions {
    pub fn new(target: impl Into<String>, task: Task) -> Self {
        LoadOptions {
            target: target.into(),
            task,
            overrides: HashMap::new(),
            delimiter: b',',
        }
    }
}

/// What happened to one loaded column.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: DeclaredKind,
    /// Imputation value (rendered) and how many cells received it.
    pub imputed: Option<(String, usize)>,
}

/// Loading summary emitted alongside the dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemaReport {
    pub columns: Vec<ColumnSchema>,
    /// Columns dropped because every cell was missing.
    pub dropped_columns: Vec<String>,
    /// Rows dropped because the target was missing.
    pub dropped_rows: usize,
    pub n_rows: usize,
    pub n_features: usize,
}

impl SchemaReport {
    /// Human-readable rendering of the report.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} rows, {} features", self.n_rows, self.n_features);
        if self.dropped_rows > 0 {
            let _ = writeln!(out, "dropped {} rows with missing target", self.dropped_rows);
        }
        for name in &self.dropped_columns {
            let _ = writeln!(out, "dropped all-missing column `{name}`");
        }
        for col in &self.columns {
            let kind = match col.kind {
                DeclaredKind::Numeric => "numeric",
                DeclaredKind::Categorical => "categorical",
            };
            match &col.imputed {
                None => {
                    let _ = writeln!(out, "{:<24} {kind}", col.name);
                }
                Some((value, count)) => {
                    let _ = writeln!(
                        out,
                        "{:<24} {kind} ({count} cells imputed with {value})",
                        col.name
                    );
                }
            }
        }
        out
    }
}

/// Loads a CSV file into a [`Dataset`] plus a report of the decisions taken.
pub fn load_csv(path: impl AsRef<Path>, options: &LoadOptions) -> Result<(Dataset, SchemaReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot open {}: {e}", path.display()),
        ))
    })?;
    load_csv_reader(file, options)
}

/// [`load_csv`] over any reader.
pub fn load_csv_reader<R: std::io::Read>(
    reader: R,
    options: &LoadOptions,
) -> Result<(Dataset, SchemaReport)> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers: Vec<String> = csv_reader
        .headers()
        .map_err(|e| Error::invalid_dataset(format!("cannot read header row: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let Some(target_idx) = headers.iter().position(|h| h == &options.target) else {
        return Err(Error::invalid_dataset(format!(
            "target column `{}` not found in header",
            options.target
        )));
    };

    let mut rows: Vec<Vec<String>> = Vec::new();
    for (line, record) in csv_reader.records().enumerate() {
        let record = record.map_err(|e| {
            Error::invalid_dataset(format!("cannot parse record {}: {e}", line + 2))
        })?;
        if record.len() != headers.len() {
            return Err(Error::invalid_dataset(format!(
                "record {} has {} fields, header has {}",
                line + 2,
                record.len(),
                headers.len()
            )));
        }
        rows.push(record.iter().map(str::to_string).collect());
    }

    // Drop rows with a missing target.
    let before = rows.len();
    rows.retain(|row| !is_missing(&row[target_idx]));
    let dropped_rows = before - rows.len();
    let n = rows.len();
    if n < 2 {
        return Err(Error::invalid_dataset(format!(
            "need at least 2 usable rows, got {n}"
        )));
    }

    let mut feature_names = Vec::new();
    let mut columns = Vec::new();
    let mut column_schemas = Vec::new();
    let mut dropped_columns = Vec::new();

    for (j, name) in headers.iter().enumerate() {
        if j == target_idx {
            continue;
        }
        let cells: Vec<&str> = rows.iter().map(|row| row[j].as_str()).collect();
        if cells.iter().all(|c| is_missing(c)) {
            dropped_columns.push(name.clone());
            continue;
        }
        let declared = options.overrides.get(name).copied();
        let numeric = match declared {
            Some(DeclaredKind::Numeric) => true,
            Some(DeclaredKind::Categorical) => false,
            None => cells
                .iter()
                .filter(|c| !is_missing(c))
                .all(|c| c.parse::<f64>().is_ok_and(f64::is_finite)),
        };
        if numeric {
            // A declared-numeric column where nothing parses is as useless
            // as an all-missing one.
            let Some((column, imputed)) = numeric_column(&cells) else {
                dropped_columns.push(name.clone());
                continue;
            };
            columns.push(Column::Numeric(column));
            column_schemas.push(ColumnSchema {
                name: name.clone(),
                kind: DeclaredKind::Numeric,
                imputed,
            });
        } else {
            let (column, imputed) = categorical_column(&cells);
            columns.push(column);
            column_schemas.push(ColumnSchema {
                name: name.clone(),
                kind: DeclaredKind::Categorical,
                imputed,
            });
        }
        feature_names.push(name.clone());
    }

    if columns.is_empty() {
        return Err(Error::invalid_dataset("no usable feature columns"));
    }

    let target_cells: Vec<&str> = rows.iter().map(|row| row[target_idx].as_str()).collect();
    let dataset = match options.task {
        Task::Regression => {
            let mut y = Vec::with_capacity(n);
            for (i, cell) in target_cells.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::invalid_dataset(format!(
                        "target `{}` row {}: `{cell}` is not numeric",
                        options.target,
                        i + 1
                    ))
                })?;
                y.push(v);
            }
            Dataset::regression(feature_names, columns, options.target.clone(), y)?
        }
        Task::Classification => {
            let mut classes: Vec<String> = target_cells.iter().map(|c| c.to_string()).collect();
            classes.sort_unstable();
            classes.dedup();
            if classes.len() < 2 {
                return Err(Error::invalid_dataset(format!(
                    "classification target `{}` has a single class",
                    options.target
                )));
            }
            let codes = target_cells
                .iter()
                .map(|c| {
                    classes
                        .iter()
                        .position(|k| k == c)
                        .expect("class dictionary covers every cell") as u32
                        + 1
                })
                .collect();
            Dataset::classification(
                feature_names,
                columns,
                options.target.clone(),
                codes,
                classes,
            )?
        }
    };

    let report = SchemaReport {
        columns: column_schemas,
        dropped_columns,
        dropped_rows,
        n_rows: dataset.n_rows(),
        n_features: dataset.n_features(),
    };
    Ok((dataset, report))
}

/// Parses a numeric column, imputing missing (or unparseable) cells with the
/// median of the observed values. `None` when no cell parses at all.
fn numeric_column(cells: &[&str]) -> Option<(Vec<f64>, Option<(String, usize)>)> {
    let parsed: Vec<Option<f64>> = cells
        .iter()
        .map(|c| {
            if is_missing(c) {
                None
            } else {
                c.parse::<f64>().ok().filter(|v| v.is_finite())
            }
        })
        .collect();
    let mut observed: Vec<f64> = parsed.iter().filter_map(|v| *v).collect();
    if observed.is_empty() {
        return None;
    }
    observed.sort_unstable_by(f64::total_cmp);
    let median = if observed.len() % 2 == 1 {
        observed[observed.len() / 2]
    } else {
        let hi = observed.len() / 2;
        (observed[hi - 1] + observed[hi]) / 2.0
    };
    let missing = parsed.iter().filter(|v| v.is_none()).count();
    let column = parsed.into_iter().map(|v| v.unwrap_or(median)).collect();
    let imputed = (missing > 0).then(|| (format!("{median}"), missing));
    Some((column, imputed))
}

/// Encodes a categorical column with levels in first-appearance order;
/// missing cells become the dedicated `⟨NA⟩` level.
fn categorical_column(cells: &[&str]) -> (Column, Option<(String, usize)>) {
    let mut levels: Vec<String> = Vec::new();
    let mut index: HashMap<String, u32> = HashMap::new();
    let mut codes = Vec::with_capacity(cells.len());
    let mut missing = 0usize;
    for &cell in cells {
        let value = if is_missing(cell) {
            missing += 1;
            NA_LEVEL
        } else {
            cell
        };
        let code = *index.entry(value.to_string()).or_insert_with(|| {
            levels.push(value.to_string());
            levels.len() as u32 - 1
        });
        codes.push(code);
    }
    let imputed = (missing > 0).then(|| (NA_LEVEL.to_string(), missing));
    (Column::Categorical { levels, codes }, imputed)
}
