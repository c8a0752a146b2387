//! Tabular datasets: numeric and categorical feature columns plus a real or
//! class-labelled response.
//!
//! Datasets are complete by construction: the loaders in [`crate::ingest`]
//! impute missing cells before building one, and the generators in
//! [`crate::datagen`] never produce them. Class labels live in `1..=L`.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Prediction task of a dataset and of any forest trained on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Regression => write!(f, "regression"),
            Task::Classification => write!(f, "classification"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            other => Err(Error::invalid_argument(format!(
                "unknown task `{other}` (expected `regression` or `classification`)"
            ))),
        }
    }
}

/// One feature column.
#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    /// Level ids index into `levels`; `codes[i] < levels.len()`.
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Column::Numeric(_))
    }

    /// Number of dictionary levels (0 for numeric columns).
    pub fn n_levels(&self) -> usize {
        match self {
            Column::Numeric(_) => 0,
            Column::Categorical { levels, .. } => levels.len(),
        }
    }
}

/// One cell of the feature table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Cat(u32),
}

/// The response vector.
#[derive(Clone, Debug, PartialEq)]
pub enum Response {
    Real(Vec<f64>),
    /// `codes[i]` is a label in `1..=classes.len()`; `classes[k]` names label `k + 1`.
    Labels { codes: Vec<u32>, classes: Vec<String> },
}

impl Response {
    pub fn len(&self) -> usize {
        match self {
            Response::Real(v) => v.len(),
            Response::Labels { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An observed training (or test) sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    columns: Vec<Column>,
    response_name: String,
    response: Response,
}

impl Dataset {
    /// Builds a regression dataset, checking the type invariants.
    pub fn regression(
        feature_names: Vec<String>,
        columns: Vec<Column>,
        response_name: impl Into<String>,
        response: Vec<f64>,
    ) -> Result<Self> {
        let ds = Dataset {
            feature_names,
            columns,
            response_name: response_name.into(),
            response: Response::Real(response),
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Builds a classification dataset; `codes` hold labels in `1..=classes.len()`.
    pub fn classification(
        feature_names: Vec<String>,
        columns: Vec<Column>,
        response_name: impl Into<String>,
        codes: Vec<u32>,
        classes: Vec<String>,
    ) -> Result<Self> {
        let ds = Dataset {
            feature_names,
            columns,
            response_name: response_name.into(),
            response: Response::Labels { codes, classes },
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let n = self.response.len();
        if n < 2 {
            return Err(Error::invalid_dataset(format!(
                "need at least 2 rows, got {n}"
            )));
        }
        if self.columns.is_empty() {
            return Err(Error::invalid_dataset("need at least 1 feature column"));
        }
        if self.feature_names.len() != self.columns.len() {
            return Err(Error::invalid_dataset(format!(
                "{} feature names for {} columns",
                self.feature_names.len(),
                self.columns.len()
            )));
        }
        for (name, col) in self.feature_names.iter().zip(&self.columns) {
            if col.len() != n {
                return Err(Error::invalid_dataset(format!(
                    "column `{name}` has {} rows, response has {n}",
                    col.len()
                )));
            }
            match col {
                Column::Numeric(values) => {
                    if values.iter().any(|v| !v.is_finite()) {
                        return Err(Error::invalid_dataset(format!(
                            "column `{name}` contains a non-finite value"
                        )));
                    }
                }
                Column::Categorical { levels, codes } => {
                    if levels.is_empty() {
                        return Err(Error::invalid_dataset(format!(
                            "categorical column `{name}` has an empty level dictionary"
                        )));
                    }
                    if codes.iter().any(|&c| c as usize >= levels.len()) {
                        return Err(Error::invalid_dataset(format!(
                            "column `{name}` has a level code out of range"
                        )));
                    }
                }
            }
        }
        match &self.response {
            Response::Real(values) => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid_dataset(
                        "response contains a non-finite value",
                    ));
                }
            }
            Response::Labels { codes, classes } => {
                let l = classes.len();
                if l < 2 {
                    return Err(Error::invalid_dataset(format!(
                        "classification needs at least 2 classes, got {l}"
                    )));
                }
                let mut seen = vec![false; l];
                for &c in codes {
                    if c == 0 || c as usize > l {
                        return Err(Error::invalid_dataset(format!(
                            "label {c} outside 1..={l}"
                        )));
                    }
                    seen[(c - 1) as usize] = true;
                }
                if let Some(k) = seen.iter().position(|s| !s) {
                    return Err(Error::invalid_dataset(format!(
                        "class `{}` never appears in the response",
                        classes[k]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn task(&self) -> Task {
        match self.response {
            Response::Real(_) => Task::Regression,
            Response::Labels { .. } => Task::Classification,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn column(&self, j: usize) -> &Column {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn response(&self) -> &Response {
        &self.response
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        match &self.columns[col] {
            Column::Numeric(v) => Cell::Num(v[row]),
            Column::Categorical { codes, .. } => Cell::Cat(codes[row]),
        }
    }

    /// Real response of row `i`; panics on classification data.
    pub fn y_real(&self, i: usize) -> f64 {
        match &self.response {
            Response::Real(v) => v[i],
            Response::Labels { .. } => panic!("y_real on classification data"),
        }
    }

    /// Label (in `1..=L`) of row `i`; panics on regression data.
    pub fn y_label(&self, i: usize) -> u32 {
        match &self.response {
            Response::Real(_) => panic!("y_label on regression data"),
            Response::Labels { codes, .. } => codes[i],
        }
    }

    /// Number of classes L (0 for regression).
    pub fn n_classes(&self) -> usize {
        match &self.response {
            Response::Real(_) => 0,
            Response::Labels { classes, .. } => classes.len(),
        }
    }

    /// Class names, indexed by label id minus one. Empty for regression.
    pub fn classes(&self) -> &[String] {
        match &self.response {
            Response::Real(_) => &[],
            Response::Labels { classes, .. } => classes,
        }
    }

    /// Writes the dataset as CSV: header row, then one row per observation,
    /// response last. Numeric cells use the shortest round-trip decimal form,
    /// so reloading through [`crate::ingest::load_csv`] reproduces the values
    /// exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<&str> = self
            .feature_names
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(self.response_name.as_str()))
            .collect();
        w.write_record(&header).map_err(csv_io)?;
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for i in 0..self.n_rows() {
            record.clear();
            for col in &self.columns {
                record.push(match col {
                    Column::Numeric(v) => format!("{}", v[i]),
                    Column::Categorical { levels, codes } => levels[codes[i] as usize].clone(),
                });
            }
            record.push(match &self.response {
                Response::Real(v) => format!("{}", v[i]),
                Response::Labels { codes, classes } => classes[(codes[i] - 1) as usize].clone(),
            });
            w.write_record(&record).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// [`Self::write_csv`] to a file path.
    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("cannot create {}: {e}", path.display()),
            ))
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::InvalidDataset(format!("csv write: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_regression() -> Dataset {
        Dataset::regression(
            vec!["a".into(), "b".into()],
            vec![
                Column::Numeric(vec![1.0, 2.0, 3.0]),
                Column::Categorical {
                    levels: vec!["x".into(), "y".into()],
                    codes: vec![0, 1, 0],
                },
            ],
            "y",
            vec![10.0, 20.0, 30.0],
        )
        .unwrap()
    }

    #[test]
    fn accessors() {
        let ds = toy_regression();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.task(), Task::Regression);
        assert_eq!(ds.cell(1, 0), Cell::Num(2.0));
        assert_eq!(ds.cell(2, 1), Cell::Cat(0));
        assert_eq!(ds.y_real(2), 30.0);
    }

    #[test]
    fn rejects_single_row() {
        let err = Dataset::regression(
            vec!["a".into()],
            vec![Column::Numeric(vec![1.0])],
            "y",
            vec![1.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidDataset(_)));
    }

    #[test]
    fn rejects_length_mismatch() {
        let err = Dataset::regression(
            vec!["a".into()],
            vec![Column::Numeric(vec![1.0, 2.0, 3.0])],
            "y",
            vec![1.0, 2.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidDataset(_)));
    }

    #[test]
    fn rejects_missing_class() {
        let err = Dataset::classification(
            vec!["a".into()],
            vec![Column::Numeric(vec![1.0, 2.0])],
            "y",
            vec![1, 1],
            vec!["no".into(), "yes".into()],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidDataset(_)));
    }

    #[test]
    fn rejects_label_out_of_range() {
        let err = Dataset::classification(
            vec!["a".into()],
            vec![Column::Numeric(vec![1.0, 2.0])],
            "y",
            vec![1, 3],
            vec!["no".into(), "yes".into()],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidDataset(_)));
    }

    #[test]
    fn task_parses() {
        assert_eq!("regression".parse::<Task>().unwrap(), Task::Regression);
        assert!("banana".parse::<Task>().is_err());
    }
}
