//! File-backed observation sources.
//!
//! Rows are delivered in file order. Columns flagged for the shifted-log
//! transform are mapped through `ln(v + 1)`; dummy columns pass through.

use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{DrawError, ObservationSource};
use crate::regression::Observation;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    SchemaMismatch(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("row {row}, column `{column}`: cannot parse {token:?} as a number")]
    Parse {
        row: usize,
        column: String,
        token: String,
    },
    #[error("row {row}, column `{column}`: {reason}")]
    InvalidValue {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("interleave needs at least one source")]
    NoSources,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    ShiftedLog,
}

impl Transform {
    pub fn apply(self, v: f64) -> Result<f64, String> {
        match self {
            Transform::Identity => Ok(v),
            Transform::ShiftedLog => shifted_log(v),
        }
    }
}

/// `ln(v + 1)` for nonnegative finite `v`.
pub fn shifted_log(v: f64) -> Result<f64, String> {
    if !v.is_finite() {
        return Err(format!("shifted log of non-finite value {v}"));
    }
    if v < 0.0 {
        return Err(format!("shifted log of negative value {v}"));
    }
    Ok(v.ln_1p())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub transform: Transform,
}

impl ColumnSpec {
    pub fn identity(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            transform: Transform::Identity,
        }
    }
    pub fn shifted_log(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            transform: Transform::ShiftedLog,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSchema {
    response: ColumnSpec,
    predictors: Vec<ColumnSpec>,
    dummies: Vec<String>,
    intercept: bool,
}

impl DataSchema {
    pub fn new(
        response: ColumnSpec,
        predictors: Vec<ColumnSpec>,
        dummies: Vec<String>,
        intercept: bool,
    ) -> Result<Self, IngestError> {
        let mut seen = HashSet::new();
        let names = std::iter::once(&response.name)
            .chain(predictors.iter().map(|c| &c.name))
            .chain(dummies.iter());
        for name in names {
            if name.is_empty() {
                return Err(IngestError::InvalidSchema("empty column name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(IngestError::InvalidSchema(format!(
                    "column `{name}` listed more than once"
                )));
            }
        }
        let schema = Self {
            response,
            predictors,
            dummies,
            intercept,
        };
        if schema.p() == 0 {
            return Err(IngestError::InvalidSchema(
                "no regression parameters".into(),
            ));
        }
        Ok(schema)
    }

    /// `intercept + predictors + dummies`.
    pub fn p(&self) -> usize {
        usize::from(self.intercept) + self.predictors.len() + self.dummies.len()
    }

    pub fn response(&self) -> &ColumnSpec {
        &self.response
    }
    pub fn predictors(&self) -> &[ColumnSpec] {
        &self.predictors
    }
    pub fn dummies(&self) -> &[String] {
        &self.dummies
    }
    pub fn intercept(&self) -> bool {
        self.intercept
    }

    /// Parameter names in design-matrix column order.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.p());
        if self.intercept {
            names.push("intercept".to_string());
        }
        names.extend(self.predictors.iter().map(|c| c.name.clone()));
        names.extend(self.dummies.iter().cloned());
        names
    }

    fn columns(&self) -> impl Iterator<Item = (&str, Transform)> {
        std::iter::once((self.response.name.as_str(), self.response.transform))
            .chain(
                self.predictors
                    .iter()
                    .map(|c| (c.name.as_str(), c.transform)),
            )
            .chain(
                self.dummies
                    .iter()
                    .map(|d| (d.as_str(), Transform::Identity)),
            )
    }
}

/// Streaming CSV source. Header row required; empty fields are errors.
pub struct CsvSource<R> {
    records: csv::StringRecordsIntoIter<R>,
    // header index and transform for response, predictors, dummies in order
    columns: Vec<(usize, String, Transform)>,
    intercept: bool,
    row: usize,
}

impl<R: Read> CsvSource<R> {
    pub fn from_reader(reader: R, schema: &DataSchema) -> Result<Self, IngestError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let columns = schema
            .columns()
            .map(|(name, t)| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .map(|i| (i, name.to_string(), t))
                    .ok_or_else(|| IngestError::SchemaMismatch(name.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            records: rdr.into_records(),
            columns,
            intercept: schema.intercept,
            row: 0,
        })
    }

    /// Data rows delivered so far.
    pub fn rows_read(&self) -> usize {
        self.row
    }

    fn parse(&self, record: &csv::StringRecord) -> Result<Observation, IngestError> {
        let mut values = Vec::with_capacity(self.columns.len());
        for (idx, name, transform) in &self.columns {
            let token = record.get(*idx).unwrap_or("");
            let raw: f64 = token.parse().map_err(|_| IngestError::Parse {
                row: self.row,
                column: name.clone(),
                token: token.to_string(),
            })?;
            let v = transform
                .apply(raw)
                .map_err(|reason| IngestError::InvalidValue {
                    row: self.row,
                    column: name.clone(),
                    reason,
                })?;
            if !v.is_finite() {
                return Err(IngestError::InvalidValue {
                    row: self.row,
                    column: name.clone(),
                    reason: format!("non-finite value {token}"),
                });
            }
            values.push(v);
        }
        let y = values[0];
        let mut x = Vec::with_capacity(values.len() - 1 + usize::from(self.intercept));
        if self.intercept {
            x.push(1.0);
        }
        x.extend_from_slice(&values[1..]);
        Ok(Observation { y, x })
    }

    fn next_row(&mut self) -> Option<Result<Observation, IngestError>> {
        let record = match self.records.next()? {
            Ok(r) => r,
            Err(e) => return Some(Err(e.into())),
        };
        self.row += 1;
        Some(self.parse(&record))
    }
}

impl<R: Read> ObservationSource for CsvSource<R> {
    fn draw(&mut self, count: usize) -> Result<Vec<Observation>, DrawError> {
        let mut rows = Vec::with_capacity(count);
        while rows.len() < count {
            match self.next_row() {
                Some(Ok(obs)) => rows.push(obs),
                Some(Err(e)) => return Err(DrawError::Failed(Box::new(e))),
                None => {
                    return Err(DrawError::Exhausted {
                        requested: count,
                        rows,
                    })
                }
            }
        }
        Ok(rows)
    }
}

pub fn open_csv_source(
    path: impl AsRef<Path>,
    schema: &DataSchema,
) -> Result<CsvSource<File>, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::File {
        path: path.to_path_buf(),
        source,
    })?;
    CsvSource::from_reader(file, schema)
}

/// Round-robin composite: one row from each member per cycle.
pub struct Interleave<S> {
    sources: Vec<S>,
    cursor: usize,
}

impl<S: ObservationSource> ObservationSource for Interleave<S> {
    fn draw(&mut self, count: usize) -> Result<Vec<Observation>, DrawError> {
        let mut rows = Vec::with_capacity(count);
        while rows.len() < count {
            let src = &mut self.sources[self.cursor];
            match src.draw(1) {
                Ok(mut one) => rows.append(&mut one),
                Err(DrawError::Exhausted { rows: mut rest, .. }) => {
                    rows.append(&mut rest);
                    return Err(DrawError::Exhausted {
                        requested: count,
                        rows,
                    });
                }
                Err(e) => return Err(e),
            }
            self.cursor = (self.cursor + 1) % self.sources.len();
        }
        Ok(rows)
    }
}

pub fn interleave_sources<S: ObservationSource>(
    sources: Vec<S>,
) -> Result<Interleave<S>, IngestError> {
    if sources.is_empty() {
        return Err(IngestError::NoSources);
    }
    Ok(Interleave { sources, cursor: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::VecSource;

    fn schema(log: bool) -> DataSchema {
        let response = if log {
            ColumnSpec::shifted_log("sales")
        } else {
            ColumnSpec::identity("sales")
        };
        DataSchema::new(response, vec![ColumnSpec::identity("price")], vec![], true).unwrap()
    }

    fn source<'a>(text: &'a str, schema: &DataSchema) -> CsvSource<&'a [u8]> {
        CsvSource::from_reader(text.as_bytes(), schema).unwrap()
    }

    #[test]
    fn shifted_log_values() {
        assert_eq!(shifted_log(0.0).unwrap(), 0.0);
        assert!((shifted_log(std::f64::consts::E - 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(shifted_log(-1.0).is_err());
        assert!(shifted_log(f64::INFINITY).is_err());
        assert!(shifted_log(f64::NAN).is_err());
    }

    #[test]
    fn draws_then_exhausts() {
        let s = schema(false);
        let mut src = source("sales,price\n1,2\n3,4\n5,6\n", &s);
        let first = src.draw(2).unwrap();
        assert_eq!(
            first[0],
            Observation {
                y: 1.0,
                x: vec![1.0, 2.0]
            }
        );
        assert_eq!(first[1].y, 3.0);
        let err = src.draw(2).unwrap_err();
        assert_eq!(err.available(), Some(1));
        assert_eq!(src.rows_read(), 3);
    }

    #[test]
    fn zero_sales_log_to_zero() {
        let s = schema(true);
        let mut src = source("price,sales\n10,0\n", &s);
        let row = src.draw(1).unwrap().remove(0);
        assert_eq!(row.y, 0.0);
        assert_eq!(row.x, vec![1.0, 10.0]);
    }

    #[test]
    fn missing_column() {
        let s = schema(false);
        match CsvSource::from_reader("sales,cost\n1,2\n".as_bytes(), &s) {
            Err(IngestError::SchemaMismatch(c)) => assert_eq!(c, "price"),
            Err(e) => panic!("{e}"),
            Ok(_) => panic!("accepted missing column"),
        }
    }

    #[test]
    fn parse_errors_carry_location() {
        let s = schema(false);
        let mut src = source("sales,price\n1,2\n3,abc\n", &s);
        let err = src.draw(2).unwrap_err();
        let DrawError::Failed(e) = err else { panic!() };
        let e = e.downcast::<IngestError>().unwrap();
        match *e {
            IngestError::Parse { row, column, token } => {
                assert_eq!((row, column.as_str(), token.as_str()), (2, "price", "abc"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn empty_field_is_an_error() {
        let s = schema(false);
        let mut src = source("sales,price\n1,\n", &s);
        assert!(matches!(src.draw(1), Err(DrawError::Failed(_))));
    }

    #[test]
    fn negative_value_under_log_is_row_localized() {
        let s = schema(true);
        let mut src = source("sales,price\n1,2\n-3,4\n", &s);
        let DrawError::Failed(e) = src.draw(2).unwrap_err() else {
            panic!()
        };
        assert!(matches!(
            *e.downcast::<IngestError>().unwrap(),
            IngestError::InvalidValue { row: 2, .. }
        ));
    }

    #[test]
    fn schema_validation() {
        let dup = DataSchema::new(
            ColumnSpec::identity("y"),
            vec![ColumnSpec::identity("y")],
            vec![],
            true,
        );
        assert!(dup.is_err());
        let none = DataSchema::new(ColumnSpec::identity("y"), vec![], vec![], false);
        assert!(none.is_err());
        let ok = DataSchema::new(
            ColumnSpec::shifted_log("y"),
            (1..=12)
                .map(|i| ColumnSpec::shifted_log(format!("x{i}")))
                .collect(),
            vec!["d".into()],
            true,
        )
        .unwrap();
        assert_eq!(ok.p(), 14);
        assert_eq!(ok.parameter_names().last().unwrap(), "d");
    }

    #[test]
    fn dummies_pass_through() {
        let s = DataSchema::new(
            ColumnSpec::shifted_log("y"),
            vec![ColumnSpec::shifted_log("x")],
            vec!["d".into()],
            true,
        )
        .unwrap();
        let mut src = source("d,x,y\n1,0,0\n", &s);
        assert_eq!(src.draw(1).unwrap()[0].x, vec![1.0, 0.0, 1.0]);
    }

    fn tagged(tag: f64, n: usize) -> VecSource {
        VecSource::new(
            (1..=n)
                .map(|i| Observation {
                    y: tag + i as f64,
                    x: vec![1.0],
                })
                .collect(),
        )
    }

    #[test]
    fn round_robin_order() {
        let mut src = interleave_sources(vec![tagged(10.0, 2), tagged(20.0, 2)]).unwrap();
        let ys: Vec<f64> = src.draw(4).unwrap().iter().map(|o| o.y).collect();
        assert_eq!(ys, vec![11.0, 21.0, 12.0, 22.0]);

        let mut src = interleave_sources(vec![tagged(10.0, 2), tagged(20.0, 2)]).unwrap();
        let ys: Vec<f64> = src.draw(3).unwrap().iter().map(|o| o.y).collect();
        assert_eq!(ys, vec![11.0, 21.0, 12.0]);
        assert_eq!(src.draw(1).unwrap()[0].y, 22.0);
        assert_eq!(src.draw(1).unwrap_err().available(), Some(0));
    }

    #[test]
    fn single_source_interleave_is_identity() {
        let mut src = interleave_sources(vec![tagged(0.0, 3)]).unwrap();
        let ys: Vec<f64> = src.draw(3).unwrap().iter().map(|o| o.y).collect();
        assert_eq!(ys, vec![1.0, 2.0, 3.0]);
        assert!(interleave_sources::<VecSource>(vec![]).is_err());
    }

    #[test]
    fn interleave_exhausts_mid_cycle() {
        let mut src = interleave_sources(vec![tagged(10.0, 2), tagged(20.0, 1)]).unwrap();
        let err = src.draw(4).unwrap_err();
        assert_eq!(err.available(), Some(3));
    }
}
