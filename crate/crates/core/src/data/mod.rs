//! Tabular datasets: CSV ingestion, schema, zero-imputation,
//! standardization, stratified folds and a synthetic generator.

mod folds;
mod schema;
mod standardize;
mod synth;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use folds::{stratified_holdout, stratified_k_fold, FoldAssignment};
pub use schema::{ColumnKind, ColumnSchema, ColumnStats, FeatureSchema};
pub use standardize::{fit_standardizer, Standardizer, STD_FLOOR};
pub use synth::{generate_synthetic, generate_table, GenColumn, GenColumnKind, GeneratorSpec, Interaction};

use crate::error::{Error, Result};

/// Suffix of the optional missingness-indicator columns.
pub const MISSING_SUFFIX: &str = "__missing";

/// Header plus string cells, as read from (or written to) CSV. Empty
/// string means missing.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(Error::Data(format!("{}: missing header row", path.display())));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            if rec.len() != header.len() {
                return Err(Error::Data(format!(
                    "{}: row {} has {} cells, expected {}",
                    path.display(),
                    i + 1,
                    rec.len(),
                    header.len()
                )));
            }
            rows.push(rec.iter().map(|c| c.trim().to_string()).collect());
        }
        Ok(RawTable { header, rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        writer.write_record(&self.header).map_err(|e| csv_error(path, e))?;
        for row in &self.rows {
            writer.write_record(row).map_err(|e| csv_error(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindHint {
    Numeric,
    Categorical,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Per-column kind overrides; other columns are inferred.
    #[serde(default)]
    pub schema_hints: BTreeMap<String, KindHint>,
    /// Append a 0/1 indicator column for every numeric column with at
    /// least one missing cell.
    #[serde(default)]
    pub missing_indicators: bool,
}

/// Feature matrix, binary labels and schema.
///
/// Numeric cells hold raw values (missing imputed as 0.0) until passed
/// through a [`Standardizer`]; categorical cells hold vocabulary indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<u8>,
    schema: FeatureSchema,
    row_ids: Vec<usize>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<u8>, schema: FeatureSchema) -> Result<Self> {
        let row_ids = (0..labels.len()).collect();
        Dataset::with_row_ids(features, labels, schema, row_ids)
    }

    pub fn with_row_ids(features: Vec<f64>, labels: Vec<u8>, schema: FeatureSchema, row_ids: Vec<usize>) -> Result<Self> {
        let d = schema.len();
        if features.len() != labels.len() * d || row_ids.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} feature values, {} labels, {} row ids for {d} columns",
                features.len(),
                labels.len(),
                row_ids.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::Data(format!("label {bad} is not binary")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        for (j, col) in schema.columns().iter().enumerate() {
            if let Some(card) = col.cardinality() {
                for i in 0..labels.len() {
                    let v = features[i * d + j];
                    if v < 0.0 || v.fract() != 0.0 || v as usize >= card {
                        return Err(Error::Data(format!(
                            "row {i}: category index {v} invalid for column {:?}",
                            col.name
                        )));
                    }
                }
            }
        }
        Ok(Dataset {
            features,
            labels,
            schema,
            row_ids,
        })
    }

    /// Builds a dataset from string cells. Empty numeric cells become 0.0;
    /// empty categorical cells map to the unknown slot.
    pub fn from_raw(table: &RawTable, target: &str, opts: &LoadOptions) -> Result<Self> {
        let target_idx = table
            .header
            .iter()
            .position(|h| h == target)
            .ok_or_else(|| Error::Data(format!("target column {target:?} not found")))?;
        for name in opts.schema_hints.keys() {
            if !table.header.contains(name) {
                return Err(Error::Config(format!("schema hint for unknown column {name:?}")));
            }
        }

        let mut labels = Vec::with_capacity(table.rows.len());
        for (i, row) in table.rows.iter().enumerate() {
            if row.len() != table.header.len() {
                return Err(Error::Data(format!(
                    "row {} has {} cells, expected {}",
                    i + 1,
                    row.len(),
                    table.header.len()
                )));
            }
            labels.push(parse_label(&row[target_idx]).ok_or_else(|| {
                Error::Data(format!("row {}: unparseable label {:?}", i + 1, row[target_idx]))
            })?);
        }

        let feature_cols: Vec<usize> = (0..table.header.len()).filter(|&c| c != target_idx).collect();
        let mut columns = Vec::new();
        let mut encoded: Vec<Vec<f64>> = Vec::new();
        let mut indicators: Vec<(ColumnSchema, Vec<f64>)> = Vec::new();
        for &c in &feature_cols {
            let name = &table.header[c];
            let cells = table.rows.iter().map(|r| r[c].as_str());
            let numeric = match opts.schema_hints.get(name) {
                Some(KindHint::Numeric) => true,
                Some(KindHint::Categorical) => false,
                None => cells.clone().all(|s| s.is_empty() || parse_number(s).is_some()),
            };
            if numeric {
                let mut values = Vec::with_capacity(table.rows.len());
                let mut missing = Vec::with_capacity(table.rows.len());
                for (i, s) in cells.enumerate() {
                    if s.is_empty() {
                        values.push(0.0);
                        missing.push(1.0);
                    } else {
                        values.push(parse_number(s).ok_or_else(|| {
                            Error::Data(format!("row {}: column {name:?} value {s:?} is not numeric", i + 1))
                        })?);
                        missing.push(0.0);
                    }
                }
                if opts.missing_indicators && missing.contains(&1.0) {
                    indicators.push((ColumnSchema::numeric(format!("{name}{MISSING_SUFFIX}")), missing));
                }
                columns.push(ColumnSchema::numeric(name.clone()));
                encoded.push(values);
            } else {
                let mut vocabulary: Vec<String> = Vec::new();
                for s in cells.clone() {
                    if !s.is_empty() && !vocabulary.iter().any(|v| v == s) {
                        vocabulary.push(s.to_string());
                    }
                }
                let values = cells
                    .map(|s| {
                        if s.is_empty() {
                            vocabulary.len() as f64
                        } else {
                            vocabulary.iter().position(|v| v == s).unwrap() as f64
                        }
                    })
                    .collect();
                columns.push(ColumnSchema::categorical(name.clone(), vocabulary));
                encoded.push(values);
            }
        }
        for (col, values) in indicators {
            columns.push(col);
            encoded.push(values);
        }

        let schema = FeatureSchema::new(columns)?;
        let n = labels.len();
        let d = schema.len();
        let mut features = vec![0.0; n * d];
        for (j, col) in encoded.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                features[i * d + j] = v;
            }
        }
        Dataset::new(features, labels, schema)
    }

    /// Encodes a table against an existing schema (e.g. a checkpoint's).
    /// Unseen categories map to the unknown slot.
    pub fn from_raw_with_schema(table: &RawTable, target: &str, schema: &FeatureSchema) -> Result<Self> {
        let target_idx = table
            .header
            .iter()
            .position(|h| h == target)
            .ok_or_else(|| Error::Data(format!("target column {target:?} not found")))?;
        let mut sources = Vec::with_capacity(schema.len());
        for col in schema.columns() {
            let (base, indicator) = match col.name.strip_suffix(MISSING_SUFFIX) {
                Some(base) if !table.header.iter().any(|h| h == &col.name) => (base, true),
                _ => (col.name.as_str(), false),
            };
            let idx = table
                .header
                .iter()
                .position(|h| h == base)
                .ok_or_else(|| Error::Data(format!("column {:?} missing from input", col.name)))?;
            sources.push((idx, indicator));
        }
        let d = schema.len();
        let mut features = Vec::with_capacity(table.rows.len() * d);
        let mut labels = Vec::with_capacity(table.rows.len());
        for (i, row) in table.rows.iter().enumerate() {
            if row.len() != table.header.len() {
                return Err(Error::Data(format!("row {} has {} cells, expected {}", i + 1, row.len(), table.header.len())));
            }
            labels.push(parse_label(&row[target_idx]).ok_or_else(|| {
                Error::Data(format!("row {}: unparseable label {:?}", i + 1, row[target_idx]))
            })?);
            for (j, &(src, indicator)) in sources.iter().enumerate() {
                let s = row[src].as_str();
                let v = if indicator {
                    if s.is_empty() { 1.0 } else { 0.0 }
                } else if schema.columns()[j].is_numeric() {
                    if s.is_empty() {
                        0.0
                    } else {
                        parse_number(s).ok_or_else(|| {
                            Error::Data(format!("row {}: column {:?} value {s:?} is not numeric", i + 1, schema.columns()[j].name))
                        })?
                    }
                } else if s.is_empty() {
                    (schema.columns()[j].cardinality().unwrap() - 1) as f64
                } else {
                    schema.category_index(j, s).unwrap() as f64
                };
                features.push(v);
            }
        }
        let mut schema = schema.clone();
        for c in schema.columns_mut() {
            c.stats = None;
        }
        Dataset::new(features, labels, schema)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.features[i * self.n_features() + j]).collect()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn prevalence(&self) -> f64 {
        self.positives() as f64 / self.n_rows() as f64
    }

    /// Rows in the given order; row ids are carried over.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let d = self.n_features();
        let mut features = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        Dataset {
            features,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            schema: self.schema.clone(),
            row_ids: rows.iter().map(|&r| self.row_ids[r]).collect(),
        }
    }

    /// Copy with column `j` replaced.
    pub fn with_column(&self, j: usize, values: &[f64]) -> Dataset {
        let d = self.n_features();
        let mut out = self.clone();
        for (i, &v) in values.iter().enumerate() {
            out.features[i * d + j] = v;
        }
        out
    }

    pub(crate) fn into_parts(self) -> (Vec<f64>, Vec<u8>, FeatureSchema, Vec<usize>) {
        (self.features, self.labels, self.schema, self.row_ids)
    }
}

/// Reads a CSV and builds a [`Dataset`] around `target`.
pub fn load_csv(path: &Path, target: &str, opts: &LoadOptions) -> Result<Dataset> {
    let table = RawTable::read_csv(path)?;
    Dataset::from_raw(&table, target, opts)
}

fn parse_number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_label(s: &str) -> Option<u8> {
    match parse_number(s)? {
        0.0 => Some(0),
        1.0 => Some(1),
        _ => None,
    }
}
