//! Feature matrix CSV: `bug_id,line,label,<feature names...>`, one row per
//! focal line, values written with 9 significant digits.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::window::FeatureSchema;

const META: [&str; 3] = ["bug_id", "line", "label"];

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub bug_id: String,
    pub line: u32,
    pub label: u8,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub rows: Vec<MatrixRow>,
}

impl FeatureMatrix {
    pub fn bug_ids(&self) -> Vec<String> {
        let ids: std::collections::BTreeSet<&str> = self.rows.iter().map(|r| r.bug_id.as_str()).collect();
        ids.into_iter().map(String::from).collect()
    }

    pub fn schema(&self, pad_value: f64) -> Result<FeatureSchema> {
        FeatureSchema::from_feature_names(&self.feature_names, pad_value)
    }
}

/// Rounds to 9 significant digits and prints the shortest decimal that
/// parses back to the rounded value.
pub fn format_value(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

pub fn round_value(v: f64) -> f64 {
    format_value(v).parse().expect("formatted float parses")
}

pub fn write_matrix<W: Write>(out: W, matrix: &FeatureMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::parse("matrix output", e);
    let header: Vec<&str> = META
        .iter()
        .copied()
        .chain(matrix.feature_names.iter().map(String::as_str))
        .collect();
    w.write_record(&header).map_err(csv_err)?;
    for (i, row) in matrix.rows.iter().enumerate() {
        if row.values.len() != matrix.feature_names.len() {
            return Err(Error::Schema(format!(
                "row {i} has {} values for {} columns",
                row.values.len(),
                matrix.feature_names.len()
            )));
        }
        if let Some(col) = row.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value in row {i} (bug {}, line {}) column {}",
                row.bug_id, row.line, matrix.feature_names[col]
            )));
        }
        let mut record = Vec::with_capacity(header.len());
        record.push(row.bug_id.clone());
        record.push(row.line.to_string());
        record.push(row.label.to_string());
        record.extend(row.values.iter().map(|&v| format_value(v)));
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("matrix output", e))?;
    Ok(())
}

/// Reads a matrix. With `expected`, the feature columns must match exactly;
/// without it they must still form a valid window schema.
pub fn read_matrix<R: Read>(input: R, expected: Option<&[String]>) -> Result<FeatureMatrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r
        .headers()
        .map_err(|e| Error::parse("matrix header", e))?
        .clone();
    if header.len() < META.len() || header.iter().take(3).ne(META.iter().copied()) {
        return Err(Error::Schema(format!(
            "matrix header must start with {}",
            META.join(",")
        )));
    }
    let feature_names: Vec<String> = header.iter().skip(3).map(String::from).collect();
    match expected {
        Some(names) if names != feature_names.as_slice() => {
            return Err(Error::Schema(
                "matrix columns do not match the expected feature schema".into(),
            ))
        }
        Some(_) => {}
        None => {
            FeatureSchema::from_feature_names(&feature_names, -1.0)?;
        }
    }

    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let loc = format!("matrix row {}", i + 1);
        let record = record.map_err(|e| Error::parse(loc.clone(), e))?;
        let field = |k: usize| record.get(k).unwrap_or_default();
        let line: u32 = field(1)
            .parse()
            .map_err(|e| Error::parse(loc.clone(), format!("line: {e}")))?;
        let label: u8 = match field(2) {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::parse(loc, format!("label must be 0 or 1, got {other:?}"))),
        };
        let values = (3..record.len())
            .map(|k| {
                field(k).parse::<f64>().map_err(|e| {
                    Error::parse(loc.clone(), format!("column {}: {e}", header.get(k).unwrap_or("?")))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(MatrixRow {
            bug_id: field(0).to_string(),
            line,
            label,
            values,
        });
    }
    Ok(FeatureMatrix {
        feature_names,
        rows,
    })
}

pub fn write_matrix_file(path: &Path, matrix: &FeatureMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_matrix(BufWriter::new(file), matrix)
}

pub fn read_matrix_file(path: &Path, expected: Option<&[String]>) -> Result<FeatureMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix(BufReader::new(file), expected)
}
