use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::FeatureCatalog;
use crate::{Error, Result};

/// Raw occurrence counts of one program, in catalog order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub program_id: String,
    pub counts: Vec<u64>,
}

/// Raw per-program counts plus, after [`FeatureMatrix::normalize`], the
/// min-max normalized values of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub catalog_version: String,
    pub feature_names: Vec<String>,
    pub rows: Vec<FeatureVector>,
    pub normalized: Option<Vec<Vec<f64>>>,
}

impl FeatureMatrix {
    pub fn new(catalog: &FeatureCatalog, rows: Vec<FeatureVector>) -> Result<Self> {
        let matrix = FeatureMatrix {
            catalog_version: catalog.version().to_string(),
            feature_names: catalog.names().map(String::from).collect(),
            rows,
            normalized: None,
        };
        for row in &matrix.rows {
            matrix.check_row(row)?;
        }
        Ok(matrix)
    }

    fn check_row(&self, row: &FeatureVector) -> Result<()> {
        if row.counts.len() != self.feature_names.len() {
            return Err(Error::Validation(format!(
                "program `{}` has {} counts, catalog has {} features",
                row.program_id,
                row.counts.len(),
                self.feature_names.len()
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    /// Min-max normalizes every column into [0, 1]:
    ///
    /// `z = (x - min) / (max - min)`
    ///
    /// A constant column has no spread; every entry becomes 0.5, the neutral
    /// inclusion probability. Raw counts are kept.
    pub fn normalize(&self) -> Result<FeatureMatrix> {
        if self.rows.is_empty() {
            return Err(Error::Validation("cannot normalize an empty matrix".into()));
        }
        let raw: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|r| r.counts.iter().map(|&c| c as f64).collect())
            .collect();
        Ok(FeatureMatrix {
            normalized: Some(normalize_columns(&raw)),
            ..self.clone()
        })
    }

    pub fn normalized(&self) -> Option<&[Vec<f64>]> {
        self.normalized.as_deref()
    }

    /// Writes `program_id,<feature...>` then one row per program.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header = std::iter::once("program_id").chain(self.feature_names.iter().map(String::as_str));
        w.write_record(header).map_err(|e| Error::format("feature CSV", e))?;
        for row in &self.rows {
            let fields = std::iter::once(row.program_id.clone())
                .chain(row.counts.iter().map(u64::to_string));
            w.write_record(fields).map_err(|e| Error::format("feature CSV", e))?;
        }
        w.flush().map_err(|e| Error::format("feature CSV", e))?;
        Ok(())
    }

    /// Reads vectors written by [`write_csv`](Self::write_csv) or computed
    /// externally. Columns must match the catalog names in order.
    pub fn read_csv<R: Read>(input: R, catalog: &FeatureCatalog) -> Result<FeatureMatrix> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = r
            .headers()
            .map_err(|e| Error::format("feature CSV", e))?
            .clone();
        if header.get(0) != Some("program_id") {
            return Err(Error::Validation(format!(
                "first column must be `program_id`, found `{}`",
                header.get(0).unwrap_or("")
            )));
        }
        let expected: Vec<&str> = catalog.names().collect();
        let found: Vec<&str> = header.iter().skip(1).collect();
        for (i, name) in found.iter().enumerate() {
            if expected.get(i) != Some(name) {
                return Err(Error::Validation(format!(
                    "column {} header `{}` does not match catalog feature `{}`",
                    i + 2,
                    name,
                    expected.get(i).copied().unwrap_or("<none>")
                )));
            }
        }
        if found.len() != expected.len() {
            return Err(Error::Validation(format!(
                "header has {} feature columns, catalog `{}` has {}; missing `{}`",
                found.len(),
                catalog.version(),
                expected.len(),
                expected[found.len()]
            )));
        }

        let mut rows = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record.map_err(|e| Error::format("feature CSV", e))?;
            let row_no = line + 2;
            let program_id = record.get(0).unwrap_or("").to_string();
            let mut counts = Vec::with_capacity(expected.len());
            for (j, field) in record.iter().skip(1).enumerate() {
                let value: i128 = field.trim().parse().map_err(|_| {
                    Error::Validation(format!(
                        "row {row_no}, column `{}`: `{field}` is not an integer count",
                        expected[j]
                    ))
                })?;
                if value < 0 {
                    return Err(Error::Validation(format!(
                        "row {row_no}, column `{}`: negative count {value}",
                        expected[j]
                    )));
                }
                let value = u64::try_from(value).map_err(|_| {
                    Error::Validation(format!("row {row_no}: count {value} out of range"))
                })?;
                counts.push(value);
            }
            if counts.len() != expected.len() {
                return Err(Error::Validation(format!(
                    "row {row_no} has {} counts, expected {}",
                    counts.len(),
                    expected.len()
                )));
            }
            rows.push(FeatureVector { program_id, counts });
        }
        FeatureMatrix::new(catalog, rows)
    }
}

/// Column-wise min-max normalization of a dense real matrix.
///
/// Constant columns map to 0.5. Rows holding a column's minimum map to
/// exactly 0 and rows holding its maximum to exactly 1.
pub fn normalize_columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let width = first.len();
    let mut lo = vec![f64::INFINITY; width];
    let mut hi = vec![f64::NEG_INFINITY; width];
    for row in rows {
        for (j, &x) in row.iter().enumerate() {
            lo[j] = lo[j].min(x);
            hi[j] = hi[j].max(x);
        }
    }
    rows.iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, &x)| {
                    if hi[j] == lo[j] {
                        0.5
                    } else {
                        ((x - lo[j]) / (hi[j] - lo[j])).clamp(0.0, 1.0)
                    }
                })
                .collect()
        })
        .collect()
}
