use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// One segment's features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub feature_names: Vec<String>,
    pub label: Option<String>,
}

/// Labelled feature matrix. Class indices refer to `class_names`, which is
/// sorted so that the same set of labels always maps to the same indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let dim = feature_names.len();
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::invalid(format!(
                "row {i} has {} values, expected {dim}",
                row.len()
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature values must be finite"));
        }
        let class_names: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let labels = labels
            .iter()
            .map(|l| class_names.binary_search(l).expect("label collected above"))
            .collect();
        Ok(Self {
            feature_names,
            rows,
            labels,
            class_names,
        })
    }

    /// Builds a dataset from labelled vectors sharing one feature layout.
    pub fn from_vectors(vectors: Vec<FeatureVector>) -> Result<Self> {
        let names = vectors.first().map(|v| v.feature_names.clone()).unwrap_or_default();
        let mut rows = Vec::with_capacity(vectors.len());
        let mut labels = Vec::with_capacity(vectors.len());
        for (i, v) in vectors.into_iter().enumerate() {
            if v.feature_names != names {
                return Err(Error::invalid(format!("row {i} has a different feature layout")));
            }
            labels.push(v.label.ok_or_else(|| Error::invalid(format!("row {i} has no label")))?);
            rows.push(v.values);
        }
        Self::new(names, rows, labels)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn row(&self, i: usize) -> FeatureVector {
        FeatureVector {
            values: self.rows[i].clone(),
            feature_names: self.feature_names.clone(),
            label: Some(self.class_names[self.labels[i]].clone()),
        }
    }

    /// Errors unless there are at least two classes to tell apart.
    pub fn require_trainable(&self) -> Result<()> {
        if self.n_classes() < 2 {
            return Err(Error::DegenerateData(format!(
                "need at least 2 classes, found {}",
                self.n_classes()
            )));
        }
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes `<feature names...>,label` then one row per vector.
pub fn write_feature_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = dataset.feature_names.join(",");
    if !header.is_empty() {
        header.push(',');
    }
    header.push_str("label");
    writeln!(out, "{header}")?;
    for (row, &label) in dataset.rows.iter().zip(&dataset.labels) {
        let mut line = String::new();
        for v in row {
            line.push_str(&format_float(*v));
            line.push(',');
        }
        line.push_str(&dataset.class_names[label]);
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_col = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| Error::format("feature CSV", "missing `label` column"))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_col)
        .map(|(_, h)| h.to_string())
        .collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(names.len());
        for (i, field) in record.iter().enumerate() {
            if i == label_col {
                labels.push(field.to_string());
            } else {
                row.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::format("feature CSV", format!("row {}: `{field}`: {e}", line + 1)))?,
                );
            }
        }
        rows.push(row);
    }
    Dataset::new(names, rows, labels)
}
