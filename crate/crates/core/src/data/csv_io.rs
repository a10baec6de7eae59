//! CSV ingestion and canonical emission.
//!
//! One CSV file holds all columns; a JSON manifest assigns roles:
//!
//! ```json
//! {"id": "id", "group_id": "speaker", "protected": ["gender"],
//!  "labels": ["y"], "features": "rest"}
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Dataset, ProtectedAttr};
use crate::error::{Error, Result};
use crate::fmt_f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RestKeyword {
    #[serde(rename = "rest")]
    Rest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureSelection {
    Columns(Vec<String>),
    /// Every column not claimed by another role, in header order.
    Rest(RestKeyword),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub id: String,
    /// Defaults to the id column (every sample its own group).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
    #[serde(default)]
    pub protected: Vec<String>,
    pub labels: Vec<String>,
    pub features: FeatureSelection,
    /// Optional closed category lists per protected column.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub categories: BTreeMap<String, Vec<String>>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(file)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn column_index(headers: &[String], column: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::MissingColumn {
            column: column.to_string(),
        })
}

fn parse_number(raw: &str, row: usize, column: &str) -> Result<f64> {
    let cell_err = |message: String| Error::Cell {
        row,
        column: column.to_string(),
        message,
    };
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(cell_err("empty cell".into()));
    }
    let value: f64 = raw
        .parse()
        .map_err(|_| cell_err(format!("`{raw}` is not a number")))?;
    if !value.is_finite() {
        return Err(cell_err(format!("`{raw}` is not finite")));
    }
    Ok(value)
}

/// Reads a dataset. Row numbers in errors are file line numbers (header = 1).
pub fn load_csv(path: impl AsRef<Path>, manifest: &Manifest) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let id_col = column_index(&headers, &manifest.id)?;
    let group_col = match &manifest.group_id {
        Some(col) => column_index(&headers, col)?,
        None => id_col,
    };
    let protected_cols = manifest
        .protected
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let label_cols = manifest
        .labels
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let feature_cols: Vec<usize> = match &manifest.features {
        FeatureSelection::Columns(cols) => cols
            .iter()
            .map(|c| column_index(&headers, c))
            .collect::<Result<_>>()?,
        FeatureSelection::Rest(_) => {
            let mut claimed = vec![id_col, group_col];
            claimed.extend(&protected_cols);
            claimed.extend(&label_cols);
            (0..headers.len()).filter(|i| !claimed.contains(i)).collect()
        }
    };
    for name in manifest.categories.keys() {
        if !manifest.protected.contains(name) {
            return Err(Error::InvalidArgument(format!(
                "category list given for `{name}`, which is not a protected column"
            )));
        }
    }

    let mut ids = Vec::new();
    let mut groups = Vec::new();
    let mut protected_raw: Vec<Vec<String>> = vec![Vec::new(); protected_cols.len()];
    let mut label_vals = Vec::new();
    let mut feature_vals = Vec::new();

    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let cell = |col: usize| -> Result<&str> {
            record.get(col).ok_or_else(|| Error::Cell {
                row,
                column: headers[col].clone(),
                message: "missing cell".into(),
            })
        };
        ids.push(cell(id_col)?.to_string());
        groups.push(cell(group_col)?.to_string());
        for (slot, (&col, name)) in protected_cols.iter().zip(&manifest.protected).enumerate() {
            let value = cell(col)?;
            if value.is_empty() {
                return Err(Error::Cell {
                    row,
                    column: name.clone(),
                    message: "empty cell".into(),
                });
            }
            if let Some(closed) = manifest.categories.get(name) {
                if !closed.iter().any(|c| c == value) {
                    return Err(Error::Cell {
                        row,
                        column: name.clone(),
                        message: format!("unknown category `{value}`"),
                    });
                }
            }
            protected_raw[slot].push(value.to_string());
        }
        for &col in &label_cols {
            label_vals.push(parse_number(cell(col)?, row, &headers[col])?);
        }
        for &col in &feature_cols {
            feature_vals.push(parse_number(cell(col)?, row, &headers[col])?);
        }
    }

    let n = ids.len();
    let protected = manifest
        .protected
        .iter()
        .zip(protected_raw)
        .map(|(name, labels)| match manifest.categories.get(name) {
            Some(closed) => {
                let codes = labels
                    .iter()
                    .map(|l| closed.iter().position(|c| c == l).unwrap())
                    .collect();
                ProtectedAttr::new(name.clone(), closed.clone(), codes)
            }
            None => ProtectedAttr::from_labels(name.clone(), &labels),
        })
        .collect::<Result<Vec<_>>>()?;

    Dataset::new(
        DMatrix::from_row_slice(n, feature_cols.len(), &feature_vals),
        DMatrix::from_row_slice(n, label_cols.len(), &label_vals),
        feature_cols.iter().map(|&c| headers[c].clone()).collect(),
        manifest.labels.clone(),
        protected,
        ids,
        groups,
    )
}

/// Writes the canonical CSV form and returns the matching manifest.
///
/// Column order is id, group_id, protected, labels, features; numbers carry
/// 17 significant digits so a reload is bit-exact.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);

    let mut header = vec!["id".to_string(), "group_id".to_string()];
    header.extend(dataset.protected().iter().map(|a| a.name().to_string()));
    header.extend(dataset.label_names().iter().cloned());
    header.extend(dataset.feature_names().iter().cloned());
    writer.write_record(&header)?;

    for i in 0..dataset.n() {
        let mut row = vec![dataset.sample_ids()[i].clone(), dataset.group_ids()[i].clone()];
        row.extend(dataset.protected().iter().map(|a| a.label_of(i).to_string()));
        row.extend(dataset.labels().row(i).iter().map(|&v| fmt_f64(v)));
        row.extend(dataset.features().row(i).iter().map(|&v| fmt_f64(v)));
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;

    Ok(Manifest {
        id: "id".into(),
        group_id: Some("group_id".into()),
        protected: dataset.protected().iter().map(|a| a.name().to_string()).collect(),
        labels: dataset.label_names().to_vec(),
        features: FeatureSelection::Columns(dataset.feature_names().to_vec()),
        categories: dataset
            .protected()
            .iter()
            .map(|a| (a.name().to_string(), a.categories().to_vec()))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> Manifest {
        serde_json::from_str(
            r#"{"id": "id", "protected": ["gender"], "labels": ["y"], "features": "rest"}"#,
        )
        .unwrap()
    }

    fn write(dir: &tempfile::TempDir, text: &str) -> std::path::PathBuf {
        let path = dir.path().join("data.csv");
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn parses_four_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "id,gender,y,f0,f1\na,M,0.5,1,2\nb,F,0.25,3,4\nc,F,0.75,5,6\nd,M,1,7,8\n",
        );
        let ds = load_csv(&path, &manifest()).unwrap();
        assert_eq!((ds.n(), ds.d()), (4, 2));
        assert_eq!(ds.attr("gender").unwrap().n_categories(), 2);
        assert_eq!(ds.features()[(2, 1)], 6.0);
        assert_eq!(ds.label_column(0), [0.5, 0.25, 0.75, 1.0]);
        assert_eq!(ds.group_ids(), ds.sample_ids());
    }

    #[test]
    fn empty_label_cell_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "id,gender,y,f0\na,M,0.5,1\nb,F,,3\n");
        match load_csv(&path, &manifest()) {
            Err(Error::Cell { row, column, .. }) => assert_eq!((row, column.as_str()), (3, "y")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "id,gender,y,f0\na,M,0.5,abc\n");
        assert!(matches!(
            load_csv(&path, &manifest()),
            Err(Error::Cell { ref column, .. }) if column == "f0"
        ));
        let path = write(&dir, "id,sex,y,f0\na,M,0.5,1\n");
        assert!(matches!(
            load_csv(&path, &manifest()),
            Err(Error::MissingColumn { ref column }) if column == "gender"
        ));
    }

    #[test]
    fn closed_category_list_rejects_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "id,gender,y,f0\na,M,0.5,1\nb,X,0.5,1\n");
        let mut m = manifest();
        m.categories.insert("gender".into(), vec!["M".into(), "F".into()]);
        match load_csv(&path, &m) {
            Err(Error::Cell { row, column, .. }) => assert_eq!((row, column.as_str()), (3, "gender")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn emitted_dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let src = write(
            &dir,
            "id,gender,y,f0,f1\na,M,0.1,0.3,2e-7\nb,F,0.7,-1.25,3.3333333333333335\n",
        );
        let ds = load_csv(&src, &manifest()).unwrap();
        let out = dir.path().join("out.csv");
        let m = write_csv(&ds, &out).unwrap();
        let back = load_csv(&out, &m).unwrap();
        assert_eq!(back, ds);

        let again = dir.path().join("again.csv");
        write_csv(&back, &again).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
    }
}
