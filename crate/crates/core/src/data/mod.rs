//! Datasets, protected attributes and their algebra.

mod csv_io;
mod scale;
mod synth;

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use csv_io::{load_csv, write_csv, FeatureSelection, Manifest, RestKeyword};
pub use scale::{minmax_fit_transform, MinMaxScaler};
pub use synth::{synthesize, NoiseFamily, SynthAttribute, SynthSpec};

use crate::error::{Error, Result};

/// Separator used when naming crossed attributes and their categories.
pub const CROSS_SEPARATOR: &str = "&";

/// A categorical protected variable over `n` samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtectedAttr {
    name: String,
    codes: Vec<usize>,
    categories: Vec<String>,
    counts: Vec<usize>,
}

impl ProtectedAttr {
    /// Builds an attribute from explicit category labels and per-sample codes.
    pub fn new(name: impl Into<String>, categories: Vec<String>, codes: Vec<usize>) -> Result<Self> {
        let name = name.into();
        if categories.is_empty() {
            return Err(Error::InvalidArgument(format!("attribute `{name}` has no categories")));
        }
        let unique: BTreeSet<&String> = categories.iter().collect();
        if unique.len() != categories.len() {
            return Err(Error::InvalidArgument(format!(
                "attribute `{name}` has duplicate category labels"
            )));
        }
        let mut counts = vec![0; categories.len()];
        for &code in &codes {
            let slot = counts.get_mut(code).ok_or_else(|| {
                Error::InvalidArgument(format!("attribute `{name}`: code {code} out of range"))
            })?;
            *slot += 1;
        }
        Ok(ProtectedAttr {
            name,
            codes,
            categories,
            counts,
        })
    }

    /// Builds an attribute from per-sample labels; categories are sorted.
    pub fn from_labels<S: AsRef<str>>(name: impl Into<String>, labels: &[S]) -> Result<Self> {
        let categories: Vec<String> = labels
            .iter()
            .map(|s| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let codes = labels
            .iter()
            .map(|s| categories.binary_search_by(|c| c.as_str().cmp(s.as_ref())).unwrap())
            .collect();
        Self::new(name, categories, codes)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn label_of(&self, i: usize) -> &str {
        &self.categories[self.codes[i]]
    }

    pub fn code_of(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }

    /// Categories that occur at least once, as `(code, label)`.
    pub fn present(&self) -> impl Iterator<Item = (usize, &str)> {
        self.categories
            .iter()
            .enumerate()
            .filter(|(code, _)| self.counts[*code] > 0)
            .map(|(code, label)| (code, label.as_str()))
    }

    /// 0/1 membership indicator for one category.
    pub fn indicator(&self, code: usize) -> Vec<f64> {
        self.codes.iter().map(|&c| if c == code { 1.0 } else { 0.0 }).collect()
    }

    /// Restricts to the given rows and drops categories that no longer occur.
    pub fn select(&self, rows: &[usize]) -> ProtectedAttr {
        let labels: Vec<&str> = rows.iter().map(|&i| self.label_of(i)).collect();
        let keep: Vec<String> = self
            .categories
            .iter()
            .filter(|c| labels.iter().any(|l| l == c))
            .cloned()
            .collect();
        let codes = labels
            .iter()
            .map(|l| keep.iter().position(|c| c == l).unwrap())
            .collect();
        ProtectedAttr::new(self.name.clone(), keep, codes).expect("subset of a valid attribute")
    }

    /// Renames the attribute, keeping everything else.
    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Crossed attribute whose categories are the ordered Cartesian product of
/// `a`'s and `b`'s categories (`a`-major). Empty combinations are kept.
pub fn cross_protected(a: &ProtectedAttr, b: &ProtectedAttr) -> Result<ProtectedAttr> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cannot cross `{}` ({} samples) with `{}` ({} samples)",
            a.name,
            a.len(),
            b.name,
            b.len()
        )));
    }
    let kb = b.n_categories();
    let categories = a
        .categories
        .iter()
        .flat_map(|ca| {
            b.categories
                .iter()
                .map(move |cb| format!("{ca}{CROSS_SEPARATOR}{cb}"))
        })
        .collect();
    let codes = a
        .codes
        .iter()
        .zip(&b.codes)
        .map(|(&ca, &cb)| ca * kb + cb)
        .collect();
    ProtectedAttr::new(
        format!("{}{CROSS_SEPARATOR}{}", a.name, b.name),
        categories,
        codes,
    )
}

/// Features, multi-column labels and protected attributes for `n` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: DMatrix<f64>,
    feature_names: Vec<String>,
    label_names: Vec<String>,
    protected: Vec<ProtectedAttr>,
    sample_ids: Vec<String>,
    group_ids: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        labels: DMatrix<f64>,
        feature_names: Vec<String>,
        label_names: Vec<String>,
        protected: Vec<ProtectedAttr>,
        sample_ids: Vec<String>,
        group_ids: Vec<String>,
    ) -> Result<Self> {
        let n = sample_ids.len();
        let shape_err = |what: &str, got: usize| {
            Err(Error::Shape(format!("{what} has {got} rows, expected {n}")))
        };
        if features.nrows() != n {
            return shape_err("feature matrix", features.nrows());
        }
        if labels.nrows() != n {
            return shape_err("label matrix", labels.nrows());
        }
        if group_ids.len() != n {
            return shape_err("group id column", group_ids.len());
        }
        if feature_names.len() != features.ncols() || label_names.len() != labels.ncols() {
            return Err(Error::Shape("column names do not match matrix widths".into()));
        }
        for attr in &protected {
            if attr.len() != n {
                return shape_err(&format!("attribute `{}`", attr.name), attr.len());
            }
            if n > 0 && attr.present().next().is_none() {
                return Err(Error::InvalidArgument(format!(
                    "attribute `{}` has no observed category",
                    attr.name
                )));
            }
        }
        if features.iter().chain(labels.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature or label value".into()));
        }
        Ok(Dataset {
            features,
            labels,
            feature_names,
            label_names,
            protected,
            sample_ids,
            group_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DMatrix<f64> {
        &self.labels
    }

    pub fn label_column(&self, j: usize) -> Vec<f64> {
        self.labels.column(j).iter().copied().collect()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn protected(&self) -> &[ProtectedAttr] {
        &self.protected
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn group_ids(&self) -> &[String] {
        &self.group_ids
    }

    pub fn attr(&self, name: &str) -> Result<&ProtectedAttr> {
        self.protected
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown protected attribute `{name}`")))
    }

    /// One attribute by name, or the cross of several (left to right).
    pub fn protected_selection<S: AsRef<str>>(&self, names: &[S]) -> Result<ProtectedAttr> {
        let (first, rest) = names
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("empty protected selection".into()))?;
        let mut attr = self.attr(first.as_ref())?.clone();
        for name in rest {
            attr = cross_protected(&attr, self.attr(name.as_ref())?)?;
        }
        Ok(attr)
    }

    /// Rows `rows` in the given order. Attributes drop categories that vanish.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(rows),
            labels: self.labels.select_rows(rows),
            feature_names: self.feature_names.clone(),
            label_names: self.label_names.clone(),
            protected: self.protected.iter().map(|a| a.select(rows)).collect(),
            sample_ids: rows.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            group_ids: rows.iter().map(|&i| self.group_ids[i].clone()).collect(),
        }
    }

    /// Same samples with a different feature matrix.
    pub fn with_features(&self, features: DMatrix<f64>, names: Vec<String>) -> Result<Dataset> {
        Dataset::new(
            features,
            self.labels.clone(),
            names,
            self.label_names.clone(),
            self.protected.clone(),
            self.sample_ids.clone(),
            self.group_ids.clone(),
        )
    }
}
