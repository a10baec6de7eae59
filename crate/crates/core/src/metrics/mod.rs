//! Accuracy and fairness metrics.
//!
//! * MAA: `1 - mean |y - p|`.
//! * Equal accuracy: `E_{C=a}|y - p| - E_{C=b}|y - p|`.
//! * PCC: Pearson correlation of predictions with a category indicator,
//!   with a two-sided t-test p-value on `n - 2` degrees of freedom.
//! * Statistical parity: kNN mutual information between predictions and the
//!   protected variable, in nats.

mod mi;
pub mod special;

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use mi::{knn_mutual_information, DEFAULT_NEIGHBORS};
pub use special::{digamma, student_t_two_sided};

use crate::data::ProtectedAttr;
use crate::error::{Error, Result};

fn check_pair(y: &[f64], p: &[f64]) -> Result<()> {
    if y.len() != p.len() {
        return Err(Error::Shape(format!("{} labels vs {} predictions", y.len(), p.len())));
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("empty input".into()));
    }
    Ok(())
}

/// Mean absolute accuracy.
pub fn maa(y: &[f64], p: &[f64]) -> Result<f64> {
    check_pair(y, p)?;
    let mae = y.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64;
    Ok(1.0 - mae)
}

fn group_mae(y: &[f64], p: &[f64], attr: &ProtectedAttr, category: &str) -> Result<f64> {
    let code = attr.code_of(category).ok_or_else(|| Error::UnseenCategory {
        attr: attr.name().to_string(),
        category: category.to_string(),
    })?;
    let (sum, count) = y
        .iter()
        .zip(p)
        .zip(attr.codes())
        .filter(|(_, &c)| c == code)
        .fold((0.0, 0usize), |(s, n), ((a, b), _)| (s + (a - b).abs(), n + 1));
    if count == 0 {
        return Err(Error::SmallCategory {
            attr: attr.name().to_string(),
            category: category.to_string(),
            count: 0,
            required: 1,
        });
    }
    Ok(sum / count as f64)
}

/// MAA restricted to one category.
pub fn group_maa(y: &[f64], p: &[f64], attr: &ProtectedAttr, category: &str) -> Result<f64> {
    check_pair(y, p)?;
    Ok(1.0 - group_mae(y, p, attr, category)?)
}

/// Difference in mean absolute error between categories `a` and `b`.
pub fn equal_accuracy(y: &[f64], p: &[f64], attr: &ProtectedAttr, a: &str, b: &str) -> Result<f64> {
    check_pair(y, p)?;
    if attr.len() != y.len() {
        return Err(Error::Shape("attribute length differs from labels".into()));
    }
    Ok(group_mae(y, p, attr, a)? - group_mae(y, p, attr, b)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pcc {
    pub r: f64,
    pub p_value: f64,
}

/// Two-sided p-value of a Pearson correlation `r` over `n` samples.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    if n <= 2 {
        return f64::NAN;
    }
    let df = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0;
    }
    student_t_two_sided(r * (df / denom).sqrt(), df)
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let denom = (saa * sbb).sqrt();
    (denom > 0.0 && denom.is_finite()).then(|| (sab / denom).clamp(-1.0, 1.0))
}

/// Correlation of predictions with membership in `category`.
///
/// Undefined (an error) when the predictions are constant, the category is
/// empty or covers every sample, or there are fewer than three samples.
pub fn pcc_indicator(p: &[f64], attr: &ProtectedAttr, category: &str) -> Result<Pcc> {
    if p.len() != attr.len() {
        return Err(Error::Shape(format!("{} predictions for {} samples", p.len(), attr.len())));
    }
    let code = attr.code_of(category).ok_or_else(|| Error::UnseenCategory {
        attr: attr.name().to_string(),
        category: category.to_string(),
    })?;
    let nc = attr.counts()[code];
    if nc == 0 || nc == p.len() {
        return Err(Error::Undefined(format!(
            "indicator of `{category}` is constant ({nc} of {})",
            p.len()
        )));
    }
    if p.len() < 3 {
        return Err(Error::Undefined("fewer than three samples".into()));
    }
    let r = pearson(p, &attr.indicator(code))
        .ok_or_else(|| Error::Undefined("predictions have zero variance".into()))?;
    Ok(Pcc {
        r,
        p_value: correlation_p_value(r, p.len()),
    })
}

/// kNN mutual information between predictions and the attribute (nats).
pub fn statistical_parity(p: &[f64], attr: &ProtectedAttr, k: usize) -> Result<f64> {
    knn_mutual_information(p, attr, k)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EaPair {
    pub a: String,
    pub b: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttrReport {
    pub attr: String,
    pub maa_per_group: BTreeMap<String, f64>,
    /// Every ordered pair of distinct observed categories.
    pub ea_pairs: Vec<EaPair>,
    /// Mean of |EA| over category pairs; absent with a single category.
    pub ea_aggregate: Option<f64>,
    /// `None` where the correlation is undefined.
    pub pcc_per_category: BTreeMap<String, Option<Pcc>>,
    /// `None` when some category has too few samples for the estimator.
    pub sp: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub label: String,
    pub maa_global: f64,
    pub attrs: Vec<AttrReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub n: usize,
    pub attr_names: Vec<String>,
    pub labels: Vec<LabelReport>,
}

fn attr_report(y: &[f64], p: &[f64], attr: &ProtectedAttr, k: usize) -> Result<AttrReport> {
    let present: Vec<&str> = attr.present().map(|(_, c)| c).collect();
    let mut maa_per_group = BTreeMap::new();
    let mut pcc_per_category = BTreeMap::new();
    for &c in &present {
        maa_per_group.insert(c.to_string(), group_maa(y, p, attr, c)?);
        let pcc = match pcc_indicator(p, attr, c) {
            Ok(v) => Some(v),
            Err(Error::Undefined(_)) => None,
            Err(e) => return Err(e),
        };
        pcc_per_category.insert(c.to_string(), pcc);
    }
    let mut ea_pairs = Vec::new();
    for &a in &present {
        for &b in &present {
            if a != b {
                ea_pairs.push(EaPair {
                    a: a.to_string(),
                    b: b.to_string(),
                    value: equal_accuracy(y, p, attr, a, b)?,
                });
            }
        }
    }
    let ea_aggregate = (!ea_pairs.is_empty())
        .then(|| ea_pairs.iter().map(|e| e.value.abs()).sum::<f64>() / ea_pairs.len() as f64);
    let sp = match statistical_parity(p, attr, k) {
        Ok(v) => Some(v),
        Err(Error::SmallCategory { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(AttrReport {
        attr: attr.name().to_string(),
        maa_per_group,
        ea_pairs,
        ea_aggregate,
        pcc_per_category,
        sp,
    })
}

/// Every metric for every label column and attribute.
pub fn build_report(
    y: &DMatrix<f64>,
    p: &DMatrix<f64>,
    attrs: &[ProtectedAttr],
    label_names: &[String],
) -> Result<FairnessReport> {
    build_report_with(y, p, attrs, label_names, DEFAULT_NEIGHBORS)
}

pub fn build_report_with(
    y: &DMatrix<f64>,
    p: &DMatrix<f64>,
    attrs: &[ProtectedAttr],
    label_names: &[String],
    k: usize,
) -> Result<FairnessReport> {
    if y.shape() != p.shape() {
        return Err(Error::Shape(format!("labels {:?} vs predictions {:?}", y.shape(), p.shape())));
    }
    if label_names.len() != y.ncols() {
        return Err(Error::Shape("label names do not match label columns".into()));
    }
    if let Some(a) = attrs.iter().find(|a| a.len() != y.nrows()) {
        return Err(Error::Shape(format!("attribute `{}` has the wrong length", a.name())));
    }
    let labels = label_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let yj: Vec<f64> = y.column(j).iter().copied().collect();
            let pj: Vec<f64> = p.column(j).iter().copied().collect();
            Ok(LabelReport {
                label: name.clone(),
                maa_global: maa(&yj, &pj)?,
                attrs: attrs
                    .iter()
                    .map(|a| attr_report(&yj, &pj, a, k))
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(FairnessReport {
        n: y.nrows(),
        attr_names: attrs.iter().map(|a| a.name().to_string()).collect(),
        labels,
    })
}

impl FairnessReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn label(&self, name: &str) -> Option<&LabelReport> {
        self.labels.iter().find(|l| l.label == name)
    }
}

impl LabelReport {
    pub fn attr(&self, name: &str) -> Option<&AttrReport> {
        self.attrs.iter().find(|a| a.attr == name)
    }
}

impl AttrReport {
    /// Largest |r| over categories with a defined correlation.
    pub fn max_abs_pcc(&self) -> Option<Pcc> {
        self.pcc_per_category
            .values()
            .flatten()
            .copied()
            .max_by(|a, b| a.r.abs().total_cmp(&b.r.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr(labels: &[&str]) -> ProtectedAttr {
        ProtectedAttr::from_labels("g", labels).unwrap()
    }

    #[test]
    fn maa_examples() {
        assert_eq!(maa(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 1.0);
        assert_eq!(maa(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!((maa(&[0.5, 0.5], &[0.6, 0.4]).unwrap() - 0.9).abs() < 1e-15);
        assert!(maa(&[], &[]).is_err());
    }

    #[test]
    fn equal_accuracy_examples() {
        let g = attr(&["a", "a", "b", "b"]);
        let y = [0.5, 0.5, 0.5, 0.5];
        let p = [0.6, 0.4, 0.8, 0.2];
        let ea = equal_accuracy(&y, &p, &g, "a", "b").unwrap();
        assert!((ea + 0.2).abs() < 1e-15);
        assert_eq!(ea, -equal_accuracy(&y, &p, &g, "b", "a").unwrap());
        let same = [0.6, 0.4, 0.4, 0.6];
        assert_eq!(equal_accuracy(&y, &same, &g, "a", "b").unwrap(), 0.0);
    }

    #[test]
    fn equal_accuracy_empty_category() {
        let g = ProtectedAttr::new("g", vec!["a".into(), "b".into()], vec![0, 0]).unwrap();
        assert!(equal_accuracy(&[0.1, 0.2], &[0.1, 0.2], &g, "a", "b").is_err());
    }

    #[test]
    fn pcc_of_indicator_itself_is_one() {
        let g = attr(&["a", "b", "b", "a", "b"]);
        let p = g.indicator(g.code_of("a").unwrap());
        let out = pcc_indicator(&p, &g, "a").unwrap();
        assert!((out.r - 1.0).abs() < 1e-15);
        assert_eq!(out.p_value, 0.0);
        let neg = pcc_indicator(&p, &g, "b").unwrap();
        assert!((neg.r + 1.0).abs() < 1e-15);
    }

    #[test]
    fn pcc_undefined_cases() {
        let g = attr(&["a", "b", "b", "a"]);
        assert!(matches!(pcc_indicator(&[0.5; 4], &g, "a"), Err(Error::Undefined(_))));
        let one = attr(&["a"; 4]);
        assert!(matches!(pcc_indicator(&[0.1, 0.2, 0.3, 0.4], &one, "a"), Err(Error::Undefined(_))));
    }

    #[test]
    fn small_correlation_at_large_n_is_significant() {
        let p = correlation_p_value(0.07, 8000);
        assert!(p < 1e-6, "{p}");
        assert!(correlation_p_value(0.0, 8000) == 1.0);
    }

    #[test]
    fn report_for_perfect_predictions() {
        let labels = ["a", "b", "a", "b", "a", "b", "a", "b", "a", "b"];
        let g = attr(&labels);
        let y = DMatrix::from_fn(10, 1, |i, _| (i as f64 * 0.37).sin());
        let r = build_report(&y, &y, &[g], &["y".into()]).unwrap();
        let l = &r.labels[0];
        assert_eq!(l.maa_global, 1.0);
        assert!(l.attrs[0].ea_pairs.iter().all(|e| e.value == 0.0));
        assert_eq!(l.attrs[0].ea_pairs.len(), 2);
        let pcc = &l.attrs[0].pcc_per_category;
        assert!((pcc["a"].unwrap().r + pcc["b"].unwrap().r).abs() < 1e-12);
        let back: FairnessReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
