//! Per-group label normalization.
//!
//! Each training label is standardized within its protected group and mapped
//! back onto the global moments:
//!
//! ```text
//! y_hat_i = (y_i - mu[c_i]) / sigma[c_i] * sigma + mu
//! ```
//!
//! All moments are population moments (divide by n). With unweighted global
//! moments this makes `E[y_hat] = E[y]` and `E[y_hat^2] = E[y^2]` hold exactly,
//! which is what turns the squared error against `y_hat` into
//! `MSE(y, p) + 2 Cov(p, y - y_hat)` at finite n.
//!
//! The hybrid variant takes balancing weights: the global mean and variance
//! become weighted, the per-group moments stay unweighted (within a group the
//! balancing weight is constant, so they would not change).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::ProtectedAttr;
use crate::error::{Error, Result};

/// Groups whose standard deviation falls below this are rejected.
pub const SIGMA_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub per_group: BTreeMap<String, Moments>,
    pub global: Moments,
    pub weighted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairLabels {
    pub values: Vec<f64>,
    pub source_stats: GroupStats,
    pub protected_name: String,
}

fn population_moments(values: impl Iterator<Item = f64> + Clone) -> Moments {
    let (count, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mu = sum / count as f64;
    let var = values.map(|v| (v - mu) * (v - mu)).sum::<f64>() / count as f64;
    Moments { mu, sigma: var.sqrt() }
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::Shape(format!("{} weights for {n} samples", weights.len())));
    }
    if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be positive and finite".into()));
    }
    Ok(())
}

/// Fits per-group and global moments of `y`.
///
/// With `weights`, the global moments are
/// `mu = (1/n) sum w_i y_i` and `sigma^2 = (1/n) sum w_i (y_i - mu)^2`.
pub fn fit_group_stats(y: &[f64], attr: &ProtectedAttr, weights: Option<&[f64]>) -> Result<GroupStats> {
    if y.len() != attr.len() {
        return Err(Error::Shape(format!(
            "{} labels for attribute `{}` of length {}",
            y.len(),
            attr.name(),
            attr.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("no labels".into()));
    }
    let mut per_group = BTreeMap::new();
    for (code, category) in attr.present() {
        let count = attr.counts()[code];
        if count < 2 {
            return Err(Error::SmallCategory {
                attr: attr.name().to_string(),
                category: category.to_string(),
                count,
                required: 2,
            });
        }
        let members = attr
            .codes()
            .iter()
            .zip(y)
            .filter(move |(&c, _)| c == code)
            .map(|(_, &v)| v);
        let m = population_moments(members);
        if !(m.sigma >= SIGMA_FLOOR) {
            return Err(Error::DegenerateGroup {
                attr: attr.name().to_string(),
                category: category.to_string(),
                sigma: m.sigma,
            });
        }
        per_group.insert(category.to_string(), m);
    }

    let global = match weights {
        None => population_moments(y.iter().copied()),
        Some(w) => {
            check_weights(w, y.len())?;
            let n = y.len() as f64;
            let mu = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / n;
            let var = y.iter().zip(w).map(|(y, w)| w * (y - mu) * (y - mu)).sum::<f64>() / n;
            Moments { mu, sigma: var.sqrt() }
        }
    };
    Ok(GroupStats {
        per_group,
        global,
        weighted: weights.is_some(),
    })
}

/// Maps `y` to fair labels using previously fitted `stats`.
pub fn normalize(y: &[f64], attr: &ProtectedAttr, stats: &GroupStats) -> Result<FairLabels> {
    if y.len() != attr.len() {
        return Err(Error::Shape(format!("{} labels for {} samples", y.len(), attr.len())));
    }
    let by_code = attr
        .categories()
        .iter()
        .enumerate()
        .map(|(code, category)| match stats.per_group.get(category) {
            Some(m) if m.sigma >= SIGMA_FLOOR => Ok(Some(*m)),
            Some(m) => Err(Error::DegenerateGroup {
                attr: attr.name().to_string(),
                category: category.clone(),
                sigma: m.sigma,
            }),
            None if attr.counts()[code] == 0 => Ok(None),
            None => Err(Error::UnseenCategory {
                attr: attr.name().to_string(),
                category: category.clone(),
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    let Moments { mu, sigma } = stats.global;
    let values = y
        .iter()
        .zip(attr.codes())
        .map(|(&v, &c)| {
            let g = by_code[c].expect("present category has stats");
            (v - g.mu) / g.sigma * sigma + mu
        })
        .collect();
    Ok(FairLabels {
        values,
        source_stats: stats.clone(),
        protected_name: attr.name().to_string(),
    })
}

/// Fit on `y` and normalize it in one go.
pub fn fair_labels(y: &[f64], attr: &ProtectedAttr, weights: Option<&[f64]>) -> Result<FairLabels> {
    let stats = fit_group_stats(y, attr, weights)?;
    normalize(y, attr, &stats)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (n, s) = v.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    s / n as f64
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "mse: length mismatch");
    mean(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
}

/// Population covariance `Cov(p, y - y_hat)`: the unfairness term.
///
/// # Panics
/// If the slices differ in length.
pub fn unfairness_covariance(p: &[f64], y: &[f64], y_hat: &[f64]) -> f64 {
    assert!(p.len() == y.len() && y.len() == y_hat.len(), "length mismatch");
    let p_mean = mean(p.iter().copied());
    let d_mean = mean(y.iter().zip(y_hat).map(|(a, b)| a - b));
    mean(
        p.iter()
            .zip(y.iter().zip(y_hat))
            .map(|(p, (y, h))| (p - p_mean) * ((y - h) - d_mean)),
    )
}

/// Mean squared error against the fair labels, optionally weighted
/// (`(1/n) sum w_i (y_hat_i - p_i)^2`).
pub fn fair_loss(p: &[f64], y_hat: &[f64], weights: Option<&[f64]>) -> f64 {
    assert_eq!(p.len(), y_hat.len(), "fair_loss: length mismatch");
    match weights {
        None => mse(y_hat, p),
        Some(w) => {
            assert_eq!(w.len(), p.len(), "fair_loss: weight length mismatch");
            mean(
                p.iter()
                    .zip(y_hat)
                    .zip(w)
                    .map(|((p, h), w)| w * (h - p) * (h - p)),
            )
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossDecomposition {
    /// `MSE(y_hat, p)`
    pub fair_loss: f64,
    /// `MSE(y, p)`
    pub mse: f64,
    /// `Cov(p, y - y_hat)`
    pub unfairness: f64,
}

impl LossDecomposition {
    /// `fair_loss - (mse + 2 unfairness)`; zero up to rounding whenever
    /// `y_hat` came from unweighted stats fitted on `y`.
    pub fn residual(&self) -> f64 {
        self.fair_loss - (self.mse + 2.0 * self.unfairness)
    }
}

pub fn loss_decomposition(y: &[f64], y_hat: &[f64], p: &[f64]) -> LossDecomposition {
    LossDecomposition {
        fair_loss: mse(y_hat, p),
        mse: mse(y, p),
        unfairness: unfairness_covariance(p, y, y_hat),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr(labels: &[&str]) -> ProtectedAttr {
        ProtectedAttr::from_labels("g", labels).unwrap()
    }

    const Y: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

    #[test]
    fn two_group_stats() {
        let s = fit_group_stats(&Y, &attr(&["A", "A", "B", "B"]), None).unwrap();
        let a = s.per_group["A"];
        assert!((a.mu - 0.3).abs() < 1e-15 && (a.sigma - 0.1).abs() < 1e-15);
        assert!((s.global.mu - 0.5).abs() < 1e-15);
        assert!((s.global.sigma - 0.05f64.sqrt()).abs() < 1e-15);
        assert!(!s.weighted);
    }

    #[test]
    fn single_group_stats_equal_global() {
        let s = fit_group_stats(&Y, &attr(&["A"; 4]), None).unwrap();
        assert_eq!(s.per_group["A"], s.global);
        let y_hat = normalize(&Y, &attr(&["A"; 4]), &s).unwrap();
        for (a, b) in y_hat.values.iter().zip(Y) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_weights_reduce_to_plain_stats() {
        let g = attr(&["A", "A", "B", "B"]);
        let plain = fit_group_stats(&Y, &g, None).unwrap();
        let weighted = fit_group_stats(&Y, &g, Some(&[1.0; 4])).unwrap();
        assert!(weighted.weighted);
        assert_eq!(plain.per_group, weighted.per_group);
        assert!((plain.global.mu - weighted.global.mu).abs() < 1e-15);
        assert!((plain.global.sigma - weighted.global.sigma).abs() < 1e-15);
    }

    #[test]
    fn normalizes_hand_example() {
        let g = attr(&["A", "A", "B", "B"]);
        let s = fit_group_stats(&Y, &g, None).unwrap();
        let out = normalize(&Y, &g, &s).unwrap();
        let lo = 0.5 - 0.05f64.sqrt();
        let hi = 0.5 + 0.05f64.sqrt();
        for (got, want) in out.values.iter().zip([lo, hi, lo, hi]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!((out.values[0] - 0.27639).abs() < 1e-5);
        assert!((out.values[1] - 0.72361).abs() < 1e-5);
    }

    #[test]
    fn identical_group_distributions_leave_labels_unchanged() {
        let y = [0.1, 0.5, 0.9, 0.1, 0.5, 0.9];
        let g = attr(&["A", "A", "A", "B", "B", "B"]);
        let out = fair_labels(&y, &g, None).unwrap();
        for (a, b) in out.values.iter().zip(y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn small_and_degenerate_groups_are_errors() {
        let err = fit_group_stats(&[0.1, 0.2, 0.3], &attr(&["A", "A", "B"]), None).unwrap_err();
        assert!(matches!(err, Error::SmallCategory { count: 1, .. }));
        let err = fit_group_stats(&[0.1, 0.2, 0.5, 0.5], &attr(&["A", "A", "B", "B"]), None).unwrap_err();
        assert!(matches!(err, Error::DegenerateGroup { ref category, .. } if category == "B"));
    }

    #[test]
    fn unseen_category_is_an_error() {
        let s = fit_group_stats(&Y, &attr(&["A", "A", "B", "B"]), None).unwrap();
        let err = normalize(&[0.1, 0.2], &attr(&["A", "C"]), &s).unwrap_err();
        assert!(matches!(err, Error::UnseenCategory { ref category, .. } if category == "C"));
    }

    #[test]
    fn covariance_edge_cases() {
        let y = [0.1, 0.7, 0.3];
        assert_eq!(unfairness_covariance(&[0.4, 0.2, 0.9], &y, &y), 0.0);
        assert!(unfairness_covariance(&[0.5; 3], &y, &[0.3, 0.3, 0.9]).abs() < 1e-17);
    }

    #[test]
    fn weighted_loss_hand_example() {
        assert_eq!(fair_loss(&[0.0, 0.0], &[1.0, 3.0], Some(&[1.0, 3.0])), 14.0);
        assert_eq!(fair_loss(&[1.0, 3.0], &[1.0, 3.0], None), 0.0);
        let (p, h) = ([0.3, 0.1, 0.8], [0.2, 0.4, 0.4]);
        assert_eq!(fair_loss(&p, &h, Some(&[1.0; 3])), fair_loss(&p, &h, None));
    }

    #[test]
    fn stats_serialize_with_stable_keys() {
        let s = fit_group_stats(&Y, &attr(&["A", "A", "B", "B"]), None).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert!(v["per_group"]["A"]["mu"].is_number());
        assert!(v["global"]["sigma"].is_number());
        assert_eq!(v["weighted"], false);
        let back: GroupStats = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
    }
}
