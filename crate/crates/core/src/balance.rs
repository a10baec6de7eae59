//! Inverse-frequency sample weights, `w_i = n / (K n_{c_i})`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::ProtectedAttr;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleWeights {
    pub values: Vec<f64>,
    pub attr_name: String,
    /// Weight of each category, for carrying training weights to other rows.
    pub per_category: BTreeMap<String, f64>,
}

/// Every category carries total weight `n / K`; the weights sum to `n`.
pub fn balance_weights(attr: &ProtectedAttr) -> Result<SampleWeights> {
    let n = attr.len() as f64;
    let k = attr.n_categories() as f64;
    if let Some(empty) = attr.counts().iter().position(|&c| c == 0) {
        return Err(Error::SmallCategory {
            attr: attr.name().to_string(),
            category: attr.categories()[empty].clone(),
            count: 0,
            required: 1,
        });
    }
    let by_code: Vec<f64> = attr.counts().iter().map(|&nc| n / (k * nc as f64)).collect();
    Ok(SampleWeights {
        values: attr.codes().iter().map(|&c| by_code[c]).collect(),
        attr_name: attr.name().to_string(),
        per_category: attr.categories().iter().cloned().zip(by_code).collect(),
    })
}

impl SampleWeights {
    /// Weights for another sample set, using this set's per-category values.
    pub fn apply_to(&self, attr: &ProtectedAttr) -> Result<Vec<f64>> {
        attr.codes()
            .iter()
            .map(|&c| {
                let category = &attr.categories()[c];
                self.per_category
                    .get(category)
                    .copied()
                    .ok_or_else(|| Error::UnseenCategory {
                        attr: attr.name().to_string(),
                        category: category.clone(),
                    })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr_with_counts(counts: &[usize]) -> ProtectedAttr {
        let categories = (0..counts.len()).map(|c| format!("c{c}")).collect();
        let codes = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        ProtectedAttr::new("a", categories, codes).unwrap()
    }

    #[test]
    fn gender_counts_give_expected_weights() {
        let w = balance_weights(&attr_with_counts(&[4350, 3650])).unwrap();
        assert!((w.per_category["c0"] - 0.91954).abs() < 1e-5);
        assert!((w.per_category["c1"] - 1.09589).abs() < 1e-5);
    }

    #[test]
    fn race_counts_give_uniform_mass() {
        let a = attr_with_counts(&[6870, 283, 847]);
        let w = balance_weights(&a).unwrap();
        for code in 0..3 {
            let mass: f64 = w.values.iter().zip(a.codes()).filter(|(_, &c)| c == code).map(|(w, _)| w).sum();
            assert!((mass - 8000.0 / 3.0).abs() < 1e-9);
        }
        assert!((w.values.iter().sum::<f64>() - 8000.0).abs() < 1e-9);
    }

    #[test]
    fn balanced_groups_get_unit_weight() {
        let w = balance_weights(&attr_with_counts(&[5, 5, 5])).unwrap();
        assert!(w.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn empty_category_is_an_error() {
        let a = ProtectedAttr::new("a", vec!["x".into(), "y".into()], vec![0, 0]).unwrap();
        assert!(balance_weights(&a).is_err());
    }

    #[test]
    fn apply_to_unseen_category_fails() {
        let w = balance_weights(&attr_with_counts(&[2, 3])).unwrap();
        let other = ProtectedAttr::from_labels("a", &["c1", "c9"]).unwrap();
        assert!(w.apply_to(&other).is_err());
        let same = ProtectedAttr::from_labels("a", &["c1", "c0"]).unwrap();
        assert_eq!(w.apply_to(&same).unwrap(), [w.per_category["c1"], w.per_category["c0"]]);
    }
}
