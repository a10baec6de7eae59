//! Mutual information between a continuous variable and a discrete one,
//! estimated from k-nearest-neighbour distances:
//!
//! ```text
//! I = psi(n) - <psi(n_c)> + psi(k) - <psi(m)>
//! ```
//!
//! For sample i, `d_i` is the distance to its k-th nearest neighbour among
//! samples of the same category and `m_i` counts samples of any category
//! (other than i) at distance at most `d_i`. Distances are absolute
//! differences.

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::special::digamma;
use crate::data::ProtectedAttr;
use crate::error::{Error, Result};
use crate::rng::{self, stage};

/// Neighbour count used for statistical parity.
pub const DEFAULT_NEIGHBORS: usize = 3;

/// Relative size of the tie-breaking jitter, in units of the sample std.
const JITTER_SCALE: f64 = 1e-10;

/// Distance from `sorted[at]` to its k-th nearest neighbour in `sorted`.
fn kth_neighbor_distance(sorted: &[f64], at: usize, k: usize) -> f64 {
    let v = sorted[at];
    let (mut left, mut right) = (at, at + 1);
    let mut dist = 0.0;
    for _ in 0..k {
        let dl = if left > 0 { v - sorted[left - 1] } else { f64::INFINITY };
        let dr = if right < sorted.len() { sorted[right] - v } else { f64::INFINITY };
        if dl <= dr {
            dist = dl;
            left -= 1;
        } else {
            dist = dr;
            right += 1;
        }
    }
    dist
}

/// Number of entries of `sorted` within `radius` of `v`, the entry itself
/// included.
fn count_within(sorted: &[f64], v: f64, radius: f64) -> usize {
    let start = sorted.partition_point(|&x| x < v && v - x > radius);
    let end = sorted.partition_point(|&x| x <= v || x - v <= radius);
    end - start
}

fn with_jitter(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).all(|w| w[0] != w[1]) {
        return values.to_vec();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut rng = rng::stream(0, stage::JITTER, 0);
    values
        .iter()
        .map(|&v| v + JITTER_SCALE * std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// kNN estimate of I(p; C) in nats, clamped at zero.
pub fn knn_mutual_information(p: &[f64], attr: &ProtectedAttr, k: usize) -> Result<f64> {
    if p.len() != attr.len() {
        return Err(Error::Shape(format!("{} predictions for {} samples", p.len(), attr.len())));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite prediction".into()));
    }
    let present: Vec<usize> = attr.present().map(|(code, _)| code).collect();
    if present.len() <= 1 {
        return Ok(0.0);
    }
    for &code in &present {
        let count = attr.counts()[code];
        if count <= k {
            return Err(Error::SmallCategory {
                attr: attr.name().to_string(),
                category: attr.categories()[code].clone(),
                count,
                required: k + 1,
            });
        }
    }

    let values = with_jitter(p);
    let mut all = values.clone();
    all.sort_by(f64::total_cmp);

    let n = values.len();
    let mut psi_counts = 0.0;
    let mut psi_m = 0.0;
    for &code in &present {
        let mut members: Vec<f64> = values
            .iter()
            .zip(attr.codes())
            .filter(|(_, &c)| c == code)
            .map(|(&v, _)| v)
            .collect();
        members.sort_by(f64::total_cmp);
        let nc = members.len();
        psi_counts += nc as f64 * digamma(nc as f64);
        for at in 0..nc {
            let radius = kth_neighbor_distance(&members, at, k);
            let m = count_within(&all, members[at], radius) - 1;
            psi_m += digamma(m as f64);
        }
    }
    let nf = n as f64;
    let estimate = digamma(nf) - psi_counts / nf + digamma(k as f64) - psi_m / nf;
    Ok(estimate.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kth_neighbor_in_sorted_slice() {
        let s = [0.0, 1.0, 1.5, 4.0, 10.0];
        assert_eq!(kth_neighbor_distance(&s, 2, 1), 0.5);
        assert_eq!(kth_neighbor_distance(&s, 2, 2), 1.5);
        assert_eq!(kth_neighbor_distance(&s, 2, 3), 2.5);
        assert_eq!(kth_neighbor_distance(&s, 0, 2), 1.5);
    }

    #[test]
    fn boundary_points_count_as_within() {
        let s = [0.1, 0.3, 0.5, 0.7];
        let r = 0.3 - 0.1;
        assert_eq!(count_within(&s, 0.1, r), 2);
        assert_eq!(count_within(&s, 0.3, 0.5 - 0.3), 3);
    }

    #[test]
    fn single_category_is_zero() {
        let a = ProtectedAttr::from_labels("a", &["x"; 10]).unwrap();
        let p: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(knn_mutual_information(&p, &a, 3).unwrap(), 0.0);
    }

    #[test]
    fn small_category_is_an_error() {
        let mut labels = vec!["x"; 10];
        labels[..3].fill("y");
        let a = ProtectedAttr::from_labels("a", &labels).unwrap();
        let p: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(
            knn_mutual_information(&p, &a, 3),
            Err(Error::SmallCategory { count: 3, .. })
        ));
    }
}
