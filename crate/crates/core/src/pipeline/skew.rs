use rand::Rng as _;
use rand_distr::{Gamma, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ProtectedAttr;
use crate::error::{Error, Result};
use crate::fair_transform::fair_labels;
use crate::metrics::{knn_mutual_information, DEFAULT_NEIGHBORS};
use crate::rng::{self, stage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewPoint {
    pub shape: f64,
    /// Skewness of the gamma class, `2 / sqrt(shape)`.
    pub skewness: f64,
    pub mean_sp: f64,
    pub std_sp: f64,
    pub trials: usize,
}

/// Statistical parity left after per-class normalization of two classes of
/// `n / 2` samples: gamma(`shape`, 1) against a normal with the same mean and
/// variance. With `shape = None` both classes are standard normal.
pub fn skew_trial(shape: Option<f64>, n: usize, rng: &mut rng::Rng) -> Result<f64> {
    let half = n / 2;
    let mut values = Vec::with_capacity(n);
    match shape {
        Some(k) => {
            let gamma = Gamma::new(k, 1.0).map_err(|e| Error::InvalidArgument(format!("gamma shape {k}: {e}")))?;
            let normal = Normal::new(k, k.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            values.extend((0..half).map(|_| rng.sample(gamma)));
            values.extend((half..n).map(|_| rng.sample(normal)));
        }
        None => values.extend((0..n).map(|_| rng.sample::<f64, _>(StandardNormal))),
    }
    let codes = (0..n).map(|i| usize::from(i >= half)).collect();
    let attr = ProtectedAttr::new("class", vec!["gamma".into(), "normal".into()], codes)?;
    let normalized = fair_labels(&values, &attr, None)?;
    knn_mutual_information(&normalized.values, &attr, DEFAULT_NEIGHBORS)
}

/// Mean statistical parity over `trials` for each gamma shape.
pub fn mc_skew(shapes: &[f64], n: usize, trials: usize, seed: u64) -> Result<Vec<SkewPoint>> {
    if let Some(bad) = shapes.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument(format!("gamma shape must be positive, got {bad}")));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    shapes
        .iter()
        .enumerate()
        .map(|(s, &shape)| {
            let sps = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = rng::stream(seed, stage::MC_SKEW, ((s as u64) << 32) | t as u64);
                    skew_trial(Some(shape), n, &mut rng)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = sps.iter().sum::<f64>() / trials as f64;
            let var = sps.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / trials as f64;
            Ok(SkewPoint {
                shape,
                skewness: 2.0 / shape.sqrt(),
                mean_sp: mean,
                std_sp: var.sqrt(),
                trials,
            })
        })
        .collect()
}
