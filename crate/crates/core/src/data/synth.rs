//! Synthetic data with controllable labelling and sampling bias.
//!
//! Samples come in "speakers" of `rows_per_group` rows that share their
//! protected categories. For each speaker the categories are drawn from the
//! attribute's `proportions` (sampling bias). Every row gets a standard-normal
//! latent vector `z`; labels are
//!
//! ```text
//! y = scale[c] * (sigmoid(signal * w_l . z) + noise) + shift[c]
//! ```
//!
//! with shifts summed and scales multiplied over attributes (labelling bias).
//! Observed features are `z`, plus `feature_shift` on one column per category
//! so that the category is linearly decodable when the shift is non-zero.
//! Label directions `w_l` are zero on those columns: the features carry the
//! category, but only the labelling bias ties it to the labels.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, ProtectedAttr};
use crate::error::{Error, Result};
use crate::rng::{self, stage};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum NoiseFamily {
    Normal,
    /// Centered gamma with the given shape, rescaled to `noise_std`.
    Gamma { shape: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthAttribute {
    pub name: String,
    pub categories: Vec<String>,
    pub proportions: Vec<f64>,
    pub label_mean_shift: Vec<f64>,
    pub label_scale: Vec<f64>,
    #[serde(default)]
    pub feature_shift: f64,
}

impl SynthAttribute {
    /// Unbiased attribute with uniform proportions.
    pub fn uniform(name: &str, categories: &[&str]) -> Self {
        let k = categories.len();
        SynthAttribute {
            name: name.to_string(),
            categories: categories.iter().map(|c| c.to_string()).collect(),
            proportions: vec![1.0 / k as f64; k],
            label_mean_shift: vec![0.0; k],
            label_scale: vec![1.0; k],
            feature_shift: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let k = self.categories.len();
        let bad = |msg: String| Err(Error::InvalidArgument(format!("attribute `{}`: {msg}", self.name)));
        if k == 0 {
            return bad("no categories".into());
        }
        if self.proportions.len() != k || self.label_mean_shift.len() != k || self.label_scale.len() != k {
            return bad("per-category vectors must all have one entry per category".into());
        }
        let total: f64 = self.proportions.iter().sum();
        if (total - 1.0).abs() > 1e-12 || self.proportions.iter().any(|&p| !(p >= 0.0)) {
            return bad(format!("proportions must be non-negative and sum to 1 (sum = {total})"));
        }
        if self.label_scale.iter().any(|&s| !(s > 0.0)) {
            return bad("label scales must be positive".into());
        }
        if !self.feature_shift.is_finite() || self.label_mean_shift.iter().any(|s| !s.is_finite()) {
            return bad("shifts must be finite".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub n_labels: usize,
    pub attributes: Vec<SynthAttribute>,
    pub noise: NoiseFamily,
    pub noise_std: f64,
    pub signal_strength: f64,
    pub rows_per_group: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n: 1000,
            d: 8,
            n_labels: 1,
            attributes: vec![SynthAttribute::uniform("gender", &["F", "M"])],
            noise: NoiseFamily::Normal,
            noise_std: 0.1,
            signal_strength: 1.0,
            rows_per_group: 1,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.n_labels == 0 || self.rows_per_group == 0 {
            return Err(Error::InvalidArgument(
                "n, d, n_labels and rows_per_group must be positive".into(),
            ));
        }
        if !(self.noise_std >= 0.0) || !self.signal_strength.is_finite() {
            return Err(Error::InvalidArgument("noise_std must be >= 0 and signal finite".into()));
        }
        if let NoiseFamily::Gamma { shape } = self.noise {
            if !(shape > 0.0) {
                return Err(Error::InvalidArgument("gamma shape must be positive".into()));
            }
        }
        let mut names: Vec<&str> = self.attributes.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.attributes.len() {
            return Err(Error::InvalidArgument("attribute names must be unique".into()));
        }
        self.attributes.iter().try_for_each(SynthAttribute::validate)?;
        if shifted_columns(self).iter().all(|&s| s) {
            return Err(Error::InvalidArgument(
                "feature shifts occupy every column; increase d".into(),
            ));
        }
        Ok(())
    }
}

/// Columns that receive a category shift.
fn shifted_columns(spec: &SynthSpec) -> Vec<bool> {
    let mut shifted = vec![false; spec.d];
    let mut offset = 0;
    for attr in &spec.attributes {
        if attr.feature_shift != 0.0 {
            for c in 0..attr.categories.len() {
                shifted[(offset + c) % spec.d] = true;
            }
        }
        offset += attr.categories.len();
    }
    shifted
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Generates a dataset; a pure function of `spec` (seed included).
pub fn synthesize(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, stage::SYNTH, 0);
    let (n, d, l) = (spec.n, spec.d, spec.n_labels);

    let shifted = shifted_columns(spec);
    let directions: Vec<Vec<f64>> = (0..l)
        .map(|_| {
            let v: Vec<f64> = (0..d)
                .map(|j| {
                    let x: f64 = rng.sample(StandardNormal);
                    if shifted[j] { 0.0 } else { x }
                })
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();

    let n_groups = n.div_ceil(spec.rows_per_group);
    let mut speaker_codes = vec![Vec::with_capacity(n_groups); spec.attributes.len()];
    for _ in 0..n_groups {
        for (a, attr) in spec.attributes.iter().enumerate() {
            let pick = WeightedIndex::new(&attr.proportions)
                .map_err(|e| Error::InvalidArgument(format!("{}: {e}", attr.name)))?;
            speaker_codes[a].push(pick.sample(&mut rng));
        }
    }

    let gamma = match spec.noise {
        NoiseFamily::Gamma { shape } => Some((Gamma::new(shape, 1.0).unwrap(), shape)),
        NoiseFamily::Normal => None,
    };
    let mut features = DMatrix::zeros(n, d);
    let mut labels = DMatrix::zeros(n, l);
    let mut codes = vec![Vec::with_capacity(n); spec.attributes.len()];
    let mut sample_ids = Vec::with_capacity(n);
    let mut group_ids = Vec::with_capacity(n);

    for i in 0..n {
        let g = i / spec.rows_per_group;
        sample_ids.push(format!("s{i}"));
        group_ids.push(format!("g{g}"));

        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let (mut shift, mut scale) = (0.0, 1.0);
        let mut column_offset = 0;
        for (a, attr) in spec.attributes.iter().enumerate() {
            let c = speaker_codes[a][g];
            codes[a].push(c);
            shift += attr.label_mean_shift[c];
            scale *= attr.label_scale[c];
            features[(i, (column_offset + c) % d)] += attr.feature_shift;
            column_offset += attr.categories.len();
        }
        for (j, &zj) in z.iter().enumerate() {
            features[(i, j)] += zj;
        }
        for (label, w) in directions.iter().enumerate() {
            let score: f64 = w.iter().zip(&z).map(|(a, b)| a * b).sum();
            let noise = match &gamma {
                Some((dist, shape)) => (dist.sample(&mut rng) - shape) / shape.sqrt(),
                None => rng.sample::<f64, _>(StandardNormal),
            } * spec.noise_std;
            labels[(i, label)] = scale * (sigmoid(spec.signal_strength * score) + noise) + shift;
        }
    }

    let protected = spec
        .attributes
        .iter()
        .zip(codes)
        .map(|(attr, codes)| ProtectedAttr::new(attr.name.clone(), attr.categories.clone(), codes))
        .collect::<Result<Vec<_>>>()?;
    for attr in &protected {
        if let Some(empty) = attr.counts().iter().position(|&n| n == 0) {
            return Err(Error::InvalidArgument(format!(
                "category `{}` of `{}` received no samples; increase n",
                attr.categories()[empty],
                attr.name()
            )));
        }
    }

    Dataset::new(
        features,
        labels,
        (0..d).map(|j| format!("f{j}")).collect(),
        (0..l).map(|j| format!("y{j}")).collect(),
        protected,
        sample_ids,
        group_ids,
    )
}
