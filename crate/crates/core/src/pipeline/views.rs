use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::config::{CsvView, DataSource, ViewSpec};
use crate::data::{load_csv, synthesize, Dataset, Manifest};
use crate::error::{Error, Result};
use crate::rng::{self, stage};

/// Noisy random linear embedding of `features`, one per view:
/// `V = X A + E` with `A ~ N(0, 1/d)` and `E ~ N(0, noise_std^2)`.
pub fn embed_views(features: &DMatrix<f64>, spec: &ViewSpec, seed: u64) -> Vec<DMatrix<f64>> {
    let (n, d) = features.shape();
    let scale = 1.0 / (d as f64).sqrt();
    (0..spec.count)
        .map(|v| {
            let mut rng = rng::stream(seed, stage::VIEWS, v as u64);
            let a = DMatrix::from_fn(d, spec.width, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
            let noise = DMatrix::from_fn(n, spec.width, |_, _| spec.noise_std * rng.sample::<f64, _>(StandardNormal));
            features * a + noise
        })
        .collect()
}

/// Loads or generates the per-view datasets. Every view shares ids, labels
/// and protected attributes with the first.
pub fn load_views(source: &DataSource, seed: u64) -> Result<Vec<Dataset>> {
    match source {
        DataSource::Synthetic { spec, views } => {
            let base = synthesize(spec)?;
            embed_views(base.features(), views, seed)
                .into_iter()
                .enumerate()
                .map(|(v, x)| {
                    let names = (0..x.ncols()).map(|j| format!("v{v}_{j}")).collect();
                    base.with_features(x, names)
                })
                .collect()
        }
        DataSource::Csv { views } => {
            let sets = views
                .iter()
                .map(|CsvView { csv, manifest }| load_csv(csv, &Manifest::load(manifest)?))
                .collect::<Result<Vec<_>>>()?;
            check_aligned(&sets)?;
            Ok(sets)
        }
    }
}

fn check_aligned(views: &[Dataset]) -> Result<()> {
    let Some((first, rest)) = views.split_first() else {
        return Err(Error::InvalidArgument("no views".into()));
    };
    for (v, other) in rest.iter().enumerate() {
        let same = other.sample_ids() == first.sample_ids()
            && other.group_ids() == first.group_ids()
            && other.labels() == first.labels()
            && other.label_names() == first.label_names()
            && other.protected() == first.protected();
        if !same {
            return Err(Error::Shape(format!(
                "view {} does not share ids, labels and protected columns with view 0",
                v + 1
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SynthSpec;

    #[test]
    fn views_share_everything_but_features() {
        let source = DataSource::Synthetic {
            spec: SynthSpec { n: 50, ..Default::default() },
            views: ViewSpec::default(),
        };
        let views = load_views(&source, 1).unwrap();
        assert_eq!(views.len(), 2);
        assert_eq!(views[0].labels(), views[1].labels());
        assert_eq!(views[0].d(), 16);
        assert_ne!(views[0].features(), views[1].features());
        assert!(check_aligned(&views).is_ok());
    }

    #[test]
    fn noiseless_view_is_linear_in_features() {
        let x = DMatrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64);
        let spec = ViewSpec { count: 1, width: 4, noise_std: 0.0 };
        let v = &embed_views(&x, &spec, 0)[0];
        let doubled = &embed_views(&(&x * 2.0), &spec, 0)[0];
        assert!((doubled - v * 2.0).amax() < 1e-12);
    }
}
