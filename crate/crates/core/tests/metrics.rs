mod common;

use fairnorm::metrics::special::{digamma, ln_gamma, regularized_incomplete_beta};
use fairnorm::metrics::{
    build_report, correlation_p_value, equal_accuracy, knn_mutual_information, maa, pcc_indicator,
    student_t_two_sided,
};
use fairnorm::nalgebra::DMatrix;
use fairnorm::rng::Rng;
use fairnorm::ProtectedAttr;
use proptest::prelude::*;
use rand::{Rng as _, SeedableRng};
use rand_distr::StandardNormal;

fn alternating(n: usize, k: usize) -> ProtectedAttr {
    let categories = (0..k).map(|c| format!("c{c}")).collect();
    ProtectedAttr::new("g", categories, (0..n).map(|i| i % k).collect()).unwrap()
}

proptest! {
    #[test]
    fn digamma_recurrence(x in 1.0f64..1e4) {
        prop_assert!((digamma(x + 1.0) - digamma(x) - 1.0 / x).abs() < 1e-12);
    }

    #[test]
    fn digamma_recurrence_below_one(x in 0.05f64..1.0) {
        prop_assert!((digamma(x + 1.0) - digamma(x) - 1.0 / x).abs() < 1e-12 * (1.0 + digamma(x).abs()));
    }

    #[test]
    fn ln_gamma_recurrence(x in 0.1f64..100.0) {
        prop_assert!((ln_gamma(x + 1.0) - ln_gamma(x) - x.ln()).abs() < 1e-10 * (1.0 + ln_gamma(x).abs()));
    }

    #[test]
    fn incomplete_beta_symmetry(x in 0.0f64..1.0, a in 0.1f64..20.0, b in 0.1f64..20.0) {
        let lhs = regularized_incomplete_beta(a, b, x);
        let rhs = 1.0 - regularized_incomplete_beta(b, a, 1.0 - x);
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn t_tail_matches_quadrature(t in 0.0f64..8.0, df in 1u32..200) {
        let expected = common::t_two_sided_by_quadrature(t, df as f64);
        prop_assert!((student_t_two_sided(t, df as f64) - expected).abs() < 1e-9);
    }

    #[test]
    fn maa_is_symmetric(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..50)) {
        let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assert_eq!(maa(&y, &p).unwrap(), maa(&p, &y).unwrap());
        prop_assert!(maa(&y, &p).unwrap() <= 1.0);
    }

    #[test]
    fn pcc_ignores_positive_affine_maps(values in prop::collection::vec(-1.0f64..1.0, 6..60), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let attr = alternating(values.len(), 2);
        let mapped: Vec<f64> = values.iter().map(|v| a * v + b).collect();
        if let (Ok(r1), Ok(r2)) = (pcc_indicator(&values, &attr, "c0"), pcc_indicator(&mapped, &attr, "c0")) {
            prop_assert!((r1.r - r2.r).abs() < 1e-9);
            let flipped = pcc_indicator(&values, &attr, "c1").unwrap();
            prop_assert!((r1.r + flipped.r).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_accuracy_is_antisymmetric(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 4..40)) {
        let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let attr = alternating(y.len(), 2);
        let ab = equal_accuracy(&y, &p, &attr, "c0", "c1").unwrap();
        let ba = equal_accuracy(&y, &p, &attr, "c1", "c0").unwrap();
        prop_assert!((ab + ba).abs() < 1e-15);
    }
}

#[test]
fn parity_survives_rescaling() {
    let mut rng = Rng::seed_from_u64(3);
    let attr = alternating(2000, 2);
    let p: Vec<f64> = (0..2000).map(|i| (i % 2) as f64 * 0.3 + rng.sample::<f64, _>(StandardNormal)).collect();
    let scaled: Vec<f64> = p.iter().map(|v| 4.0 * v + 2.0).collect();
    let a = knn_mutual_information(&p, &attr, 3).unwrap();
    let b = knn_mutual_information(&scaled, &attr, 3).unwrap();
    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
}

#[test]
fn mi_of_separated_classes_is_the_class_entropy() {
    for (k, n) in [(2, 4000), (3, 6000)] {
        let attr = alternating(n, k);
        let mut rng = Rng::seed_from_u64(k as u64);
        let p: Vec<f64> = attr.codes().iter().map(|&c| 10.0 * c as f64 + rng.random::<f64>()).collect();
        let mi = knn_mutual_information(&p, &attr, 3).unwrap();
        assert!((mi - (k as f64).ln()).abs() < 0.02, "k={k}: {mi}");
    }
}

#[test]
fn mi_monte_carlo_for_shifted_normals() {
    // MI between a fair coin and N(+-1, 1): entropy of the mixture minus that
    // of one component, by quadrature.
    let pdf = |x: f64, m: f64| (-(x - m) * (x - m) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mixture = |x: f64| 0.5 * (pdf(x, -1.0) + pdf(x, 1.0));
    let h_mix = common::integrate(&|x| {
        let f = mixture(x);
        if f > 0.0 { -f * f.ln() } else { 0.0 }
    }, -12.0, 12.0, 1 << 16);
    let h_comp = 0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln());
    let truth = h_mix - h_comp;

    let attr = alternating(4000, 2);
    let mut estimates = Vec::new();
    for seed in 0..10 {
        let mut rng = Rng::seed_from_u64(100 + seed);
        let p: Vec<f64> = attr
            .codes()
            .iter()
            .map(|&c| 2.0 * c as f64 - 1.0 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        estimates.push(knn_mutual_information(&p, &attr, 3).unwrap());
    }
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    assert!((mean - truth).abs() < 0.01, "estimate {mean} vs {truth}");
}

#[test]
fn significance_of_a_weak_correlation_in_a_large_sample() {
    assert!(correlation_p_value(0.07, 8000) < 1e-6);
    assert!(correlation_p_value(0.0, 100) > 0.999_999);
}

#[test]
fn report_covers_every_label_and_attribute() {
    let n = 40;
    let y = DMatrix::from_fn(n, 2, |i, j| ((i * 3 + j) % 7) as f64 / 7.0);
    let p = DMatrix::from_fn(n, 2, |i, j| ((i * 5 + j) % 9) as f64 / 9.0);
    let attrs = [alternating(n, 2), alternating(n, 4).renamed("h")];
    let report = build_report(&y, &p, &attrs, &["a".into(), "b".into()]).unwrap();
    assert_eq!(report.labels.len(), 2);
    for label in &report.labels {
        assert_eq!(label.attrs.len(), 2);
        assert_eq!(label.attrs[1].ea_pairs.len(), 12);
    }
}
