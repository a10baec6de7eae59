//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use fairnorm::data::{NoiseFamily, SynthAttribute};
use fairnorm::nalgebra::DMatrix;
use fairnorm::pipeline::{DataSource, ExperimentConfig, Method, TuningConfig, ViewSpec};
use fairnorm::{ForestParams, SynthSpec};

/// Composite Simpson rule with `panels` (even) intervals.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut sum = f(a) + f(b);
    for i in 1..panels {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += weight * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Two-sided Student-t tail by quadrature. With `s = sqrt(df) tan(theta)`
/// the density becomes proportional to `cos(theta)^(df - 1)` on
/// `(-pi/2, pi/2)`, so no gamma function is involved.
pub fn t_two_sided_by_quadrature(t: f64, df: f64) -> f64 {
    let f = |theta: f64| {
        let c = theta.cos();
        if c <= 0.0 {
            0.0
        } else {
            ((df - 1.0) * c.ln()).exp()
        }
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let theta_t = (t.abs() / df.sqrt()).atan();
    let panels = 1 << 18;
    integrate(&f, theta_t, half_pi, panels) / integrate(&f, 0.0, half_pi, panels)
}

/// Weighted ridge weights from the stacked least-squares system
/// `[sqrt(W) X; I / sqrt(C)] w = [sqrt(W) Y; 0]`, solved by SVD.
pub fn ridge_by_svd(x: &DMatrix<f64>, y: &DMatrix<f64>, c: f64, weights: Option<&[f64]>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let mut a = DMatrix::zeros(n + d, d);
    let mut b = DMatrix::zeros(n + d, y.ncols());
    for i in 0..n {
        let s = weights.map_or(1.0, |w| w[i].sqrt());
        for j in 0..d {
            a[(i, j)] = s * x[(i, j)];
        }
        for j in 0..y.ncols() {
            b[(i, j)] = s * y[(i, j)];
        }
    }
    for j in 0..d {
        a[(n + j, j)] = 1.0 / c.sqrt();
    }
    a.svd(true, true).solve(&b, 0.0).expect("svd solve")
}

/// Labelling bias of +0.1 on a 30% minority whose features carry the group.
pub fn biased_spec(seed: u64, n: usize) -> SynthSpec {
    let mut gender = SynthAttribute::uniform("gender", &["F", "M"]);
    gender.proportions = vec![0.7, 0.3];
    gender.label_mean_shift = vec![0.0, 0.1];
    gender.feature_shift = 3.0;
    SynthSpec {
        n,
        d: 8,
        n_labels: 2,
        attributes: vec![gender],
        noise: NoiseFamily::Normal,
        noise_std: 0.2,
        signal_strength: 0.4,
        rows_per_group: 10,
        seed,
    }
}

pub fn experiment(spec: SynthSpec, method: Method, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        data: DataSource::Synthetic {
            spec,
            views: ViewSpec::default(),
        },
        method,
        protected: vec!["gender".into()],
        tuning: TuningConfig::default(),
        stack: ForestParams::default(),
        seed,
        ..Default::default()
    }
}
