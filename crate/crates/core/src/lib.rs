//! Fair regression toolkit.
//!
//! The central method rewrites training targets per protected group so that
//! every group shares the global mean and standard deviation
//! ([`fair_transform::normalize`]). A model trained on the rewritten targets
//! minimizes the ordinary squared error plus twice the covariance between its
//! predictions and the per-sample label bias, which
//! [`fair_transform::loss_decomposition`] exposes as an exact identity.
//!
//! Around it sit the pieces needed to evaluate the method end to end:
//!
//! * [`data`]: datasets, CSV ingestion, scaling and a synthetic generator
//!   with controllable labelling and sampling bias.
//! * [`balance`]: inverse-frequency sample weights.
//! * [`kelm`]: kernel extreme learning machine (kernel ridge) regression,
//!   including the sample-weighted kernel.
//! * [`forest`]: random-forest regressor used to stack per-view predictions.
//! * [`adversarial`]: filter / predictor / discriminator baseline.
//! * [`metrics`]: MAA, equal accuracy, indicator correlation with t-test
//!   significance, and kNN mutual information.
//! * [`tuning`]: group k-fold plans and log-uniform random search.
//! * [`pipeline`]: experiment orchestration and the skewness Monte Carlo.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod adversarial;
pub mod balance;
pub mod data;
pub mod error;
pub mod fair_transform;
pub mod forest;
pub mod kelm;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod tuning;

pub use balance::{balance_weights, SampleWeights};
pub use data::{
    cross_protected, load_csv, minmax_fit_transform, synthesize, Dataset, Manifest, MinMaxScaler,
    ProtectedAttr, SynthSpec,
};
pub use error::{Error, Result};
pub use fair_transform::{fit_group_stats, normalize, FairLabels, GroupStats};
pub use forest::{ForestModel, ForestParams};
pub use nalgebra;

pub use adversarial::{AdvConfig, AdvTrace, MlpParams};
pub use kelm::{KelmModel, KernelSpec};
pub use metrics::FairnessReport;
pub use pipeline::{run_experiment, ExperimentConfig, Method};
pub use tuning::{group_kfold, FoldPlan, SearchSpace};

/// Formats a float with 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}
