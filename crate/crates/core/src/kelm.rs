//! Kernel extreme learning machine regression.
//!
//! Coefficients solve `(I/C + K) beta = Y` with `K = K(X_o, X_o)`, and a new
//! matrix `X` is predicted as `K(X, X_o) beta`. With sample weights the kernel
//! becomes `K(A, B) = A B^T Omega` (`Omega = diag(w)`), so `beta` solves
//! `(I/C + X_o X_o^T Omega) beta = Y` and predictions are
//! `X X_o^T Omega beta`, the minimizer of
//! `(Y - X b)^T Omega (Y - X b) + b^T b / C`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    #[default]
    Linear,
}

impl KernelSpec {
    /// Unweighted kernel matrix between the rows of `a` and `b`.
    pub fn gram(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            KernelSpec::Linear => a * b.transpose(),
        }
    }

    /// True when the kernel has an explicit finite feature map (`K = A B^T`).
    pub fn is_linear(&self) -> bool {
        matches!(self, KernelSpec::Linear)
    }
}

/// How the coefficients are computed. Both routes give the same model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Primal when the kernel is linear and there are fewer features than
    /// samples, dual otherwise.
    #[default]
    Auto,
    /// Factorize the n x n system: Cholesky when unweighted, LU when weighted.
    Dual,
    /// Solve the d x d system `(X^T Omega X + I/C) w = X^T Omega Y`, then
    /// recover `beta = C (Y - X w)`. Linear kernel only.
    Primal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KelmModel {
    pub train_features: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    pub c: f64,
    pub kernel: KernelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

/// Ratio beyond which a factorized system counts as singular.
fn max_condition() -> f64 {
    1.0 / f64::EPSILON
}

fn diag_condition(diag: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = diag.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
        let v = v.abs();
        (lo.min(v), hi.max(v))
    });
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

fn validate(x: &DMatrix<f64>, y: &DMatrix<f64>, c: f64, weights: Option<&[f64]>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("KELM needs at least one training row".into()));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!("{} feature rows, {} target rows", x.nrows(), y.nrows())));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidArgument(format!("C must be positive and finite, got {c}")));
    }
    if let Some(w) = weights {
        if w.len() != x.nrows() {
            return Err(Error::Shape(format!("{} weights for {} rows", w.len(), x.nrows())));
        }
        if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("weights must be positive and finite".into()));
        }
    }
    Ok(())
}

fn solve_dual(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    c: f64,
    kernel: KernelSpec,
    weights: Option<&[f64]>,
) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let mut system = kernel.gram(x, x);
    match weights {
        None => {
            for i in 0..n {
                system[(i, i)] += 1.0 / c;
            }
            let chol = system
                .cholesky()
                .ok_or(Error::Singular { condition: f64::INFINITY })?;
            let l = chol.l_dirty();
            let condition = diag_condition(l.diagonal().iter().copied()).powi(2);
            if condition > max_condition() {
                return Err(Error::Singular { condition });
            }
            Ok(chol.solve(y))
        }
        Some(w) => {
            for (j, mut col) in system.column_iter_mut().enumerate() {
                col *= w[j];
            }
            for i in 0..n {
                system[(i, i)] += 1.0 / c;
            }
            let lu = system.lu();
            let condition = diag_condition(lu.u().diagonal().iter().copied());
            if condition > max_condition() {
                return Err(Error::Singular { condition });
            }
            lu.solve(y).ok_or(Error::Singular { condition: f64::INFINITY })
        }
    }
}

fn solve_primal(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    c: f64,
    weights: Option<&[f64]>,
) -> Result<DMatrix<f64>> {
    let weighted_x = match weights {
        None => x.clone(),
        Some(w) => {
            let mut wx = x.clone();
            for (i, mut row) in wx.row_iter_mut().enumerate() {
                row *= w[i];
            }
            wx
        }
    };
    let mut gram = weighted_x.transpose() * x;
    for i in 0..gram.nrows() {
        gram[(i, i)] += 1.0 / c;
    }
    let rhs = weighted_x.transpose() * y;
    let chol = gram
        .cholesky()
        .ok_or(Error::Singular { condition: f64::INFINITY })?;
    let condition = diag_condition(chol.l_dirty().diagonal().iter().copied()).powi(2);
    if condition > max_condition() {
        return Err(Error::Singular { condition });
    }
    let w = chol.solve(&rhs);
    Ok((y - x * w) * c)
}

impl KelmModel {
    pub fn fit(
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        c: f64,
        kernel: KernelSpec,
        weights: Option<&[f64]>,
        solver: Solver,
    ) -> Result<Self> {
        validate(x, y, c, weights)?;
        let primal = match solver {
            Solver::Auto => kernel.is_linear() && x.ncols() < x.nrows(),
            Solver::Dual => false,
            Solver::Primal if kernel.is_linear() => true,
            Solver::Primal => {
                return Err(Error::InvalidArgument("primal solver needs a linear kernel".into()))
            }
        };
        let beta = if primal {
            solve_primal(x, y, c, weights)?
        } else {
            solve_dual(x, y, c, kernel, weights)?
        };
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular { condition: f64::INFINITY });
        }
        Ok(KelmModel {
            train_features: x.clone(),
            beta,
            c,
            kernel,
            weights: weights.map(<[f64]>::to_vec),
        })
    }

    /// `Omega beta`, the coefficients that multiply the unweighted kernel.
    fn effective_beta(&self) -> DMatrix<f64> {
        match &self.weights {
            None => self.beta.clone(),
            Some(w) => {
                let mut b = self.beta.clone();
                for (i, mut row) in b.row_iter_mut().enumerate() {
                    row *= w[i];
                }
                b
            }
        }
    }

    /// Explicit `d x L` weight matrix `X_o^T Omega beta` (linear kernel only).
    pub fn primal_weights(&self) -> Option<DMatrix<f64>> {
        self.kernel
            .is_linear()
            .then(|| self.train_features.transpose() * self.effective_beta())
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.train_features.ncols() {
            return Err(Error::Shape(format!(
                "model trained on {} features, got {}",
                self.train_features.ncols(),
                x.ncols()
            )));
        }
        Ok(match self.primal_weights() {
            Some(w) => x * w,
            None => self.kernel.gram(x, &self.train_features) * self.effective_beta(),
        })
    }

    pub fn n_outputs(&self) -> usize {
        self.beta.ncols()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn kelm_fit(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    c: f64,
    kernel: KernelSpec,
    weights: Option<&[f64]>,
) -> Result<KelmModel> {
    KelmModel::fit(x, y, c, kernel, weights, Solver::Auto)
}

pub fn kelm_predict(model: &KelmModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    model.predict(x)
}

/// Column vector helper for single-label targets.
pub fn column(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(values.len(), 1, values)
}

/// The weighted ridge objective `(Y - X b)^T Omega (Y - X b) + b^T b / C`,
/// summed over output columns, for an explicit primal coefficient matrix.
pub fn weighted_ridge_objective(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: f64,
    weights: Option<&[f64]>,
) -> f64 {
    let residual = y - x * b;
    let w = weights.map_or_else(|| DVector::from_element(x.nrows(), 1.0), DVector::from_column_slice);
    let fit: f64 = residual
        .row_iter()
        .zip(w.iter())
        .map(|(row, wi)| wi * row.norm_squared())
        .sum();
    fit + b.norm_squared() / c
}
