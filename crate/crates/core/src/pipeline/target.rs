use nalgebra::DMatrix;

use super::Method;
use crate::balance::{balance_weights, SampleWeights};
use crate::data::ProtectedAttr;
use crate::error::Result;
use crate::fair_transform::{fair_loss, fit_group_stats, normalize, GroupStats};

/// Training targets and sample weights for one method, fitted on a training
/// sample and reusable to score held-out rows.
#[derive(Clone, Debug)]
pub struct TrainingTarget {
    pub values: DMatrix<f64>,
    pub weights: Option<Vec<f64>>,
    stats: Option<Vec<GroupStats>>,
    balance: Option<SampleWeights>,
}

impl TrainingTarget {
    pub fn fit(method: Method, y: &DMatrix<f64>, attr: &ProtectedAttr) -> Result<Self> {
        let balance = if method.weights_samples() {
            Some(balance_weights(attr)?)
        } else {
            None
        };
        let weights = balance.as_ref().map(|b| b.values.clone());
        let (values, stats) = if method.normalizes_labels() {
            let mut values = DMatrix::zeros(y.nrows(), y.ncols());
            let mut stats = Vec::with_capacity(y.ncols());
            for j in 0..y.ncols() {
                let col: Vec<f64> = y.column(j).iter().copied().collect();
                let s = fit_group_stats(&col, attr, weights.as_deref())?;
                let fair = normalize(&col, attr, &s)?;
                values.set_column(j, &nalgebra::DVector::from_vec(fair.values));
                stats.push(s);
            }
            (values, Some(stats))
        } else {
            (y.clone(), None)
        };
        Ok(TrainingTarget {
            values,
            weights,
            stats,
            balance,
        })
    }

    /// Targets of held-out rows under the fitted statistics.
    pub fn transform(&self, y: &DMatrix<f64>, attr: &ProtectedAttr) -> Result<DMatrix<f64>> {
        let Some(stats) = &self.stats else {
            return Ok(y.clone());
        };
        let mut out = DMatrix::zeros(y.nrows(), y.ncols());
        for (j, s) in stats.iter().enumerate() {
            let col: Vec<f64> = y.column(j).iter().copied().collect();
            out.set_column(j, &nalgebra::DVector::from_vec(normalize(&col, attr, s)?.values));
        }
        Ok(out)
    }

    /// The training criterion on held-out rows, averaged over labels.
    pub fn holdout_loss(&self, y: &DMatrix<f64>, attr: &ProtectedAttr, p: &DMatrix<f64>) -> Result<f64> {
        let target = self.transform(y, attr)?;
        let weights = match &self.balance {
            Some(b) => Some(b.apply_to(attr)?),
            None => None,
        };
        let total: f64 = (0..y.ncols())
            .map(|j| {
                let t: Vec<f64> = target.column(j).iter().copied().collect();
                let pj: Vec<f64> = p.column(j).iter().copied().collect();
                fair_loss(&pj, &t, weights.as_deref())
            })
            .sum();
        Ok(total / y.ncols() as f64)
    }
}
