use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column linear map onto [0, 1] fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(train: &DMatrix<f64>) -> Result<Self> {
        if train.nrows() == 0 {
            return Err(Error::InvalidArgument("cannot fit a scaler on zero rows".into()));
        }
        let (min, max) = train
            .column_iter()
            .map(|col| (col.min(), col.max()))
            .unzip();
        Ok(MinMaxScaler { min, max })
    }

    /// Values outside the training range are not clipped. Constant training
    /// columns map to 0.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.min.len() {
            return Err(Error::Shape(format!(
                "scaler fitted on {} columns, got {}",
                self.min.len(),
                x.ncols()
            )));
        }
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (lo, range) = (self.min[j], self.max[j] - self.min[j]);
            if range > 0.0 {
                col.iter_mut().for_each(|v| *v = (*v - lo) / range);
            } else {
                col.fill(0.0);
            }
        }
        Ok(out)
    }
}

/// Fits on `train`, then scales both `train` and `apply` with the same map.
pub fn minmax_fit_transform(
    train: &DMatrix<f64>,
    apply: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, MinMaxScaler)> {
    let scaler = MinMaxScaler::fit(train)?;
    Ok((scaler.transform(train)?, scaler.transform(apply)?, scaler))
}
