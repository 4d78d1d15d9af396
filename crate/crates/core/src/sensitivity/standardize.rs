use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns whose population std falls below this are treated as constant.
pub const CONSTANT_STD: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    /// Population standard deviation (divides by n).
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

impl StandardizationStats {
    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::Parameter(format!(
                "standardization needs at least 2 rows, got {n}"
            )));
        }
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
            mean.push(m);
            std.push(var.sqrt());
        }
        let constant = std.iter().map(|&s| s < CONSTANT_STD).collect();
        Ok(StandardizationStats {
            mean,
            std,
            constant,
        })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// `(x − mean) / std`, with constant columns mapped to 0.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.width() {
            return Err(Error::dim(format!(
                "standardization fitted on {} columns, got {}",
                self.width(),
                x.ncols()
            )));
        }
        let mut z = x.clone();
        for (j, mut col) in z.column_iter_mut().enumerate() {
            if self.constant[j] {
                col.fill(0.0);
            } else {
                let (m, s) = (self.mean[j], self.std[j]);
                col.apply(|v| *v = (*v - m) / s);
            }
        }
        Ok(z)
    }

    /// Inverse of [`apply`](Self::apply) for non-constant columns; constant
    /// columns come back as their mean.
    pub fn invert(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.ncols() != self.width() {
            return Err(Error::dim(format!(
                "standardization fitted on {} columns, got {}",
                self.width(),
                z.ncols()
            )));
        }
        let mut x = z.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let (m, s) = (
                self.mean[j],
                if self.constant[j] { 0.0 } else { self.std[j] },
            );
            col.apply(|v| *v = *v * s + m);
        }
        Ok(x)
    }
}

/// Fit column statistics on `x` and return the standardized matrix.
pub fn standardize_fit_apply(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, StandardizationStats)> {
    let stats = StandardizationStats::fit(x)?;
    let z = stats.apply(x)?;
    Ok((z, stats))
}
