use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};

/// Smallest acceptable squared Cholesky pivot relative to the largest
/// diagonal entry of `HᵀH + λI`; below this the system is treated as
/// singular.
const PIVOT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct RidgeModel {
    /// `features × targets`.
    pub coefficients: DMatrix<f64>,
    pub lambda: f64,
}

/// `W = (HᵀH + λI)⁻¹HᵀY` by Cholesky factorization, no intercept.
pub fn ridge_fit(h: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<RidgeModel> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if h.nrows() == 0 || h.ncols() == 0 {
        return Err(Error::Parameter(
            "ridge needs at least one row and one feature".into(),
        ));
    }
    if h.nrows() != y.nrows() {
        return Err(Error::dim(format!(
            "{} feature rows but {} target rows",
            h.nrows(),
            y.nrows()
        )));
    }
    let ht = h.transpose();
    let mut gram = &ht * h;
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let scale = gram.diagonal().max();
    let singular = || {
        Error::Numerical(format!(
            "HᵀH + λI is singular at lambda = {lambda}; use lambda > 0"
        ))
    };
    let chol = Cholesky::new(gram).ok_or_else(singular)?;
    let min_pivot = chol.l_dirty().diagonal().map(|d| d * d).min();
    if !(min_pivot > PIVOT_TOL * scale) {
        return Err(singular());
    }
    let coefficients = chol.solve(&(&ht * y));
    if coefficients.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("ridge coefficients are not finite".into()));
    }
    Ok(RidgeModel {
        coefficients,
        lambda,
    })
}

impl RidgeModel {
    pub fn predict(&self, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if h.ncols() != self.coefficients.nrows() {
            return Err(Error::dim(format!(
                "ridge fitted on {} features, got {}",
                self.coefficients.nrows(),
                h.ncols()
            )));
        }
        Ok(h * &self.coefficients)
    }
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2_score(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::dim(format!(
            "{} targets but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.len() < 2 {
        return Err(Error::Parameter("R² needs at least 2 samples".into()));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::Numerical(
            "R² undefined for a constant target".into(),
        ));
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}
