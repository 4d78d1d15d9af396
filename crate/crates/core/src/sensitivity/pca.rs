use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

const SVD_EPS: f64 = f64::EPSILON;
const SVD_MAX_ITER: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    /// `K × p`; orthonormal rows, each with its largest-magnitude entry
    /// positive.
    pub components: DMatrix<f64>,
    /// Population variance along each component, non-increasing.
    pub explained_variance: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Top-`k` right singular vectors of the column-centered matrix.
pub fn pca_fit(z: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    let (n, p) = z.shape();
    if k == 0 || n < 2 || k > (n - 1).min(p) {
        return Err(Error::Parameter(format!(
            "K = {k} outside [1, min(n - 1, p)] for a {n}×{p} matrix"
        )));
    }
    let mean: Vec<f64> = z.column_iter().map(|c| c.sum() / n as f64).collect();
    let mut centered = z.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let svd = SVD::try_new(centered, false, true, SVD_EPS, SVD_MAX_ITER)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let mut components = DMatrix::zeros(k, p);
    let mut explained_variance = Vec::with_capacity(k);
    for (row, &src) in order.iter().take(k).enumerate() {
        let mut v = v_t.row(src).transpose();
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        components.set_row(row, &v.transpose());
        explained_variance.push(svd.singular_values[src].powi(2) / n as f64);
    }
    Ok(PcaModel {
        components,
        explained_variance,
        mean,
    })
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn width(&self) -> usize {
        self.components.ncols()
    }

    /// Scores of one row: `(row − mean)·componentsᵀ`.
    pub fn project_row(&self, row: &[f64]) -> Result<DVector<f64>> {
        if row.len() != self.width() {
            return Err(Error::dim(format!(
                "PCA fitted on width {}, got {}",
                self.width(),
                row.len()
            )));
        }
        let centered =
            DVector::from_iterator(row.len(), row.iter().zip(&self.mean).map(|(v, m)| v - m));
        Ok(&self.components * centered)
    }

    /// Scores of every row, `n × K`.
    pub fn project(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.ncols() != self.width() {
            return Err(Error::dim(format!(
                "PCA fitted on width {}, got {}",
                self.width(),
                z.ncols()
            )));
        }
        let mut centered = z.clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.mean[j]);
        }
        Ok(centered * self.components.transpose())
    }

    /// Map scores back to feature space: `scores·components + mean`.
    pub fn back_project(&self, scores: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if scores.ncols() != self.k() {
            return Err(Error::dim(format!(
                "expected {} scores per row, got {}",
                self.k(),
                scores.ncols()
            )));
        }
        let mut x = scores * &self.components;
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.mean[j]);
        }
        Ok(x)
    }
}

/// Free-function form of [`PcaModel::project_row`].
pub fn pca_project(row: &[f64], model: &PcaModel) -> Result<DVector<f64>> {
    model.project_row(row)
}
