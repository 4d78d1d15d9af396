use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::pca::pca_fit;
use super::ridge::{r2_score, ridge_fit};
use super::standardize::StandardizationStats;
use crate::data::{halves, Dataset, NUM_PARAMS};
use crate::error::{Error, Result};
use crate::tsh::NUM_SCALARS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityConfig {
    pub k: usize,
    pub lambda: f64,
    pub r2_threshold: f64,
    /// Seed of the 50/50 fit/held-out shuffle.
    pub seed: u64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig {
            k: 32,
            lambda: 1.0,
            r2_threshold: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// `PC1..PCK` then `scalar0..scalar14`.
    pub feature_labels: Vec<String>,
    pub target_labels: Vec<String>,
    /// Row per feature, column per target.
    pub coefficients: Vec<Vec<f64>>,
    pub held_out_r2: Vec<f64>,
    /// True when held-out R² is below the threshold.
    pub weakly_identifiable: Vec<bool>,
    pub k: usize,
    pub lambda: f64,
    pub r2_threshold: f64,
    pub seed: u64,
    pub n_fit: usize,
    pub n_held_out: usize,
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

/// `(images n×p, scalars n×15, params n×5)` as dense matrices.
pub fn dataset_matrices(dataset: &Dataset) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = dataset.len();
    (
        DMatrix::from_row_slice(n, dataset.image_len(), dataset.all_images()),
        DMatrix::from_row_slice(n, NUM_SCALARS, dataset.all_scalars()),
        DMatrix::from_row_slice(n, NUM_PARAMS, dataset.all_params()),
    )
}

/// Full pipeline on a dataset, regressing all five parameters.
pub fn build_report(dataset: &Dataset, config: &SensitivityConfig) -> Result<SensitivityReport> {
    let (images, scalars, params) = dataset_matrices(dataset);
    let labels = (0..NUM_PARAMS).map(|j| format!("param{j}")).collect();
    build_report_from_matrices(&images, &scalars, &params, labels, config)
}

/// Pipeline on raw matrices with one row per sample: vectorized images
/// (`n × p`), scalars (`n × 15`) and targets (`n × m`).
///
/// Every transform (image standardization, PCA, score and scalar
/// standardization, target standardization) is fitted on the fit half only
/// and then applied to the held-out half.
pub fn build_report_from_matrices(
    images: &DMatrix<f64>,
    scalars: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    target_labels: Vec<String>,
    config: &SensitivityConfig,
) -> Result<SensitivityReport> {
    let n = images.nrows();
    if scalars.nrows() != n || scalars.ncols() != NUM_SCALARS {
        return Err(Error::dim(format!(
            "scalars are {}×{}, expected {n}×{NUM_SCALARS}",
            scalars.nrows(),
            scalars.ncols()
        )));
    }
    if targets.nrows() != n || targets.ncols() != target_labels.len() {
        return Err(Error::dim(format!(
            "targets are {}×{}, expected {n}×{}",
            targets.nrows(),
            targets.ncols(),
            target_labels.len()
        )));
    }
    if !(config.lambda >= 0.0) {
        return Err(Error::Parameter(format!(
            "lambda must be >= 0, got {}",
            config.lambda
        )));
    }
    if n < 4 {
        return Err(Error::Parameter(format!(
            "sensitivity needs at least 4 samples, got {n}"
        )));
    }
    let (fit, held) = halves(n, config.seed);
    let p = images.ncols();
    let k = config.k;
    if k == 0 || k > (fit.len() - 1).min(p) {
        return Err(Error::Parameter(format!(
            "K = {k} outside [1, {}] for {} fit samples of width {p}",
            (fit.len() - 1).min(p),
            fit.len()
        )));
    }

    let (img_fit, img_held) = (select_rows(images, &fit), select_rows(images, &held));
    let img_stats = StandardizationStats::fit(&img_fit)?;
    let pca = pca_fit(&img_stats.apply(&img_fit)?, k)?;
    let scores_fit = pca.project(&img_stats.apply(&img_fit)?)?;
    let scores_held = pca.project(&img_stats.apply(&img_held)?)?;
    let score_stats = StandardizationStats::fit(&scores_fit)?;
    let (sc_fit, sc_held) = (select_rows(scalars, &fit), select_rows(scalars, &held));
    let sc_stats = StandardizationStats::fit(&sc_fit)?;
    let features = |scores: &DMatrix<f64>, sc: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let (z, s) = (score_stats.apply(scores)?, sc_stats.apply(sc)?);
        let mut h = DMatrix::zeros(z.nrows(), k + NUM_SCALARS);
        h.columns_mut(0, k).copy_from(&z);
        h.columns_mut(k, NUM_SCALARS).copy_from(&s);
        Ok(h)
    };
    let h_fit = features(&scores_fit, &sc_fit)?;
    let h_held = features(&scores_held, &sc_held)?;

    let (y_fit, y_held) = (select_rows(targets, &fit), select_rows(targets, &held));
    let y_stats = StandardizationStats::fit(&y_fit)?;
    let ridge = ridge_fit(&h_fit, &y_stats.apply(&y_fit)?, config.lambda)?;
    let pred = ridge.predict(&h_held)?;
    let y_held_std = y_stats.apply(&y_held)?;
    let held_out_r2 = (0..targets.ncols())
        .map(|j| {
            let (truth, guess) = (y_held_std.column(j), pred.column(j));
            r2_score(truth.as_slice(), guess.as_slice())
                .map_err(|e| Error::Numerical(format!("{}: {e}", target_labels[j])))
        })
        .collect::<Result<Vec<f64>>>()?;

    let feature_labels = (1..=k)
        .map(|i| format!("PC{i}"))
        .chain((0..NUM_SCALARS).map(|i| format!("scalar{i}")))
        .collect();
    let coefficients = ridge
        .coefficients
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    Ok(SensitivityReport {
        feature_labels,
        target_labels,
        coefficients,
        weakly_identifiable: held_out_r2
            .iter()
            .map(|&r| r < config.r2_threshold)
            .collect(),
        held_out_r2,
        k,
        lambda: config.lambda,
        r2_threshold: config.r2_threshold,
        seed: config.seed,
        n_fit: fit.len(),
        n_held_out: held.len(),
    })
}

impl SensitivityReport {
    /// Indices of weakly identifiable targets.
    pub fn flagged(&self) -> Vec<usize> {
        (0..self.weakly_identifiable.len())
            .filter(|&j| self.weakly_identifiable[j])
            .collect()
    }

    /// Rows are features, columns targets; the final `r2` row holds the
    /// held-out R² per target.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature");
        for t in &self.target_labels {
            write!(out, ",{t}").unwrap();
        }
        out.push('\n');
        let rows = self.feature_labels.iter().zip(&self.coefficients);
        for (label, row) in rows.chain(std::iter::once((&"r2".to_string(), &self.held_out_r2))) {
            out.push_str(label);
            for v in row {
                write!(out, ",{v:e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Parse the output of [`to_csv`](Self::to_csv) into labels, coefficient
    /// rows and the R² row.
    pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<String>, Vec<Vec<f64>>, Vec<f64>)> {
        let bad = |msg: String| Error::Format(format!("sensitivity csv: {msg}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty".into()))?;
        let mut cols = header.split(',');
        if cols.next() != Some("feature") {
            return Err(bad("header must start with `feature`".into()));
        }
        let targets: Vec<String> = cols.map(str::to_string).collect();
        let mut features = Vec::new();
        let mut rows = Vec::new();
        let mut r2 = None;
        for line in lines.filter(|l| !l.is_empty()) {
            let mut cells = line.split(',');
            let label = cells.next().unwrap_or_default().to_string();
            let values = cells
                .map(|c| c.parse::<f64>().map_err(|e| bad(format!("{c:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != targets.len() {
                return Err(bad(format!("row {label} has {} values", values.len())));
            }
            if label == "r2" {
                r2 = Some(values);
            } else {
                features.push(label);
                rows.push(values);
            }
        }
        let r2 = r2.ok_or_else(|| bad("missing r2 row".into()))?;
        Ok((features, targets, rows, r2))
    }
}
