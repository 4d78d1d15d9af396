use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensitivity::r2_score;

pub const METRICS_HEADER: &str =
    "epoch,lr_backbone,lr_tsh,backbone_train_mse,backbone_val_mse,tsh_train_mse,tsh_val_mse";

/// One completed epoch. Head columns are NaN for reconstruction-only runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr_backbone: f64,
    pub lr_tsh: f64,
    pub backbone_train_mse: f64,
    pub backbone_val_mse: f64,
    pub tsh_train_mse: f64,
    pub tsh_val_mse: f64,
}

impl EpochMetrics {
    fn values(&self) -> [f64; 6] {
        [
            self.lr_backbone,
            self.lr_tsh,
            self.backbone_train_mse,
            self.backbone_val_mse,
            self.tsh_train_mse,
            self.tsh_val_mse,
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub rows: Vec<EpochMetrics>,
}

impl MetricsLog {
    /// CSV with [`METRICS_HEADER`]; floats use the shortest exact form.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{METRICS_HEADER}\n");
        for row in &self.rows {
            write!(out, "{}", row.epoch).unwrap();
            for v in row.values() {
                write!(out, ",{v:e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Format(format!("metrics csv: {msg}"));
        let mut lines = text.lines();
        if lines.next() != Some(METRICS_HEADER) {
            return Err(bad(format!("header must be {METRICS_HEADER:?}")));
        }
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 7 {
                return Err(bad(format!("expected 7 columns in {line:?}")));
            }
            let epoch = cells[0]
                .parse()
                .map_err(|e| bad(format!("epoch {:?}: {e}", cells[0])))?;
            let v = cells[1..]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| bad(format!("{c:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(EpochMetrics {
                epoch,
                lr_backbone: v[0],
                lr_tsh: v[1],
                backbone_train_mse: v[2],
                backbone_val_mse: v[3],
                tsh_train_mse: v[4],
                tsh_val_mse: v[5],
            });
        }
        Ok(MetricsLog { rows })
    }
}

/// Head outputs against ground truth in raw parameter units, row-major
/// `n × targets.len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub targets: Vec<usize>,
    pub truth: Vec<f64>,
    pub predicted: Vec<f64>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.truth.len() / self.targets.len().max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    fn column(values: &[f64], width: usize, j: usize) -> Vec<f64> {
        values.iter().skip(j).step_by(width).copied().collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample");
        for t in &self.targets {
            write!(out, ",true_param{t},pred_param{t}").unwrap();
        }
        out.push('\n');
        let m = self.targets.len();
        for i in 0..self.len() {
            write!(out, "{i}").unwrap();
            for j in 0..m {
                write!(
                    out,
                    ",{:e},{:e}",
                    self.truth[i * m + j],
                    self.predicted[i * m + j]
                )
                .unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Inverse of [`to_csv`](Self::to_csv).
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Format(format!("prediction csv: {msg}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"sample") || cols.len() % 2 != 1 {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let targets = cols[1..]
            .chunks(2)
            .map(|pair| {
                pair[0]
                    .strip_prefix("true_param")
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(format!("unexpected column {:?}", pair[0])))
            })
            .collect::<Result<Vec<usize>>>()?;
        let (mut truth, mut predicted) = (Vec::new(), Vec::new());
        for line in lines.filter(|l| !l.is_empty()) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != cols.len() {
                return Err(bad(format!("row {line:?} has {} cells", cells.len())));
            }
            for pair in cells[1..].chunks(2) {
                let parse = |c: &str| c.parse::<f64>().map_err(|e| bad(format!("{c:?}: {e}")));
                truth.push(parse(pair[0])?);
                predicted.push(parse(pair[1])?);
            }
        }
        Ok(Predictions {
            targets,
            truth,
            predicted,
        })
    }
}

/// Final evaluation of a model on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub recon_mse: f64,
    /// Mean squared error of standardized targets.
    pub reg_mse: f64,
    pub targets: Vec<usize>,
    /// Per target, in raw units.
    pub r2: Vec<f64>,
    /// `‖ŷ − y‖₂ / ‖y‖₂` per target, in raw units.
    pub rel_l2: Vec<f64>,
}

impl TestMetrics {
    /// Flat map with keys `recon_mse`, `reg_mse`, `r2_param{i}` and
    /// `rel_l2_param{i}`.
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        let mut map = BTreeMap::new();
        map.insert("recon_mse".to_string(), self.recon_mse);
        map.insert("reg_mse".to_string(), self.reg_mse);
        for (k, &t) in self.targets.iter().enumerate() {
            map.insert(format!("r2_param{t}"), self.r2[k]);
            map.insert(format!("rel_l2_param{t}"), self.rel_l2[k]);
        }
        map
    }
}

/// R² and relative L2 per target in raw units, plus the standardized MSE
/// computed with the per-target mean and std the head was trained against.
pub fn regression_metrics(
    pred: &Predictions,
    target_mean: &[f64],
    target_std: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let m = pred.targets.len();
    if m == 0 || pred.truth.len() != pred.predicted.len() || !pred.truth.len().is_multiple_of(m) {
        return Err(Error::dim(format!(
            "{} truths and {} predictions for {m} targets",
            pred.truth.len(),
            pred.predicted.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Parameter("cannot score an empty split".into()));
    }
    if target_std.len() != m || target_mean.len() != m {
        return Err(Error::dim(
            "normalizer does not match the predicted targets".to_string(),
        ));
    }
    let mut r2 = Vec::with_capacity(m);
    let mut rel_l2 = Vec::with_capacity(m);
    let mut sq = 0.0;
    for j in 0..m {
        let y = Predictions::column(&pred.truth, m, j);
        let p = Predictions::column(&pred.predicted, m, j);
        r2.push(r2_score(&y, &p)?);
        let err: f64 = y.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum();
        let norm: f64 = y.iter().map(|a| a * a).sum();
        if norm == 0.0 {
            return Err(Error::Numerical(format!(
                "relative L2 undefined: param{} is all zero",
                pred.targets[j]
            )));
        }
        rel_l2.push((err / norm).sqrt());
        sq += y
            .iter()
            .zip(&p)
            .map(|(a, b)| {
                ((a - target_mean[j]) / target_std[j] - (b - target_mean[j]) / target_std[j])
                    .powi(2)
            })
            .sum::<f64>();
    }
    Ok((r2, rel_l2, sq / pred.truth.len() as f64))
}
