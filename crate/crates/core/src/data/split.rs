use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ALLOWED_FRACTIONS: [f64; 6] = [0.05, 0.10, 0.25, 0.50, 0.75, 1.00];

/// ChaCha streams keep the split shuffle and the subsample shuffle
/// independent when they share a seed.
const SPLIT_STREAM: u64 = 1;
const SUBSAMPLE_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub seed: u64,
    /// `(train, val, test)`.
    pub ratios: [f64; 3],
    pub fraction: Option<f64>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            seed: 0,
            ratios: [0.8, 0.1, 0.1],
            fraction: None,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let [a, b, c] = self.ratios;
        if self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || ((a + b + c) - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split ratios {:?} must be non-negative and sum to 1",
                self.ratios
            )));
        }
        if let Some(f) = self.fraction {
            check_fraction(f)?;
        }
        Ok(())
    }
}

pub fn check_fraction(f: f64) -> Result<()> {
    if ALLOWED_FRACTIONS.iter().any(|a| (a - f).abs() < 1e-12) {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "fraction {f} not in {ALLOWED_FRACTIONS:?}"
        )))
    }
}

/// Disjoint sample-index partitions of one dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn shuffled(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Seeded shuffle of `0..n`, cut into contiguous train/val/test blocks of
/// `floor(r·n)` train and val samples; test takes the remainder. The train
/// split is then subsampled when the spec carries a fraction.
pub fn split(n: usize, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let order = shuffled(n, spec.seed, SPLIT_STREAM);
    let n_train = (spec.ratios[0] * n as f64 + 1e-9).floor() as usize;
    let n_val = (spec.ratios[1] * n as f64 + 1e-9).floor() as usize;
    let train = order[..n_train].to_vec();
    let val = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..].to_vec();
    let train = match spec.fraction {
        Some(f) => subsample(&train, f, spec.seed)?,
        None => train,
    };
    Ok(Splits { train, val, test })
}

/// First `ceil(fraction·len)` entries of a seeded shuffle of `train`, so for
/// a fixed seed smaller fractions are prefixes of larger ones.
pub fn subsample(train: &[usize], fraction: f64, seed: u64) -> Result<Vec<usize>> {
    check_fraction(fraction)?;
    let order = shuffled(train.len(), seed, SUBSAMPLE_STREAM);
    let keep = ((fraction * train.len() as f64) - 1e-9).ceil() as usize;
    Ok(order[..keep].iter().map(|&i| train[i]).collect())
}

/// 50/50 seeded partition used by the sensitivity analysis: the first
/// `ceil(n/2)` shuffled indices fit, the rest are held out.
pub fn halves(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let order = shuffled(n, seed, SPLIT_STREAM);
    let cut = n.div_ceil(2);
    (order[..cut].to_vec(), order[cut..].to_vec())
}
