//! Synthetic forward model `x ↦ (image, scalars)`.
//!
//! The image is two rotated anisotropic Gaussian blobs rendered in four
//! energy bands. Radius follows `x[1]`, intensity `x[2]`, orientation and
//! ellipticity `x[4]`. `x[0]` and `x[3]` only enter through perturbations of
//! amplitude [`DEAD_AMPLITUDE`], an order of magnitude below the observation
//! noise, so they cannot be recovered from the outputs.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsh::NUM_SCALARS;

pub const NUM_PARAMS: usize = 5;
pub const NUM_BANDS: usize = 4;
pub const BAND_WEIGHTS: [f64; NUM_BANDS] = [1.0, 0.7, 0.45, 0.25];
/// Fractional blob radius lost per band index.
pub const BAND_SHRINK: f64 = 0.12;
pub const NOISE_STD: f64 = 1e-2;
pub const DEAD_AMPLITUDE: f64 = 1e-3;
pub const SIMULATOR_VERSION: &str = "twin-blob-v1";

/// Parameter sub-range a dataset is drawn from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// The full unit cube.
    #[default]
    Finetune,
    /// `[0, 0.5]^5`, the shifted regime used for backbone pretraining.
    Pretrain,
}

impl Regime {
    pub fn upper(self) -> f64 {
        match self {
            Regime::Finetune => 1.0,
            Regime::Pretrain => 0.5,
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finetune" => Ok(Regime::Finetune),
            "pretrain" => Ok(Regime::Pretrain),
            other => Err(Error::Parameter(format!(
                "unknown regime {other:?} (expected pretrain or finetune)"
            ))),
        }
    }
}

/// Image side length must be a power of two in `[8, 64]`.
pub fn validate_size(size: usize) -> Result<()> {
    if !(8..=64).contains(&size) || !size.is_power_of_two() {
        return Err(Error::Parameter(format!(
            "image size {size} must be a power of two in [8, 64]"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// `size × size × 4`, band index fastest.
    pub image: Vec<f64>,
    pub scalars: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct Simulator {
    size: usize,
}

impl Simulator {
    pub fn new(size: usize) -> Result<Self> {
        validate_size(size)?;
        Ok(Simulator { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn image_len(&self) -> usize {
        self.size * self.size * NUM_BANDS
    }

    /// Noisy observation; deterministic in `(x, noise_seed)`.
    pub fn forward(&self, x: &[f64], noise_seed: u64) -> Result<Observation> {
        let mut obs = self.forward_clean(x)?;
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let noise = Normal::new(0.0, NOISE_STD).expect("positive std");
        for v in &mut obs.image {
            *v = (*v + noise.sample(&mut rng)).max(0.0);
        }
        for v in &mut obs.scalars {
            *v += noise.sample(&mut rng);
        }
        Ok(obs)
    }

    /// Noise-free observation (the image is still non-negative).
    pub fn forward_clean(&self, x: &[f64]) -> Result<Observation> {
        check_params(x)?;
        Ok(Observation {
            image: self.image(x),
            scalars: scalars(x),
        })
    }

    fn image(&self, x: &[f64]) -> Vec<f64> {
        let n = self.size;
        let radius = 0.12 + 0.45 * x[1];
        let intensity = 0.6 + 0.8 * x[2];
        let angle = PI * x[4];
        let stretch = 1.0 + 0.6 * x[4];
        let (sin, cos) = angle.sin_cos();
        let sep = 0.3;
        let blobs = [
            (sep * cos, sep * sin, intensity),
            (-sep * cos, -sep * sin, 0.6 * intensity),
        ];
        let mut out = Vec::with_capacity(self.image_len());
        for i in 0..n {
            let v = -1.0 + (2 * i + 1) as f64 / n as f64;
            for j in 0..n {
                let u = -1.0 + (2 * j + 1) as f64 / n as f64;
                for (b, weight) in BAND_WEIGHTS.iter().enumerate() {
                    let r = radius * (1.0 - BAND_SHRINK * b as f64);
                    let (major, minor) = (r * stretch, r / stretch);
                    let mut value = 0.0;
                    for &(cu, cv, amp) in &blobs {
                        let (du, dv) = (u - cu, v - cv);
                        let along = du * cos + dv * sin;
                        let across = -du * sin + dv * cos;
                        let q = (along / major).powi(2) + (across / minor).powi(2);
                        value += amp * (-0.5 * q).exp();
                    }
                    let dead = dead_pattern(u, v, b);
                    let perturb = DEAD_AMPLITUDE * (x[0] * dead.0 + x[3] * dead.1);
                    out.push((weight * value + perturb).max(0.0));
                }
            }
        }
        out
    }
}

fn check_params(x: &[f64]) -> Result<()> {
    if x.len() != NUM_PARAMS {
        return Err(Error::Parameter(format!(
            "expected {NUM_PARAMS} parameters, got {}",
            x.len()
        )));
    }
    if let Some(bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Parameter(format!(
            "parameter {bad} outside the unit cube"
        )));
    }
    Ok(())
}

/// Bounded (|·| ≤ 1) spatial patterns carrying the two dead parameters.
fn dead_pattern(u: f64, v: f64, band: usize) -> (f64, f64) {
    let phase = band as f64 * 0.7;
    (
        (3.0 * PI * u + phase).cos() * (2.0 * PI * v).cos(),
        (2.0 * PI * (u + v) - phase).sin(),
    )
}

fn scalars(x: &[f64]) -> Vec<f64> {
    let (a, b, c) = (x[1], x[2], x[4]);
    let clean = [
        0.2 + 0.6 * a,
        0.3 + 0.5 * b,
        0.1 + 0.7 * c,
        a * b,
        b * (1.0 - 0.5 * c),
        a * a,
        c.powf(1.5),
        1.0 - (-2.0 * a).exp(),
        1.0 - (-3.0 * b).exp(),
        (-c).exp(),
        a * c,
        0.25 * (a + b).powi(2),
        b * (-a).exp(),
        (2.0 * (c - 0.5)).tanh(),
        a * b * c,
    ];
    debug_assert_eq!(clean.len(), NUM_SCALARS);
    clean
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let t = k as f64;
            let dead = x[0] * (1.3 * t).cos() + x[3] * (0.9 * t + 0.5).sin();
            s + DEAD_AMPLITUDE * dead
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        for ok in [8, 16, 32, 64] {
            assert!(Simulator::new(ok).is_ok());
        }
        for bad in [0, 4, 12, 128] {
            assert!(Simulator::new(bad).is_err());
        }
    }

    #[test]
    fn rejects_parameters_outside_cube() {
        let sim = Simulator::new(8).unwrap();
        assert!(sim.forward(&[0.5, 0.5, 1.1, 0.5, 0.5], 0).is_err());
        assert!(sim.forward(&[0.5; 4], 0).is_err());
        assert!(sim.forward(&[f64::NAN, 0.5, 0.5, 0.5, 0.5], 0).is_err());
    }

    #[test]
    fn regime_parses() {
        assert_eq!("pretrain".parse::<Regime>().unwrap(), Regime::Pretrain);
        assert!("other".parse::<Regime>().is_err());
    }
}
