use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{Backbone, BackboneConfig, FieldShape};
use crate::data::{Dataset, NUM_BANDS, NUM_PARAMS};
use crate::error::{Error, Result};
use crate::tensor::{Binding, Mode, Tape, Tensor, Var};
use crate::tsh::{TaskHead, TshConfig, NUM_SCALARS};

/// ChaCha streams under the run seed. Separate streams keep the head
/// initialization identical whether or not the backbone comes from a
/// checkpoint.
pub(crate) const BACKBONE_INIT_STREAM: u64 = 10;
pub(crate) const HEAD_INIT_STREAM: u64 = 11;
pub(crate) const SHUFFLE_STREAM: u64 = 12;
pub(crate) const DROPOUT_STREAM: u64 = 13;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub tsh: TshConfig,
}

/// Train-split statistics used to standardize head inputs and targets.
/// Constant columns keep a unit scale so they map to 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub scalar_mean: Vec<f64>,
    pub scalar_std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
}

fn column_stats(n: usize, width: usize, get: impl Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; width];
    let mut std = vec![0.0; width];
    for (j, (m, s)) in mean.iter_mut().zip(&mut std).enumerate() {
        *m = (0..n).map(|i| get(i, j)).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (get(i, j) - *m).powi(2)).sum::<f64>() / n as f64;
        *s = if var.sqrt() < crate::sensitivity::CONSTANT_STD {
            1.0
        } else {
            var.sqrt()
        };
    }
    (mean, std)
}

impl Normalizer {
    pub fn fit(train: &Dataset, targets: &[usize]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Parameter(
                "cannot fit a normalizer on no samples".into(),
            ));
        }
        if targets.iter().any(|&t| t >= NUM_PARAMS) {
            return Err(Error::Parameter(format!(
                "target indices {targets:?} out of range"
            )));
        }
        let n = train.len();
        let (scalar_mean, scalar_std) = column_stats(n, NUM_SCALARS, |i, j| train.scalars(i)[j]);
        let (target_mean, target_std) =
            column_stats(n, targets.len(), |i, j| train.params(i)[targets[j]]);
        Ok(Normalizer {
            scalar_mean,
            scalar_std,
            target_mean,
            target_std,
        })
    }

    pub fn scalars(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.scalar_mean.iter().zip(&self.scalar_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn target(&self, j: usize, raw: f64) -> f64 {
        (raw - self.target_mean[j]) / self.target_std[j]
    }

    pub fn untarget(&self, j: usize, standardized: f64) -> f64 {
        standardized * self.target_std[j] + self.target_mean[j]
    }
}

/// One minibatch laid out for the network.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[B, 1, 1, H, W, 4]`.
    pub images: Tensor,
    /// `[B, 15]`, standardized.
    pub scalars: Tensor,
    /// `[B, m]`, standardized.
    pub targets: Tensor,
}

/// Backbone, head, and the normalizer the head was trained with.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub backbone: Backbone,
    pub head: TaskHead,
    pub normalizer: Normalizer,
}

/// Losses and prediction of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub reconstruction: Var,
    pub regression: Option<Var>,
    pub prediction: Option<Var>,
}

impl ModelBundle {
    /// Random initialization from `seed`.
    pub fn new(
        config: ModelConfig,
        size: usize,
        normalizer: Normalizer,
        seed: u64,
    ) -> Result<Self> {
        let field = FieldShape::image(size, size, NUM_BANDS);
        let backbone = Backbone::new(
            config.backbone.clone(),
            field,
            &mut stream_rng(seed, BACKBONE_INIT_STREAM),
        )?;
        let head = TaskHead::new(
            config.tsh.clone(),
            config.backbone.embed_dim,
            &mut stream_rng(seed, HEAD_INIT_STREAM),
        )?;
        if normalizer.target_mean.len() != config.tsh.n_params_out
            || normalizer.scalar_mean.len() != NUM_SCALARS
        {
            return Err(Error::Config(format!(
                "normalizer covers {} targets, head predicts {}",
                normalizer.target_mean.len(),
                config.tsh.n_params_out
            )));
        }
        Ok(ModelBundle {
            config,
            backbone,
            head,
            normalizer,
        })
    }

    pub fn image_size(&self) -> usize {
        self.backbone.field().h
    }

    pub fn targets(&self) -> Vec<usize> {
        self.config.tsh.target_indices()
    }

    pub fn batch(&self, data: &Dataset, indices: &[usize]) -> Result<Batch> {
        if data.size() != self.image_size() {
            return Err(Error::dim(format!(
                "model expects {0}×{0} images, dataset has {1}×{1}",
                self.image_size(),
                data.size()
            )));
        }
        let b = indices.len();
        let s = data.size();
        let targets = self.targets();
        let images = indices
            .iter()
            .flat_map(|&i| data.image(i).iter().copied())
            .collect();
        let scalars = indices
            .iter()
            .flat_map(|&i| self.normalizer.scalars(data.scalars(i)))
            .collect();
        let target_values = indices
            .iter()
            .flat_map(|&i| {
                let x = data.params(i);
                targets
                    .iter()
                    .enumerate()
                    .map(|(j, &t)| self.normalizer.target(j, x[t]))
                    .collect::<Vec<_>>()
            })
            .collect();
        Ok(Batch {
            images: Tensor::new(vec![b, 1, 1, s, s, NUM_BANDS], images)?,
            scalars: Tensor::new(vec![b, NUM_SCALARS], scalars)?,
            targets: Tensor::new(vec![b, targets.len()], target_values)?,
        })
    }

    /// Encode once, then reconstruction loss and (optionally) the head's
    /// regression loss on standardized targets.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        pb: &Binding,
        ph: &Binding,
        batch: &Batch,
        with_head: bool,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Forward> {
        let x = tape.constant(batch.images.clone())?;
        let latents = self.backbone.encode(tape, pb, x, mode, rng)?;
        let recon = self.backbone.reconstruct(tape, pb, latents)?;
        let reconstruction = tape.mse(recon, x)?;
        if !with_head {
            return Ok(Forward {
                reconstruction,
                regression: None,
                prediction: None,
            });
        }
        let s = tape.constant(batch.scalars.clone())?;
        let y = tape.constant(batch.targets.clone())?;
        let prediction = self.head.forward(tape, ph, latents, s, mode, rng)?;
        let regression = tape.mse(prediction, y)?;
        Ok(Forward {
            reconstruction,
            regression: Some(regression),
            prediction: Some(prediction),
        })
    }
}
