//! Task-specific head: regresses system parameters from backbone latents
//! fused with the scalar diagnostics.
//!
//! Image path: the `[N, E]` token sequence is read as a 1-D signal with `E`
//! channels, passed through two (conv1d → GELU → dropout) blocks, mean-pooled
//! over the sequence, then two (linear → GELU → dropout) blocks. Scalar path:
//! two linear+GELU layers. The two feature vectors are concatenated and
//! projected to the parameter estimates.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Binding, Mode, ParamId, ParamStore, Tape, Tensor, Var};

pub const NUM_SCALARS: usize = 15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TshConfig {
    pub conv_channels: usize,
    pub conv_kernel: usize,
    pub dense_dims: [usize; 2],
    pub scalar_mlp_dims: [usize; 2],
    pub dropout_rate: f64,
    pub n_params_out: usize,
}

impl Default for TshConfig {
    fn default() -> Self {
        TshConfig {
            conv_channels: 32,
            conv_kernel: 3,
            dense_dims: [64, 32],
            scalar_mlp_dims: [32, 16],
            dropout_rate: 0.1,
            n_params_out: 3,
        }
    }
}

impl TshConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.n_params_out, 3 | 5) {
            return Err(Error::Config(format!(
                "n_params_out must be 3 or 5, got {}",
                self.n_params_out
            )));
        }
        let widths = [
            self.conv_channels,
            self.conv_kernel,
            self.dense_dims[0],
            self.dense_dims[1],
            self.scalar_mlp_dims[0],
            self.scalar_mlp_dims[1],
        ];
        if widths.contains(&0) {
            return Err(Error::Config(format!("head widths must be >= 1: {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Which of the five simulator parameters the head predicts.
    pub fn target_indices(&self) -> Vec<usize> {
        if self.n_params_out == 5 {
            (0..5).collect()
        } else {
            vec![1, 2, 4]
        }
    }
}

/// Uniform(±1/√fan_in) for both weights and biases.
fn fan_in_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect()).expect("shape matches")
}

#[derive(Clone, Debug)]
struct Layout {
    conv1: (ParamId, ParamId),
    conv2: (ParamId, ParamId),
    dense1: (ParamId, ParamId),
    dense2: (ParamId, ParamId),
    scalar1: (ParamId, ParamId),
    scalar2: (ParamId, ParamId),
    project: (ParamId, ParamId),
}

#[derive(Clone, Debug)]
pub struct TaskHead {
    config: TshConfig,
    embed_dim: usize,
    pub params: ParamStore,
    layout: Layout,
}

impl TaskHead {
    pub fn new<R: Rng + ?Sized>(config: TshConfig, embed_dim: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if embed_dim == 0 {
            return Err(Error::Config("embed_dim must be >= 1".into()));
        }
        let c = &config;
        let k = c.conv_kernel;
        let cc = c.conv_channels;
        let [d0, d1] = c.dense_dims;
        let [s0, s1] = c.scalar_mlp_dims;
        let mut store = ParamStore::new();
        let mut layer =
            |store: &mut ParamStore, name: &str, wshape: &[usize], fan_in: usize, out: usize| {
                let w = store.add(
                    format!("{name}.weight"),
                    fan_in_uniform(wshape, fan_in, rng),
                );
                let b = store.add(format!("{name}.bias"), fan_in_uniform(&[out], fan_in, rng));
                (w, b)
            };
        let conv1 = layer(
            &mut store,
            "image.conv1",
            &[cc, embed_dim, k],
            embed_dim * k,
            cc,
        );
        let conv2 = layer(&mut store, "image.conv2", &[cc, cc, k], cc * k, cc);
        let dense1 = layer(&mut store, "image.dense1", &[cc, d0], cc, d0);
        let dense2 = layer(&mut store, "image.dense2", &[d0, d1], d0, d1);
        let scalar1 = layer(
            &mut store,
            "scalar.fc1",
            &[NUM_SCALARS, s0],
            NUM_SCALARS,
            s0,
        );
        let scalar2 = layer(&mut store, "scalar.fc2", &[s0, s1], s0, s1);
        let project = layer(
            &mut store,
            "project",
            &[d1 + s1, c.n_params_out],
            d1 + s1,
            c.n_params_out,
        );
        Ok(TaskHead {
            config,
            embed_dim,
            params: store,
            layout: Layout {
                conv1,
                conv2,
                dense1,
                dense2,
                scalar1,
                scalar2,
                project,
            },
        })
    }

    pub fn config(&self) -> &TshConfig {
        &self.config
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Latents `[B, N, E]` → image features `[B, dense_dims[1]]`.
    pub fn image_path<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        p: &Binding,
        latents: Var,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let s = tape.shape(latents).to_vec();
        if s.len() != 3 || s[2] != self.embed_dim {
            return Err(Error::dim(format!(
                "head expects [B, N, {}] latents, got {s:?}",
                self.embed_dim
            )));
        }
        let k = self.config.conv_kernel;
        // two valid convolutions shorten the sequence by 2(k - 1)
        if s[1] < 2 * k - 1 {
            return Err(Error::dim(format!(
                "{} tokens too few for two convolutions of width {k}",
                s[1]
            )));
        }
        let rate = self.config.dropout_rate;
        let l = &self.layout;
        let x = tape.permute(latents, &[0, 2, 1])?;
        let x = tape.conv(x, p[l.conv1.0], Some(p[l.conv1.1]), 1, 1, 0)?;
        let x = tape.gelu(x)?;
        let x = tape.dropout(x, rate, mode, rng)?;
        let x = tape.conv(x, p[l.conv2.0], Some(p[l.conv2.1]), 1, 1, 0)?;
        let x = tape.gelu(x)?;
        let x = tape.dropout(x, rate, mode, rng)?;
        let x = tape.mean_axis(x, 2)?;
        let x = tape.linear(x, p[l.dense1.0], Some(p[l.dense1.1]))?;
        let x = tape.gelu(x)?;
        let x = tape.dropout(x, rate, mode, rng)?;
        let x = tape.linear(x, p[l.dense2.0], Some(p[l.dense2.1]))?;
        let x = tape.gelu(x)?;
        tape.dropout(x, rate, mode, rng)
    }

    /// Scalar diagnostics `[B, 15]` → features `[B, scalar_mlp_dims[1]]`.
    pub fn scalar_path(&self, tape: &mut Tape, p: &Binding, scalars: Var) -> Result<Var> {
        let s = tape.shape(scalars);
        if s.len() != 2 || s[1] != NUM_SCALARS {
            return Err(Error::dim(format!(
                "head expects [B, {NUM_SCALARS}] scalars, got {s:?}"
            )));
        }
        let l = &self.layout;
        let x = tape.linear(scalars, p[l.scalar1.0], Some(p[l.scalar1.1]))?;
        let x = tape.gelu(x)?;
        let x = tape.linear(x, p[l.scalar2.0], Some(p[l.scalar2.1]))?;
        tape.gelu(x)
    }

    /// Concatenate both feature vectors and project to `[B, n_params_out]`.
    pub fn fuse_project(
        &self,
        tape: &mut Tape,
        p: &Binding,
        image: Var,
        scalar: Var,
    ) -> Result<Var> {
        let (si, ss) = (tape.shape(image).to_vec(), tape.shape(scalar).to_vec());
        let ok = si.len() == 2
            && ss.len() == 2
            && si[0] == ss[0]
            && si[1] == self.config.dense_dims[1]
            && ss[1] == self.config.scalar_mlp_dims[1];
        if !ok {
            return Err(Error::dim(format!(
                "fuse expects [B, {}] and [B, {}], got {si:?} and {ss:?}",
                self.config.dense_dims[1], self.config.scalar_mlp_dims[1]
            )));
        }
        let fused = tape.concat(&[image, scalar], 1)?;
        let l = &self.layout;
        tape.linear(fused, p[l.project.0], Some(p[l.project.1]))
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        p: &Binding,
        latents: Var,
        scalars: Var,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let image = self.image_path(tape, p, latents, mode, rng)?;
        let scalar = self.scalar_path(tape, p, scalars)?;
        self.fuse_project(tape, p, image, scalar)
    }
}
