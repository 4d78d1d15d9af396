//! Finite-difference suites shared by the unit-level gradient tests and the
//! acceptance run: every differentiable op, and the full backbone plus head
//! composite, each over 100 random seeds.

#![allow(dead_code)]

use icfinv_core::backbone::{Backbone, BackboneConfig, FieldShape};
use icfinv_core::tensor::{Binding, Mode, Tape, Tensor, Var};
use icfinv_core::tsh::{TaskHead, TshConfig, NUM_SCALARS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{self, Loss, STEP};

pub const SEEDS: u64 = 100;
pub const TOL: f64 = 1e-4;

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

pub fn image_batch(b: usize, field: FieldShape, rng: &mut ChaCha8Rng) -> Tensor {
    let mut dims = vec![b];
    dims.extend(field.dims());
    random(&dims, rng)
}

pub fn tiny_config() -> BackboneConfig {
    BackboneConfig {
        patch_size: [2, 2],
        embed_dim: 8,
        depth: 1,
        heads: 2,
        mlp_ratio: 2,
        dropout_rate: 0.0,
    }
}

pub fn tiny_head_config() -> TshConfig {
    TshConfig {
        conv_channels: 4,
        conv_kernel: 3,
        dense_dims: [6, 5],
        scalar_mlp_dims: [5, 4],
        dropout_rate: 0.0,
        n_params_out: 3,
    }
}

/// Reduce an op output to a scalar through random weights so every output
/// entry matters.
fn weighted(tape: &mut Tape, y: Var, w: Var) -> icfinv_core::Result<Var> {
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

pub struct OpCase {
    pub name: &'static str,
    pub shapes: Vec<Vec<usize>>,
    pub loss: Box<Loss<'static>>,
}

fn case(
    name: &'static str,
    shapes: &[&[usize]],
    loss: impl Fn(&mut Tape, &[Var]) -> icfinv_core::Result<Var> + 'static,
) -> OpCase {
    OpCase {
        name,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        loss: Box::new(loss),
    }
}

pub fn op_cases() -> Vec<OpCase> {
    vec![
        case("add", &[&[3, 4], &[3, 4], &[3, 4]], |t, v| {
            let y = t.add(v[0], v[1])?;
            weighted(t, y, v[2])
        }),
        case("sub", &[&[3, 4], &[3, 4], &[3, 4]], |t, v| {
            let y = t.sub(v[0], v[1])?;
            weighted(t, y, v[2])
        }),
        case("mul", &[&[3, 4], &[3, 4], &[3, 4]], |t, v| {
            let y = t.mul(v[0], v[1])?;
            weighted(t, y, v[2])
        }),
        case("scale", &[&[5], &[5]], |t, v| {
            let y = t.scale(v[0], -1.7)?;
            weighted(t, y, v[1])
        }),
        case("gelu", &[&[4, 5], &[4, 5]], |t, v| {
            let s = t.scale(v[0], 3.0)?;
            let y = t.gelu(s)?;
            weighted(t, y, v[1])
        }),
        case("matmul", &[&[3, 4], &[4, 2], &[3, 2]], |t, v| {
            let y = t.matmul(v[0], v[1])?;
            weighted(t, y, v[2])
        }),
        case(
            "batch_matmul",
            &[&[2, 3, 4], &[2, 4, 5], &[2, 3, 5]],
            |t, v| {
                let y = t.batch_matmul(v[0], v[1], false)?;
                weighted(t, y, v[2])
            },
        ),
        case(
            "batch_matmul_t",
            &[&[2, 3, 4], &[2, 5, 4], &[2, 3, 5]],
            |t, v| {
                let y = t.batch_matmul(v[0], v[1], true)?;
                weighted(t, y, v[2])
            },
        ),
        case(
            "linear",
            &[&[2, 3, 4], &[4, 5], &[5], &[2, 3, 5]],
            |t, v| {
                let y = t.linear(v[0], v[1], Some(v[2]))?;
                weighted(t, y, v[3])
            },
        ),
        case("softmax", &[&[3, 4, 2], &[3, 4, 2]], |t, v| {
            let y = t.softmax(v[0], 1)?;
            weighted(t, y, v[1])
        }),
        case("layernorm", &[&[3, 6], &[6], &[6], &[3, 6]], |t, v| {
            let y = t.layernorm(v[0], 1, v[1], v[2])?;
            weighted(t, y, v[3])
        }),
        case(
            "layernorm_mid_axis",
            &[&[2, 5, 3], &[5], &[5], &[2, 5, 3]],
            |t, v| {
                let y = t.layernorm(v[0], 1, v[1], v[2])?;
                weighted(t, y, v[3])
            },
        ),
        case("mse", &[&[4, 3], &[4, 3]], |t, v| t.mse(v[0], v[1])),
        case(
            "conv2d",
            &[&[2, 2, 5, 4], &[3, 2, 2, 2], &[3], &[2, 3, 3, 3]],
            |t, v| {
                let y = t.conv(v[0], v[1], Some(v[2]), 2, 2, 1)?;
                weighted(t, y, v[3])
            },
        ),
        case(
            "conv1d",
            &[&[2, 3, 7], &[2, 3, 3], &[2], &[2, 2, 5]],
            |t, v| {
                let y = t.conv(v[0], v[1], Some(v[2]), 1, 1, 0)?;
                weighted(t, y, v[3])
            },
        ),
        case("permute", &[&[2, 3, 4], &[4, 2, 3]], |t, v| {
            let y = t.permute(v[0], &[2, 0, 1])?;
            weighted(t, y, v[1])
        }),
        case("reshape", &[&[2, 6], &[3, 4]], |t, v| {
            let y = t.reshape(v[0], &[3, 4])?;
            weighted(t, y, v[1])
        }),
        case("expand", &[&[1, 3, 1], &[2, 3, 4]], |t, v| {
            let y = t.expand(v[0], &[2, 3, 4])?;
            weighted(t, y, v[1])
        }),
        case("concat", &[&[2, 3], &[2, 1], &[2, 4]], |t, v| {
            let y = t.concat(&[v[0], v[1]], 1)?;
            weighted(t, y, v[2])
        }),
        case("mean_axis", &[&[2, 3, 4], &[2, 4]], |t, v| {
            let y = t.mean_axis(v[0], 1)?;
            weighted(t, y, v[1])
        }),
        // The closure reseeds, so every evaluation draws the same mask.
        case("dropout", &[&[6, 5], &[6, 5]], |t, v| {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let y = t.dropout(v[0], 0.3, Mode::Train, &mut rng)?;
            weighted(t, y, v[1])
        }),
    ]
}

/// Worst relative error of `case` over [`SEEDS`] random inputs.
pub fn op_worst_error(case: &OpCase) -> f64 {
    (0..SEEDS)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs: Vec<Tensor> = case.shapes.iter().map(|s| random(s, &mut rng)).collect();
            gradcheck::relative_error(&*case.loss, &inputs, STEP)
        })
        .fold(0.0, f64::max)
}

/// `L_rec + L_reg` of one forward pass through backbone and head.
#[allow(clippy::too_many_arguments)]
pub fn composite_loss(
    bb: &Backbone,
    head: &TaskHead,
    tape: &mut Tape,
    pb: &Binding,
    ph: &Binding,
    x: &Tensor,
    sc: &Tensor,
    y: &Tensor,
) -> icfinv_core::Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let xv = tape.constant(x.clone())?;
    let sv = tape.constant(sc.clone())?;
    let yv = tape.constant(y.clone())?;
    let z = bb.encode(tape, pb, xv, Mode::Train, &mut rng)?;
    let recon = bb.reconstruct(tape, pb, z)?;
    let rec = tape.mse(recon, xv)?;
    let pred = head.forward(tape, ph, z, sv, Mode::Train, &mut rng)?;
    let reg = tape.mse(pred, yv)?;
    tape.add(rec, reg)
}

/// Directional finite-difference error of the composite gradient with
/// respect to every backbone and head parameter, for one seed.
pub fn composite_error(seed: u64) -> f64 {
    let field = FieldShape::image(8, 8, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bb = Backbone::new(tiny_config(), field, &mut rng).unwrap();
    let head = TaskHead::new(tiny_head_config(), 8, &mut rng).unwrap();
    // Non-zero reconstruction weights so both losses reach the encoder.
    let rw = bb.params.find("recon.weight").unwrap();
    let shape = bb.params.value(rw).shape().to_vec();
    bb.params.set(rw, random(&shape, &mut rng)).unwrap();
    let x = image_batch(2, field, &mut rng);
    let sc = random(&[2, NUM_SCALARS], &mut rng);
    let y = random(&[2, 3], &mut rng);
    let nb = bb.params.len();
    let mut inputs: Vec<Tensor> = bb.params.iter().map(|(_, t)| t.clone()).collect();
    inputs.extend(head.params.iter().map(|(_, t)| t.clone()));
    let f = |tape: &mut Tape, v: &[Var]| {
        let pb = Binding::from_vars(v[..nb].to_vec());
        let ph = Binding::from_vars(v[nb..].to_vec());
        composite_loss(&bb, &head, tape, &pb, &ph, &x, &sc, &y)
    };
    let total: usize = inputs.iter().map(Tensor::len).sum();
    let dirs: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..total).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    gradcheck::directional_error(&f, &inputs, &dirs, STEP)
}
