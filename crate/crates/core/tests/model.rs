mod common;

use common::gradcheck::{self, STEP};
use common::suites::{self, composite_loss, image_batch, random, tiny_head_config};
use icfinv_core::backbone::{
    Backbone, BackboneConfig, CrossFieldAttention, FieldShape, FieldTensor,
};
use icfinv_core::tensor::{Binding, Mode, Tape, Tensor, Var};
use icfinv_core::tsh::{TaskHead, TshConfig, NUM_SCALARS};
use icfinv_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn default_backbone(seed: u64) -> Backbone {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Backbone::new(
        BackboneConfig::default(),
        FieldShape::image(16, 16, 4),
        &mut rng,
    )
    .unwrap()
}

#[test]
fn patch_embed_shapes_and_zero_weights() {
    let mut bb = default_backbone(0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut tape = Tape::new();
    let p = bb.params.bind(&mut tape).unwrap();
    let x = tape.constant(image_batch(1, bb.field(), &mut rng)).unwrap();
    let tokens = bb.patch_embed(&mut tape, &p, x).unwrap();
    assert_eq!(tape.shape(tokens), &[1, 1, 1, 4, 4, 32]);

    bb.params.zero_values();
    let mut tape = Tape::new();
    let p = bb.params.bind(&mut tape).unwrap();
    let x = tape.constant(image_batch(1, bb.field(), &mut rng)).unwrap();
    let tokens = bb.patch_embed(&mut tape, &p, x).unwrap();
    assert!(tape.value(tokens).data().iter().all(|&v| v == 0.0));
}

#[test]
fn patch_embed_rejects_wrong_field() {
    let bb = default_backbone(0);
    let mut tape = Tape::new();
    let p = bb.params.bind(&mut tape).unwrap();
    let x = tape.constant(Tensor::zeros(&[1, 1, 1, 8, 8, 4])).unwrap();
    assert!(matches!(
        bb.patch_embed(&mut tape, &p, x),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn patch_embed_kernel_gradient_matches_finite_differences() {
    let bb = default_backbone(3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = image_batch(2, bb.field(), &mut rng);
    let w = random(&[2, 1, 1, 4, 4, 32], &mut rng);
    let kernel_id = bb.params.find("patch.kernel").unwrap();
    let f = |tape: &mut Tape, v: &[Var]| {
        let mut vars = bb.params.bind_frozen(tape)?.vars().to_vec();
        vars[kernel_id.index()] = v[0];
        let p = Binding::from_vars(vars);
        let xv = tape.constant(x.clone())?;
        let wv = tape.constant(w.clone())?;
        let t = bb.patch_embed(tape, &p, xv)?;
        let t = tape.mul(t, wv)?;
        tape.sum(t)
    };
    let kernel = bb.params.value(kernel_id).clone();
    let err = gradcheck::relative_error(&f, &[kernel], STEP);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn axial_block_preserves_shape_and_factorizes_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let field = FieldShape::image(32, 32, 4);
    let bb = Backbone::new(BackboneConfig::default(), field, &mut rng).unwrap();
    let mut tape = Tape::new();
    let p = bb.params.bind(&mut tape).unwrap();
    let tokens = tape
        .constant(random(&[2, 1, 1, 8, 8, 32], &mut rng))
        .unwrap();
    let out = bb
        .axial_block(&mut tape, &p, 0, tokens, Mode::Eval, &mut rng)
        .unwrap();
    assert_eq!(tape.shape(out), tape.shape(tokens));
    let probe = tape.probe();
    assert_eq!(probe.calls(), &[(8, 8), (8, 8)]);
    assert_eq!(probe.score_entries(), 2 * 8 * 8);
    assert!(probe.largest_score_matrix() < 64 * 64);
}

#[test]
fn attention_calls_skip_degenerate_axes() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cases = [
        (
            FieldShape {
                t: 3,
                d: 1,
                h: 8,
                w: 8,
                c: 2,
            },
            3,
        ),
        (
            FieldShape {
                t: 2,
                d: 2,
                h: 4,
                w: 8,
                c: 1,
            },
            3,
        ),
        (
            FieldShape {
                t: 1,
                d: 1,
                h: 4,
                w: 8,
                c: 1,
            },
            1,
        ),
        (
            FieldShape {
                t: 2,
                d: 3,
                h: 8,
                w: 8,
                c: 1,
            },
            4,
        ),
    ];
    for (field, active) in cases {
        let bb = Backbone::new(BackboneConfig::default(), field, &mut rng).unwrap();
        let mut tape = Tape::new();
        let p = bb.params.bind_frozen(&mut tape).unwrap();
        let x = tape.constant(image_batch(1, field, &mut rng)).unwrap();
        bb.encode(&mut tape, &p, x, Mode::Eval, &mut rng).unwrap();
        assert_eq!(bb.active_axes().len(), active);
        assert_eq!(tape.probe().calls().len(), active * bb.config().depth);
        let grid = bb.token_grid();
        let per_layer: usize = grid.iter().filter(|&&e| e > 1).map(|e| e * e).sum();
        assert_eq!(tape.probe().score_entries(), per_layer * bb.config().depth);
    }
}

#[test]
fn cross_field_attention_degenerate_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cross = CrossFieldAttention::new(8, 2, &mut rng).unwrap();
    let mut tape = Tape::new();
    let p = cross.params.bind(&mut tape).unwrap();
    let q = tape.constant(random(&[2, 5, 8], &mut rng)).unwrap();
    let a = cross.forward(&mut tape, &p, q, q).unwrap();
    let b = cross.self_attention(&mut tape, &p, q).unwrap();
    assert_eq!(tape.value(a), tape.value(b));

    let long = tape.constant(random(&[2, 9, 8], &mut rng)).unwrap();
    let c = cross.forward(&mut tape, &p, q, long).unwrap();
    assert_eq!(tape.shape(c), &[2, 5, 8]);

    let bad = tape.constant(random(&[2, 9, 6], &mut rng)).unwrap();
    assert!(matches!(
        cross.forward(&mut tape, &p, q, bad),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn cross_attention_over_one_token_adds_its_value_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cross = CrossFieldAttention::new(8, 2, &mut rng).unwrap();
    let mut tape = Tape::new();
    let p = cross.params.bind(&mut tape).unwrap();
    let q = tape.constant(random(&[1, 4, 8], &mut rng)).unwrap();
    let ctx_t = random(&[1, 1, 8], &mut rng);
    let ctx = tape.constant(ctx_t.clone()).unwrap();
    let out = cross.forward(&mut tape, &p, q, ctx).unwrap();

    // expected: q + ((ctx·Wv + bv)·Wo + bo), broadcast over the 4 queries
    let get = |name: &str| {
        cross
            .params
            .value(cross.params.find(name).unwrap())
            .data()
            .to_vec()
    };
    let (wv, bv, wo, bo) = (
        get("cross.v.weight"),
        get("cross.v.bias"),
        get("cross.o.weight"),
        get("cross.o.bias"),
    );
    let c = ctx_t.data();
    let v: Vec<f64> = (0..8)
        .map(|j| bv[j] + (0..8).map(|i| c[i] * wv[i * 8 + j]).sum::<f64>())
        .collect();
    let o: Vec<f64> = (0..8)
        .map(|j| bo[j] + (0..8).map(|i| v[i] * wo[i * 8 + j]).sum::<f64>())
        .collect();
    let qv = tape.value(q).data();
    let got = tape.value(out).data();
    for row in 0..4 {
        for j in 0..8 {
            let want = qv[row * 8 + j] + o[j];
            assert!((got[row * 8 + j] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn encode_token_count_distinctness_and_determinism() {
    let bb = default_backbone(9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let field = bb.field();
    let sample = |rng: &mut ChaCha8Rng| {
        FieldTensor::new(
            field,
            (0..field.len()).map(|_| rng.random::<f64>()).collect(),
        )
        .unwrap()
    };
    for _ in 0..10 {
        let (a, b) = (sample(&mut rng), sample(&mut rng));
        let za = bb.encode_field(&a).unwrap();
        let zb = bb.encode_field(&b).unwrap();
        assert_eq!(za.shape(), &[16, 32]);
        assert_ne!(za, zb);
        assert_eq!(za, bb.encode_field(&a).unwrap());
    }
}

#[test]
fn reconstruct_shape_zero_init_and_token_mismatch() {
    let bb = default_backbone(11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let z = random(&[16, 32], &mut rng);
    let img = bb.reconstruct_field(&z).unwrap();
    assert_eq!(img.shape(), bb.field());
    // projection starts at zero
    assert!(img.values().iter().all(|&v| v == 0.0));

    let mut tape = Tape::new();
    let p = bb.params.bind(&mut tape).unwrap();
    let wrong = tape.constant(random(&[1, 15, 32], &mut rng)).unwrap();
    assert!(matches!(
        bb.reconstruct(&mut tape, &p, wrong),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn reconstruct_depatchifies_in_place() {
    // with identity-like projection each token writes its own patch
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cfg = BackboneConfig {
        patch_size: [2, 2],
        embed_dim: 4,
        depth: 0,
        heads: 1,
        mlp_ratio: 1,
        dropout_rate: 0.0,
    };
    let mut bb = Backbone::new(cfg, FieldShape::image(4, 4, 1), &mut rng).unwrap();
    let w = bb.params.find("recon.weight").unwrap();
    let mut eye = Tensor::zeros(&[4, 4]);
    for i in 0..4 {
        eye.data_mut()[i * 4 + i] = 1.0;
    }
    bb.params.set(w, eye).unwrap();
    // token k = (row r, col c) carries values 10k + (py*2 + px)
    let z: Vec<f64> = (0..4)
        .flat_map(|k| (0..4).map(move |j| (10 * k + j) as f64))
        .collect();
    let img = bb
        .reconstruct_field(&Tensor::new(vec![4, 4], z).unwrap())
        .unwrap();
    let v = img.values();
    assert_eq!(&v[0..4], &[0.0, 1.0, 10.0, 11.0]);
    assert_eq!(&v[4..8], &[2.0, 3.0, 12.0, 13.0]);
    assert_eq!(&v[8..12], &[20.0, 21.0, 30.0, 31.0]);
}

#[test]
fn every_parameter_receives_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let bb = default_backbone(15);
    let head = TaskHead::new(TshConfig::default(), 32, &mut rng).unwrap();
    let x = image_batch(4, bb.field(), &mut rng);
    let sc = random(&[4, NUM_SCALARS], &mut rng);
    let y = random(&[4, 3], &mut rng);
    let mut tape = Tape::new();
    let pb = bb.params.bind(&mut tape).unwrap();
    let ph = head.params.bind(&mut tape).unwrap();
    let loss = composite_loss(&bb, &head, &mut tape, &pb, &ph, &x, &sc, &y).unwrap();
    tape.backward(loss).unwrap();
    for (store, binding) in [(&bb.params, &pb), (&head.params, &ph)] {
        for id in store.ids() {
            let g = tape.grad(binding[id]).unwrap_or(&[]);
            assert!(
                g.iter().any(|&v| v != 0.0),
                "{} has zero gradient",
                store.name(id)
            );
        }
    }
}

#[test]
fn head_widths_and_zero_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut head = TaskHead::new(TshConfig::default(), 32, &mut rng).unwrap();
    let mut tape = Tape::new();
    let p = head.params.bind(&mut tape).unwrap();
    let z = tape.constant(random(&[3, 16, 32], &mut rng)).unwrap();
    let s = tape.constant(random(&[3, NUM_SCALARS], &mut rng)).unwrap();
    let img = head
        .image_path(&mut tape, &p, z, Mode::Eval, &mut rng)
        .unwrap();
    assert_eq!(tape.shape(img), &[3, 32]);
    let sc = head.scalar_path(&mut tape, &p, s).unwrap();
    assert_eq!(tape.shape(sc), &[3, 16]);
    let out = head.fuse_project(&mut tape, &p, img, sc).unwrap();
    assert_eq!(tape.shape(out), &[3, 3]);

    // errors
    let short = tape.constant(random(&[1, 4, 32], &mut rng)).unwrap();
    assert!(matches!(
        head.image_path(&mut tape, &p, short, Mode::Eval, &mut rng),
        Err(Error::Dimension(_))
    ));
    let s14 = tape.constant(random(&[1, 14], &mut rng)).unwrap();
    assert!(head.scalar_path(&mut tape, &p, s14).is_err());
    assert!(head.fuse_project(&mut tape, &p, sc, img).is_err());

    // all-zero weights and biases
    head.params.zero_values();
    let mut tape = Tape::new();
    let p = head.params.bind(&mut tape).unwrap();
    let z = tape.constant(random(&[2, 16, 32], &mut rng)).unwrap();
    let img = head
        .image_path(&mut tape, &p, z, Mode::Eval, &mut rng)
        .unwrap();
    assert!(tape.value(img).data().iter().all(|&v| v == 0.0));
}

#[test]
fn scalar_path_zero_input_and_order_sensitivity() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut head = TaskHead::new(TshConfig::default(), 32, &mut rng).unwrap();
    let mut tape = Tape::new();
    let p = head.params.bind(&mut tape).unwrap();
    let s = random(&[1, NUM_SCALARS], &mut rng);
    let mut swapped = s.clone();
    swapped.data_mut().swap(2, 7);
    let a = tape.constant(s).unwrap();
    let b = tape.constant(swapped).unwrap();
    let fa = head.scalar_path(&mut tape, &p, a).unwrap();
    let fb = head.scalar_path(&mut tape, &p, b).unwrap();
    assert_ne!(tape.value(fa), tape.value(fb));

    for id in head.params.ids().collect::<Vec<_>>() {
        if head.params.name(id).ends_with(".bias") {
            let zeros = Tensor::zeros(head.params.value(id).shape());
            head.params.set(id, zeros).unwrap();
        }
    }
    let mut tape = Tape::new();
    let p = head.params.bind(&mut tape).unwrap();
    let zero = tape.constant(Tensor::zeros(&[1, NUM_SCALARS])).unwrap();
    let f = head.scalar_path(&mut tape, &p, zero).unwrap();
    assert!(tape.value(f).data().iter().all(|&v| v == 0.0));
}

#[test]
fn fuse_project_with_zero_weights_returns_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut head = TaskHead::new(TshConfig::default(), 32, &mut rng).unwrap();
    let w = head.params.find("project.weight").unwrap();
    let b = head.params.find("project.bias").unwrap();
    head.params.set(w, Tensor::zeros(&[48, 3])).unwrap();
    head.params
        .set(b, Tensor::from_vec(vec![0.5, -1.0, 2.0]))
        .unwrap();
    let mut tape = Tape::new();
    let p = head.params.bind(&mut tape).unwrap();
    let img = tape.constant(random(&[2, 32], &mut rng)).unwrap();
    let sc = tape.constant(random(&[2, 16], &mut rng)).unwrap();
    let out = head.fuse_project(&mut tape, &p, img, sc).unwrap();
    assert_eq!(tape.value(out).data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
}

#[test]
fn both_modalities_influence_the_regression_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let head = TaskHead::new(TshConfig::default(), 32, &mut rng).unwrap();
    let inputs = vec![random(&[2, 32], &mut rng), random(&[2, 16], &mut rng)];
    let y = random(&[2, 3], &mut rng);
    let f = |tape: &mut Tape, v: &[Var]| {
        let p = head.params.bind_frozen(tape)?;
        let out = head.fuse_project(tape, &p, v[0], v[1])?;
        let yv = tape.constant(y.clone())?;
        tape.mse(out, yv)
    };
    let fd = gradcheck::numeric(&f, &inputs, STEP);
    assert!(fd[0].iter().any(|g| g.abs() > 1e-8));
    assert!(fd[1].iter().any(|g| g.abs() > 1e-8));
}

#[test]
fn head_gradient_reaches_first_conv_and_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let head = TaskHead::new(tiny_head_config(), 8, &mut rng).unwrap();
    let z = random(&[2, 9, 8], &mut rng);
    let s = random(&[2, NUM_SCALARS], &mut rng);
    let y = random(&[2, 3], &mut rng);
    let inputs: Vec<Tensor> = head.params.iter().map(|(_, t)| t.clone()).collect();
    let f = |tape: &mut Tape, v: &[Var]| {
        let p = Binding::from_vars(v.to_vec());
        let zv = tape.constant(z.clone())?;
        let sv = tape.constant(s.clone())?;
        let yv = tape.constant(y.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = head.forward(tape, &p, zv, sv, Mode::Eval, &mut rng)?;
        tape.mse(out, yv)
    };
    let grads = gradcheck::analytic(&f, &inputs);
    let conv1 = head.params.find("image.conv1.weight").unwrap();
    assert!(grads[conv1.index()].iter().any(|&g| g != 0.0));
    let err = gradcheck::relative_error(&f, &inputs, STEP);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn head_eval_is_deterministic_and_dropout_only_in_train() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let head = TaskHead::new(TshConfig::default(), 32, &mut rng).unwrap();
    let z = random(&[2, 16, 32], &mut rng);
    let s = random(&[2, NUM_SCALARS], &mut rng);
    let run = |mode: Mode, seed: u64| {
        let mut tape = Tape::new();
        let p = head.params.bind_frozen(&mut tape).unwrap();
        let zv = tape.constant(z.clone()).unwrap();
        let sv = tape.constant(s.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = head.forward(&mut tape, &p, zv, sv, mode, &mut rng).unwrap();
        tape.value(out).clone()
    };
    assert_eq!(run(Mode::Eval, 1), run(Mode::Eval, 2));
    assert_eq!(run(Mode::Train, 3), run(Mode::Train, 3));
    assert_ne!(run(Mode::Train, 3), run(Mode::Train, 4));
}

/// Backbone + head composite: directional finite differences over every
/// parameter, 100 seeds.
#[test]
fn composite_gradient_matches_finite_differences() {
    for seed in 0..suites::SEEDS {
        let err = suites::composite_error(seed);
        assert!(err < suites::TOL, "seed {seed}: relative error {err}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn encode_then_reconstruct_preserves_shape(
        t in 1usize..3, d in 1usize..3, gh in 1usize..4, gw in 1usize..4,
        c in 1usize..4, ph in 1usize..4, pw in 1usize..4,
        heads in 1usize..3, per_head in 1usize..4, depth in 0usize..3, seed in 0u64..1000,
    ) {
        let field = FieldShape { t, d, h: gh * ph, w: gw * pw, c };
        let cfg = BackboneConfig {
            patch_size: [ph, pw],
            embed_dim: heads * per_head,
            depth,
            heads,
            mlp_ratio: 2,
            dropout_rate: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bb = Backbone::new(cfg, field, &mut rng).unwrap();
        let x = FieldTensor::new(field, (0..field.len()).map(|_| rng.random::<f64>()).collect()).unwrap();
        let z = bb.encode_field(&x).unwrap();
        prop_assert_eq!(z.shape(), &[t * d * gh * gw, heads * per_head]);
        let back = bb.reconstruct_field(&z).unwrap();
        prop_assert_eq!(back.shape(), field);
    }
}
