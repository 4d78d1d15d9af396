//! Encoder–decoder over physical fields.
//!
//! A field is a `(T, D, H, W, C)` array. Each component is patchified by the
//! same strided convolution, the per-component channels are fused into
//! `embed_dim` features, and the resulting token grid `(T, D, H', W')` runs
//! through blocks of axial self-attention: one attention call per grid axis
//! with extent > 1, every other axis folded into the batch. Score storage per
//! layer is therefore `Σ extent²` rather than `(Π extents)²`.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Binding, Mode, ParamId, ParamStore, Tape, Tensor, Var};

pub const AXIS_NAMES: [&str; 4] = ["t", "d", "h", "w"];

const INIT_STD: f64 = 0.02;

/// Extents of one field: time, depth, height, width, components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldShape {
    pub t: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl FieldShape {
    /// A static 2-D image with `c` components (`T = D = 1`).
    pub fn image(h: usize, w: usize, c: usize) -> Self {
        FieldShape {
            t: 1,
            d: 1,
            h,
            w,
            c,
        }
    }

    pub fn dims(&self) -> [usize; 5] {
        [self.t, self.d, self.h, self.w, self.c]
    }

    pub fn len(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A field sample in `(T, D, H, W, C)` layout.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldTensor {
    shape: FieldShape,
    data: Tensor,
}

impl FieldTensor {
    pub fn new(shape: FieldShape, values: Vec<f64>) -> Result<Self> {
        if shape.dims().contains(&0) {
            return Err(Error::dim(format!("field extents must be >= 1: {shape:?}")));
        }
        let data = Tensor::new(shape.dims().to_vec(), values)?;
        Ok(FieldTensor { shape, data })
    }

    /// `H × W × C` image values in row-major order.
    pub fn from_image(h: usize, w: usize, c: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(FieldShape::image(h, w, c), values)
    }

    pub fn shape(&self) -> FieldShape {
        self.shape
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn values(&self) -> &[f64] {
        self.data.data()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    pub patch_size: [usize; 2],
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub dropout_rate: f64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            patch_size: [4, 4],
            embed_dim: 32,
            depth: 2,
            heads: 2,
            mlp_ratio: 2,
            dropout_rate: 0.0,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self, field: &FieldShape) -> Result<()> {
        let [ph, pw] = self.patch_size;
        if ph == 0 || pw == 0 || self.embed_dim == 0 || self.heads == 0 || self.mlp_ratio == 0 {
            return Err(Error::Config(format!(
                "backbone extents must be >= 1: {self:?}"
            )));
        }
        if field.dims().contains(&0) {
            return Err(Error::Config(format!(
                "field extents must be >= 1: {field:?}"
            )));
        }
        if !field.h.is_multiple_of(ph) || !field.w.is_multiple_of(pw) {
            return Err(Error::Config(format!(
                "field {}x{} not divisible by patch {ph}x{pw}",
                field.h, field.w
            )));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "embed_dim {} not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Token grid `(T, D, H', W')` for a field.
    pub fn token_grid(&self, field: &FieldShape) -> [usize; 4] {
        [
            field.t,
            field.d,
            field.h / self.patch_size[0],
            field.w / self.patch_size[1],
        ]
    }

    pub fn num_tokens(&self, field: &FieldShape) -> usize {
        self.token_grid(field).iter().product()
    }
}

pub(crate) fn truncated_normal<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
    let normal = Normal::new(0.0, std).expect("positive std");
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = normal.sample(rng);
            if v.abs() <= 2.0 * std {
                break v;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// Projections of one multi-head attention unit. Weights are `[in, out]`.
#[derive(Clone, Debug)]
pub struct AttentionParams {
    q: (ParamId, ParamId),
    k: (ParamId, ParamId),
    v: (ParamId, ParamId),
    o: (ParamId, ParamId),
}

impl AttentionParams {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, e: usize, rng: &mut R) -> Self {
        let mut proj = |name: &str| {
            let w = store.add(
                format!("{prefix}.{name}.weight"),
                truncated_normal(&[e, e], INIT_STD, rng),
            );
            let b = store.add(format!("{prefix}.{name}.bias"), Tensor::zeros(&[e]));
            (w, b)
        };
        AttentionParams {
            q: proj("q"),
            k: proj("k"),
            v: proj("v"),
            o: proj("o"),
        }
    }
}

/// Multi-head attention of `query [B, Lq, E]` over `context [B, Lk, E]`,
/// returning `[B, Lq, E]` (no residual).
pub fn multi_head_attention(
    tape: &mut Tape,
    p: &Binding,
    attn: &AttentionParams,
    heads: usize,
    query: Var,
    context: Var,
) -> Result<Var> {
    let sq = tape.shape(query).to_vec();
    let sc = tape.shape(context).to_vec();
    if sq.len() != 3 || sc.len() != 3 || sq[0] != sc[0] || sq[2] != sc[2] {
        return Err(Error::dim(format!(
            "attention: query {sq:?} and context {sc:?} must be [B, L, E] with shared B and E"
        )));
    }
    let (b, lq, e) = (sq[0], sq[1], sq[2]);
    let lk = sc[1];
    if e % heads != 0 {
        return Err(Error::dim(format!(
            "embed dim {e} not divisible by {heads} heads"
        )));
    }
    let dh = e / heads;
    let split = |tape: &mut Tape, x: Var, l: usize| -> Result<Var> {
        let x = tape.reshape(x, &[b, l, heads, dh])?;
        let x = tape.permute(x, &[0, 2, 1, 3])?;
        tape.reshape(x, &[b * heads, l, dh])
    };
    let q = tape.linear(query, p[attn.q.0], Some(p[attn.q.1]))?;
    let k = tape.linear(context, p[attn.k.0], Some(p[attn.k.1]))?;
    let v = tape.linear(context, p[attn.v.0], Some(p[attn.v.1]))?;
    let q = split(tape, q, lq)?;
    let k = split(tape, k, lk)?;
    let v = split(tape, v, lk)?;
    let scores = tape.batch_matmul(q, k, true)?;
    let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt())?;
    tape.probe_mut().record(lq, lk);
    let weights = tape.softmax(scores, 2)?;
    let mixed = tape.batch_matmul(weights, v, false)?;
    let mixed = tape.reshape(mixed, &[b, heads, lq, dh])?;
    let mixed = tape.permute(mixed, &[0, 2, 1, 3])?;
    let mixed = tape.reshape(mixed, &[b, lq, e])?;
    tape.linear(mixed, p[attn.o.0], Some(p[attn.o.1]))
}

/// Inter-field cross-attention: queries from one field's tokens, keys and
/// values from another's, added back onto the queries.
pub struct CrossFieldAttention {
    pub embed_dim: usize,
    pub heads: usize,
    pub params: ParamStore,
    attn: AttentionParams,
}

impl CrossFieldAttention {
    pub fn new<R: Rng + ?Sized>(embed_dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || !embed_dim.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "embed_dim {embed_dim} not divisible by {heads} heads"
            )));
        }
        let mut params = ParamStore::new();
        let attn = AttentionParams::new(&mut params, "cross", embed_dim, rng);
        Ok(CrossFieldAttention {
            embed_dim,
            heads,
            params,
            attn,
        })
    }

    pub fn attention_params(&self) -> &AttentionParams {
        &self.attn
    }

    /// `query [B, Nq, E]`, `context [B, Nc, E]` → `[B, Nq, E]`.
    pub fn forward(&self, tape: &mut Tape, p: &Binding, query: Var, context: Var) -> Result<Var> {
        let (eq, ec) = (
            tape.shape(query).last().copied(),
            tape.shape(context).last().copied(),
        );
        if eq != Some(self.embed_dim) || ec != Some(self.embed_dim) {
            return Err(Error::dim(format!(
                "cross-field attention expects embed dim {}, got query {eq:?} and context {ec:?}",
                self.embed_dim
            )));
        }
        let mixed = multi_head_attention(tape, p, &self.attn, self.heads, query, context)?;
        tape.add(query, mixed)
    }

    /// Self-attention with residual; the single-field case of [`Self::forward`].
    pub fn self_attention(&self, tape: &mut Tape, p: &Binding, tokens: Var) -> Result<Var> {
        self.forward(tape, p, tokens, tokens)
    }
}

#[derive(Clone, Debug)]
struct AxialLayer {
    /// Grid axis index: 0 = T, 1 = D, 2 = H', 3 = W'.
    axis: usize,
    norm: (ParamId, ParamId),
    attn: AttentionParams,
}

#[derive(Clone, Debug)]
struct Block {
    axial: Vec<AxialLayer>,
    mlp_norm: (ParamId, ParamId),
    fc1: (ParamId, ParamId),
    fc2: (ParamId, ParamId),
}

#[derive(Clone, Debug)]
struct Layout {
    patch_kernel: ParamId,
    patch_bias: ParamId,
    fuse: (ParamId, ParamId),
    pos: [Option<ParamId>; 4],
    blocks: Vec<Block>,
    recon: (ParamId, ParamId),
}

/// Backbone weights plus the structure needed to run them.
#[derive(Clone, Debug)]
pub struct Backbone {
    config: BackboneConfig,
    field: FieldShape,
    pub params: ParamStore,
    layout: Layout,
}

impl Backbone {
    /// Random initialization: truncated normal (std 0.02) weights, zero
    /// biases, unit norm gains and a zero reconstruction projection.
    pub fn new<R: Rng + ?Sized>(
        config: BackboneConfig,
        field: FieldShape,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate(&field)?;
        let e = config.embed_dim;
        let [ph, pw] = config.patch_size;
        let grid = config.token_grid(&field);
        let mut store = ParamStore::new();

        let patch_kernel = store.add(
            "patch.kernel",
            truncated_normal(&[e, 1, ph, pw], INIT_STD, rng),
        );
        let patch_bias = store.add("patch.bias", Tensor::zeros(&[e]));
        let fuse = (
            store.add(
                "patch.fuse.weight",
                truncated_normal(&[field.c * e, e], INIT_STD, rng),
            ),
            store.add("patch.fuse.bias", Tensor::zeros(&[e])),
        );
        let mut pos = [None; 4];
        for (axis, &extent) in grid.iter().enumerate() {
            if extent > 1 {
                pos[axis] = Some(store.add(
                    format!("pos.{}", AXIS_NAMES[axis]),
                    truncated_normal(&[extent, e], INIT_STD, rng),
                ));
            }
        }
        let hidden = config.mlp_ratio * e;
        let mut blocks = Vec::with_capacity(config.depth);
        for i in 0..config.depth {
            let mut axial = Vec::new();
            for (axis, &extent) in grid.iter().enumerate() {
                if extent == 1 {
                    continue;
                }
                let prefix = format!("blocks.{i}.axis_{}", AXIS_NAMES[axis]);
                let norm = (
                    store.add(format!("{prefix}.norm.gain"), Tensor::full(&[e], 1.0)),
                    store.add(format!("{prefix}.norm.bias"), Tensor::zeros(&[e])),
                );
                let attn = AttentionParams::new(&mut store, &format!("{prefix}.attn"), e, rng);
                axial.push(AxialLayer { axis, norm, attn });
            }
            let prefix = format!("blocks.{i}.mlp");
            let mlp_norm = (
                store.add(format!("{prefix}.norm.gain"), Tensor::full(&[e], 1.0)),
                store.add(format!("{prefix}.norm.bias"), Tensor::zeros(&[e])),
            );
            let fc1 = (
                store.add(
                    format!("{prefix}.fc1.weight"),
                    truncated_normal(&[e, hidden], INIT_STD, rng),
                ),
                store.add(format!("{prefix}.fc1.bias"), Tensor::zeros(&[hidden])),
            );
            let fc2 = (
                store.add(
                    format!("{prefix}.fc2.weight"),
                    truncated_normal(&[hidden, e], INIT_STD, rng),
                ),
                store.add(format!("{prefix}.fc2.bias"), Tensor::zeros(&[e])),
            );
            blocks.push(Block {
                axial,
                mlp_norm,
                fc1,
                fc2,
            });
        }
        let patch_values = ph * pw * field.c;
        let recon = (
            store.add("recon.weight", Tensor::zeros(&[e, patch_values])),
            store.add("recon.bias", Tensor::zeros(&[patch_values])),
        );
        Ok(Backbone {
            config,
            field,
            params: store,
            layout: Layout {
                patch_kernel,
                patch_bias,
                fuse,
                pos,
                blocks,
                recon,
            },
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn field(&self) -> FieldShape {
        self.field
    }

    pub fn token_grid(&self) -> [usize; 4] {
        self.config.token_grid(&self.field)
    }

    pub fn num_tokens(&self) -> usize {
        self.config.num_tokens(&self.field)
    }

    /// Grid axes that get an attention call (extent > 1).
    pub fn active_axes(&self) -> Vec<usize> {
        (0..4).filter(|&a| self.token_grid()[a] > 1).collect()
    }

    fn check_input(&self, tape: &Tape, x: Var) -> Result<usize> {
        let s = tape.shape(x);
        let f = self.field.dims();
        if s.len() != 6 || s[1..] != f {
            return Err(Error::dim(format!(
                "backbone expects [B, {}, {}, {}, {}, {}], got {s:?}",
                f[0], f[1], f[2], f[3], f[4]
            )));
        }
        Ok(s[0])
    }

    /// `x [B, T, D, H, W, C]` → token grid `[B, T, D, H', W', E]`.
    pub fn patch_embed(&self, tape: &mut Tape, p: &Binding, x: Var) -> Result<Var> {
        let b = self.check_input(tape, x)?;
        let FieldShape { t, d, h, w, c } = self.field;
        let [ph, pw] = self.config.patch_size;
        let e = self.config.embed_dim;
        let (gh, gw) = (h / ph, w / pw);
        let x = tape.permute(x, &[0, 1, 2, 5, 3, 4])?;
        let x = tape.reshape(x, &[b * t * d * c, 1, h, w])?;
        let y = tape.conv2d(
            x,
            p[self.layout.patch_kernel],
            Some(p[self.layout.patch_bias]),
            (ph, pw),
            (0, 0),
        )?;
        let y = tape.reshape(y, &[b, t, d, c, e, gh, gw])?;
        let y = tape.permute(y, &[0, 1, 2, 5, 6, 3, 4])?;
        let y = tape.reshape(y, &[b, t, d, gh, gw, c * e])?;
        tape.linear(y, p[self.layout.fuse.0], Some(p[self.layout.fuse.1]))
    }

    fn add_positional(&self, tape: &mut Tape, p: &Binding, tokens: Var) -> Result<Var> {
        let shape = tape.shape(tokens).to_vec();
        let e = self.config.embed_dim;
        let mut out = tokens;
        for (axis, id) in self.layout.pos.iter().enumerate() {
            let Some(id) = id else { continue };
            let mut small = vec![1; 6];
            small[axis + 1] = shape[axis + 1];
            small[5] = e;
            let pe = tape.reshape(p[*id], &small)?;
            let pe = tape.expand(pe, &shape)?;
            out = tape.add(out, pe)?;
        }
        Ok(out)
    }

    fn axial_attention<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        p: &Binding,
        layer: &AxialLayer,
        tokens: Var,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let shape = tape.shape(tokens).to_vec();
        let e = self.config.embed_dim;
        let y = tape.layernorm(tokens, 5, p[layer.norm.0], p[layer.norm.1])?;
        // move the attended axis next to the feature axis
        let axis = layer.axis + 1;
        let mut perm: Vec<usize> = (0..5).filter(|&a| a != axis).collect();
        perm.push(axis);
        perm.push(5);
        let permuted_shape: Vec<usize> = perm.iter().map(|&a| shape[a]).collect();
        let len = shape[axis];
        let folded = permuted_shape[..4].iter().product();
        let y = tape.permute(y, &perm)?;
        let y = tape.reshape(y, &[folded, len, e])?;
        let att = multi_head_attention(tape, p, &layer.attn, self.config.heads, y, y)?;
        let att = tape.reshape(att, &permuted_shape)?;
        let inv = crate::tensor::inverse_permutation(&perm);
        let att = tape.permute(att, &inv)?;
        let att = tape.dropout(att, self.config.dropout_rate, mode, rng)?;
        tape.add(tokens, att)
    }

    /// One block: axial attention over T, D, H', W' in that order (extent-1
    /// axes skipped), then a pre-norm GELU MLP. Shape is preserved.
    pub fn axial_block<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        p: &Binding,
        index: usize,
        tokens: Var,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let block = self.layout.blocks.get(index).ok_or_else(|| {
            Error::Parameter(format!("block {index} of {}", self.layout.blocks.len()))
        })?;
        let mut x = tokens;
        for layer in &block.axial {
            x = self.axial_attention(tape, p, layer, x, mode, rng)?;
        }
        let y = tape.layernorm(x, 5, p[block.mlp_norm.0], p[block.mlp_norm.1])?;
        let y = tape.linear(y, p[block.fc1.0], Some(p[block.fc1.1]))?;
        let y = tape.gelu(y)?;
        let y = tape.linear(y, p[block.fc2.0], Some(p[block.fc2.1]))?;
        let y = tape.dropout(y, self.config.dropout_rate, mode, rng)?;
        tape.add(x, y)
    }

    /// `x [B, T, D, H, W, C]` → latent tokens `[B, N, E]`.
    pub fn encode<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        p: &Binding,
        x: Var,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let b = self.check_input(tape, x)?;
        let mut tokens = self.patch_embed(tape, p, x)?;
        tokens = self.add_positional(tape, p, tokens)?;
        for i in 0..self.layout.blocks.len() {
            tokens = self.axial_block(tape, p, i, tokens, mode, rng)?;
        }
        tape.reshape(tokens, &[b, self.num_tokens(), self.config.embed_dim])
    }

    /// Latent tokens `[B, N, E]` → field `[B, T, D, H, W, C]`.
    pub fn reconstruct(&self, tape: &mut Tape, p: &Binding, latents: Var) -> Result<Var> {
        let s = tape.shape(latents).to_vec();
        let n = self.num_tokens();
        let e = self.config.embed_dim;
        if s.len() != 3 || s[1] != n || s[2] != e {
            return Err(Error::dim(format!(
                "reconstruct expects [B, {n}, {e}] tokens, got {s:?}"
            )));
        }
        let b = s[0];
        let [ph, pw] = self.config.patch_size;
        let [t, d, gh, gw] = self.token_grid();
        let c = self.field.c;
        let y = tape.linear(
            latents,
            p[self.layout.recon.0],
            Some(p[self.layout.recon.1]),
        )?;
        let y = tape.reshape(y, &[b * t * d, gh, gw, ph, pw, c])?;
        let y = tape.permute(y, &[0, 1, 3, 2, 4, 5])?;
        tape.reshape(y, &[b, t, d, gh * ph, gw * pw, c])
    }

    /// Eval-mode latents for a single field, `[N, E]`.
    pub fn encode_field(&self, field: &FieldTensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape)?;
        let mut dims = vec![1];
        dims.extend(field.shape().dims());
        let x = tape.constant(field.tensor().clone().reshape(&dims)?)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let z = self.encode(&mut tape, &p, x, Mode::Eval, &mut rng)?;
        tape.value(z)
            .clone()
            .reshape(&[self.num_tokens(), self.config.embed_dim])
    }

    /// Reconstruct a single field from `[N, E]` latents.
    pub fn reconstruct_field(&self, latents: &Tensor) -> Result<FieldTensor> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape)?;
        let mut dims = vec![1];
        dims.extend(latents.shape());
        let z = tape.constant(latents.clone().reshape(&dims)?)?;
        let y = self.reconstruct(&mut tape, &p, z)?;
        FieldTensor::new(self.field, tape.value(y).data().to_vec())
    }
}
