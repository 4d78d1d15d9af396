//! Forward operations and the numeric kernels shared with the backward rules.

use rand::Rng;

use super::tape::{Mode, Op, Tape, Var};
use super::{split_axis, strides, Tensor};
use crate::error::{Error, Result};

pub(crate) const LAYERNORM_EPS: f64 = 1e-5;

/// `out += a·b` with `a: m×k`, `b: k×n`.
pub(crate) fn gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `out += aᵀ·b` with `a: rows×m`, `b: rows×n`, `out: m×n`.
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], rows: usize, m: usize, n: usize, out: &mut [f64]) {
    for r in 0..rows {
        let arow = &a[r * m..(r + 1) * m];
        let brow = &b[r * n..(r + 1) * n];
        for (i, &ai) in arow.iter().enumerate() {
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += ai * bv;
            }
        }
    }
}

/// `out += a·bᵀ` with `a: m×k`, `b: n×k`, `out: m×n`.
pub(crate) fn gemm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub(crate) fn gelu(x: f64) -> f64 {
    x * std_normal_cdf(x)
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    std_normal_cdf(x) + x * pdf
}

pub(crate) fn invert_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Permute `data` laid out as `shape`; output axis `i` is input axis `perm[i]`.
pub(crate) fn permute(shape: &[usize], data: &[f64], perm: &[usize]) -> Vec<f64> {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let rank = shape.len();
    let mut out = Vec::with_capacity(data.len());
    if rank == 0 {
        return data.to_vec();
    }
    let mut counter = vec![0usize; rank];
    let mut src = 0usize;
    let last = rank - 1;
    let (inner_n, inner_s) = (out_shape[last], src_strides[last]);
    loop {
        for j in 0..inner_n {
            out.push(data[src + j * inner_s]);
        }
        // advance the outer counters
        let mut axis = last;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            counter[axis] += 1;
            src += src_strides[axis];
            if counter[axis] < out_shape[axis] {
                break;
            }
            src -= src_strides[axis] * out_shape[axis];
            counter[axis] = 0;
        }
    }
}

fn expand_index_map(small: &[usize], big: &[usize]) -> Vec<usize> {
    let s_strides = strides(small);
    let n: usize = big.iter().product();
    let mut map = Vec::with_capacity(n);
    let mut counter = vec![0usize; big.len()];
    for _ in 0..n {
        let idx = counter
            .iter()
            .zip(small)
            .zip(&s_strides)
            .map(|((&c, &d), &s)| if d == 1 { 0 } else { c * s })
            .sum();
        map.push(idx);
        for axis in (0..big.len()).rev() {
            counter[axis] += 1;
            if counter[axis] < big[axis] {
                break;
            }
            counter[axis] = 0;
        }
    }
    map
}

pub(crate) fn reduce_expanded(small: &[usize], big: &[usize], g: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; small.iter().product()];
    for (k, idx) in expand_index_map(small, big).into_iter().enumerate() {
        out[idx] += g[k];
    }
    out
}

/// Geometry of a 2-D cross-correlation over `[n, cin, h, w]` inputs. 1-D
/// convolutions run through the same kernels with `h = kh = 1`.
#[derive(Clone, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    /// Input coordinate for output position `o` and kernel tap `k`, or `None`
    /// inside the zero padding.
    #[inline]
    fn src(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let pos = (o * stride + k).checked_sub(pad)?;
        (pos < extent).then_some(pos)
    }
}

fn conv_forward(geom: &ConvGeom, x: &[f64], k: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let g = geom;
    let mut out = vec![0.0; g.n * g.cout * g.ho * g.wo];
    for n in 0..g.n {
        for co in 0..g.cout {
            let b = bias.map_or(0.0, |b| b[co]);
            let obase = (n * g.cout + co) * g.ho * g.wo;
            for oy in 0..g.ho {
                for ox in 0..g.wo {
                    let mut acc = b;
                    for ci in 0..g.cin {
                        let xbase = (n * g.cin + ci) * g.h * g.w;
                        let kbase = (co * g.cin + ci) * g.kh * g.kw;
                        for ky in 0..g.kh {
                            let Some(iy) = ConvGeom::src(oy, ky, g.stride.0, g.padding.0, g.h)
                            else {
                                continue;
                            };
                            for kx in 0..g.kw {
                                if let Some(ix) =
                                    ConvGeom::src(ox, kx, g.stride.1, g.padding.1, g.w)
                                {
                                    acc += k[kbase + ky * g.kw + kx] * x[xbase + iy * g.w + ix];
                                }
                            }
                        }
                    }
                    out[obase + oy * g.wo + ox] = acc;
                }
            }
        }
    }
    out
}

pub(crate) fn conv_backward(
    geom: &ConvGeom,
    x: &[f64],
    k: &[f64],
    dy: &[f64],
    want_x: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let g = geom;
    let mut dx = vec![0.0; if want_x { x.len() } else { 0 }];
    let mut dk = vec![0.0; k.len()];
    let mut db = vec![0.0; g.cout];
    for n in 0..g.n {
        for co in 0..g.cout {
            let obase = (n * g.cout + co) * g.ho * g.wo;
            for oy in 0..g.ho {
                for ox in 0..g.wo {
                    let d = dy[obase + oy * g.wo + ox];
                    db[co] += d;
                    for ci in 0..g.cin {
                        let xbase = (n * g.cin + ci) * g.h * g.w;
                        let kbase = (co * g.cin + ci) * g.kh * g.kw;
                        for ky in 0..g.kh {
                            let Some(iy) = ConvGeom::src(oy, ky, g.stride.0, g.padding.0, g.h)
                            else {
                                continue;
                            };
                            for kx in 0..g.kw {
                                if let Some(ix) =
                                    ConvGeom::src(ox, kx, g.stride.1, g.padding.1, g.w)
                                {
                                    let xi = xbase + iy * g.w + ix;
                                    let ki = kbase + ky * g.kw + kx;
                                    dk[ki] += d * x[xi];
                                    if want_x {
                                        dx[xi] += d * k[ki];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dk, db)
}

fn check_same_shape(tape: &Tape, a: Var, b: Var, what: &str) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(Error::dim(format!(
            "{what}: shapes {:?} and {:?} differ",
            tape.shape(a),
            tape.shape(b)
        )));
    }
    Ok(())
}

fn check_axis(shape: &[usize], axis: usize, what: &str) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::dim(format!(
            "{what}: axis {axis} out of range for shape {shape:?}"
        )));
    }
    Ok(())
}

impl Tape {
    fn unary(&mut self, x: Var, data: Vec<f64>, op: Op) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let rg = self.requires_grad(x);
        self.push(Tensor { shape, data }, op, rg)
    }

    fn elementwise(
        &mut self,
        a: Var,
        b: Var,
        what: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        check_same_shape(self, a, b, what)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.any_grad(&[a, b]);
        self.push(Tensor { shape, data }, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Scalar-with-tensor product.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let data = self.value(a).data().iter().map(|x| x * c).collect();
        self.unary(a, data, Op::Scale(a, c))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!("matmul: {sa:?} · {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut data = vec![0.0; m * n];
        gemm(
            self.value(a).data(),
            self.value(b).data(),
            m,
            k,
            n,
            &mut data,
        );
        let rg = self.any_grad(&[a, b]);
        self.push(
            Tensor {
                shape: vec![m, n],
                data,
            },
            Op::MatMul(a, b),
            rg,
        )
    }

    /// `[B, m, k] · [B, k, n]`, or `[B, m, k] · [B, n, k]ᵀ` when `transpose_b`.
    pub fn batch_matmul(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let inner_b = if transpose_b { 2 } else { 1 };
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[inner_b] {
            return Err(Error::dim(format!(
                "batch_matmul: {sa:?} · {sb:?} (transpose_b={transpose_b})"
            )));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let n = if transpose_b { sb[1] } else { sb[2] };
        let mut data = vec![0.0; batch * m * n];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        for t in 0..batch {
            let at = &av[t * m * k..(t + 1) * m * k];
            let bt = &bv[t * k * n..(t + 1) * k * n];
            let ct = &mut data[t * m * n..(t + 1) * m * n];
            if transpose_b {
                gemm_nt(at, bt, m, k, n, ct);
            } else {
                gemm(at, bt, m, k, n, ct);
            }
        }
        let rg = self.any_grad(&[a, b]);
        self.push(
            Tensor {
                shape: vec![batch, m, n],
                data,
            },
            Op::BatchMatMul { a, b, transpose_b },
            rg,
        )
    }

    /// Affine map over the trailing axis: `x[..., in] · w[in, out] + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sw.len() != 2 || sx.last() != Some(&sw[0]) {
            return Err(Error::dim(format!("linear: input {sx:?}, weight {sw:?}")));
        }
        let (fan_in, fan_out) = (sw[0], sw[1]);
        if let Some(b) = b {
            if self.shape(b) != [fan_out] {
                return Err(Error::dim(format!(
                    "linear: bias {:?} for {fan_out} outputs",
                    self.shape(b)
                )));
            }
        }
        let rows = self.value(x).len() / fan_in;
        let mut data = vec![0.0; rows * fan_out];
        if let Some(b) = b {
            let bv = self.value(b).data();
            for row in data.chunks_exact_mut(fan_out) {
                row.copy_from_slice(bv);
            }
        }
        gemm(
            self.value(x).data(),
            self.value(w).data(),
            rows,
            fan_in,
            fan_out,
            &mut data,
        );
        let mut shape = sx;
        *shape.last_mut().unwrap() = fan_out;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let rg = self.any_grad(&inputs);
        self.push(Tensor { shape, data }, Op::Linear { x, w, b }, rg)
    }

    /// Exact GELU, `x·Φ(x)` with the erf-based normal CDF.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let data = self.value(x).data().iter().map(|&v| gelu(v)).collect();
        self.unary(x, data, Op::Gelu(x))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        check_axis(self.shape(x), axis, "softmax")?;
        let (outer, n, inner) = split_axis(self.shape(x), axis);
        let xv = self.value(x).data();
        let mut data = vec![0.0; xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * n + j) * inner + i;
                let max = (0..n).map(|j| xv[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for j in 0..n {
                    let e = (xv[idx(j)] - max).exp();
                    data[idx(j)] = e;
                    sum += e;
                }
                for j in 0..n {
                    data[idx(j)] /= sum;
                }
            }
        }
        self.unary(x, data, Op::Softmax { x, axis })
    }

    /// Normalize each slice along `axis` to zero mean and unit population
    /// variance (ε = 1e-5), then apply per-position `gain` and `bias`.
    pub fn layernorm(&mut self, x: Var, axis: usize, gain: Var, bias: Var) -> Result<Var> {
        check_axis(self.shape(x), axis, "layernorm")?;
        let (outer, n, inner) = split_axis(self.shape(x), axis);
        if self.shape(gain) != [n] || self.shape(bias) != [n] {
            return Err(Error::dim(format!(
                "layernorm: gain {:?} / bias {:?} for axis extent {n}",
                self.shape(gain),
                self.shape(bias)
            )));
        }
        let xv = self.value(x).data();
        let (gv, bv) = (self.value(gain).data(), self.value(bias).data());
        let mut xhat = vec![0.0; xv.len()];
        let mut rstd = vec![0.0; outer * inner];
        let mut data = vec![0.0; xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * n + j) * inner + i;
                let mean = (0..n).map(|j| xv[idx(j)]).sum::<f64>() / n as f64;
                let var = (0..n).map(|j| (xv[idx(j)] - mean).powi(2)).sum::<f64>() / n as f64;
                let r = 1.0 / (var + LAYERNORM_EPS).sqrt();
                rstd[o * inner + i] = r;
                for j in 0..n {
                    let k = idx(j);
                    xhat[k] = (xv[k] - mean) * r;
                    data[k] = xhat[k] * gv[j] + bv[j];
                }
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.any_grad(&[x, gain, bias]);
        self.push(
            Tensor { shape, data },
            Op::LayerNorm {
                x,
                gain,
                bias,
                axis,
                xhat,
                rstd,
            },
            rg,
        )
    }

    /// Inverted dropout. Eval mode and `rate == 0` return `x` unchanged.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        self.unary(x, data, Op::Dropout { x, mask })
    }

    /// Cross-correlation over the trailing `dims` (1 or 2) spatial axes.
    ///
    /// `dims = 1`: `x [n, cin, l]`, `kernel [cout, cin, k]`.
    /// `dims = 2`: `x [n, cin, h, w]`, `kernel [cout, cin, kh, kw]`.
    /// Output extents are `(in + 2·pad − k) / stride + 1` (floor).
    pub fn conv(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        dims: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        if dims == 2 {
            return self.conv2d(x, kernel, bias, (stride, stride), (padding, padding));
        }
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(kernel).to_vec());
        if dims != 1 || sx.len() != 3 || sk.len() != 3 {
            return Err(Error::dim(format!(
                "conv{dims}d: input {sx:?}, kernel {sk:?}"
            )));
        }
        let x4 = self.reshape(x, &[sx[0], sx[1], 1, sx[2]])?;
        let k4 = self.reshape(kernel, &[sk[0], sk[1], 1, sk[2]])?;
        let y = self.conv2d(x4, k4, bias, (1, stride), (0, padding))?;
        let sy = self.shape(y).to_vec();
        self.reshape(y, &[sy[0], sy[1], sy[3]])
    }

    /// 2-D cross-correlation with separate (row, column) stride and padding.
    pub fn conv2d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Var> {
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(kernel).to_vec());
        if sx.len() != 4 || sk.len() != 4 {
            return Err(Error::dim(format!("conv2d: input {sx:?}, kernel {sk:?}")));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Parameter("conv stride must be positive".into()));
        }
        if sx[1] != sk[1] {
            return Err(Error::dim(format!(
                "conv: input has {} channels, kernel expects {}",
                sx[1], sk[1]
            )));
        }
        let (h, w, kh, kw) = (sx[2], sx[3], sk[2], sk[3]);
        if kh > h + 2 * padding.0 || kw > w + 2 * padding.1 {
            return Err(Error::dim(format!(
                "conv: kernel {sk:?} larger than padded input {sx:?} (padding {padding:?})"
            )));
        }
        if let Some(b) = bias {
            if self.shape(b) != [sk[0]] {
                return Err(Error::dim(format!("conv: bias {:?}", self.shape(b))));
            }
        }
        let geom = ConvGeom {
            n: sx[0],
            cin: sx[1],
            h,
            w,
            cout: sk[0],
            kh,
            kw,
            stride,
            padding,
            ho: (h + 2 * padding.0 - kh) / stride.0 + 1,
            wo: (w + 2 * padding.1 - kw) / stride.1 + 1,
        };
        let data = conv_forward(
            &geom,
            self.value(x).data(),
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
        );
        let shape = vec![geom.n, geom.cout, geom.ho, geom.wo];
        let mut inputs = vec![x, kernel];
        inputs.extend(bias);
        let rg = self.any_grad(&inputs);
        self.push(
            Tensor { shape, data },
            Op::Conv {
                x,
                kernel,
                bias,
                geom,
            },
            rg,
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let rg = self.requires_grad(x);
        self.push(t, Op::Reshape(x), rg)
    }

    /// Output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        let valid = perm.len() == shape.len()
            && perm
                .iter()
                .all(|&p| p < shape.len() && !std::mem::replace(&mut seen[p], true));
        if !valid {
            return Err(Error::dim(format!("permute: {perm:?} for shape {shape:?}")));
        }
        let data = permute(&shape, self.value(x).data(), perm);
        let out_shape = perm.iter().map(|&p| shape[p]).collect();
        let rg = self.requires_grad(x);
        self.push(
            Tensor {
                shape: out_shape,
                data,
            },
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
            rg,
        )
    }

    /// Explicit repeat of extent-1 axes up to `shape` (same rank required).
    pub fn expand(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != shape.len() || sx.iter().zip(shape).any(|(&a, &b)| a != b && a != 1) {
            return Err(Error::dim(format!("expand: {sx:?} to {shape:?}")));
        }
        let xv = self.value(x).data();
        let data = expand_index_map(&sx, shape)
            .into_iter()
            .map(|i| xv[i])
            .collect();
        let rg = self.requires_grad(x);
        self.push(
            Tensor {
                shape: shape.to_vec(),
                data,
            },
            Op::Expand(x),
            rg,
        )
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return Err(Error::dim("concat of nothing"));
        };
        let base = self.shape(first).to_vec();
        check_axis(&base, axis, "concat")?;
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::dim(format!(
                    "concat along {axis}: {base:?} vs {s:?}"
                )));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let n = self.shape(v)[axis];
                let d = self.value(v).data();
                data.extend_from_slice(&d[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = self.any_grad(inputs);
        self.push(
            Tensor { shape, data },
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        )
    }

    /// Mean over `axis`, which is removed from the shape.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        check_axis(&sx, axis, "mean_axis")?;
        let (outer, n, inner) = split_axis(&sx, axis);
        let xv = self.value(x).data();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                for i in 0..inner {
                    data[o * inner + i] += xv[(o * n + j) * inner + i];
                }
            }
        }
        data.iter_mut().for_each(|v| *v /= n as f64);
        let mut shape = sx;
        shape.remove(axis);
        let rg = self.requires_grad(x);
        self.push(Tensor { shape, data }, Op::MeanAxis { x, axis }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        let rg = self.requires_grad(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Mean squared error between equally shaped tensors.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        check_same_shape(self, pred, target, "mse")?;
        let (p, t) = (self.value(pred).data(), self.value(target).data());
        let s = p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64;
        let rg = self.any_grad(&[pred, target]);
        self.push(Tensor::scalar(s), Op::Mse { pred, target }, rg)
    }
}
