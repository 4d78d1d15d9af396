use super::ops::{self, ConvGeom};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Records the (query length, key length) of every attention call made on a
/// tape, so callers can check how much score storage a forward pass needed.
#[derive(Clone, Debug, Default)]
pub struct AttentionProbe {
    calls: Vec<(usize, usize)>,
}

impl AttentionProbe {
    pub fn record(&mut self, query_len: usize, key_len: usize) {
        self.calls.push((query_len, key_len));
    }

    pub fn calls(&self) -> &[(usize, usize)] {
        &self.calls
    }

    /// Score-matrix entries per sequence, summed over calls.
    pub fn score_entries(&self) -> usize {
        self.calls.iter().map(|(q, k)| q * k).sum()
    }

    pub fn largest_score_matrix(&self) -> usize {
        self.calls.iter().map(|(q, k)| q * k).max().unwrap_or(0)
    }
}

pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    BatchMatMul {
        a: Var,
        b: Var,
        transpose_b: bool,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Gelu(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        axis: usize,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    Conv {
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    Reshape(Var),
    Permute {
        x: Var,
        perm: Vec<usize>,
    },
    Expand(Var),
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    MeanAxis {
        x: Var,
        axis: usize,
    },
    Sum(Var),
    Mse {
        pred: Var,
        target: Var,
    },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in creation order, so inputs always precede the nodes
/// that consume them. [`Tape::backward`] clears every gradient buffer before
/// it runs, which makes a tape reusable for repeated backward passes; sums
/// across steps belong in a [`super::ParamStore`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    probe: AttentionProbe,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn probe(&self) -> &AttentionProbe {
        &self.probe
    }

    pub fn probe_mut(&mut self) -> &mut AttentionProbe {
        &mut self.probe
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite value produced by {} at node {}",
                op_name(&op),
                self.nodes.len()
            )));
        }
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub(crate) fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Reverse sweep from a scalar `loss`. Every node that requires a gradient
    /// and lies upstream of `loss` ends with a populated buffer; contributions
    /// from multiple consumers are summed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::dim(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.backward_rule(i, &g);
            self.nodes[i].grad = Some(g);
            for (v, c) in contributions {
                let node = &mut self.nodes[v.0];
                if !node.requires_grad {
                    continue;
                }
                match &mut node.grad {
                    Some(buf) => buf.iter_mut().zip(&c).for_each(|(b, x)| *b += x),
                    None => node.grad = Some(c),
                }
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(g) = &node.grad {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numerical(format!("non-finite gradient at node {i}")));
                }
            }
        }
        Ok(())
    }

    fn val(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_rule(&self, i: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[i];
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.to_vec()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.iter().map(|x| -x).collect()));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                if self.wants(*a) {
                    out.push((*a, g.iter().zip(bv).map(|(g, b)| g * b).collect()));
                }
                if self.wants(*b) {
                    out.push((*b, g.iter().zip(av).map(|(g, a)| g * a).collect()));
                }
            }
            Op::Scale(a, c) => out.push((*a, g.iter().map(|x| x * c).collect())),
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if self.wants(*a) {
                    let mut da = vec![0.0; m * k];
                    ops::gemm_nt(g, self.val(*b), m, n, k, &mut da);
                    out.push((*a, da));
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; k * n];
                    ops::gemm_tn(self.val(*a), g, m, k, n, &mut db);
                    out.push((*b, db));
                }
            }
            Op::BatchMatMul { a, b, transpose_b } => {
                let sa = self.shape(*a);
                let (batch, m, k) = (sa[0], sa[1], sa[2]);
                let n = if *transpose_b {
                    self.shape(*b)[1]
                } else {
                    self.shape(*b)[2]
                };
                let (av, bv) = (self.val(*a), self.val(*b));
                let want_a = self.wants(*a);
                let want_b = self.wants(*b);
                let mut da = vec![0.0; if want_a { av.len() } else { 0 }];
                let mut db = vec![0.0; if want_b { bv.len() } else { 0 }];
                for t in 0..batch {
                    let gt = &g[t * m * n..(t + 1) * m * n];
                    let at = &av[t * m * k..(t + 1) * m * k];
                    let bt = &bv[t * k * n..(t + 1) * k * n];
                    if want_a {
                        let dat = &mut da[t * m * k..(t + 1) * m * k];
                        if *transpose_b {
                            // C = A·Bᵀ, B is n×k: dA = dC·B
                            ops::gemm(gt, bt, m, n, k, dat);
                        } else {
                            ops::gemm_nt(gt, bt, m, n, k, dat);
                        }
                    }
                    if want_b {
                        let dbt = &mut db[t * k * n..(t + 1) * k * n];
                        if *transpose_b {
                            // dB = dCᵀ·A (n×k)
                            ops::gemm_tn(gt, at, m, n, k, dbt);
                        } else {
                            ops::gemm_tn(at, gt, m, k, n, dbt);
                        }
                    }
                }
                if want_a {
                    out.push((*a, da));
                }
                if want_b {
                    out.push((*b, db));
                }
            }
            Op::Linear { x, w, b } => {
                let sw = self.shape(*w);
                let (fan_in, fan_out) = (sw[0], sw[1]);
                let rows = self.val(*x).len() / fan_in;
                if self.wants(*x) {
                    let mut dx = vec![0.0; rows * fan_in];
                    ops::gemm_nt(g, self.val(*w), rows, fan_out, fan_in, &mut dx);
                    out.push((*x, dx));
                }
                if self.wants(*w) {
                    let mut dw = vec![0.0; fan_in * fan_out];
                    ops::gemm_tn(self.val(*x), g, rows, fan_in, fan_out, &mut dw);
                    out.push((*w, dw));
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        let mut db = vec![0.0; fan_out];
                        for row in g.chunks_exact(fan_out) {
                            db.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                        }
                        out.push((*b, db));
                    }
                }
            }
            Op::Gelu(x) => {
                let dx = g
                    .iter()
                    .zip(self.val(*x))
                    .map(|(g, &x)| g * ops::gelu_grad(x))
                    .collect();
                out.push((*x, dx));
            }
            Op::Softmax { x, axis } => {
                let y = node.value.data();
                let (outer, n, inner) = super::split_axis(node.value.shape(), *axis);
                let mut dx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + i;
                        let dot: f64 = (0..n).map(|j| g[idx(j)] * y[idx(j)]).sum();
                        for j in 0..n {
                            dx[idx(j)] = y[idx(j)] * (g[idx(j)] - dot);
                        }
                    }
                }
                out.push((*x, dx));
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                axis,
                xhat,
                rstd,
            } => {
                let (outer, n, inner) = super::split_axis(node.value.shape(), *axis);
                let gv = self.val(*gain);
                let mut dx = vec![0.0; xhat.len()];
                let mut dgain = vec![0.0; n];
                let mut dbias = vec![0.0; n];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + i;
                        let r = rstd[o * inner + i];
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for j in 0..n {
                            let k = idx(j);
                            dgain[j] += g[k] * xhat[k];
                            dbias[j] += g[k];
                            let d = g[k] * gv[j];
                            mean_d += d;
                            mean_dx += d * xhat[k];
                        }
                        mean_d /= n as f64;
                        mean_dx /= n as f64;
                        for j in 0..n {
                            let k = idx(j);
                            let d = g[k] * gv[j];
                            dx[k] = r * (d - mean_d - xhat[k] * mean_dx);
                        }
                    }
                }
                out.push((*x, dx));
                out.push((*gain, dgain));
                out.push((*bias, dbias));
            }
            Op::Dropout { x, mask } => {
                out.push((*x, g.iter().zip(mask).map(|(g, m)| g * m).collect()));
            }
            Op::Conv {
                x,
                kernel,
                bias,
                geom,
            } => {
                let want_x = self.wants(*x);
                let (dx, dk, db) =
                    ops::conv_backward(geom, self.val(*x), self.val(*kernel), g, want_x);
                if want_x {
                    out.push((*x, dx));
                }
                out.push((*kernel, dk));
                if let Some(b) = bias {
                    out.push((*b, db));
                }
            }
            Op::Reshape(x) => out.push((*x, g.to_vec())),
            Op::Permute { x, perm } => {
                let inv = ops::invert_perm(perm);
                let dx = ops::permute(node.value.shape(), g, &inv);
                out.push((*x, dx));
            }
            Op::Expand(x) => {
                let dx = ops::reduce_expanded(self.shape(*x), node.value.shape(), g);
                out.push((*x, dx));
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = super::split_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for v in inputs {
                    let n = self.shape(*v)[*axis];
                    if self.wants(*v) {
                        let mut d = Vec::with_capacity(outer * n * inner);
                        for o in 0..outer {
                            let start = (o * total + offset) * inner;
                            d.extend_from_slice(&g[start..start + n * inner]);
                        }
                        out.push((*v, d));
                    }
                    offset += n;
                }
            }
            Op::MeanAxis { x, axis } => {
                let (outer, n, inner) = super::split_axis(self.shape(*x), *axis);
                let mut dx = vec![0.0; outer * n * inner];
                let scale = 1.0 / n as f64;
                for o in 0..outer {
                    for j in 0..n {
                        for i in 0..inner {
                            dx[(o * n + j) * inner + i] = g[o * inner + i] * scale;
                        }
                    }
                }
                out.push((*x, dx));
            }
            Op::Sum(x) => out.push((*x, vec![g[0]; self.val(*x).len()])),
            Op::Mse { pred, target } => {
                let (p, t) = (self.val(*pred), self.val(*target));
                let c = 2.0 * g[0] / p.len() as f64;
                let dp: Vec<f64> = p.iter().zip(t).map(|(p, t)| c * (p - t)).collect();
                if self.wants(*target) {
                    out.push((*target, dp.iter().map(|x| -x).collect()));
                }
                out.push((*pred, dp));
            }
        }
        out
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::MatMul(..) => "matmul",
        Op::BatchMatMul { .. } => "batch_matmul",
        Op::Linear { .. } => "linear",
        Op::Gelu(..) => "gelu",
        Op::Softmax { .. } => "softmax",
        Op::LayerNorm { .. } => "layernorm",
        Op::Dropout { .. } => "dropout",
        Op::Conv { .. } => "conv",
        Op::Reshape(..) => "reshape",
        Op::Permute { .. } => "permute",
        Op::Expand(..) => "expand",
        Op::Concat { .. } => "concat",
        Op::MeanAxis { .. } => "mean_axis",
        Op::Sum(..) => "sum",
        Op::Mse { .. } => "mse",
    }
}
