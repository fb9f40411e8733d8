use super::tensor::{axis_extents, Tensor};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_COEFF: f64 = 0.044_715;
// sqrt(2 / pi)
const GELU_SCALE: f64 = 0.797_884_560_802_865_4;

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRowBias {
        x: Var,
        bias: Var,
    },
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Relu(Var),
    Gelu(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Mean {
        x: Var,
        axis: usize,
    },
    Sum(Var),
    Conv1d {
        x: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padded: Vec<f64>,
    },
    GradReversal {
        x: Var,
        lambda: f64,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        coeffs: Vec<f64>,
        probs: Vec<f64>,
    },
}

impl Op {
    fn kind(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddRowBias { .. } => "add_row_bias",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::Narrow { .. } => "narrow",
            Op::Concat { .. } => "concat",
            Op::Relu(..) => "relu",
            Op::Gelu(..) => "gelu",
            Op::Softmax { .. } => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Mean { .. } => "mean",
            Op::Sum(..) => "sum",
            Op::Conv1d { .. } => "conv1d",
            Op::GradReversal { .. } => "gradient_reversal",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Linear record of a forward computation.
///
/// Nodes are appended in evaluation order, so inputs always precede their
/// consumers and [`Tape::backward`] walks the list once in reverse. Results
/// of operations whose inputs are all constants are stored as constants and
/// keep no saved state.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to the leaves of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to leaf `var`. Leaves the loss does
    /// not depend on get zeros.
    pub fn wrt(&self, var: Var) -> Tensor {
        let shape = self.shapes[var.0].clone();
        match &self.grads[var.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }

    /// True if any gradient reached `var`.
    pub fn reached(&self, var: Var) -> bool {
        self.grads[var.0].is_some()
    }
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

fn gelu(x: f64) -> f64 {
    let u = GELU_SCALE * (x + GELU_COEFF * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_SCALE * (x + GELU_COEFF * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_SCALE * (1.0 + 3.0 * GELU_COEFF * x * x)
}

/// C[m,n] += A[m,k] * B[k,n]
fn matmul_into(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (c_ij, b_pj) in c_row.iter_mut().zip(b_row) {
                *c_ij += a_ip * b_pj;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a value that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Records a value that is treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Name of the primitive that produced `var`.
    pub fn op_kind(&self, var: Var) -> &'static str {
        self.nodes[var.0].op.kind()
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Tensor, inputs: &[Var], op: Op) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, sa, sb));
        }
        Ok(())
    }

    fn dims2(&self, op: &'static str, x: Var) -> Result<(usize, usize)> {
        self.value(x).dims2().ok_or_else(|| Error::InvalidTensor(format!(
            "{op} expects a rank-2 tensor, got shape {:?}",
            self.shape(x)
        )))
    }

    fn check_axis(&self, op: &'static str, x: Var, axis: usize) -> Result<()> {
        let rank = self.value(x).rank();
        if axis >= rank {
            return Err(Error::InvalidAxis { op, axis, rank });
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(va.shape().to_vec(), data).expect("same shape")
    }

    fn map(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let v = self.value(x);
        Tensor::new(v.shape().to_vec(), v.data().iter().map(|x| f(*x)).collect())
            .expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        Ok(self.record(out, &[a, b], Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        Ok(self.record(out, &[a, b], Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_map(a, b, |x, y| x * y);
        Ok(self.record(out, &[a, b], Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.map(x, |v| v * factor);
        self.record(out, &[x], Op::Scale(x, factor))
    }

    /// Adds a length-`n` bias to every row of an `m x n` matrix.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, n) = self.dims2("add_row_bias", x)?;
        if self.shape(bias) != [n] {
            return Err(shape_err("add_row_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, bj) in row.iter_mut().zip(&b) {
                *o += bj;
            }
        }
        Ok(self.record(out, &[x, bias], Op::AddRowBias { x, bias }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2("matmul", a)?;
        let (k2, n) = self.dims2("matmul", b)?;
        if k != k2 {
            return Err(shape_err("matmul", self.shape(a), self.shape(b)));
        }
        let mut c = vec![0.0; m * n];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut c, m, k, n);
        let out = Tensor::new(vec![m, n], c)?;
        Ok(self.record(out, &[a, b], Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.dims2("transpose", x)?;
        let src = self.value(x).data();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        let out = Tensor::new(vec![n, m], data)?;
        Ok(self.record(out, &[x], Op::Transpose(x)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshaped(shape.to_vec())?;
        Ok(self.record(out, &[x], Op::Reshape(x)))
    }

    /// Slice `len` entries along `axis` starting at `start`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.check_axis("narrow", x, axis)?;
        let shape = self.shape(x).to_vec();
        if start + len > shape[axis] {
            return Err(Error::InvalidTensor(format!(
                "narrow: range {start}..{} exceeds axis {axis} of shape {shape:?}",
                start + len
            )));
        }
        let (outer, full, inner) = axis_extents(&shape, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let out = Tensor::new(out_shape, data)?;
        Ok(self.record(out, &[x], Op::Narrow { x, axis, start }))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::InvalidTensor("concat of zero tensors".into()))?;
        self.check_axis("concat", first, axis)?;
        let base_shape = self.shape(first).to_vec();
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base_shape.len()
                && s.iter()
                    .zip(&base_shape)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(shape_err("concat", &base_shape, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_extents(&base_shape, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let len = self.shape(v)[axis];
                let src = self.value(v).data();
                data.extend_from_slice(&src[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base_shape;
        shape[axis] = total;
        let out = Tensor::new(shape, data)?;
        Ok(self.record(
            out,
            inputs,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.map(x, |v| v.max(0.0));
        self.record(out, &[x], Op::Relu(x))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.map(x, gelu);
        self.record(out, &[x], Op::Gelu(x))
    }

    /// Softmax along `axis`, with max subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis("softmax", x, axis)?;
        let value = self.value(x);
        let (outer, len, inner) = axis_extents(value.shape(), axis);
        let src = value.data();
        let mut data = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |a: usize| (o * len + a) * inner + i;
                let max = (0..len).map(|a| src[idx(a)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for a in 0..len {
                    let e = (src[idx(a)] - max).exp();
                    data[idx(a)] = e;
                    total += e;
                }
                for a in 0..len {
                    data[idx(a)] /= total;
                }
            }
        }
        let out = Tensor::new(value.shape().to_vec(), data)?;
        Ok(self.record(out, &[x], Op::Softmax { x, axis }))
    }

    /// Layer normalisation over the last axis with learned gain and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n = *shape
            .last()
            .ok_or_else(|| Error::InvalidTensor("layer_norm on a scalar".into()))?;
        for p in [gamma, beta] {
            if self.shape(p) != [n] {
                return Err(shape_err("layer_norm", &shape, self.shape(p)));
            }
        }
        let g = self.value(gamma).data().to_vec();
        let b = self.value(beta).data().to_vec();
        let src = self.value(x).data();
        let rows = src.len() / n;
        let mut normalized = vec![0.0; src.len()];
        let mut inv_std = vec![0.0; rows];
        let mut data = vec![0.0; src.len()];
        for r in 0..rows {
            let row = &src[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = inv;
            for j in 0..n {
                let xh = (row[j] - mean) * inv;
                normalized[r * n + j] = xh;
                data[r * n + j] = g[j] * xh + b[j];
            }
        }
        let out = Tensor::new(shape, data)?;
        Ok(self.record(
            out,
            &[x, gamma, beta],
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
        ))
    }

    /// Mean along `axis`; the axis is removed from the shape.
    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis("mean", x, axis)?;
        let shape = self.shape(x).to_vec();
        let (outer, len, inner) = axis_extents(&shape, axis);
        let src = self.value(x).data();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                for i in 0..inner {
                    data[o * inner + i] += src[(o * len + a) * inner + i];
                }
            }
        }
        for d in &mut data {
            *d /= len as f64;
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        let out = Tensor::new(out_shape, data)?;
        Ok(self.record(out, &[x], Op::Mean { x, axis }))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        self.record(Tensor::scalar(total), &[x], Op::Sum(x))
    }

    /// Strided 1-D convolution on a time-major signal.
    ///
    /// `x` is `[L, C_in]`, `weight` is `[K, C_in, C_out]`, `bias` is
    /// `[C_out]`. The input is extended with `pad_right` zero frames, and the
    /// output has `(L + pad_right - K) / stride + 1` frames.
    pub fn conv1d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        pad_right: usize,
    ) -> Result<Var> {
        let (len, c_in) = self.dims2("conv1d", x)?;
        let wshape = self.shape(weight).to_vec();
        let [k, w_in, c_out] = wshape[..] else {
            return Err(shape_err("conv1d", self.shape(x), &wshape));
        };
        if w_in != c_in {
            return Err(shape_err("conv1d", self.shape(x), &wshape));
        }
        if self.shape(bias) != [c_out] {
            return Err(shape_err("conv1d", &wshape, self.shape(bias)));
        }
        if stride == 0 {
            return Err(Error::InvalidTensor("conv1d: stride must be positive".into()));
        }
        let padded_len = len + pad_right;
        if padded_len < k {
            return Err(Error::InvalidTensor(format!(
                "conv1d: input of {len} frames is shorter than kernel {k}"
            )));
        }
        let t_out = (padded_len - k) / stride + 1;
        let mut padded = self.value(x).data().to_vec();
        padded.resize(padded_len * c_in, 0.0);
        let w = self.value(weight).data();
        let b = self.value(bias).data();
        let window = k * c_in;
        let mut data = Vec::with_capacity(t_out * c_out);
        for _ in 0..t_out {
            data.extend_from_slice(b);
        }
        for t in 0..t_out {
            let start = t * stride * c_in;
            let cols = &padded[start..start + window];
            matmul_into(cols, w, &mut data[t * c_out..(t + 1) * c_out], 1, window, c_out);
        }
        let out = Tensor::new(vec![t_out, c_out], data)?;
        Ok(self.record(
            out,
            &[x, weight, bias],
            Op::Conv1d {
                x,
                weight,
                bias,
                stride,
                padded,
            },
        ))
    }

    /// Identity in the forward pass; multiplies the incoming gradient by
    /// `-lambda` in the backward pass.
    pub fn gradient_reversal(&mut self, x: Var, lambda: f64) -> Var {
        let out = self.value(x).clone();
        self.record(out, &[x], Op::GradReversal { x, lambda })
    }

    /// `-sum_i coeffs[i] * log_softmax(logits_i)[labels[i]]` over the rows of a
    /// `B x C` logit matrix.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize], coeffs: &[f64]) -> Result<Var> {
        let (rows, classes) = self.dims2("cross_entropy", logits)?;
        if labels.len() != rows || coeffs.len() != rows {
            return Err(shape_err(
                "cross_entropy",
                self.shape(logits),
                &[labels.len(), coeffs.len()],
            ));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let src = self.value(logits).data();
        let mut probs = vec![0.0; src.len()];
        let mut loss = 0.0;
        for i in 0..rows {
            let row = &src[i * classes..(i + 1) * classes];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for c in 0..classes {
                probs[i * classes + c] = (row[c] - lse).exp();
            }
            loss -= coeffs[i] * (row[labels[i]] - lse);
        }
        Ok(self.record(
            Tensor::scalar(loss),
            &[logits],
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                coeffs: coeffs.to_vec(),
                probs,
            },
        ))
    }

    /// Reverse sweep from a scalar `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let shapes: Vec<Vec<usize>> = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        // Runs `f` on the (zero-initialised) gradient buffer of `v` when `v`
        // takes part in differentiation.
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()]);
            f(buf);
        };
        let val = |v: Var| nodes[v.0].value.data();
        let add_into = |buf: &mut [f64]| {
            for (b, gi) in buf.iter_mut().zip(g) {
                *b += gi;
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |buf| add_into(buf));
                acc(*b, &mut |buf| add_into(buf));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |buf| add_into(buf));
                acc(*b, &mut |buf| {
                    for (d, gi) in buf.iter_mut().zip(g) {
                        *d -= gi;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &mut |buf| {
                    for ((d, gi), y) in buf.iter_mut().zip(g).zip(vb) {
                        *d += gi * y;
                    }
                });
                acc(*b, &mut |buf| {
                    for ((d, gi), x) in buf.iter_mut().zip(g).zip(va) {
                        *d += gi * x;
                    }
                });
            }
            Op::Scale(x, factor) => acc(*x, &mut |buf| {
                for (d, gi) in buf.iter_mut().zip(g) {
                    *d += factor * gi;
                }
            }),
            Op::AddRowBias { x, bias } => {
                acc(*x, &mut |buf| add_into(buf));
                let n = nodes[bias.0].value.numel();
                acc(*bias, &mut |buf| {
                    for row in g.chunks(n) {
                        for (d, gi) in buf.iter_mut().zip(row) {
                            *d += gi;
                        }
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (m, k) = nodes[a.0].value.dims2().expect("rank 2");
                let n = nodes[b.0].value.dims2().expect("rank 2").1;
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &mut |buf| {
                    for i in 0..m {
                        let g_row = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            buf[i * k + p] += dot(g_row, &vb[p * n..(p + 1) * n]);
                        }
                    }
                });
                acc(*b, &mut |buf| {
                    for i in 0..m {
                        let g_row = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let a_ip = va[i * k + p];
                            if a_ip == 0.0 {
                                continue;
                            }
                            for (d, gj) in buf[p * n..(p + 1) * n].iter_mut().zip(g_row) {
                                *d += a_ip * gj;
                            }
                        }
                    }
                });
            }
            Op::Transpose(x) => {
                let (m, n) = nodes[x.0].value.dims2().expect("rank 2");
                acc(*x, &mut |buf| {
                    for i in 0..m {
                        for j in 0..n {
                            buf[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::Reshape(x) => acc(*x, &mut |buf| add_into(buf)),
            Op::Narrow { x, axis, start } => {
                let (outer, full, inner) = axis_extents(nodes[x.0].value.shape(), *axis);
                let len = node.value.shape()[*axis];
                acc(*x, &mut |buf| {
                    for o in 0..outer {
                        let dst = (o * full + start) * inner;
                        let src = o * len * inner;
                        for (d, gi) in buf[dst..dst + len * inner]
                            .iter_mut()
                            .zip(&g[src..src + len * inner])
                        {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = axis_extents(node.value.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let len = nodes[v.0].value.shape()[*axis];
                    acc(v, &mut |buf| {
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            let dst = o * len * inner;
                            for (d, gi) in buf[dst..dst + len * inner]
                                .iter_mut()
                                .zip(&g[src..src + len * inner])
                            {
                                *d += gi;
                            }
                        }
                    });
                    offset += len;
                }
            }
            Op::Relu(x) => {
                let vx = val(*x);
                acc(*x, &mut |buf| {
                    for ((d, gi), xi) in buf.iter_mut().zip(g).zip(vx) {
                        if *xi > 0.0 {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Gelu(x) => {
                let vx = val(*x);
                acc(*x, &mut |buf| {
                    for ((d, gi), xi) in buf.iter_mut().zip(g).zip(vx) {
                        *d += gi * gelu_grad(*xi);
                    }
                });
            }
            Op::Softmax { x, axis } => {
                let y = node.value.data();
                let (outer, len, inner) = axis_extents(node.value.shape(), *axis);
                acc(*x, &mut |buf| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |a: usize| (o * len + a) * inner + i;
                            let s: f64 = (0..len).map(|a| g[idx(a)] * y[idx(a)]).sum();
                            for a in 0..len {
                                buf[idx(a)] += y[idx(a)] * (g[idx(a)] - s);
                            }
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let n = nodes[gamma.0].value.numel();
                let gv = val(*gamma);
                acc(*gamma, &mut |buf| {
                    for (g_row, xh_row) in g.chunks(n).zip(normalized.chunks(n)) {
                        for j in 0..n {
                            buf[j] += g_row[j] * xh_row[j];
                        }
                    }
                });
                acc(*beta, &mut |buf| {
                    for g_row in g.chunks(n) {
                        for (d, gi) in buf.iter_mut().zip(g_row) {
                            *d += gi;
                        }
                    }
                });
                acc(*x, &mut |buf| {
                    let nf = n as f64;
                    for r in 0..inv_std.len() {
                        let g_row = &g[r * n..(r + 1) * n];
                        let xh = &normalized[r * n..(r + 1) * n];
                        let mut sum_gxh = 0.0;
                        let mut sum_gxh_xh = 0.0;
                        for j in 0..n {
                            let gxh = g_row[j] * gv[j];
                            sum_gxh += gxh;
                            sum_gxh_xh += gxh * xh[j];
                        }
                        for j in 0..n {
                            let gxh = g_row[j] * gv[j];
                            buf[r * n + j] +=
                                inv_std[r] / nf * (nf * gxh - sum_gxh - xh[j] * sum_gxh_xh);
                        }
                    }
                });
            }
            Op::Mean { x, axis } => {
                let (outer, len, inner) = axis_extents(nodes[x.0].value.shape(), *axis);
                let scale = 1.0 / len as f64;
                acc(*x, &mut |buf| {
                    for o in 0..outer {
                        for a in 0..len {
                            for i in 0..inner {
                                buf[(o * len + a) * inner + i] += g[o * inner + i] * scale;
                            }
                        }
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |buf| {
                for d in buf.iter_mut() {
                    *d += g[0];
                }
            }),
            Op::Conv1d {
                x,
                weight,
                bias,
                stride,
                padded,
            } => {
                let (t_out, c_out) = node.value.dims2().expect("rank 2");
                let c_in = nodes[x.0].value.shape()[1];
                let window = nodes[weight.0].value.numel() / c_out;
                let w = val(*weight);
                acc(*bias, &mut |buf| {
                    for row in g.chunks(c_out) {
                        for (d, gi) in buf.iter_mut().zip(row) {
                            *d += gi;
                        }
                    }
                });
                acc(*weight, &mut |buf| {
                    for t in 0..t_out {
                        let start = t * stride * c_in;
                        let cols = &padded[start..start + window];
                        let g_row = &g[t * c_out..(t + 1) * c_out];
                        for (r, &xv) in cols.iter().enumerate() {
                            if xv == 0.0 {
                                continue;
                            }
                            for (d, gi) in buf[r * c_out..(r + 1) * c_out].iter_mut().zip(g_row) {
                                *d += xv * gi;
                            }
                        }
                    }
                });
                acc(*x, &mut |buf| {
                    let limit = buf.len();
                    for t in 0..t_out {
                        let start = t * stride * c_in;
                        let g_row = &g[t * c_out..(t + 1) * c_out];
                        for r in 0..window {
                            let pos = start + r;
                            if pos >= limit {
                                break;
                            }
                            buf[pos] += dot(&w[r * c_out..(r + 1) * c_out], g_row);
                        }
                    }
                });
            }
            Op::GradReversal { x, lambda } => acc(*x, &mut |buf| {
                for (d, gi) in buf.iter_mut().zip(g) {
                    *d += -lambda * gi;
                }
            }),
            Op::CrossEntropy {
                logits,
                labels,
                coeffs,
                probs,
            } => {
                let classes = probs.len() / labels.len().max(1);
                acc(*logits, &mut |buf| {
                    for (i, (&label, &c)) in labels.iter().zip(coeffs).enumerate() {
                        for k in 0..classes {
                            let target = if k == label { 1.0 } else { 0.0 };
                            buf[i * classes + k] += g[0] * c * (probs[i * classes + k] - target);
                        }
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_param(tape: &mut Tape, data: &[f64]) -> Var {
        tape.param(Tensor::vector(data.to_vec()))
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0; 3]));
        let y = tape.softmax(x, 0).unwrap();
        for v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_handles_large_logits() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1000.0, 1000.0, -1000.0]));
        let y = tape.softmax(x, 0).unwrap();
        let d = tape.value(y).data();
        assert!((d[0] - 0.5).abs() < 1e-12 && d[2] == 0.0);
    }

    #[test]
    fn relu_definition() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn conv1d_sliding_window_sum() {
        // time-major [L=4, C=1] signal, kernel [K=2, 1, 1] of ones, stride 2.
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let w = tape.constant(Tensor::new(vec![2, 1, 1], vec![1.0, 1.0]).unwrap());
        let b = tape.constant(Tensor::vector(vec![0.0]));
        let y = tape.conv1d(x, w, b, 2, 0).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 7.0]);
    }

    #[test]
    fn conv1d_right_padding_yields_floor_length() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(10, 1, vec![1.0; 10]).unwrap());
        let w = tape.constant(Tensor::new(vec![4, 1, 1], vec![1.0; 4]).unwrap());
        let b = tape.constant(Tensor::vector(vec![0.0]));
        let y = tape.conv1d(x, w, b, 2, 2).unwrap();
        assert_eq!(tape.shape(y), &[5, 1]);
        // the last window covers two real samples and two padded zeros
        assert_eq!(tape.value(y).data(), &[4.0, 4.0, 4.0, 4.0, 2.0]);
    }

    #[test]
    fn square_derivative() {
        let mut tape = Tape::new();
        let x = vec_param(&mut tape, &[3.0]);
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).data(), &[6.0]);
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = vec_param(&mut tape, &[1.0, 2.0]);
        let unused = vec_param(&mut tape, &[5.0, 6.0, 7.0]);
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        assert!(!grads.reached(unused));
        assert_eq!(grads.wrt(unused).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_errors() {
        let tape = Tape::new();
        assert!(matches!(tape.backward(Var(0)), Err(Error::EmptyTape)));

        let mut tape = Tape::new();
        let x = vec_param(&mut tape, &[1.0, 2.0]);
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn shape_errors_name_the_primitive() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
        let c = tape.constant(Tensor::zeros(&[3]));
        let err = tape.add(a, c).unwrap_err().to_string();
        assert!(err.contains("add"), "{err}");
        assert!(matches!(tape.softmax(c, 1), Err(Error::InvalidAxis { .. })));
    }

    #[test]
    fn grl_forward_identity_and_reversed_backward() {
        for lambda in [-1.0, 0.0, 0.5, 1.0] {
            let mut tape = Tape::new();
            let x = vec_param(&mut tape, &[0.2, -1.5]);
            let y = tape.gradient_reversal(x, lambda);
            assert_eq!(tape.value(y).data(), &[0.2, -1.5]);
            let up = tape.constant(Tensor::vector(vec![1.0, 2.0]));
            let prod = tape.mul(y, up).unwrap();
            let loss = tape.sum(prod);
            let grads = tape.backward(loss).unwrap();
            assert_eq!(grads.wrt(x).data(), &[-lambda * 1.0, -lambda * 2.0]);
        }
    }

    #[test]
    fn constant_inputs_record_no_saved_state() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 2]));
        let b = tape.constant(Tensor::zeros(&[2, 2]));
        let c = tape.matmul(a, b).unwrap();
        assert!(!tape.requires_grad(c));
        assert_eq!(tape.op_kind(c), "leaf");
    }
}
