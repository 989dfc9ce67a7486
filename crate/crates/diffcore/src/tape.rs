//! Eager operation recording and reverse-mode gradient propagation.
//!
//! Every primitive evaluates immediately, stores its output on the tape and
//! remembers which nodes it read. [`Tape::backward`] walks the record in
//! exact reverse order, accumulating one gradient buffer per node that
//! (transitively) depends on a leaf created with `requires_grad`.

use crate::tensor::ensure_finite;
use crate::{DiffError, Result, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Affine(Var, Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Conv1d { input: Var, kernels: Var, width: usize },
    MaxOverTime { input: Var, argmax: Vec<usize> },
    ConcatCols(Vec<Var>),
    SliceCols { input: Var, start: usize },
    Row { input: Var, row: usize },
    Reshape(Var),
    Sum(Var),
    SoftmaxCrossEntropy { logits: Var, label: usize, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Computation record for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradient buffers produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if `var` was on a
    /// differentiable path.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn dims2(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(DiffError::Shape(format!(
            "{what} expects a rank-2 tensor, got shape {:?}",
            t.shape()
        ))),
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(DiffError::Shape(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `out[p×r] += a[p×q] · b[q×r]`, skipping zero entries of `a` (one-hot
/// inputs are mostly zeros).
fn matmul_into(out: &mut [f64], a: &[f64], b: &[f64], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let out_row = &mut out[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = a[i * q + k];
            if aik == 0.0 {
                continue;
            }
            let b_row = &b[k * r..(k + 1) * r];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
}

/// `out[p×q] += g[p×r] · bᵀ` where `b` is `q×r`.
fn matmul_bt_into(out: &mut [f64], g: &[f64], b: &[f64], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let g_row = &g[i * r..(i + 1) * r];
        for k in 0..q {
            let b_row = &b[k * r..(k + 1) * r];
            let dot: f64 = g_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
            out[i * q + k] += dot;
        }
    }
}

/// `out[q×r] += aᵀ · g` where `a` is `p×q` and `g` is `p×r`.
fn matmul_at_into(out: &mut [f64], a: &[f64], g: &[f64], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let g_row = &g[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = a[i * q + k];
            if aik == 0.0 {
                continue;
            }
            let out_row = &mut out[k * r..(k + 1) * r];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += aik * gv;
            }
        }
    }
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Records an input. Only leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn checked(&mut self, what: &str, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[Var]) -> Result<Var> {
        ensure_finite(what, &data)?;
        let needs = self.needs(inputs);
        Ok(self.push(Tensor::from_parts(shape, data), op, needs))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = dims2(self.value(a), "matmul")?;
        let (q2, r) = dims2(self.value(b), "matmul")?;
        if q != q2 {
            return Err(DiffError::Shape(format!(
                "matmul inner dimensions disagree: {p}×{q} by {q2}×{r}"
            )));
        }
        let mut out = vec![0.0; p * r];
        matmul_into(&mut out, self.value(a).data(), self.value(b).data(), p, q, r);
        self.checked("matmul", vec![p, r], out, Op::MatMul(a, b), &[a, b])
    }

    /// `x · w + bias` with the bias broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        let (p, q) = dims2(self.value(x), "affine")?;
        let (q2, r) = dims2(self.value(w), "affine")?;
        if q != q2 || self.value(bias).len() != r {
            return Err(DiffError::Shape(format!(
                "affine: input {p}×{q}, weight {q2}×{r}, bias {:?}",
                self.value(bias).shape()
            )));
        }
        let b = self.value(bias).data();
        let mut out: Vec<f64> = (0..p).flat_map(|_| b.iter().copied()).collect();
        matmul_into(&mut out, self.value(x).data(), self.value(w).data(), p, q, r);
        self.checked("affine", vec![p, r], out, Op::Affine(x, w, bias), &[x, w, bias])
    }

    /// Adds a vector along the last dimension of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let r = *xv.shape().last().unwrap_or(&1);
        if self.value(bias).len() != r {
            return Err(DiffError::Shape(format!(
                "bias of length {} does not match last dimension of {:?}",
                self.value(bias).len(),
                xv.shape()
            )));
        }
        let b = self.value(bias).data();
        let out: Vec<f64> = xv.data().iter().enumerate().map(|(i, v)| v + b[i % r]).collect();
        let shape = xv.shape().to_vec();
        self.checked("add_bias", shape, out, Op::AddBias(x, bias), &[x, bias])
    }

    fn zip_with(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        same_shape(self.value(a), self.value(b), what)?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.checked(what, shape, out, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let v = self.value(x);
        let out = v.data().iter().map(|&e| e * factor).collect();
        let shape = v.shape().to_vec();
        self.checked("scale", shape, out, Op::Scale(x, factor), &[x])
    }

    fn unary(&mut self, x: Var, what: &str, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let v = self.value(x);
        let out = v.data().iter().map(|&e| f(e)).collect();
        let shape = v.shape().to_vec();
        self.checked(what, shape, out, op, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "tanh", f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "sigmoid", sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "relu", |v| v.max(0.0), Op::Relu(x))
    }

    /// Valid (unpadded) temporal convolution.
    ///
    /// `input` is `[time, channels]` or `[batch, time, channels]`, `kernels`
    /// is `[width, channels, out]`. The output keeps the input's rank with
    /// `time - width + 1` steps.
    pub fn conv1d(&mut self, input: Var, kernels: Var, width: usize) -> Result<Var> {
        let iv = self.value(input);
        let (batch, time, ch) = match *iv.shape() {
            [t, c] => (1, t, c),
            [b, t, c] => (b, t, c),
            _ => {
                return Err(DiffError::Shape(format!(
                    "conv1d input must be rank 2 or 3, got {:?}",
                    iv.shape()
                )))
            }
        };
        let kv = self.value(kernels);
        let out_ch = match *kv.shape() {
            [w, c, o] if w == width && c == ch => o,
            _ => {
                return Err(DiffError::Shape(format!(
                    "conv1d kernels {:?} incompatible with width {width} and {ch} channels",
                    kv.shape()
                )))
            }
        };
        if width == 0 || time < width {
            return Err(DiffError::Degenerate(format!(
                "conv1d needs at least {width} time steps, got {time}"
            )));
        }
        let steps = time - width + 1;
        let window = width * ch;
        let x = iv.data();
        let k = kv.data();
        let mut out = vec![0.0; batch * steps * out_ch];
        for b in 0..batch {
            for t in 0..steps {
                let start = (b * time + t) * ch;
                let win = &x[start..start + window];
                let o = &mut out[(b * steps + t) * out_ch..(b * steps + t + 1) * out_ch];
                matmul_into(o, win, k, 1, window, out_ch);
            }
        }
        let shape = if iv.rank() == 2 { vec![steps, out_ch] } else { vec![batch, steps, out_ch] };
        self.checked("conv1d", shape, out, Op::Conv1d { input, kernels, width }, &[input, kernels])
    }

    /// Maximum over the time axis. `[batch, time, ch]` becomes
    /// `[batch, ch]`; `[time, ch]` becomes `[1, ch]`. Ties resolve to the
    /// lowest time index.
    pub fn max_over_time(&mut self, input: Var) -> Result<Var> {
        self.max_pool(input, None)
    }

    /// [`Tape::max_over_time`] where row `b` only looks at its first
    /// `steps[b]` time steps.
    pub fn max_over_prefix(&mut self, input: Var, steps: &[usize]) -> Result<Var> {
        self.max_pool(input, Some(steps))
    }

    fn max_pool(&mut self, input: Var, steps: Option<&[usize]>) -> Result<Var> {
        let iv = self.value(input);
        let (batch, time, ch) = match *iv.shape() {
            [t, c] => (1, t, c),
            [b, t, c] => (b, t, c),
            _ => {
                return Err(DiffError::Shape(format!(
                    "max_over_time input must be rank 2 or 3, got {:?}",
                    iv.shape()
                )))
            }
        };
        if time == 0 {
            return Err(DiffError::Degenerate("max_over_time over zero steps".into()));
        }
        if let Some(steps) = steps {
            if steps.len() != batch || steps.iter().any(|&s| s == 0 || s > time) {
                return Err(DiffError::Shape(format!("prefix lengths {steps:?} invalid for {batch} rows of {time} steps")));
            }
        }
        let x = iv.data();
        let mut out = vec![0.0; batch * ch];
        let mut argmax = vec![0; batch * ch];
        for b in 0..batch {
            let limit = steps.map_or(time, |s| s[b]);
            for c in 0..ch {
                let mut best_t = 0;
                let mut best = x[b * time * ch + c];
                for t in 1..limit {
                    let v = x[(b * time + t) * ch + c];
                    if v > best {
                        best = v;
                        best_t = t;
                    }
                }
                out[b * ch + c] = best;
                argmax[b * ch + c] = best_t;
            }
        }
        self.checked("max_over_time", vec![batch, ch], out, Op::MaxOverTime { input, argmax }, &[input])
    }

    /// Column-wise concatenation of rank-2 tensors with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(DiffError::Degenerate("concat of zero tensors".into()));
        }
        let rows = dims2(self.value(parts[0]), "concat")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = dims2(self.value(p), "concat")?;
            if r != rows {
                return Err(DiffError::Shape(format!("concat: row counts {rows} and {r} differ")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let needs = self.needs(parts);
        Ok(self.push(Tensor::from_parts(vec![rows, total], out), Op::ConcatCols(parts.to_vec()), needs))
    }

    pub fn slice_cols(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = dims2(self.value(input), "slice_cols")?;
        if start + len > cols {
            return Err(DiffError::Index(format!(
                "columns {start}..{} out of range for width {cols}",
                start + len
            )));
        }
        let x = self.value(input).data();
        let out: Vec<f64> = (0..rows)
            .flat_map(|r| x[r * cols + start..r * cols + start + len].iter().copied())
            .collect();
        let needs = self.needs(&[input]);
        Ok(self.push(Tensor::from_parts(vec![rows, len], out), Op::SliceCols { input, start }, needs))
    }

    /// Row `row` of a rank-2 tensor as a `[1, cols]` tensor.
    pub fn row(&mut self, input: Var, row: usize) -> Result<Var> {
        let (rows, cols) = dims2(self.value(input), "row")?;
        if row >= rows {
            return Err(DiffError::Index(format!("row {row} out of range for {rows} rows")));
        }
        let out = self.value(input).data()[row * cols..(row + 1) * cols].to_vec();
        let needs = self.needs(&[input]);
        Ok(self.push(Tensor::from_parts(vec![1, cols], out), Op::Row { input, row }, needs))
    }

    pub fn reshape(&mut self, input: Var, shape: Vec<usize>) -> Result<Var> {
        let v = self.value(input).clone().reshape(shape)?;
        let needs = self.needs(&[input]);
        Ok(self.push(v, Op::Reshape(input), needs))
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let s = self.value(input).data().iter().sum();
        self.checked("sum", Vec::new(), vec![s], Op::Sum(input), &[input])
    }

    /// `-log softmax(logits)[label]`, computed with the log-sum-exp shift.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let z = self.value(logits).data();
        if label >= z.len() {
            return Err(DiffError::Index(format!(
                "label {label} out of range for {} classes",
                z.len()
            )));
        }
        let probs = softmax(z);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - z[label];
        self.checked(
            "softmax_cross_entropy",
            Vec::new(),
            vec![loss],
            Op::SoftmaxCrossEntropy { logits, label, probs },
            &[logits],
        )
    }

    /// Propagates `∂loss/∂node` to every node on a differentiable path and
    /// consumes the record.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let n_nodes = self.nodes.len();
        if loss.0 >= n_nodes {
            return Err(DiffError::Contract("loss variable does not belong to this tape".into()));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(DiffError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n_nodes];
        if nodes[loss.0].needs_grad {
            grads[loss.0] = Some(vec![1.0]);
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            backprop(&nodes, node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&nodes)
            .map(|(g, node)| {
                g.map(|data| {
                    ensure_finite("gradient", &data)?;
                    Ok(Tensor::from_parts(node.value.shape().to_vec(), data))
                })
                .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Gradients { grads })
    }
}

/// Softmax of a slice, shifted by its maximum.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn acc<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], var: Var) -> Option<&'a mut Vec<f64>> {
    let node = &nodes[var.0];
    if !node.needs_grad {
        return None;
    }
    Some(grads[var.0].get_or_insert_with(|| vec![0.0; node.value.len()]))
}

fn backprop(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let val = |v: Var| nodes[v.0].value.data();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) | Op::Affine(a, b, _) => {
            let (p, q) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
            let r = nodes[b.0].value.shape()[1];
            if let Some(ga) = acc(nodes, grads, *a) {
                matmul_bt_into(ga, g, val(*b), p, q, r);
            }
            if let Some(gb) = acc(nodes, grads, *b) {
                matmul_at_into(gb, val(*a), g, p, q, r);
            }
            if let Op::Affine(_, _, bias) = &node.op {
                if let Some(gbias) = acc(nodes, grads, *bias) {
                    for row in g.chunks(r) {
                        for (o, v) in gbias.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                }
            }
        }
        Op::AddBias(x, bias) => {
            if let Some(gx) = acc(nodes, grads, *x) {
                gx.iter_mut().zip(g).for_each(|(o, v)| *o += v);
            }
            if let Some(gb) = acc(nodes, grads, *bias) {
                let r = gb.len();
                for (i, v) in g.iter().enumerate() {
                    gb[i % r] += v;
                }
            }
        }
        Op::Add(a, b) | Op::Sub(a, b) => {
            let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
            if let Some(ga) = acc(nodes, grads, *a) {
                ga.iter_mut().zip(g).for_each(|(o, v)| *o += v);
            }
            if let Some(gb) = acc(nodes, grads, *b) {
                gb.iter_mut().zip(g).for_each(|(o, v)| *o += sign * v);
            }
        }
        Op::Mul(a, b) => {
            if let Some(ga) = acc(nodes, grads, *a) {
                for ((o, gv), bv) in ga.iter_mut().zip(g).zip(val(*b)) {
                    *o += gv * bv;
                }
            }
            if let Some(gb) = acc(nodes, grads, *b) {
                for ((o, gv), av) in gb.iter_mut().zip(g).zip(val(*a)) {
                    *o += gv * av;
                }
            }
        }
        Op::Scale(x, factor) => {
            if let Some(gx) = acc(nodes, grads, *x) {
                gx.iter_mut().zip(g).for_each(|(o, v)| *o += factor * v);
            }
        }
        Op::Tanh(x) => {
            let y = node.value.data();
            if let Some(gx) = acc(nodes, grads, *x) {
                for ((o, gv), yv) in gx.iter_mut().zip(g).zip(y) {
                    *o += gv * (1.0 - yv * yv);
                }
            }
        }
        Op::Sigmoid(x) => {
            let y = node.value.data();
            if let Some(gx) = acc(nodes, grads, *x) {
                for ((o, gv), yv) in gx.iter_mut().zip(g).zip(y) {
                    *o += gv * yv * (1.0 - yv);
                }
            }
        }
        Op::Relu(x) => {
            let xv = val(*x);
            if let Some(gx) = acc(nodes, grads, *x) {
                for ((o, gv), v) in gx.iter_mut().zip(g).zip(xv) {
                    if *v > 0.0 {
                        *o += gv;
                    }
                }
            }
        }
        Op::Conv1d { input, kernels, width } => {
            let ishape = nodes[input.0].value.shape();
            let (batch, time, ch) = match *ishape {
                [t, c] => (1, t, c),
                [b, t, c] => (b, t, c),
                _ => unreachable!("conv1d input rank checked at record time"),
            };
            let out_ch = nodes[kernels.0].value.shape()[2];
            let steps = time - width + 1;
            let window = width * ch;
            let x = val(*input);
            let k = val(*kernels);
            if let Some(gk) = acc(nodes, grads, *kernels) {
                for b in 0..batch {
                    for t in 0..steps {
                        let start = (b * time + t) * ch;
                        let go = &g[(b * steps + t) * out_ch..(b * steps + t + 1) * out_ch];
                        matmul_at_into(gk, &x[start..start + window], go, 1, window, out_ch);
                    }
                }
            }
            if let Some(gx) = acc(nodes, grads, *input) {
                for b in 0..batch {
                    for t in 0..steps {
                        let start = (b * time + t) * ch;
                        let go = &g[(b * steps + t) * out_ch..(b * steps + t + 1) * out_ch];
                        matmul_bt_into(&mut gx[start..start + window], go, k, 1, window, out_ch);
                    }
                }
            }
        }
        Op::MaxOverTime { input, argmax } => {
            let ishape = nodes[input.0].value.shape();
            let (time, ch) = match *ishape {
                [t, c] => (t, c),
                [_, t, c] => (t, c),
                _ => unreachable!("max_over_time input rank checked at record time"),
            };
            if let Some(gx) = acc(nodes, grads, *input) {
                for (flat, (&t, gv)) in argmax.iter().zip(g).enumerate() {
                    let (b, c) = (flat / ch, flat % ch);
                    gx[(b * time + t) * ch + c] += gv;
                }
            }
        }
        Op::ConcatCols(parts) => {
            let total = node.value.shape()[1];
            let rows = node.value.shape()[0];
            let mut offset = 0;
            for p in parts {
                let w = nodes[p.0].value.shape()[1];
                if let Some(gp) = acc(nodes, grads, *p) {
                    for r in 0..rows {
                        for c in 0..w {
                            gp[r * w + c] += g[r * total + offset + c];
                        }
                    }
                }
                offset += w;
            }
        }
        Op::SliceCols { input, start } => {
            let cols = nodes[input.0].value.shape()[1];
            let len = node.value.shape()[1];
            if let Some(gx) = acc(nodes, grads, *input) {
                for (r, row) in g.chunks(len).enumerate() {
                    for (c, v) in row.iter().enumerate() {
                        gx[r * cols + start + c] += v;
                    }
                }
            }
        }
        Op::Row { input, row } => {
            let cols = node.value.len();
            if let Some(gx) = acc(nodes, grads, *input) {
                for (c, v) in g.iter().enumerate() {
                    gx[row * cols + c] += v;
                }
            }
        }
        Op::Reshape(x) => {
            if let Some(gx) = acc(nodes, grads, *x) {
                gx.iter_mut().zip(g).for_each(|(o, v)| *o += v);
            }
        }
        Op::Sum(x) => {
            if let Some(gx) = acc(nodes, grads, *x) {
                gx.iter_mut().for_each(|o| *o += g[0]);
            }
        }
        Op::SoftmaxCrossEntropy { logits, label, probs } => {
            if let Some(gz) = acc(nodes, grads, *logits) {
                for (c, (o, p)) in gz.iter_mut().zip(probs).enumerate() {
                    let target = if c == *label { 1.0 } else { 0.0 };
                    *o += g[0] * (p - target);
                }
            }
        }
    }
}
