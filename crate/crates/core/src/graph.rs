//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation as a node appended to a flat tape.
//! Inputs always precede their consumers, so insertion order is a valid
//! topological order and [`Graph::backward`] is a single reverse sweep.
//!
//! Sequence-shaped operands follow one convention throughout: a rank-3
//! tensor `[batch, steps, features]` is a batch of sequences, and a rank-2
//! tensor `[steps, features]` is a single sequence.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    Affine {
        terms: Vec<(Var, Var)>,
        bias: Option<Var>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Transpose(Var),
    SelectStep {
        a: Var,
        step: usize,
    },
    Stack(Vec<Var>),
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
    },
    MaxPool1d {
        x: Var,
        argmax: Vec<usize>,
    },
}

impl<T> Op<T> {
    fn kind(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::Affine { .. } => "affine",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Reshape(_) => "reshape",
            Op::Transpose(_) => "transpose",
            Op::SelectStep { .. } => "select_step",
            Op::Stack(_) => "stack",
            Op::Conv1d { .. } => "conv1d",
            Op::MaxPool1d { .. } => "maxpool1d",
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Splits a sequence shape into `(batch, steps, features)`.
fn seq_dims(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [steps, features] => Ok((1, steps, features)),
        [batch, steps, features] => Ok((batch, steps, features)),
        _ => Err(Error::contract(format!(
            "{op}: expected [steps, features] or [batch, steps, features], got {shape:?}"
        ))),
    }
}

/// Shape with the trailing `[steps, features]` replaced.
fn with_seq_dims(template: &[usize], steps: usize, features: usize) -> Vec<usize> {
    let mut shape = template[..template.len() - 2].to_vec();
    shape.push(steps);
    shape.push(features);
    shape
}

/// Gradient buffer of `v`, allocated on first use; `None` for untracked nodes.
fn grad_slot<'a, T: Scalar>(
    nodes: &[Node<T>],
    grads: &'a mut [Option<Vec<T>>],
    v: Var,
) -> Option<&'a mut [T]> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let len = nodes[v.0].value.len();
    Some(
        grads[v.0]
            .get_or_insert_with(|| vec![T::zero(); len])
            .as_mut_slice(),
    )
}

fn stable_sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Recording of one forward computation.
#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(value, op, requires_grad)
    }

    /// Leaf whose gradient is tracked (parameters, checked inputs).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        let mut value = value;
        value.clear_grad();
        self.push(value, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation (data, targets, fixed maps).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        let mut value = value;
        value.clear_grad();
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    /// Gradient of the last `backward` loss w.r.t. a tracked leaf.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Name of the operation that produced `v`.
    pub fn op_kind(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.kind()
    }

    // ---- forward operations -------------------------------------------------

    /// `a [n, k] · b [k, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a [n, k] · bᵀ` with `b [m, k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let op = if trans_b { "matmul_nt" } else { "matmul" };
        let (n, k, m, rsb, csb) = match (sa, sb) {
            (&[n, k], &[kb, m]) if !trans_b && k == kb => (n, k, m, m, 1),
            (&[n, k], &[m, kb]) if trans_b && k == kb => (n, k, m, 1, k),
            _ => return Err(Error::shape(op, sa, sb)),
        };
        let mut out = vec![T::zero(); n * m];
        T::gemm(
            n,
            k,
            m,
            T::one(),
            (self.data(a), k, 1),
            (self.data(b), rsb, csb),
            T::zero(),
            (&mut out, m, 1),
        );
        let value = Tensor::new(&[n, m], out)?;
        Ok(self.push_op(value, Op::MatMul { a, b, trans_b }, &[a, b]))
    }

    /// `Σ xᵢ · wᵢᵀ + bias` over the last axis.
    ///
    /// Each `xᵢ` is `[..., inᵢ]` (all with the same leading dims), each
    /// `wᵢ` is `[out, inᵢ]` and `bias` is `[out]`. Used for dense layers and
    /// GRU gate pre-activations.
    pub fn affine(&mut self, terms: &[(Var, Var)], bias: Option<Var>) -> Result<Var> {
        let Some(&(x0, w0)) = terms.first() else {
            return Err(Error::contract("affine: no terms"));
        };
        let out_features = match self.shape(w0) {
            &[out, _] => out,
            s => return Err(Error::shape("affine", self.shape(x0), s)),
        };
        let lead: Vec<usize> = {
            let s = self.shape(x0);
            s[..s.len().saturating_sub(1)].to_vec()
        };
        let rows: usize = lead.iter().product();
        let mut out = vec![T::zero(); rows * out_features];
        if let Some(b) = bias {
            if self.shape(b) != [out_features] {
                return Err(Error::shape("affine bias", self.shape(w0), self.shape(b)));
            }
            for row in out.chunks_exact_mut(out_features) {
                row.copy_from_slice(self.data(b));
            }
        }
        for &(x, w) in terms {
            let (sx, sw) = (self.shape(x), self.shape(w));
            let ok = match (sx.split_last(), sw) {
                (Some((&inp, xl)), &[o, wi]) => {
                    xl == lead.as_slice() && o == out_features && wi == inp
                }
                _ => false,
            };
            if !ok {
                return Err(Error::shape("affine", sx, sw));
            }
            let inp = sw[1];
            T::gemm(
                rows,
                inp,
                out_features,
                T::one(),
                (self.data(x), inp, 1),
                (self.data(w), 1, inp),
                T::one(),
                (&mut out, out_features, 1),
            );
        }
        let mut shape = lead;
        shape.push(out_features);
        let value = Tensor::new(&shape, out)?;
        let mut inputs: Vec<Var> = terms.iter().flat_map(|&(x, w)| [x, w]).collect();
        inputs.extend(bias);
        Ok(self.push_op(
            value,
            Op::Affine {
                terms: terms.to_vec(),
                bias,
            },
            &inputs,
        ))
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(name, self.shape(a), self.shape(b)));
        }
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(self.shape(a), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same(a, b, "add", |x, y| x + y)?;
        Ok(self.push_op(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same(a, b, "sub", |x, y| x - y)?;
        Ok(self.push_op(value, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same(a, b, "mul", |x, y| x * y)?;
        Ok(self.push_op(value, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let data = self.data(a).iter().map(|&x| x * factor).collect();
        let value = Tensor::new(self.shape(a), data).expect("same shape");
        self.push_op(value, Op::Scale(a, factor), &[a])
    }

    fn map(&mut self, a: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let data = self.data(a).iter().map(|&x| f(x)).collect();
        Tensor::new(self.shape(a), data).expect("same shape")
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.map(a, stable_sigmoid);
        self.push_op(value, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.map(a, T::tanh);
        self.push_op(value, Op::Tanh(a), &[a])
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.data(a).iter().copied().sum();
        self.push_op(Tensor::scalar(total), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.data(a).len();
        if n == 0 {
            return Err(Error::contract("mean: empty tensor"));
        }
        let total: T = self.data(a).iter().copied().sum();
        let value = Tensor::scalar(total / T::of(n as f64));
        Ok(self.push_op(value, Op::Mean(a), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        Ok(self.push_op(value, Op::Reshape(a), &[a]))
    }

    /// Swaps the two trailing axes: `[.., steps, features]` becomes
    /// `[.., features, steps]`.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (batch, rows, cols) = seq_dims("transpose", self.shape(a))?;
        let src = self.data(a);
        let mut out = vec![T::zero(); src.len()];
        for b in 0..batch {
            let off = b * rows * cols;
            for i in 0..rows {
                for j in 0..cols {
                    out[off + j * rows + i] = src[off + i * cols + j];
                }
            }
        }
        let shape = with_seq_dims(self.shape(a), cols, rows);
        let value = Tensor::new(&shape, out)?;
        Ok(self.push_op(value, Op::Transpose(a), &[a]))
    }

    /// Time step `step` of a sequence: `[B, T, F] -> [B, F]` or `[T, F] -> [F]`.
    pub fn select_step(&mut self, a: Var, step: usize) -> Result<Var> {
        let (batch, steps, features) = seq_dims("select_step", self.shape(a))?;
        if step >= steps {
            return Err(Error::contract(format!(
                "select_step: step {step} out of {steps}"
            )));
        }
        let src = self.data(a);
        let mut out = Vec::with_capacity(batch * features);
        for b in 0..batch {
            let off = (b * steps + step) * features;
            out.extend_from_slice(&src[off..off + features]);
        }
        let shape = &self.shape(a)[..self.shape(a).len() - 2];
        let mut shape = shape.to_vec();
        shape.push(features);
        let value = Tensor::new(&shape, out)?;
        Ok(self.push_op(value, Op::SelectStep { a, step }, &[a]))
    }

    /// Inverse of [`select_step`](Self::select_step): stacks `[B, F]`
    /// (or `[F]`) steps into `[B, T, F]` (or `[T, F]`).
    pub fn stack(&mut self, steps: &[Var]) -> Result<Var> {
        let Some(&first) = steps.first() else {
            return Err(Error::contract("stack: no steps"));
        };
        let step_shape = self.shape(first).to_vec();
        let (batch, features) = match *step_shape.as_slice() {
            [f] => (1, f),
            [b, f] => (b, f),
            _ => return Err(Error::shape("stack", &step_shape, &[])),
        };
        for &s in steps {
            if self.shape(s) != step_shape.as_slice() {
                return Err(Error::shape("stack", &step_shape, self.shape(s)));
            }
        }
        let t = steps.len();
        let mut out = vec![T::zero(); batch * t * features];
        for (ti, &s) in steps.iter().enumerate() {
            let src = self.data(s);
            for b in 0..batch {
                let dst = (b * t + ti) * features;
                out[dst..dst + features].copy_from_slice(&src[b * features..(b + 1) * features]);
            }
        }
        let shape = if step_shape.len() == 1 {
            vec![t, features]
        } else {
            vec![batch, t, features]
        };
        let value = Tensor::new(&shape, out)?;
        Ok(self.push_op(value, Op::Stack(steps.to_vec()), steps))
    }

    /// Valid cross-correlation over time.
    ///
    /// `x [.., L, C]`, `w [F, K, C]`, `b [F]` give
    /// `out[.., i, f] = Σ_k Σ_c x[.., i + k, c] · w[f, k, c] + b[f]`
    /// for `i` in `0..=L - K`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, len, channels) = seq_dims("conv1d", self.shape(x))?;
        let (filters, kernel) = match *self.shape(w) {
            [f, k, c] if c == channels && k >= 1 && f >= 1 => (f, k),
            _ => return Err(Error::shape("conv1d", self.shape(x), self.shape(w))),
        };
        if self.shape(b) != [filters] {
            return Err(Error::shape("conv1d bias", self.shape(w), self.shape(b)));
        }
        if len < kernel {
            return Err(Error::contract(format!(
                "conv1d: sequence length {len} is shorter than kernel size {kernel}"
            )));
        }
        let out_len = len - kernel + 1;
        let (xs, ws, bs) = (self.data(x), self.data(w), self.data(b));
        let mut out = vec![T::zero(); batch * out_len * filters];
        for bi in 0..batch {
            let xb = &xs[bi * len * channels..(bi + 1) * len * channels];
            for i in 0..out_len {
                for f in 0..filters {
                    let mut acc = T::zero();
                    for k in 0..kernel {
                        for c in 0..channels {
                            acc += xb[(i + k) * channels + c] * ws[(f * kernel + k) * channels + c];
                        }
                    }
                    out[(bi * out_len + i) * filters + f] = acc + bs[f];
                }
            }
        }
        let shape = with_seq_dims(self.shape(x), out_len, filters);
        let value = Tensor::new(&shape, out)?;
        Ok(self.push_op(value, Op::Conv1d { x, w, b }, &[x, w, b]))
    }

    /// Per-channel max over windows of `pool_size` taken every `stride`
    /// steps; a trailing partial window is dropped.
    pub fn maxpool1d(&mut self, x: Var, pool_size: usize, stride: usize) -> Result<Var> {
        if pool_size == 0 || stride == 0 {
            return Err(Error::contract(
                "maxpool1d: pool size and stride must be >= 1",
            ));
        }
        let (batch, len, channels) = seq_dims("maxpool1d", self.shape(x))?;
        if len < pool_size {
            return Err(Error::contract(format!(
                "maxpool1d: sequence length {len} is shorter than pool size {pool_size}"
            )));
        }
        let out_len = (len - pool_size) / stride + 1;
        let xs = self.data(x);
        let mut out = Vec::with_capacity(batch * out_len * channels);
        let mut argmax = Vec::with_capacity(batch * out_len * channels);
        for bi in 0..batch {
            for o in 0..out_len {
                for c in 0..channels {
                    let start = (bi * len + o * stride) * channels + c;
                    let mut best = start;
                    for p in 1..pool_size {
                        let idx = start + p * channels;
                        if xs[idx] > xs[best] {
                            best = idx;
                        }
                    }
                    out.push(xs[best]);
                    argmax.push(best);
                }
            }
        }
        let shape = with_seq_dims(self.shape(x), out_len, channels);
        let value = Tensor::new(&shape, out)?;
        Ok(self.push_op(value, Op::MaxPool1d { x, argmax }, &[x]))
    }

    // ---- reverse sweep -----------------------------------------------------

    /// Fills gradients of `loss` (a single-element tensor) w.r.t. every
    /// tracked leaf. Fan-out contributions accumulate additively.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let n = self.nodes[loss.0].value.len();
        if n != 1 {
            return Err(Error::contract(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(gy) = self.grads[i].take() else {
                continue;
            };
            if !matches!(self.nodes[i].op, Op::Leaf) {
                self.propagate(i, &gy);
            } else {
                self.grads[i] = Some(gy);
            }
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, gy: &[T]) {
        let Graph { nodes, grads } = self;
        let node = &nodes[i];
        macro_rules! slot {
            ($v:expr) => {
                grad_slot(nodes, grads, $v)
            };
        }
        let data = |v: Var| nodes[v.0].value.data();
        let shape = |v: Var| nodes[v.0].value.shape();

        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, trans_b } => {
                let (n, k) = (shape(a)[0], shape(a)[1]);
                let m = node.value.shape()[1];
                let (rsb, csb) = if trans_b { (1, k) } else { (m, 1) };
                if let Some(ga) = slot!(a) {
                    T::gemm(
                        n,
                        m,
                        k,
                        T::one(),
                        (gy, m, 1),
                        (data(b), csb, rsb),
                        T::one(),
                        (ga, k, 1),
                    );
                }
                if let Some(gb) = slot!(b) {
                    T::gemm(
                        k,
                        n,
                        m,
                        T::one(),
                        (data(a), 1, k),
                        (gy, m, 1),
                        T::one(),
                        (gb, rsb, csb),
                    );
                }
            }
            Op::Affine { terms, bias } => {
                let out = *node.value.shape().last().expect("rank >= 1");
                let rows = gy.len() / out;
                for &(x, w) in terms {
                    let inp = shape(w)[1];
                    if let Some(gx) = slot!(x) {
                        T::gemm(
                            rows,
                            out,
                            inp,
                            T::one(),
                            (gy, out, 1),
                            (data(w), inp, 1),
                            T::one(),
                            (gx, inp, 1),
                        );
                    }
                    if let Some(gw) = slot!(w) {
                        T::gemm(
                            out,
                            rows,
                            inp,
                            T::one(),
                            (gy, 1, out),
                            (data(x), inp, 1),
                            T::one(),
                            (gw, inp, 1),
                        );
                    }
                }
                if let Some(gb) = bias.and_then(|b| slot!(b)) {
                    for row in gy.chunks_exact(out) {
                        for (g, &d) in gb.iter_mut().zip(row) {
                            *g += d;
                        }
                    }
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(g) = slot!(v) {
                        g.iter_mut().zip(gy).for_each(|(g, &d)| *g += d);
                    }
                }
            }
            &Op::Sub(a, b) => {
                if let Some(g) = slot!(a) {
                    g.iter_mut().zip(gy).for_each(|(g, &d)| *g += d);
                }
                if let Some(g) = slot!(b) {
                    g.iter_mut().zip(gy).for_each(|(g, &d)| *g -= d);
                }
            }
            &Op::Mul(a, b) => {
                if let Some(g) = slot!(a) {
                    for ((g, &d), &y) in g.iter_mut().zip(gy).zip(data(b)) {
                        *g += d * y;
                    }
                }
                if let Some(g) = slot!(b) {
                    for ((g, &d), &x) in g.iter_mut().zip(gy).zip(data(a)) {
                        *g += d * x;
                    }
                }
            }
            &Op::Scale(a, factor) => {
                if let Some(g) = slot!(a) {
                    g.iter_mut().zip(gy).for_each(|(g, &d)| *g += d * factor);
                }
            }
            &Op::Sigmoid(a) => {
                if let Some(g) = slot!(a) {
                    for ((g, &d), &s) in g.iter_mut().zip(gy).zip(node.value.data()) {
                        *g += d * s * (T::one() - s);
                    }
                }
            }
            &Op::Tanh(a) => {
                if let Some(g) = slot!(a) {
                    for ((g, &d), &t) in g.iter_mut().zip(gy).zip(node.value.data()) {
                        *g += d * (T::one() - t * t);
                    }
                }
            }
            &Op::Sum(a) => {
                if let Some(g) = slot!(a) {
                    g.iter_mut().for_each(|g| *g += gy[0]);
                }
            }
            &Op::Mean(a) => {
                if let Some(g) = slot!(a) {
                    let d = gy[0] / T::of(g.len() as f64);
                    g.iter_mut().for_each(|g| *g += d);
                }
            }
            &Op::Reshape(a) => {
                if let Some(g) = slot!(a) {
                    g.iter_mut().zip(gy).for_each(|(g, &d)| *g += d);
                }
            }
            &Op::Transpose(a) => {
                let (batch, rows, cols) = seq_dims("transpose", shape(a)).expect("checked forward");
                if let Some(g) = slot!(a) {
                    for b in 0..batch {
                        let off = b * rows * cols;
                        for i in 0..rows {
                            for j in 0..cols {
                                g[off + i * cols + j] += gy[off + j * rows + i];
                            }
                        }
                    }
                }
            }
            &Op::SelectStep { a, step } => {
                let (batch, steps, features) =
                    seq_dims("select_step", shape(a)).expect("checked forward");
                if let Some(g) = slot!(a) {
                    for b in 0..batch {
                        let off = (b * steps + step) * features;
                        for (g, &d) in g[off..off + features].iter_mut().zip(&gy[b * features..]) {
                            *g += d;
                        }
                    }
                }
            }
            Op::Stack(steps) => {
                let t = steps.len();
                let features = *node.value.shape().last().expect("rank >= 2");
                let batch = gy.len() / (t * features);
                for (ti, &s) in steps.iter().enumerate() {
                    if let Some(g) = slot!(s) {
                        for b in 0..batch {
                            let src = (b * t + ti) * features;
                            for (g, &d) in g[b * features..(b + 1) * features]
                                .iter_mut()
                                .zip(&gy[src..])
                            {
                                *g += d;
                            }
                        }
                    }
                }
            }
            &Op::Conv1d { x, w, b } => {
                let (batch, len, channels) = seq_dims("conv1d", shape(x)).expect("checked forward");
                let (filters, kernel) = (shape(w)[0], shape(w)[1]);
                let out_len = len - kernel + 1;
                if let Some(gx) = slot!(x) {
                    let ws = data(w);
                    for bi in 0..batch {
                        for i in 0..out_len {
                            for f in 0..filters {
                                let d = gy[(bi * out_len + i) * filters + f];
                                for k in 0..kernel {
                                    for c in 0..channels {
                                        gx[(bi * len + i + k) * channels + c] +=
                                            d * ws[(f * kernel + k) * channels + c];
                                    }
                                }
                            }
                        }
                    }
                }
                if let Some(gw) = slot!(w) {
                    let xs = data(x);
                    for bi in 0..batch {
                        for i in 0..out_len {
                            for f in 0..filters {
                                let d = gy[(bi * out_len + i) * filters + f];
                                for k in 0..kernel {
                                    for c in 0..channels {
                                        gw[(f * kernel + k) * channels + c] +=
                                            d * xs[(bi * len + i + k) * channels + c];
                                    }
                                }
                            }
                        }
                    }
                }
                if let Some(gb) = slot!(b) {
                    for row in gy.chunks_exact(filters) {
                        gb.iter_mut().zip(row).for_each(|(g, &d)| *g += d);
                    }
                }
            }
            Op::MaxPool1d { x, argmax } => {
                if let Some(g) = slot!(*x) {
                    for (&idx, &d) in argmax.iter().zip(gy) {
                        g[idx] += d;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, data).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let id = g.constant(t(&[2, 2], &[1., 0., 0., 1.]));
        let p = g.matmul(a, id).unwrap();
        assert_eq!(g.value(p).data(), &[1., 2., 3., 4.]);

        let row = g.constant(t(&[1, 2], &[1., 2.]));
        let col = g.constant(t(&[2, 1], &[3., 4.]));
        let p = g.matmul(row, col).unwrap();
        assert_eq!(g.value(p).data(), &[11.]);

        let zero = g.constant(t(&[1, 2], &[0., 0.]));
        let col = g.constant(t(&[2, 1], &[5., 7.]));
        let p = g.matmul(zero, col).unwrap();
        assert_eq!(g.value(p).data(), &[0.]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let msg = g.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(g.matmul_nt(a, b).is_ok());
    }

    #[test]
    fn sigmoid_examples() {
        let mut g = Graph::new();
        let x = g.constant(t(&[5], &[0., 40., 800., -800., 3.7]));
        let s = g.sigmoid(x);
        let v = g.value(s).data().to_vec();
        assert_eq!(v[0], 0.5);
        assert!((v[1] - 1.0).abs() < 1e-12);
        assert_eq!(v[2], 1.0);
        assert_eq!(v[3], 0.0);
        let neg = g.constant(t(&[1], &[-3.7]));
        let sn = g.sigmoid(neg);
        assert!((v[4] + g.value(sn).data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tanh_examples() {
        let mut g = Graph::new();
        let x = g.constant(t(&[4], &[0., 1.3, -1.3, 40.]));
        let y = g.tanh(x);
        let v = g.value(y).data();
        assert_eq!(v[0], 0.0);
        assert!((v[1] + v[2]).abs() < 1e-12);
        assert!((v[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backward_identity_and_square() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[1], &[4.2]));
        g.backward(x).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0]);

        let mut g = Graph::new();
        let x = g.leaf(t(&[3], &[1., 2., 3.]));
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2., 4., 6.]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[1], &[0.3]));
        let y = g.add(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[1., 2.]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[1., 2.]));
        let c = g.constant(t(&[2], &[3., 4.]));
        let p = g.mul(x, c).unwrap();
        let loss = g.sum(p);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[3., 4.]);
        assert!(g.grad(c).is_none());
    }

    #[test]
    fn matmul_gradients_by_hand() {
        // loss = sum(a · b); dL/da = 1·bᵀ, dL/db = aᵀ·1
        let mut g = Graph::new();
        let a = g.leaf(t(&[1, 2], &[1., 2.]));
        let b = g.leaf(t(&[2, 2], &[1., 2., 3., 4.]));
        let p = g.matmul(a, b).unwrap();
        let loss = g.sum(p);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[3., 7.]);
        assert_eq!(g.grad(b).unwrap(), &[1., 1., 2., 2.]);
    }

    #[test]
    fn transpose_round_trip_and_select_stack() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
        let y = g.transpose(x).unwrap();
        assert_eq!(g.shape(y), &[3, 2]);
        assert_eq!(g.value(y).data(), &[1., 4., 2., 5., 3., 6.]);
        let z = g.transpose(y).unwrap();
        assert_eq!(g.value(z), g.value(x));

        let s0 = g.select_step(x, 0).unwrap();
        let s1 = g.select_step(x, 1).unwrap();
        assert_eq!(g.value(s1).data(), &[4., 5., 6.]);
        let back = g.stack(&[s0, s1]).unwrap();
        assert_eq!(g.value(back), g.value(x));
    }

    #[test]
    fn maxpool_ties_route_to_first() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[4, 1], &[2., 2., 1., 1.]));
        let p = g.maxpool1d(x, 2, 2).unwrap();
        let loss = g.sum(p);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1., 0., 1., 0.]);
    }
}
