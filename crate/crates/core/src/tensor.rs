//! Dense `f64` tensors and a tape-based reverse-mode differentiation graph.
//!
//! Values that persist across steps (network parameters) live in [`Tensor`].
//! Each forward pass builds a fresh [`Graph`]: parameters enter as leaves,
//! every primitive appends a node, and [`Graph::backward`] replays the tape
//! in reverse. Nodes are appended in evaluation order, so the tape index is
//! already a topological order.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::contract(format!("zero extent in shape {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim("tensor", &shape, &[data.len()]));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let mut t = Tensor::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::contract("ragged rows"));
        }
        Tensor::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Row count of a 2-D tensor (1 for vectors and scalars).
    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    /// Trailing extent (1 for scalars).
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `delta` into the gradient buffer, creating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.data.len() {
            return Err(Error::dim("accumulate_grad", &self.shape, &[delta.len()]));
        }
        match &mut self.grad {
            Some(g) => g.iter_mut().zip(delta).for_each(|(g, d)| *g += d),
            None => self.grad = Some(delta.to_vec()),
        }
        Ok(())
    }
}

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Log(Var),
    Powf(Var, f64),
    Relu(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    ColMean(Var),
    Softmax(Var),
    LogSoftmax(Var),
    ConcatCols(Var, Var),
    /// Straight-through: forward value supplied by the caller, gradient masked.
    StraightThrough(Var, Vec<bool>),
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

// a[m×k] · b[n×k]ᵀ
fn matmul_nt_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

// a[k×m]ᵀ · b[k×n]
fn matmul_tn_raw(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, av) in arow.iter().enumerate() {
            if *av == 0.0 {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn row_softmax(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (src, dst) in x.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (d, s) in dst.iter_mut().zip(src) {
            *d = (s - max).exp();
            total += *d;
        }
        dst.iter_mut().for_each(|d| *d /= total);
    }
    out
}

fn row_log_softmax(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (src, dst) in x.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + src.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        for (d, s) in dst.iter_mut().zip(src) {
            *d = s - lse;
        }
    }
    out
}

fn add_into(dst: &mut Option<Vec<f64>>, delta: Vec<f64>) {
    match dst {
        Some(d) => d.iter_mut().zip(&delta).for_each(|(a, b)| *a += b),
        None => *dst = Some(delta),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.node(*v).needs_grad)
    }

    /// Registers a tensor as a leaf; it is differentiated iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape.clone(), t.data.clone(), Op::Leaf, t.requires_grad)
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.shape.clone(), t.data.clone(), Op::Leaf, false)
    }

    pub fn input(&mut self, shape: &[usize], data: Vec<f64>, requires_grad: bool) -> Result<Var> {
        if numel(shape) != data.len() {
            return Err(Error::dim("input", shape, &[data.len()]));
        }
        Ok(self.push(shape.to_vec(), data, Op::Leaf, requires_grad))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor {
            shape: n.shape.clone(),
            data: n.value.clone(),
            requires_grad: false,
            grad: None,
        }
    }

    /// A copy of `v` cut from the tape: same value, no gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let n = self.node(v);
        self.push(n.shape.clone(), n.value.clone(), Op::Leaf, false)
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::dim(op, s, &[0, 0])),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", self.shape(a), self.shape(b)));
        }
        let out = matmul_raw(self.value(a), self.value(b), m, k, n);
        let g = self.any_grad(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), g))
    }

    /// `a · bᵀ` for `a: [m×k]`, `b: [n×k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul_nt")?;
        let (n, k2) = self.dims2(b, "matmul_nt")?;
        if k != k2 {
            return Err(Error::dim("matmul_nt", self.shape(a), self.shape(b)));
        }
        let out = matmul_nt_raw(self.value(a), self.value(b), m, k, n);
        let g = self.any_grad(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMulNt(a, b), g))
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(name, self.shape(a), self.shape(b)));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let g = self.any_grad(&[a, b]);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, op, g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn row_broadcast(
        &mut self,
        x: Var,
        r: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (_, d) = self.dims2(x, name)?;
        if self.shape(r) != [d] {
            return Err(Error::dim(name, self.shape(x), self.shape(r)));
        }
        let rv = self.value(r);
        let out = self
            .value(x)
            .chunks(d)
            .flat_map(|row| row.iter().zip(rv).map(|(a, b)| f(*a, *b)))
            .collect();
        let g = self.any_grad(&[x, r]);
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, op, g))
    }

    /// `x[B×d] + r[d]` broadcast over rows.
    pub fn add_row(&mut self, x: Var, r: Var) -> Result<Var> {
        self.row_broadcast(x, r, "add_row", |a, b| a + b, Op::AddRow(x, r))
    }

    /// `x[B×d] ⊙ r[d]` broadcast over rows.
    pub fn mul_row(&mut self, x: Var, r: Var) -> Result<Var> {
        self.row_broadcast(x, r, "mul_row", |a, b| a * b, Op::MulRow(x, r))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(x).iter().map(|v| f(*v)).collect();
        let g = self.node(x).needs_grad;
        let shape = self.shape(x).to_vec();
        self.push(shape, out, op, g)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Log(x))
    }

    pub fn powf(&mut self, x: Var, p: f64) -> Var {
        self.unary(x, |v| v.powf(p), Op::Powf(x, p))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Powf(x, 2.0))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.powf(x, 0.5)
    }

    /// `max(x, 0)`; the subgradient at exactly 0 is 0.
    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    /// `max(x - c, 0)`.
    pub fn hinge(&mut self, x: Var, c: f64) -> Var {
        let shifted = self.add_scalar(x, -c);
        self.relu(shifted)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let g = self.node(x).needs_grad;
        self.push(Vec::new(), vec![s], Op::Sum(x), g)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        let g = self.node(x).needs_grad;
        self.push(Vec::new(), vec![s], Op::Mean(x), g)
    }

    /// `[B×C] → [B]`
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        let (b, c) = self.dims2(x, "sum_rows")?;
        let out = self.value(x).chunks(c).map(|r| r.iter().sum()).collect();
        let g = self.node(x).needs_grad;
        Ok(self.push(vec![b], out, Op::SumRows(x), g))
    }

    /// `[B×d] → [d]`
    pub fn col_mean(&mut self, x: Var) -> Result<Var> {
        let (b, d) = self.dims2(x, "col_mean")?;
        let mut out = vec![0.0; d];
        for row in self.value(x).chunks(d) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        out.iter_mut().for_each(|o| *o /= b as f64);
        let g = self.node(x).needs_grad;
        Ok(self.push(vec![d], out, Op::ColMean(x), g))
    }

    fn check_logits(&self, x: Var, op: &'static str) -> Result<usize> {
        let (_, c) = self.dims2(x, op)?;
        if c < 2 {
            return Err(Error::contract(format!("{op} needs at least 2 classes")));
        }
        if self.value(x).iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(op));
        }
        Ok(c)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let c = self.check_logits(x, "softmax")?;
        let out = row_softmax(self.value(x), c);
        let g = self.node(x).needs_grad;
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, Op::Softmax(x), g))
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let c = self.check_logits(x, "log_softmax")?;
        let out = row_log_softmax(self.value(x), c);
        let g = self.node(x).needs_grad;
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, Op::LogSoftmax(x), g))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.dims2(a, "concat_cols")?;
        let (rb, cb) = self.dims2(b, "concat_cols")?;
        if ra != rb {
            return Err(Error::dim("concat_cols", self.shape(a), self.shape(b)));
        }
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            out.extend_from_slice(&self.value(a)[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&self.value(b)[r * cb..(r + 1) * cb]);
        }
        let g = self.any_grad(&[a, b]);
        Ok(self.push(vec![ra, ca + cb], out, Op::ConcatCols(a, b), g))
    }

    /// Emits `forward` as the value of `x` while routing the incoming gradient
    /// straight through wherever `pass[i]` is set and zeroing it elsewhere.
    pub fn straight_through(&mut self, x: Var, forward: Vec<f64>, pass: Vec<bool>) -> Result<Var> {
        let n = self.value(x).len();
        if forward.len() != n || pass.len() != n {
            return Err(Error::dim("straight_through", self.shape(x), &[forward.len()]));
        }
        let g = self.node(x).needs_grad;
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, forward, Op::StraightThrough(x, pass), g))
    }

    /// Reverse sweep from a scalar root.
    ///
    /// The returned gradients are fresh for this sweep; copying them into
    /// parameter tensors with [`Gradients::accumulate_into`] adds to whatever
    /// those tensors already hold, so two sweeps without a reset double it.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.node(root).value.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.node(root).shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(gout) = grads[i].take() else {
                continue;
            };
            self.propagate(node, &gout, &mut grads);
            grads[i] = Some(gout);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let needs = |v: &Var| self.node(*v).needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if needs(a) {
                    add_into(&mut grads[a.0], matmul_nt_raw(gout, self.value(*b), m, n, k));
                }
                if needs(b) {
                    add_into(&mut grads[b.0], matmul_tn_raw(self.value(*a), gout, m, k, n));
                }
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[0];
                if needs(a) {
                    add_into(&mut grads[a.0], matmul_raw(gout, self.value(*b), m, n, k));
                }
                if needs(b) {
                    add_into(&mut grads[b.0], matmul_tn_raw(gout, self.value(*a), m, n, k));
                }
            }
            Op::Add(a, b) => {
                if needs(a) {
                    add_into(&mut grads[a.0], gout.to_vec());
                }
                if needs(b) {
                    add_into(&mut grads[b.0], gout.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if needs(a) {
                    add_into(&mut grads[a.0], gout.to_vec());
                }
                if needs(b) {
                    add_into(&mut grads[b.0], gout.iter().map(|g| -g).collect());
                }
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    let d = gout.iter().zip(self.value(*b)).map(|(g, y)| g * y).collect();
                    add_into(&mut grads[a.0], d);
                }
                if needs(b) {
                    let d = gout.iter().zip(self.value(*a)).map(|(g, x)| g * x).collect();
                    add_into(&mut grads[b.0], d);
                }
            }
            Op::AddRow(x, r) => {
                let d = self.shape(*r)[0];
                if needs(x) {
                    add_into(&mut grads[x.0], gout.to_vec());
                }
                if needs(r) {
                    let mut acc = vec![0.0; d];
                    for row in gout.chunks(d) {
                        acc.iter_mut().zip(row).for_each(|(a, g)| *a += g);
                    }
                    add_into(&mut grads[r.0], acc);
                }
            }
            Op::MulRow(x, r) => {
                let d = self.shape(*r)[0];
                let rv = self.value(*r);
                if needs(x) {
                    let dx = gout
                        .chunks(d)
                        .flat_map(|row| row.iter().zip(rv).map(|(g, s)| g * s))
                        .collect();
                    add_into(&mut grads[x.0], dx);
                }
                if needs(r) {
                    let mut acc = vec![0.0; d];
                    for (grow, xrow) in gout.chunks(d).zip(self.value(*x).chunks(d)) {
                        for ((a, g), xv) in acc.iter_mut().zip(grow).zip(xrow) {
                            *a += g * xv;
                        }
                    }
                    add_into(&mut grads[r.0], acc);
                }
            }
            Op::Scale(x, c) => {
                add_into(&mut grads[x.0], gout.iter().map(|g| g * c).collect());
            }
            Op::AddScalar(x) => add_into(&mut grads[x.0], gout.to_vec()),
            Op::Exp(x) => {
                let d = gout.iter().zip(&node.value).map(|(g, y)| g * y).collect();
                add_into(&mut grads[x.0], d);
            }
            Op::Log(x) => {
                let d = gout.iter().zip(self.value(*x)).map(|(g, v)| g / v).collect();
                add_into(&mut grads[x.0], d);
            }
            Op::Powf(x, p) => {
                let d = gout
                    .iter()
                    .zip(self.value(*x))
                    .map(|(g, v)| g * p * v.powf(p - 1.0))
                    .collect();
                add_into(&mut grads[x.0], d);
            }
            Op::Relu(x) => {
                let d = gout
                    .iter()
                    .zip(self.value(*x))
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect();
                add_into(&mut grads[x.0], d);
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                add_into(&mut grads[x.0], vec![gout[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                add_into(&mut grads[x.0], vec![gout[0] / n as f64; n]);
            }
            Op::SumRows(x) => {
                let c = self.shape(*x)[1];
                let d = gout.iter().flat_map(|g| std::iter::repeat_n(*g, c)).collect();
                add_into(&mut grads[x.0], d);
            }
            Op::ColMean(x) => {
                let b = self.shape(*x)[0] as f64;
                let d: Vec<f64> = gout.iter().map(|g| g / b).collect();
                let rows = self.shape(*x)[0];
                add_into(&mut grads[x.0], d.repeat(rows));
            }
            Op::Softmax(x) => {
                let c = self.shape(*x)[1];
                let mut dx = vec![0.0; gout.len()];
                for ((grow, srow), drow) in gout.chunks(c).zip(node.value.chunks(c)).zip(dx.chunks_mut(c)) {
                    let dot: f64 = grow.iter().zip(srow).map(|(g, s)| g * s).sum();
                    for ((d, g), s) in drow.iter_mut().zip(grow).zip(srow) {
                        *d = s * (g - dot);
                    }
                }
                add_into(&mut grads[x.0], dx);
            }
            Op::LogSoftmax(x) => {
                let c = self.shape(*x)[1];
                let mut dx = vec![0.0; gout.len()];
                for ((grow, lrow), drow) in gout.chunks(c).zip(node.value.chunks(c)).zip(dx.chunks_mut(c)) {
                    let total: f64 = grow.iter().sum();
                    for ((d, g), l) in drow.iter_mut().zip(grow).zip(lrow) {
                        *d = g - l.exp() * total;
                    }
                }
                add_into(&mut grads[x.0], dx);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.shape(*a)[1];
                let cb = self.shape(*b)[1];
                let rows = self.shape(*a)[0];
                if needs(a) {
                    let d = (0..rows)
                        .flat_map(|r| gout[r * (ca + cb)..r * (ca + cb) + ca].iter().copied())
                        .collect();
                    add_into(&mut grads[a.0], d);
                }
                if needs(b) {
                    let d = (0..rows)
                        .flat_map(|r| gout[r * (ca + cb) + ca..(r + 1) * (ca + cb)].iter().copied())
                        .collect();
                    add_into(&mut grads[b.0], d);
                }
            }
            Op::StraightThrough(x, pass) => {
                let d = gout.iter().zip(pass).map(|(g, p)| if *p { *g } else { 0.0 }).collect();
                add_into(&mut grads[x.0], d);
            }
        }
    }
}

/// Per-node gradients from one reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`, if `v` lies on a
    /// differentiable path to the root.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` into `t`'s buffer. A `v` that did not
    /// receive gradient contributes zeros so the buffer still exists.
    pub fn accumulate_into(&self, v: Var, t: &mut Tensor) -> Result<()> {
        match self.get(v) {
            Some(g) => t.accumulate_grad(g),
            None => t.accumulate_grad(&vec![0.0; t.numel()]),
        }
    }
}

/// Worst relative disagreement between reverse-mode gradients of `f` and
/// central finite differences with step `step`, over every element of every
/// parameter. The denominator is `max(|analytic|, |numeric|, 1e-8)`.
pub fn check_gradients<F>(f: F, params: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if step <= 0.0 {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.constant(p)).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.scalar(out))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(&p.clone().with_grad())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut worst = 0.0_f64;
    let mut work = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; params[pi].numel()]);
        for (ei, a) in analytic.iter().enumerate() {
            let orig = work[pi].data[ei];
            work[pi].data[ei] = orig + step;
            let up = eval(&work)?;
            work[pi].data[ei] = orig - step;
            let down = eval(&work)?;
            work[pi].data[ei] = orig;
            let numeric = (up - down) / (2.0 * step);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
