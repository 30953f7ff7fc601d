//! Dynamic reverse-mode tape.
//!
//! A [`Graph`] records every operation as it is executed. Nodes are appended
//! in evaluation order, so the node vector is already topologically sorted
//! and [`Graph::backward`] walks it once in reverse.
//!
//! Shapes never broadcast implicitly. The only "broadcast-like" operations
//! are explicitly named: [`Graph::add_row_bias`], [`Graph::row_cosine`] and
//! [`Graph::row_lerp`].

use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowBias(Var, Var),
    Concat(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    LogSigmoid(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Cosine(Var, Var),
    RowCosine(Var, Var),
    RowDot(Var, Var),
    L1(Var),
    Sum(Var),
    Mean(Var),
    SumSq(Var),
    GatherRows(Var, Vec<usize>),
    SliceRows(Var, usize),
    RowLerp(Var, Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Operation tape. Confined to one thread; rebuild per forward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<(String, Var)>,
}

impl Gradients {
    /// Gradient of the root with respect to `var`; zeros if the root does
    /// not depend on it.
    pub fn get(&self, var: Var) -> Tensor {
        let shape = &self.shapes[var.0];
        match &self.grads[var.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// Gradient map for every named parameter leaf.
    pub fn params(&self) -> BTreeMap<String, Tensor> {
        self.params
            .iter()
            .map(|(name, var)| (name.clone(), self.get(*var)))
            .collect()
    }
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Norms below this are clamped in cosine ops, so a zero vector has cosine 0.
pub const COSINE_EPS: f64 = 1e-8;

/// `∂ cos(a, b) / ∂a_i` where `cos = a·b / (max(|a|, ε) max(|b|, ε))`.
fn cosine_grad(a: &[f64], b: &[f64], na: f64, nb: f64, c: f64, i: usize) -> f64 {
    let (ca, cb) = (na.max(COSINE_EPS), nb.max(COSINE_EPS));
    let radial = if na > COSINE_EPS { c * a[i] / (na * na) } else { 0.0 };
    b[i] / (ca * cb) - radial
}

/// Row-major `[m,k] x [k,n]` product into `out` (must be zeroed).
fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf reported by name in [`Gradients::params`].
    pub fn param(&mut self, name: &str, value: Tensor) -> Var {
        let v = self.push(value, Op::Leaf, true);
        self.params.push((name.to_string(), v));
        v
    }

    /// Unnamed leaf; gradients are available through [`Gradients::get`]
    /// when `requires_grad` is set.
    pub fn input(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn matrix_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::shape(op, s, &[])),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, n) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let value = Tensor::matrix(m, n, out)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(op, a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(self.shape(a).to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with("add", a, b, |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with("sub", a, b, |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Sub(a, b), ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with("mul", a, b, |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Mul(a, b), ng))
    }

    /// `x[r, :] + bias` for every row of a `[rows, cols]` matrix.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.matrix_dims("add_row_bias", x)?;
        if self.shape(bias) != [c] {
            return Err(Error::shape("add_row_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias).data().to_vec();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(c) {
            for (v, bv) in row.iter_mut().zip(&b) {
                *v += bv;
            }
        }
        let value = Tensor::matrix(r, c, data)?;
        let ng = self.ng(x) || self.ng(bias);
        Ok(self.push(value, Op::AddRowBias(x, bias), ng))
    }

    /// Concatenation along the last axis. Both operands must be vectors, or
    /// matrices with the same number of rows.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let value = match (sa.as_slice(), sb.as_slice()) {
            ([_], [_]) => {
                let mut d = self.value(a).data().to_vec();
                d.extend_from_slice(self.value(b).data());
                Tensor::vector(d)
            }
            ([ra, ca], [rb, cb]) if ra == rb => {
                let (ca, cb) = (*ca, *cb);
                let (va, vb) = (self.value(a).data(), self.value(b).data());
                let mut d = Vec::with_capacity(ra * (ca + cb));
                for r in 0..*ra {
                    d.extend_from_slice(&va[r * ca..(r + 1) * ca]);
                    d.extend_from_slice(&vb[r * cb..(r + 1) * cb]);
                }
                Tensor::matrix(*ra, ca + cb, d)?
            }
            _ => return Err(Error::shape("concat", &sa, &sb)),
        };
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Concat(a, b), ng))
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let src = self.value(x);
        let value = Tensor::new(src.shape().to_vec(), src.data().iter().map(|&v| f(v)).collect())
            .expect("same shape");
        let ng = self.ng(x);
        self.push(value, op, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, Op::Relu(x), relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, Op::Tanh(x), f64::tanh)
    }

    /// Numerically stable `ln σ(x)`.
    pub fn log_sigmoid(&mut self, x: Var) -> Var {
        self.map(x, Op::LogSigmoid(x), log_sigmoid)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.map(x, Op::Scale(x, factor), |v| v * factor)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.map(x, Op::AddScalar(x), |v| v + c)
    }

    /// Cosine similarity of two equal-length tensors, as a scalar.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).len() != self.value(b).len() {
            return Err(Error::shape("cosine", self.shape(a), self.shape(b)));
        }
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let (na, nb) = (norm(va).max(COSINE_EPS), norm(vb).max(COSINE_EPS));
        let value = Tensor::scalar(dot(va, vb) / (na * nb));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Cosine(a, b), ng))
    }

    /// Cosine of each row of `x` (`[rows, cols]`) with the vector `t` (`[cols]`).
    pub fn row_cosine(&mut self, x: Var, t: Var) -> Result<Var> {
        let (r, c) = self.matrix_dims("row_cosine", x)?;
        if self.shape(t) != [c] {
            return Err(Error::shape("row_cosine", self.shape(x), self.shape(t)));
        }
        let tv = self.value(t).data();
        let nt = norm(tv).max(COSINE_EPS);
        let xv = self.value(x);
        let out = (0..r)
            .map(|i| {
                let row = xv.row(i);
                dot(row, tv) / (norm(row).max(COSINE_EPS) * nt)
            })
            .collect();
        let ng = self.ng(x) || self.ng(t);
        Ok(self.push(Tensor::vector(out), Op::RowCosine(x, t), ng))
    }

    /// Dot product of matching rows of two `[rows, cols]` matrices.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("row_dot", a, b)?;
        let (r, _) = self.matrix_dims("row_dot", a)?;
        let (va, vb) = (self.value(a), self.value(b));
        let out = (0..r).map(|i| dot(va.row(i), vb.row(i))).collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::vector(out), Op::RowDot(a, b), ng))
    }

    /// ℓ1 norm over all elements.
    pub fn l1_norm(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|v| v.abs()).sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::L1(x), ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        if n == 0 {
            return Err(Error::Domain {
                op: "mean",
                reason: "empty tensor".into(),
            });
        }
        let s: f64 = self.value(x).data().iter().sum();
        let ng = self.ng(x);
        Ok(self.push(Tensor::scalar(s / n as f64), Op::Mean(x), ng))
    }

    /// Sum of squared elements.
    pub fn sum_sq(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::SumSq(x), ng)
    }

    /// Rows of `table` at `indices`, stacked into `[indices.len(), cols]`.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (r, c) = self.matrix_dims("gather_rows", table)?;
        let tv = self.value(table);
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(Error::OutOfRange {
                    what: "row",
                    index: i,
                    size: r,
                });
            }
            data.extend_from_slice(tv.row(i));
        }
        let value = Tensor::matrix(indices.len(), c, data)?;
        let ng = self.ng(table);
        Ok(self.push(value, Op::GatherRows(table, indices.to_vec()), ng))
    }

    /// Rows `start..start + len` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.matrix_dims("slice_rows", x)?;
        if start + len > r {
            return Err(Error::OutOfRange {
                what: "slice end",
                index: start + len,
                size: r,
            });
        }
        let data = self.value(x).data()[start * c..(start + len) * c].to_vec();
        let value = Tensor::matrix(len, c, data)?;
        let ng = self.ng(x);
        Ok(self.push(value, Op::SliceRows(x, start), ng))
    }

    /// Per-row linear blend `a[r] * (1 - w[r]) + b[r] * w[r]`.
    pub fn row_lerp(&mut self, a: Var, b: Var, w: Var) -> Result<Var> {
        self.same_shape("row_lerp", a, b)?;
        let (r, c) = self.matrix_dims("row_lerp", a)?;
        if self.shape(w) != [r] {
            return Err(Error::shape("row_lerp", self.shape(a), self.shape(w)));
        }
        let (va, vb, vw) = (self.value(a).data(), self.value(b).data(), self.value(w).data());
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            let wi = vw[i];
            for j in 0..c {
                data.push(va[i * c + j] * (1.0 - wi) + vb[i * c + j] * wi);
            }
        }
        let value = Tensor::matrix(r, c, data)?;
        let ng = self.ng(a) || self.ng(b) || self.ng(w);
        Ok(self.push(value, Op::RowLerp(a, b, w), ng))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if !self.value(root).is_scalar() {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.shape(root)
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            params: self.params.clone(),
        })
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();

        // Returns the accumulation buffer for `v`, or None when `v` does not
        // need a gradient.
        macro_rules! acc {
            ($v:expr) => {{
                let v: Var = $v;
                if self.nodes[v.0].needs_grad {
                    let len = self.nodes[v.0].value.len();
                    Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
                } else {
                    None
                }
            }};
        }

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let sa = self.shape(*a);
                let (m, k) = (sa[0], sa[1]);
                let nn = self.shape(*b)[1];
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if let Some(ga) = acc!(*a) {
                    // dA = dC · Bᵀ
                    for i in 0..m {
                        let g_row = &g[i * nn..(i + 1) * nn];
                        for p in 0..k {
                            ga[i * k + p] += dot(g_row, &bv[p * nn..(p + 1) * nn]);
                        }
                    }
                }
                if let Some(gb) = acc!(*b) {
                    // dB = Aᵀ · dC
                    for i in 0..m {
                        let g_row = &g[i * nn..(i + 1) * nn];
                        for p in 0..k {
                            let a_ip = av[i * k + p];
                            if a_ip == 0.0 {
                                continue;
                            }
                            for (gbv, &gv) in gb[p * nn..(p + 1) * nn].iter_mut().zip(g_row) {
                                *gbv += a_ip * gv;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = acc!(*a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if let Some(gb) = acc!(*b) {
                    gb.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = acc!(*a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if let Some(gb) = acc!(*b) {
                    gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = acc!(*a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                }
                if let Some(gb) = acc!(*b) {
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
            }
            Op::AddRowBias(x, bias) => {
                let c = self.value(*bias).len();
                if let Some(gx) = acc!(*x) {
                    gx.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if let Some(gb) = acc!(*bias) {
                    for row in g.chunks(c) {
                        gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::Concat(a, b) => {
                let sa = self.shape(*a).to_vec();
                let (rows, ca) = if sa.len() == 2 { (sa[0], sa[1]) } else { (1, sa[0]) };
                let cb = self.value(*b).len() / rows;
                let c = ca + cb;
                if let Some(ga) = acc!(*a) {
                    for r in 0..rows {
                        for j in 0..ca {
                            ga[r * ca + j] += g[r * c + j];
                        }
                    }
                }
                if let Some(gb) = acc!(*b) {
                    for r in 0..rows {
                        for j in 0..cb {
                            gb[r * cb + j] += g[r * c + ca + j];
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                if let Some(gx) = acc!(*x) {
                    for i in 0..g.len() {
                        if xv[i] > 0.0 {
                            gx[i] += g[i];
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(gx) = acc!(*x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * out[i] * (1.0 - out[i]);
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(gx) = acc!(*x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * (1.0 - out[i] * out[i]);
                    }
                }
            }
            Op::LogSigmoid(x) => {
                let xv = self.value(*x).data();
                if let Some(gx) = acc!(*x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * sigmoid(-xv[i]);
                    }
                }
            }
            Op::Scale(x, f) => {
                if let Some(gx) = acc!(*x) {
                    gx.iter_mut().zip(g).for_each(|(a, b)| *a += b * f);
                }
            }
            Op::AddScalar(x) => {
                if let Some(gx) = acc!(*x) {
                    gx.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
            }
            Op::Cosine(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let (na, nb) = (norm(av), norm(bv));
                let c = out[0];
                let g0 = g[0];
                if let Some(ga) = acc!(*a) {
                    for i in 0..av.len() {
                        ga[i] += g0 * cosine_grad(av, bv, na, nb, c, i);
                    }
                }
                if let Some(gb) = acc!(*b) {
                    for i in 0..bv.len() {
                        gb[i] += g0 * cosine_grad(bv, av, nb, na, c, i);
                    }
                }
            }
            Op::RowCosine(x, t) => {
                let xv = self.value(*x);
                let tv = self.value(*t).data();
                let nt = norm(tv);
                let cols = tv.len();
                let rows = g.len();
                let x_ng = self.nodes[x.0].needs_grad;
                let t_ng = self.nodes[t.0].needs_grad;
                let mut gt_local = vec![0.0; if t_ng { cols } else { 0 }];
                let mut gx_local = vec![0.0; if x_ng { rows * cols } else { 0 }];
                for r in 0..rows {
                    let row = xv.row(r);
                    let nx = norm(row);
                    let c = out[r];
                    for j in 0..cols {
                        if x_ng {
                            gx_local[r * cols + j] += g[r] * cosine_grad(row, tv, nx, nt, c, j);
                        }
                        if t_ng {
                            gt_local[j] += g[r] * cosine_grad(tv, row, nt, nx, c, j);
                        }
                    }
                }
                if let Some(gx) = acc!(*x) {
                    gx.iter_mut().zip(&gx_local).for_each(|(a, b)| *a += b);
                }
                if let Some(gt) = acc!(*t) {
                    gt.iter_mut().zip(&gt_local).for_each(|(a, b)| *a += b);
                }
            }
            Op::RowDot(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let cols = av.cols();
                if let Some(ga) = acc!(*a) {
                    for (r, &gr) in g.iter().enumerate() {
                        for (x, &y) in ga[r * cols..(r + 1) * cols].iter_mut().zip(bv.row(r)) {
                            *x += gr * y;
                        }
                    }
                }
                if let Some(gb) = acc!(*b) {
                    for (r, &gr) in g.iter().enumerate() {
                        for (x, &y) in gb[r * cols..(r + 1) * cols].iter_mut().zip(av.row(r)) {
                            *x += gr * y;
                        }
                    }
                }
            }
            Op::L1(x) => {
                let xv = self.value(*x).data();
                if let Some(gx) = acc!(*x) {
                    for i in 0..xv.len() {
                        gx[i] += g[0] * sign(xv[i]);
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = acc!(*x) {
                    gx.iter_mut().for_each(|a| *a += g[0]);
                }
            }
            Op::Mean(x) => {
                if let Some(gx) = acc!(*x) {
                    let n = gx.len() as f64;
                    gx.iter_mut().for_each(|a| *a += g[0] / n);
                }
            }
            Op::SumSq(x) => {
                let xv = self.value(*x).data();
                if let Some(gx) = acc!(*x) {
                    for i in 0..xv.len() {
                        gx[i] += 2.0 * g[0] * xv[i];
                    }
                }
            }
            Op::GatherRows(table, indices) => {
                let cols = self.value(*table).cols();
                if let Some(gt) = acc!(*table) {
                    for (r, &i) in indices.iter().enumerate() {
                        for j in 0..cols {
                            gt[i * cols + j] += g[r * cols + j];
                        }
                    }
                }
            }
            Op::SliceRows(x, start) => {
                let cols = self.value(*x).cols();
                if let Some(gx) = acc!(*x) {
                    let off = start * cols;
                    for (i, gv) in g.iter().enumerate() {
                        gx[off + i] += gv;
                    }
                }
            }
            Op::RowLerp(a, b, w) => {
                let (av, bv, wv) = (self.value(*a).data(), self.value(*b).data(), self.value(*w).data());
                let cols = if wv.is_empty() { 0 } else { av.len() / wv.len() };
                if let Some(ga) = acc!(*a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * (1.0 - wv[i / cols]);
                    }
                }
                if let Some(gb) = acc!(*b) {
                    for i in 0..g.len() {
                        gb[i] += g[i] * wv[i / cols];
                    }
                }
                if let Some(gw) = acc!(*w) {
                    for (r, gwr) in gw.iter_mut().enumerate() {
                        let s = r * cols;
                        for j in s..s + cols {
                            *gwr += g[j] * (bv[j] - av[j]);
                        }
                    }
                }
            }
        }
    }
}
