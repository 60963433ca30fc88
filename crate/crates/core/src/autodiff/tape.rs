//! Reverse-mode tape over dense row-major matrices.
//!
//! Every value is a `rows x cols` matrix of `f64`; column vectors are `n x 1`
//! and scalars `1 x 1`. Operations append a node that remembers its inputs,
//! so the recorded graph is acyclic by construction (inputs always precede
//! outputs). `backward` walks the nodes in reverse insertion order.

use std::borrow::Cow;
use std::fmt;

use crate::error::{Error, Result};
use crate::nn::chebyshev;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Shape { rows, cols }
    }

    pub const fn col(n: usize) -> Self {
        Shape { rows: n, cols: 1 }
    }

    pub const fn scalar() -> Self {
        Shape { rows: 1, cols: 1 }
    }

    pub const fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    MatMul(Var, Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    Reshape(Var),
    Transpose(Var),
    Sigmoid(Var),
    Tanh(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    SoftmaxRows(Var),
    Chebyshev(Var, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine(..) => "affine",
            Op::MatMul(..) => "matmul",
            Op::ConcatRows(..) => "concat_rows",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceRows(..) => "slice_rows",
            Op::Reshape(..) => "reshape",
            Op::Transpose(..) => "transpose",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Square(..) => "square",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SoftmaxRows(..) => "softmax",
            Op::Chebyshev(..) => "chebyshev",
        }
    }
}

struct Node<'a> {
    shape: Shape,
    value: Cow<'a, [f64]>,
    op: Op,
    requires_grad: bool,
    name: Option<Cow<'a, str>>,
}

/// Recorded computation graph plus gradient buffers.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    grads: Vec<Option<Vec<f64>>>,
    clamped: usize,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Shape, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.len(), value.len());
        self.nodes.push(Node {
            shape,
            value: Cow::Owned(value),
            op,
            requires_grad,
            name: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn check_len(op: &'static str, shape: Shape, len: usize) -> Result<()> {
        if shape.len() != len {
            return Err(Error::shape(
                op,
                format!("shape {shape} needs {} values, got {len}", shape.len()),
            ));
        }
        Ok(())
    }

    /// Leaf holding `data`; gradients are tracked when `requires_grad`.
    pub fn leaf(&mut self, shape: Shape, data: Vec<f64>, requires_grad: bool) -> Result<Var> {
        Self::check_len("leaf", shape, data.len())?;
        Ok(self.push(shape, data, Op::Leaf, requires_grad))
    }

    pub fn constant(&mut self, shape: Shape, data: Vec<f64>) -> Result<Var> {
        self.leaf(shape, data, false)
    }

    pub fn variable(&mut self, shape: Shape, data: Vec<f64>) -> Result<Var> {
        self.leaf(shape, data, true)
    }

    pub fn column(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.push(Shape::col(n), data, Op::Leaf, false)
    }

    pub fn scalar_const(&mut self, x: f64) -> Var {
        self.push(Shape::scalar(), vec![x], Op::Leaf, false)
    }

    /// Named leaf that borrows its values, used for model parameters.
    pub fn borrowed_leaf(
        &mut self,
        shape: Shape,
        data: &'a [f64],
        requires_grad: bool,
        name: &'a str,
    ) -> Result<Var> {
        Self::check_len("leaf", shape, data.len())?;
        self.nodes.push(Node {
            shape,
            value: Cow::Borrowed(data),
            op: Op::Leaf,
            requires_grad,
            name: Some(Cow::Borrowed(name)),
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Number of Chebyshev inputs that fell outside [-1, 1] and were clamped.
    pub fn clamp_events(&self) -> usize {
        self.clamped
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Shape> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, format!("{sa} vs {sb}")));
        }
        Ok(sa)
    }

    fn zip(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let shape = self.same_shape(op.name(), a, b)?;
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, out, op, rg))
    }

    fn map(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let shape = self.shape(a);
        let out: Vec<f64> = self.value(a).iter().map(|&x| f(x)).collect();
        let rg = self.rg(&[a]);
        self.push(shape, out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(Op::Add(a, b), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(Op::Sub(a, b), a, b, |x, y| x - y)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(Op::Mul(a, b), a, b, |x, y| x * y)
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        self.map(Op::Affine(a, scale), a, |x| scale * x + shift)
    }

    pub fn scale(&mut self, a: Var, scale: f64) -> Var {
        self.affine(a, scale, 0.0)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.cols != sb.rows {
            return Err(Error::shape("matmul", format!("{sa} x {sb}")));
        }
        let (m, k, n) = (sa.rows, sa.cols, sb.cols);
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &bpj) in row.iter_mut().zip(brow) {
                    *o += aip * bpj;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Shape::new(m, n), out, Op::MatMul(a, b), rg))
    }

    /// Stack matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::shape("concat_rows", "no operands"));
        };
        let cols = self.shape(*first).cols;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.cols != cols {
                return Err(Error::shape(
                    "concat_rows",
                    format!("column count {} vs {cols}", s.cols),
                ));
            }
            rows += s.rows;
            out.extend_from_slice(self.value(p));
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Shape::new(rows, cols),
            out,
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    /// Place matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::shape("concat_cols", "no operands"));
        };
        let rows = self.shape(*first).rows;
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.rows != rows {
                return Err(Error::shape(
                    "concat_cols",
                    format!("row count {} vs {rows}", s.rows),
                ));
            }
            cols += s.cols;
        }
        let mut out = vec![0.0; rows * cols];
        let mut offset = 0;
        for &p in parts {
            let s = self.shape(p);
            let v = self.value(p);
            for r in 0..rows {
                out[r * cols + offset..r * cols + offset + s.cols]
                    .copy_from_slice(&v[r * s.cols..(r + 1) * s.cols]);
            }
            offset += s.cols;
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Shape::new(rows, cols),
            out,
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(a);
        if start >= end || end > s.rows {
            return Err(Error::shape(
                "slice_rows",
                format!("rows {start}..{end} of {s}"),
            ));
        }
        let out = self.value(a)[start * s.cols..end * s.cols].to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(
            Shape::new(end - start, s.cols),
            out,
            Op::SliceRows(a, start),
            rg,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: Shape) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != shape.len() {
            return Err(Error::shape("reshape", format!("{s} -> {shape}")));
        }
        let out = self.value(a).to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(shape, out, Op::Reshape(a), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let s = self.shape(a);
        let v = self.value(a);
        let mut out = vec![0.0; s.len()];
        for r in 0..s.rows {
            for c in 0..s.cols {
                out[c * s.rows + r] = v[r * s.cols + c];
            }
        }
        let rg = self.rg(&[a]);
        self.push(Shape::new(s.cols, s.rows), out, Op::Transpose(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(Op::Sigmoid(a), a, sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(Op::Tanh(a), a, f64::tanh)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(Op::Square(a), a, |x| x * x)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).iter().sum();
        let rg = self.rg(&[a]);
        self.push(Shape::scalar(), vec![total], Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.is_empty() {
            return Err(Error::shape("mean", "empty operand"));
        }
        let m = self.value(a).iter().sum::<f64>() / s.len() as f64;
        let rg = self.rg(&[a]);
        Ok(self.push(Shape::scalar(), vec![m], Op::Mean(a), rg))
    }

    /// Softmax applied independently to every row.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.cols == 0 {
            return Err(Error::shape("softmax", format!("empty rows in {s}")));
        }
        let v = self.value(a);
        let mut out = vec![0.0; s.len()];
        for r in 0..s.rows {
            let row = &v[r * s.cols..(r + 1) * s.cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let dst = &mut out[r * s.cols..(r + 1) * s.cols];
            let mut z = 0.0;
            for (d, &x) in dst.iter_mut().zip(row) {
                *d = (x - max).exp();
                z += *d;
            }
            for d in dst.iter_mut() {
                *d /= z;
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(s, out, Op::SoftmaxRows(a), rg))
    }

    /// First-kind Chebyshev basis `T_1..T_k` of every element of `a`.
    ///
    /// The `n` elements of `a` (row-major) become the rows of an `n x k`
    /// output. Inputs outside [-1, 1] are clamped and receive zero gradient.
    pub fn chebyshev(&mut self, a: Var, k: usize) -> Result<Var> {
        if k == 0 {
            return Err(Error::shape("chebyshev", "order must be >= 1"));
        }
        let n = self.shape(a).len();
        let mut out = Vec::with_capacity(n * k);
        let mut clamped = 0;
        for &x in self.value(a) {
            if !(-1.0..=1.0).contains(&x) {
                clamped += 1;
            }
            out.extend(chebyshev::basis(x, k));
        }
        self.clamped += clamped;
        let rg = self.rg(&[a]);
        Ok(self.push(Shape::new(n, k), out, Op::Chebyshev(a, k), rg))
    }

    /// Describe the first node holding a NaN or infinity, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        self.nodes.iter().enumerate().find_map(|(i, n)| {
            if n.value.iter().all(|x| x.is_finite()) {
                return None;
            }
            Some(match &n.name {
                Some(name) => format!("{name} (node {i})"),
                None => format!("{} output (node {i}, shape {})", n.op.name(), n.shape),
            })
        })
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
    }

    /// Accumulate d(loss)/d(node) into every node that requires a gradient.
    ///
    /// Calling twice without [`Tape::zero_grad`] adds the gradients again.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let s = self.shape(loss);
        if s != Shape::scalar() {
            return Err(Error::shape("backward", format!("loss must be 1x1, got {s}")));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        if self.grads.len() < grads.len() {
            self.grads.resize(grads.len(), None);
        }
        for (dst, src) in self.grads.iter_mut().zip(grads) {
            match (dst.as_mut(), src) {
                (Some(d), Some(s)) => d.iter_mut().zip(s).for_each(|(d, s)| *d += s),
                (None, Some(s)) => *dst = Some(s),
                _ => {}
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, |d| axpy(d, 1.0, g));
                self.acc(grads, *b, |d| axpy(d, 1.0, g));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |d| axpy(d, 1.0, g));
                self.acc(grads, *b, |d| axpy(d, -1.0, g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.acc(grads, *a, |d| {
                    for ((d, &g), &y) in d.iter_mut().zip(g).zip(bv) {
                        *d += g * y;
                    }
                });
                self.acc(grads, *b, |d| {
                    for ((d, &g), &x) in d.iter_mut().zip(g).zip(av) {
                        *d += g * x;
                    }
                });
            }
            Op::Affine(a, scale) => self.acc(grads, *a, |d| axpy(d, *scale, g)),
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa.rows, sa.cols, sb.cols);
                let (av, bv) = (self.value(*a), self.value(*b));
                // dA = G * B^T
                self.acc(grads, *a, |d| {
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            d[r * k + p] += dot(grow, brow);
                        }
                    }
                });
                // dB = A^T * G
                self.acc(grads, *b, |d| {
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let arp = av[r * k + p];
                            if arp != 0.0 {
                                axpy(&mut d[p * n..(p + 1) * n], arp, grow);
                            }
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.shape(p).len();
                    self.acc(grads, p, |d| axpy(d, 1.0, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let cols = node.shape.cols;
                let mut offset = 0;
                for &p in parts {
                    let s = self.shape(p);
                    self.acc(grads, p, |d| {
                        for r in 0..s.rows {
                            let src = &g[r * cols + offset..r * cols + offset + s.cols];
                            axpy(&mut d[r * s.cols..(r + 1) * s.cols], 1.0, src);
                        }
                    });
                    offset += s.cols;
                }
            }
            Op::SliceRows(a, start) => {
                let cols = node.shape.cols;
                let begin = start * cols;
                self.acc(grads, *a, |d| axpy(&mut d[begin..begin + g.len()], 1.0, g));
            }
            Op::Reshape(a) => self.acc(grads, *a, |d| axpy(d, 1.0, g)),
            Op::Transpose(a) => {
                let s = self.shape(*a);
                self.acc(grads, *a, |d| {
                    for r in 0..s.rows {
                        for c in 0..s.cols {
                            d[r * s.cols + c] += g[c * s.rows + r];
                        }
                    }
                });
            }
            Op::Sigmoid(a) => self.acc(grads, *a, |d| {
                for ((d, &g), &y) in d.iter_mut().zip(g).zip(out.iter()) {
                    *d += g * y * (1.0 - y);
                }
            }),
            Op::Tanh(a) => self.acc(grads, *a, |d| {
                for ((d, &g), &y) in d.iter_mut().zip(g).zip(out.iter()) {
                    *d += g * (1.0 - y * y);
                }
            }),
            Op::Square(a) => {
                let av = self.value(*a);
                self.acc(grads, *a, |d| {
                    for ((d, &g), &x) in d.iter_mut().zip(g).zip(av) {
                        *d += 2.0 * g * x;
                    }
                });
            }
            Op::Sum(a) => self.acc(grads, *a, |d| d.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(a) => {
                let n = self.shape(*a).len() as f64;
                self.acc(grads, *a, |d| d.iter_mut().for_each(|d| *d += g[0] / n));
            }
            Op::SoftmaxRows(a) => {
                let cols = node.shape.cols;
                self.acc(grads, *a, |d| {
                    for r in 0..node.shape.rows {
                        let y = &out[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let inner = dot(gr, y);
                        for c in 0..cols {
                            d[r * cols + c] += y[c] * (gr[c] - inner);
                        }
                    }
                });
            }
            Op::Chebyshev(a, k) => {
                let av = self.value(*a);
                self.acc(grads, *a, |d| {
                    for (idx, &x) in av.iter().enumerate() {
                        if !(-1.0..=1.0).contains(&x) {
                            continue;
                        }
                        let deriv = chebyshev::basis_derivative(x, *k);
                        d[idx] += dot(&g[idx * k..(idx + 1) * k], &deriv);
                    }
                });
            }
        }
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let len = self.nodes[v.0].shape.len();
        let buf = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
        f(buf);
    }
}

fn axpy(dst: &mut [f64], alpha: f64, src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
