//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value and the inputs
//! needed by its backward rule. Node ids grow monotonically, so the record is
//! topologically ordered by construction and [`Tape::backward`] replays it in
//! reverse exactly once.

use super::{Scalar, Tensor, TensorError};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ConvGeom {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    MatMul(Var, Var),
    Linear { x: Var, w: Var, b: Var },
    Conv2d { input: Var, kernel: Var, bias: Var, geom: ConvGeom, cols: Option<Vec<T>> },
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    GatherRows { src: Var, rows: Vec<usize> },
    Unfold3x3 { src: Var, c: usize, h: usize, w: usize },
    ConcatCols(Vec<Var>),
    RowSum(Var),
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Ordered record of executed operations (the gradient tape).
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    leaf_grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<(), TensorError> {
    if a != b {
        return Err(TensorError::ShapeMismatch { op, lhs: a.to_vec(), rhs: b.to_vec() });
    }
    Ok(())
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = *d + *s;
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), leaf_grads: Vec::new() }
    }

    /// Number of recorded nodes, leaves included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`. Vars at or past
    /// `len` become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        self.leaf_grads.truncate(len);
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node { value, requires_grad, op });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// A leaf that never accumulates gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.leaf_grads[v.0].as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.leaf_grads[v.0].take()
    }

    pub fn zero_grads(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        node: Op<T>,
    ) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(op, va.shape(), vb.shape())?;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, rg, node))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|x| x * s);
        let rg = self.rg(&[a]);
        self.push(out, rg, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        // NaN passes through so a corrupted activation still surfaces in the loss.
        let out = self.value(a).map(|x| if x > T::zero() || x.is_nan() { x } else { T::zero() });
        let rg = self.rg(&[a]);
        self.push(out, rg, Op::Relu(a))
    }

    /// Matrix product of `a: m×k` and `b: k×n`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ndim() != 2 || vb.ndim() != 2 || va.shape()[1] != vb.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, va.data(), false, vb.data(), false, &mut out, false);
        let out = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, rg, Op::MatMul(a, b)))
    }

    /// Affine map `x · wᵀ + b` applied row-wise; `x: m×n_in`, `w: n_out×n_in`,
    /// `b: n_out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let (vx, vw, vb) = (self.value(x), self.value(w), self.value(b));
        if vx.ndim() != 2 || vw.ndim() != 2 || vx.shape()[1] != vw.shape()[1] {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                lhs: vx.shape().to_vec(),
                rhs: vw.shape().to_vec(),
            });
        }
        let (m, n_in, n_out) = (vx.shape()[0], vx.shape()[1], vw.shape()[0]);
        same_shape("linear bias", vb.shape(), &[n_out])?;
        let mut out = Vec::with_capacity(m * n_out);
        for _ in 0..m {
            out.extend_from_slice(vb.data());
        }
        T::gemm(m, n_in, n_out, vx.data(), false, vw.data(), true, &mut out, true);
        let out = Tensor::new(vec![m, n_out], out)?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(out, rg, Op::Linear { x, w, b }))
    }

    /// 2-D cross-correlation with zero padding.
    ///
    /// `input: c_in×h×w`, `kernel: c_out×c_in×k×k`, `bias: c_out`; output
    /// extents are `floor((h + 2·padding − k) / stride) + 1` per axis.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var, TensorError> {
        let (vi, vk, vb) = (self.value(input), self.value(kernel), self.value(bias));
        let mismatch = || TensorError::ShapeMismatch {
            op: "conv2d",
            lhs: vi.shape().to_vec(),
            rhs: vk.shape().to_vec(),
        };
        if vi.ndim() != 3 || vk.ndim() != 4 || vk.shape()[1] != vi.shape()[0] {
            return Err(mismatch());
        }
        let (c_in, h, w) = (vi.shape()[0], vi.shape()[1], vi.shape()[2]);
        let (c_out, k) = (vk.shape()[0], vk.shape()[2]);
        if vk.shape()[3] != k {
            return Err(TensorError::invalid("conv2d", "kernel must be square"));
        }
        same_shape("conv2d bias", vb.shape(), &[c_out])?;
        if stride == 0 {
            return Err(TensorError::invalid("conv2d", "stride must be positive"));
        }
        if k == 0 || k > h + 2 * padding || k > w + 2 * padding {
            return Err(TensorError::invalid(
                "conv2d",
                format!("kernel {k}×{k} larger than padded input {}×{}", h + 2 * padding, w + 2 * padding),
            ));
        }
        let geom = ConvGeom {
            c_in,
            h,
            w,
            c_out,
            k,
            stride,
            padding,
            out_h: (h + 2 * padding - k) / stride + 1,
            out_w: (w + 2 * padding - k) / stride + 1,
        };
        let cols = im2col(vi.data(), &geom);
        let positions = geom.positions();
        let mut out = Vec::with_capacity(c_out * positions);
        for &b in vb.data() {
            out.extend(std::iter::repeat(b).take(positions));
        }
        T::gemm(c_out, geom.patch(), positions, vk.data(), false, &cols, false, &mut out, true);
        let out = Tensor::new(vec![c_out, geom.out_h, geom.out_w], out)?;
        let rg = self.rg(&[input, kernel, bias]);
        let keep_cols = self.nodes[kernel.0].requires_grad;
        Ok(self.push(
            out,
            rg,
            Op::Conv2d { input, kernel, bias, geom, cols: keep_cols.then_some(cols) },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let va = self.value(a);
        if va.is_empty() {
            return Err(TensorError::Empty { op: "sum" });
        }
        let s: T = va.data().iter().copied().sum();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::scalar(s), rg, Op::Sum(a)))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let va = self.value(a);
        if va.is_empty() {
            return Err(TensorError::Empty { op: "mean" });
        }
        let s: T = va.data().iter().copied().sum();
        let m = s / T::from_usize(va.len()).expect("length fits the scalar type");
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::scalar(m), rg, Op::Mean(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var, TensorError> {
        let out = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, rg, Op::Reshape(a)))
    }

    /// Selects rows of a 2-D tensor; rows may repeat.
    pub fn gather_rows(&mut self, src: Var, rows: &[usize]) -> Result<Var, TensorError> {
        let vs = self.value(src);
        if vs.ndim() != 2 {
            return Err(TensorError::invalid("gather_rows", format!("expected 2-D source, got {:?}", vs.shape())));
        }
        let (n, d) = (vs.shape()[0], vs.shape()[1]);
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            if r >= n {
                return Err(TensorError::invalid("gather_rows", format!("row {r} out of range for {n} rows")));
            }
            out.extend_from_slice(&vs.data()[r * d..(r + 1) * d]);
        }
        let out = Tensor::new(vec![rows.len(), d], out)?;
        let rg = self.rg(&[src]);
        Ok(self.push(out, rg, Op::GatherRows { src, rows: rows.to_vec() }))
    }

    /// Concatenates each position's zero-padded 3×3 neighbourhood:
    /// `c×h×w → (h·w)×(9·c)`, columns ordered channel-major then row, column.
    pub fn unfold3x3(&mut self, src: Var) -> Result<Var, TensorError> {
        let vs = self.value(src);
        if vs.ndim() != 3 {
            return Err(TensorError::invalid("unfold3x3", format!("expected c×h×w, got {:?}", vs.shape())));
        }
        let (c, h, w) = (vs.shape()[0], vs.shape()[1], vs.shape()[2]);
        let x = vs.data();
        let cols = 9 * c;
        let mut out = vec![T::zero(); h * w * cols];
        for i in 0..h {
            for j in 0..w {
                let row = &mut out[(i * w + j) * cols..(i * w + j + 1) * cols];
                for ch in 0..c {
                    for di in 0..3 {
                        let y = i as isize + di as isize - 1;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        for dj in 0..3 {
                            let xx = j as isize + dj as isize - 1;
                            if xx < 0 || xx >= w as isize {
                                continue;
                            }
                            row[ch * 9 + di * 3 + dj] = x[(ch * h + y as usize) * w + xx as usize];
                        }
                    }
                }
            }
        }
        let out = Tensor::new(vec![h * w, cols], out)?;
        let rg = self.rg(&[src]);
        Ok(self.push(out, rg, Op::Unfold3x3 { src, c, h, w }))
    }

    /// Concatenates 2-D tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts.first().ok_or(TensorError::Empty { op: "concat_cols" })?;
        let rows = self.shape(*first).first().copied().unwrap_or(0);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[0] != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.shape(*first).to_vec(),
                    rhs: s.to_vec(),
                });
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &wd) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * wd..(r + 1) * wd]);
            }
        }
        let out = Tensor::new(vec![rows, total], out)?;
        let rg = self.rg(parts);
        Ok(self.push(out, rg, Op::ConcatCols(parts.to_vec())))
    }

    /// Sums each row of an `n×m` tensor into an `n` vector.
    pub fn row_sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let va = self.value(a);
        if va.ndim() != 2 {
            return Err(TensorError::invalid("row_sum", format!("expected 2-D input, got {:?}", va.shape())));
        }
        let (n, m) = (va.shape()[0], va.shape()[1]);
        let out: Vec<T> = (0..n).map(|r| va.data()[r * m..(r + 1) * m].iter().copied().sum()).collect();
        let out = Tensor::new(vec![n], out)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, rg, Op::RowSum(a)))
    }

    /// Mean squared error `mean((a − b)²)`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        self.mean(sq)
    }

    /// Reverse sweep from a scalar `loss`. Gradients accumulate additively
    /// into every reachable leaf that requires grad.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            self.backward_node(id, &g, &mut grads);
        }
        Ok(())
    }

    fn backward_node(&mut self, id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        macro_rules! with_slot {
            ($v:expr, |$buf:ident| $body:expr) => {
                if let Some($buf) = grad_slot(nodes, grads, $v) {
                    $body;
                }
            };
        }
        match &nodes[id].op {
            Op::Leaf => {
                let acc = self.leaf_grads[id].get_or_insert_with(|| vec![T::zero(); g.len()]);
                add_into(acc, g);
            }
            Op::Add(a, b) => {
                with_slot!(*a, |buf| add_into(buf, g));
                with_slot!(*b, |buf| add_into(buf, g));
            }
            Op::Sub(a, b) => {
                with_slot!(*a, |buf| add_into(buf, g));
                with_slot!(*b, |buf| {
                    for (d, s) in buf.iter_mut().zip(g) {
                        *d = *d - *s;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                with_slot!(*a, |buf| {
                    for ((d, s), y) in buf.iter_mut().zip(g).zip(vb) {
                        *d = *d + *s * *y;
                    }
                });
                with_slot!(*b, |buf| {
                    for ((d, s), x) in buf.iter_mut().zip(g).zip(va) {
                        *d = *d + *s * *x;
                    }
                });
            }
            Op::Scale(a, s) => {
                with_slot!(*a, |buf| {
                    for (d, gi) in buf.iter_mut().zip(g) {
                        *d = *d + *gi * *s;
                    }
                });
            }
            Op::Relu(a) => {
                let x = nodes[a.0].value.data();
                with_slot!(*a, |buf| {
                    for ((d, gi), xi) in buf.iter_mut().zip(g).zip(x) {
                        if *xi > T::zero() {
                            *d = *d + *gi;
                        }
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                with_slot!(*a, |buf| T::gemm(m, n, k, g, false, vb.data(), true, buf, true));
                with_slot!(*b, |buf| T::gemm(k, m, n, va.data(), true, g, false, buf, true));
            }
            Op::Linear { x, w, b } => {
                let (vx, vw) = (&nodes[x.0].value, &nodes[w.0].value);
                let (m, n_in, n_out) = (vx.shape()[0], vx.shape()[1], vw.shape()[0]);
                with_slot!(*x, |buf| T::gemm(m, n_out, n_in, g, false, vw.data(), false, buf, true));
                with_slot!(*w, |buf| T::gemm(n_out, m, n_in, g, true, vx.data(), false, buf, true));
                with_slot!(*b, |buf| {
                    for r in 0..m {
                        add_into(buf, &g[r * n_out..(r + 1) * n_out]);
                    }
                });
            }
            Op::Conv2d { input, kernel, bias, geom, cols } => {
                let positions = geom.positions();
                let patch = geom.patch();
                if let Some(cols) = cols {
                    with_slot!(*kernel, |buf| T::gemm(
                        geom.c_out, positions, patch, g, false, cols, true, buf, true
                    ));
                }
                with_slot!(*bias, |buf| {
                    for (o, d) in buf.iter_mut().enumerate() {
                        *d = *d + g[o * positions..(o + 1) * positions].iter().copied().sum::<T>();
                    }
                });
                if nodes[input.0].requires_grad {
                    let kv = nodes[kernel.0].value.data();
                    let mut dcols = vec![T::zero(); patch * positions];
                    T::gemm(patch, geom.c_out, positions, kv, true, g, false, &mut dcols, false);
                    with_slot!(*input, |buf| col2im(&dcols, geom, buf));
                }
            }
            Op::Sum(a) => {
                with_slot!(*a, |buf| buf.iter_mut().for_each(|d| *d = *d + g[0]));
            }
            Op::Mean(a) => {
                let n = T::from_usize(nodes[a.0].value.len()).expect("length fits the scalar type");
                let share = g[0] / n;
                with_slot!(*a, |buf| buf.iter_mut().for_each(|d| *d = *d + share));
            }
            Op::Reshape(a) => {
                with_slot!(*a, |buf| add_into(buf, g));
            }
            Op::GatherRows { src, rows } => {
                let d = nodes[src.0].value.shape()[1];
                with_slot!(*src, |buf| {
                    for (i, &r) in rows.iter().enumerate() {
                        add_into(&mut buf[r * d..(r + 1) * d], &g[i * d..(i + 1) * d]);
                    }
                });
            }
            Op::Unfold3x3 { src, c, h, w } => {
                let (c, h, w) = (*c, *h, *w);
                with_slot!(*src, |buf| {
                    let cols = 9 * c;
                    for i in 0..h {
                        for j in 0..w {
                            let row = &g[(i * w + j) * cols..(i * w + j + 1) * cols];
                            for ch in 0..c {
                                for di in 0..3 {
                                    let y = i as isize + di as isize - 1;
                                    if y < 0 || y >= h as isize {
                                        continue;
                                    }
                                    for dj in 0..3 {
                                        let x = j as isize + dj as isize - 1;
                                        if x < 0 || x >= w as isize {
                                            continue;
                                        }
                                        let at = (ch * h + y as usize) * w + x as usize;
                                        buf[at] = buf[at] + row[ch * 9 + di * 3 + dj];
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total: usize = parts.iter().map(|p| nodes[p.0].value.shape()[1]).sum();
                let rows = g.len() / total.max(1);
                let mut offset = 0;
                for p in parts {
                    let wd = nodes[p.0].value.shape()[1];
                    with_slot!(*p, |buf| {
                        for r in 0..rows {
                            add_into(
                                &mut buf[r * wd..(r + 1) * wd],
                                &g[r * total + offset..r * total + offset + wd],
                            );
                        }
                    });
                    offset += wd;
                }
            }
            Op::RowSum(a) => {
                let m = nodes[a.0].value.shape()[1];
                with_slot!(*a, |buf| {
                    for (r, gi) in g.iter().enumerate() {
                        buf[r * m..(r + 1) * m].iter_mut().for_each(|d| *d = *d + *gi);
                    }
                });
            }
        }
    }
}

/// Gradient buffer of `v`, allocated on first use; `None` when `v` does not
/// require grad.
fn grad_slot<'g, T: Scalar>(
    nodes: &[Node<T>],
    grads: &'g mut [Option<Vec<T>>],
    v: Var,
) -> Option<&'g mut Vec<T>> {
    let n = &nodes[v.0];
    if !n.requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n.value.len()]))
}

fn im2col<T: Scalar>(input: &[T], g: &ConvGeom) -> Vec<T> {
    let positions = g.positions();
    let mut cols = vec![T::zero(); g.patch() * positions];
    for c in 0..g.c_in {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &input[(c * g.h + iy as usize) * g.w..(c * g.h + iy as usize + 1) * g.w];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[oy * g.out_w + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, dinput: &mut [T]) {
    let positions = g.positions();
    for c in 0..g.c_in {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * positions..(row + 1) * positions];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let base = (c * g.h + iy as usize) * g.w;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.w as isize {
                            let at = base + ix as usize;
                            dinput[at] = dinput[at] + src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}
