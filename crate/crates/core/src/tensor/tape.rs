use super::kernels;
use super::{Real, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`]. The index doubles as the node's
/// topological sequence number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Gelu(Var),
    Conv2d {
        x: Var,
        kernel: Var,
        bias: Var,
        cols: Vec<T>,
    },
    Reshape(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    L1(Var, Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Define-by-run tape. Nodes are appended in evaluation order, so the node
/// list is always a valid topological order and backward is a single reverse
/// sweep.
#[derive(Debug, Default)]
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2("matmul")?;
        let (k2, n) = self.value(b).dims2("matmul")?;
        if k != k2 {
            return Err(mismatch("matmul", self.shape(a), self.shape(b)));
        }
        let c = kernels::gemm(m, k, n, self.value(a).data(), self.value(b).data());
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(&[m, n], c)?, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims2("transpose")?;
        let t = kernels::transpose(r, c, self.value(a).data());
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::new(&[c, r], t)?, Op::Transpose(a), rg))
    }

    /// `x·w + b` with `b` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, din) = self.value(x).dims2("linear")?;
        let (din2, dout) = self.value(w).dims2("linear")?;
        if din != din2 {
            return Err(mismatch("linear", self.shape(x), self.shape(w)));
        }
        if self.shape(b) != [dout] {
            return Err(mismatch("linear", self.shape(w), self.shape(b)));
        }
        let mut y = kernels::gemm(n, din, dout, self.value(x).data(), self.value(w).data());
        let bias = self.value(b).data();
        for row in y.chunks_exact_mut(dout) {
            for (v, &bv) in row.iter_mut().zip(bias) {
                *v += bv;
            }
        }
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(Tensor::new(&[n, dout], y)?, Op::Linear { x, w, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("add", self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(&shape, data)?, Op::Add(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("mul", self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(&shape, data)?, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let value = self.value(a).map(|v| v * factor);
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims2("softmax_rows")?;
        let y = kernels::softmax_rows(c, self.value(a).data());
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::new(&[r, c], y)?, Op::Softmax(a), rg))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let (n, d) = self.value(x).dims2("layer_norm")?;
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(mismatch("layer_norm", self.shape(x), self.shape(gamma)));
        }
        let (xhat, inv_std) = kernels::layer_norm_stats(d, self.value(x).data(), eps);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut y = xhat.clone();
        for row in y.chunks_exact_mut(d) {
            for ((v, &gv), &bv) in row.iter_mut().zip(g).zip(b) {
                *v = *v * gv + bv;
            }
        }
        let rg = self.any_grad(&[x, gamma, beta]);
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        };
        Ok(self.push(Tensor::new(&[n, d], y)?, op, rg))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(kernels::gelu);
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Gelu(a), rg)
    }

    /// Zero-padded "same" cross-correlation on an `H×W×C_in` image with a
    /// `k×k×C_in×C_out` kernel.
    pub fn conv2d_same(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (h, w, cin) = match self.shape(x) {
            &[h, w, c] => (h, w, c),
            s => {
                return Err(TensorError::Rank {
                    op: "conv2d_same",
                    expected: 3,
                    shape: s.to_vec(),
                })
            }
        };
        let (k, cout) = match self.shape(kernel) {
            &[k1, k2, c, o] if k1 == k2 && c == cin => (k1, o),
            s => return Err(mismatch("conv2d_same", self.shape(x), &s.to_vec())),
        };
        if k % 2 == 0 {
            return Err(TensorError::EvenKernel(k));
        }
        if self.shape(bias) != [cout] {
            return Err(mismatch("conv2d_same", self.shape(kernel), self.shape(bias)));
        }
        let cols = kernels::im2col(h, w, cin, k, self.value(x).data());
        let mut y = kernels::gemm(h * w, k * k * cin, cout, &cols, self.value(kernel).data());
        let b = self.value(bias).data();
        for row in y.chunks_exact_mut(cout) {
            for (v, &bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        let rg = self.any_grad(&[x, kernel, bias]);
        let op = Op::Conv2d {
            x,
            kernel,
            bias,
            cols,
        };
        Ok(self.push(Tensor::new(&[h, w, cout], y)?, op, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Columns `start..start + width` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let (r, c) = self.value(a).dims2("slice_cols")?;
        if width == 0 || start + width > c {
            return Err(TensorError::Invalid {
                op: "slice_cols",
                msg: format!("columns {start}..{} out of 0..{c}", start + width),
            });
        }
        let data = self
            .value(a)
            .data()
            .chunks_exact(c)
            .flat_map(|row| row[start..start + width].iter().copied())
            .collect();
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::new(&[r, width], data)?, Op::SliceCols { x: a, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(TensorError::Invalid {
            op: "concat_cols",
            msg: "no inputs".into(),
        })?;
        let (rows, _) = self.value(first).dims2("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2("concat_cols")?;
            if r != rows {
                return Err(mismatch("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &c) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * c..(i + 1) * c]);
            }
        }
        let rg = self.any_grad(parts);
        Ok(self.push(Tensor::new(&[rows, total], data)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Mean absolute difference, a scalar.
    pub fn l1_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("l1_loss", self.shape(a), self.shape(b)));
        }
        let va = self.value(a).data();
        let vb = self.value(b).data();
        let total: f64 = va
            .iter()
            .zip(vb)
            .map(|(&x, &y)| (x - y).abs().as_f64())
            .sum();
        let mean = T::lit(total / va.len() as f64);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::scalar(mean), Op::L1(a, b), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum::<T>();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Reverse sweep from a scalar `loss`. Every leaf created with
    /// `requires_grad` gets a gradient, zero when it does not reach the loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(vec![T::one()]);

        let mut leaf_grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(loss.0 + 1);
        leaf_grads.resize_with(self.nodes.len(), || None);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if let Op::Leaf = node.op {
                leaf_grads[idx] = Some(Tensor::new(node.value.shape(), g)?);
                continue;
            }
            self.backprop_node(node, &g, &mut grads);
        }

        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad && leaf_grads[idx].is_none() {
                leaf_grads[idx] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads: leaf_grads })
    }

    fn backprop_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims(self.value(*a));
                let n = node.value.shape()[1];
                if self.requires_grad(*a) {
                    let ga = slot(grads, *a, m * k);
                    kernels::gemm_nt_acc(m, n, k, g, self.value(*b).data(), ga);
                }
                if self.requires_grad(*b) {
                    let gb = slot(grads, *b, k * n);
                    kernels::gemm_tn_acc(m, k, n, self.value(*a).data(), g, gb);
                }
            }
            Op::Transpose(a) => {
                if self.requires_grad(*a) {
                    let (r, c) = dims(self.value(*a));
                    let gt = kernels::transpose(c, r, g);
                    add_into(slot(grads, *a, r * c), &gt);
                }
            }
            Op::Linear { x, w, b } => {
                let (n, din) = dims(self.value(*x));
                let dout = node.value.shape()[1];
                if self.requires_grad(*x) {
                    let gx = slot(grads, *x, n * din);
                    kernels::gemm_nt_acc(n, dout, din, g, self.value(*w).data(), gx);
                }
                if self.requires_grad(*w) {
                    let gw = slot(grads, *w, din * dout);
                    kernels::gemm_tn_acc(n, din, dout, self.value(*x).data(), g, gw);
                }
                if self.requires_grad(*b) {
                    column_sums_into(slot(grads, *b, dout), g, dout);
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.requires_grad(*v) {
                        add_into(slot(grads, *v, g.len()), g);
                    }
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(a, b), (b, a)] {
                    if self.requires_grad(*v) {
                        let o = self.value(*other).data();
                        let dst = slot(grads, *v, g.len());
                        for ((d, &gv), &ov) in dst.iter_mut().zip(g).zip(o) {
                            *d += gv * ov;
                        }
                    }
                }
            }
            Op::Scale(a, factor) => {
                if self.requires_grad(*a) {
                    let dst = slot(grads, *a, g.len());
                    for (d, &gv) in dst.iter_mut().zip(g) {
                        *d += gv * *factor;
                    }
                }
            }
            Op::Softmax(a) => {
                if self.requires_grad(*a) {
                    let cols = node.value.shape()[1];
                    let y = node.value.data();
                    let dst = slot(grads, *a, g.len());
                    for ((dr, gr), yr) in dst
                        .chunks_exact_mut(cols)
                        .zip(g.chunks_exact(cols))
                        .zip(y.chunks_exact(cols))
                    {
                        let dot = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum::<T>();
                        for ((d, &gv), &yv) in dr.iter_mut().zip(gr).zip(yr) {
                            *d += yv * (gv - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let d = node.value.shape()[1];
                if self.requires_grad(*gamma) {
                    let dst = slot(grads, *gamma, d);
                    for (gr, hr) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for ((dv, &gv), &hv) in dst.iter_mut().zip(gr).zip(hr) {
                            *dv += gv * hv;
                        }
                    }
                }
                if self.requires_grad(*beta) {
                    column_sums_into(slot(grads, *beta, d), g, d);
                }
                if self.requires_grad(*x) {
                    let gam = self.value(*gamma).data();
                    let inv_d = T::one() / T::lit(d as f64);
                    let dst = slot(grads, *x, g.len());
                    let mut dxhat = vec![T::zero(); d];
                    for (((dr, gr), hr), &is) in dst
                        .chunks_exact_mut(d)
                        .zip(g.chunks_exact(d))
                        .zip(xhat.chunks_exact(d))
                        .zip(inv_std)
                    {
                        for ((dh, &gv), &gm) in dxhat.iter_mut().zip(gr).zip(gam) {
                            *dh = gv * gm;
                        }
                        let mean_dh = dxhat.iter().copied().sum::<T>() * inv_d;
                        let mean_dhx =
                            dxhat.iter().zip(hr).map(|(&a, &b)| a * b).sum::<T>() * inv_d;
                        for ((dv, &dh), &hv) in dr.iter_mut().zip(&dxhat).zip(hr) {
                            *dv += is * (dh - mean_dh - hv * mean_dhx);
                        }
                    }
                }
            }
            Op::Gelu(a) => {
                if self.requires_grad(*a) {
                    let x = self.value(*a).data();
                    let dst = slot(grads, *a, g.len());
                    for ((d, &gv), &xv) in dst.iter_mut().zip(g).zip(x) {
                        *d += gv * kernels::gelu_grad(xv);
                    }
                }
            }
            Op::Conv2d {
                x,
                kernel,
                bias,
                cols,
            } => {
                let (h, w, cin) = match self.value(*x).shape() {
                    &[h, w, c] => (h, w, c),
                    _ => unreachable!("conv input rank checked in forward"),
                };
                let k = self.value(*kernel).shape()[0];
                let cout = node.value.shape()[2];
                let hw = h * w;
                let patch = k * k * cin;
                if self.requires_grad(*kernel) {
                    let gk = slot(grads, *kernel, patch * cout);
                    kernels::gemm_tn_acc(hw, patch, cout, cols, g, gk);
                }
                if self.requires_grad(*bias) {
                    column_sums_into(slot(grads, *bias, cout), g, cout);
                }
                if self.requires_grad(*x) {
                    let mut gcols = vec![T::zero(); hw * patch];
                    kernels::gemm_nt_acc(hw, cout, patch, g, self.value(*kernel).data(), &mut gcols);
                    let gx = kernels::col2im(h, w, cin, k, &gcols);
                    add_into(slot(grads, *x, gx.len()), &gx);
                }
            }
            Op::Reshape(a) => {
                if self.requires_grad(*a) {
                    add_into(slot(grads, *a, g.len()), g);
                }
            }
            Op::SliceCols { x, start } => {
                if self.requires_grad(*x) {
                    let (r, c) = dims(self.value(*x));
                    let width = node.value.shape()[1];
                    let dst = slot(grads, *x, r * c);
                    for (dr, gr) in dst.chunks_exact_mut(c).zip(g.chunks_exact(width)) {
                        add_into(&mut dr[*start..*start + width], gr);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let (r, c) = dims(self.value(p));
                    if self.requires_grad(p) {
                        let dst = slot(grads, p, r * c);
                        for (dr, gr) in dst.chunks_exact_mut(c).zip(g.chunks_exact(total)) {
                            add_into(dr, &gr[offset..offset + c]);
                        }
                    }
                    offset += c;
                }
            }
            Op::L1(a, b) => {
                let va = self.value(*a).data();
                let vb = self.value(*b).data();
                let scale = g[0] / T::lit(va.len() as f64);
                let sign = |x: T, y: T| {
                    if x > y {
                        scale
                    } else if x < y {
                        -scale
                    } else {
                        T::zero()
                    }
                };
                if self.requires_grad(*a) {
                    let dst = slot(grads, *a, va.len());
                    for ((d, &x), &y) in dst.iter_mut().zip(va).zip(vb) {
                        *d += sign(x, y);
                    }
                }
                if self.requires_grad(*b) {
                    let dst = slot(grads, *b, vb.len());
                    for ((d, &x), &y) in dst.iter_mut().zip(va).zip(vb) {
                        *d -= sign(x, y);
                    }
                }
            }
            Op::Sum(a) => {
                if self.requires_grad(*a) {
                    let n = self.value(*a).len();
                    for d in slot(grads, *a, n) {
                        *d += g[0];
                    }
                }
            }
        }
    }
}

fn dims<T: Real>(t: &Tensor<T>) -> (usize, usize) {
    (t.shape()[0], t.shape()[1])
}

fn slot<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut [T] {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn column_sums_into<T: Real>(dst: &mut [T], g: &[T], cols: usize) {
    for row in g.chunks_exact(cols) {
        add_into(dst, row);
    }
}

/// Gradients of every gradient-tracking leaf, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T: Real> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Moves a gradient out; `None` for constants and interior nodes.
    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn square_derivative() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(t(&[1], &[3.0]));
        let y = tape.mul(x, x).unwrap();
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn unused_param_gets_zero_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        let unused = tape.param(t(&[3], &[1.0, 2.0, 3.0]));
        let loss = tape.sum(x);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(unused).unwrap().data(), &[0.0; 3]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn even_conv_kernel_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(&[3, 3, 1]));
        let k = tape.constant(Tensor::zeros(&[2, 2, 1, 1]));
        let b = tape.constant(Tensor::zeros(&[1]));
        assert_eq!(tape.conv2d_same(x, k, b), Err(TensorError::EvenKernel(2)));
    }

    #[test]
    fn concat_then_slice_round_trips() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(t(&[2, 1], &[1.0, 2.0]));
        let b = tape.constant(t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
        let c = tape.concat_cols(&[a, b]).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let s = tape.slice_cols(c, 1, 2).unwrap();
        assert_eq!(tape.value(s), tape.value(b));
    }

    #[test]
    fn l1_subgradient_is_zero_at_ties() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param(t(&[3], &[1.0, 2.0, 3.0]));
        let b = tape.constant(t(&[3], &[1.0, 0.0, 4.0]));
        let loss = tape.l1_loss(a, b).unwrap();
        assert!((tape.value(loss).item() - 1.0).abs() < 1e-15);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[0.0, 1.0 / 3.0, -1.0 / 3.0]);
    }
}
