use super::kernels::{self, ConvDims};
use super::{Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
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
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Concat(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    SegmentSum(Var, Vec<usize>),
    // Source row for every output element; usize::MAX marks an empty segment.
    SegmentMax(Var, Vec<usize>),
    SumRows(Var),
    SumAll(Var),
    Mean(Var),
    SquaredError(Var, Var),
    Reshape(Var),
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        dims: ConvDims,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation so it can be differentiated in reverse.
///
/// Every operation validates operand shapes and returns a [`TensorError`]
/// naming the primitive on mismatch. Nodes are appended in evaluation order,
/// which is also a valid topological order for the backward sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl std::fmt::Debug for ConvDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ConvDims({}x{}, {}->{}, k{})",
            self.height, self.width, self.cin, self.cout, self.ksize
        )
    }
}

fn rank2(op: &'static str, t: &Tensor) -> Result<(usize, usize), TensorError> {
    t.dims2()
        .ok_or_else(|| TensorError::invalid(op, format!("expected a rank-2 tensor, got shape {:?}", t.shape())))
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

    /// A value that does not receive gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that receives gradients in [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn record(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs = self.any_grad(inputs);
        self.push(value, op, needs)
    }

    /// `[n,k] x [k,m] -> [n,m]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (n, k) = rank2("matmul", av)?;
        let (k2, m) = rank2("matmul", bv)?;
        if k != k2 {
            return Err(TensorError::shape("matmul", av.shape(), bv.shape()));
        }
        let data = kernels::matmul(av.data(), bv.data(), n, k, m);
        let out = Tensor::new(vec![n, m], data)?;
        Ok(self.record(out, Op::MatMul(a, b), &[a, b]))
    }

    /// Adds a bias of length `d` to every row of a tensor whose last axis is `d`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, TensorError> {
        let (xv, bv) = (self.value(x), self.value(b));
        let d = *xv.shape().last().unwrap_or(&1);
        if xv.rank() == 0 || bv.numel() != d {
            return Err(TensorError::shape("add_bias", xv.shape(), bv.shape()));
        }
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(d) {
            for (o, bb) in row.iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        Ok(self.record(out, Op::AddBias(x, b), &[x, b]))
    }

    /// Elementwise sum of equally shaped tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(TensorError::shape("add", av.shape(), bv.shape()));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        Ok(self.record(out, Op::Add(a, b), &[a, b]))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(TensorError::shape("mul", av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.record(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let mut out = self.value(x).clone();
        out.scale_assign(factor);
        self.record(out, Op::Scale(x, factor), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let out = Tensor {
            shape: xv.shape().to_vec(),
            data,
        };
        self.record(out, Op::Relu(x), &[x])
    }

    /// Concatenates rank-2 tensors with equal row counts along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::invalid("concat", "no operands"))?;
        let (rows, _) = rank2("concat", self.value(*first))?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let pv = self.value(p);
            let (r, c) = rank2("concat", pv)?;
            if r != rows {
                return Err(TensorError::shape("concat", self.value(*first).shape(), pv.shape()));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        Ok(self.record(out, Op::Concat(parts.to_vec()), parts))
    }

    /// Rows `start..end` of a rank-2 tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let (rows, cols) = rank2("slice_rows", xv)?;
        if start > end || end > rows {
            return Err(TensorError::invalid(
                "slice_rows",
                format!("range {start}..{end} outside {rows} rows"),
            ));
        }
        let out = Tensor::new(vec![end - start, cols], xv.data()[start * cols..end * cols].to_vec())?;
        Ok(self.record(out, Op::SliceRows(x, start), &[x]))
    }

    /// `out[j] = x[idx[j]]` for a rank-2 `x`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let (rows, cols) = rank2("gather_rows", xv)?;
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            if i >= rows {
                return Err(TensorError::invalid(
                    "gather_rows",
                    format!("row index {i} out of range for {rows} rows"),
                ));
            }
            data.extend_from_slice(xv.row(i));
        }
        let out = Tensor::new(vec![idx.len(), cols], data)?;
        Ok(self.record(out, Op::GatherRows(x, idx.to_vec()), &[x]))
    }

    /// `out[s] = sum of x[j] with segments[j] == s`, `n` output rows.
    pub fn segment_sum(&mut self, x: Var, segments: &[usize], n: usize) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let cols = check_segments("segment_sum", xv, segments, n)?;
        let mut data = vec![0.0; n * cols];
        for (j, &s) in segments.iter().enumerate() {
            for (o, v) in data[s * cols..(s + 1) * cols].iter_mut().zip(xv.row(j)) {
                *o += v;
            }
        }
        let out = Tensor::new(vec![n, cols], data)?;
        Ok(self.record(out, Op::SegmentSum(x, segments.to_vec()), &[x]))
    }

    /// Places the rows of `x` at `idx` in an `n`-row zero tensor. Repeated
    /// indices accumulate.
    pub fn scatter_rows(&mut self, x: Var, idx: &[usize], n: usize) -> Result<Var, TensorError> {
        self.segment_sum(x, idx, n)
            .map_err(|e| match e {
                TensorError::Invalid { msg, .. } => TensorError::invalid("scatter_rows", msg),
                TensorError::Shape { lhs, rhs, .. } => TensorError::Shape {
                    op: "scatter_rows",
                    lhs,
                    rhs,
                },
                other => other,
            })
    }

    /// Feature-wise maximum per segment; empty segments yield 0. The backward
    /// pass routes each output's gradient to the first row attaining the max.
    pub fn segment_max(&mut self, x: Var, segments: &[usize], n: usize) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let cols = check_segments("segment_max", xv, segments, n)?;
        let mut data = vec![0.0; n * cols];
        let mut source = vec![usize::MAX; n * cols];
        for (j, &s) in segments.iter().enumerate() {
            for (c, &v) in xv.row(j).iter().enumerate() {
                let o = s * cols + c;
                if source[o] == usize::MAX || v > data[o] {
                    data[o] = v;
                    source[o] = j;
                }
            }
        }
        let out = Tensor::new(vec![n, cols], data)?;
        Ok(self.record(out, Op::SegmentMax(x, source), &[x]))
    }

    /// `[n,d] -> [1,d]`
    pub fn sum_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let (_, cols) = rank2("sum_rows", xv)?;
        let mut data = vec![0.0; cols];
        for row in xv.data().chunks(cols.max(1)) {
            for (o, v) in data.iter_mut().zip(row) {
                *o += v;
            }
        }
        let out = Tensor::new(vec![1, cols], data)?;
        Ok(self.record(out, Op::SumRows(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.record(Tensor::scalar(s), Op::SumAll(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, TensorError> {
        let xv = self.value(x);
        if xv.numel() == 0 {
            return Err(TensorError::invalid("mean", "empty tensor"));
        }
        let m = xv.data().iter().sum::<f64>() / xv.numel() as f64;
        Ok(self.record(Tensor::scalar(m), Op::Mean(x), &[x]))
    }

    /// Mean of `(pred - target)^2` over all elements.
    pub fn squared_error(&mut self, pred: Var, target: Var) -> Result<Var, TensorError> {
        let (pv, tv) = (self.value(pred), self.value(target));
        if pv.shape() != tv.shape() {
            return Err(TensorError::shape("squared_error", pv.shape(), tv.shape()));
        }
        if pv.numel() == 0 {
            return Err(TensorError::invalid("squared_error", "empty tensor"));
        }
        let s: f64 = pv
            .data()
            .iter()
            .zip(tv.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let out = Tensor::scalar(s / pv.numel() as f64);
        Ok(self.record(out, Op::SquaredError(pred, target), &[pred, target]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let out = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.record(out, Op::Reshape(x), &[x]))
    }

    /// Same-padded, stride-1 2-D convolution.
    /// `input [H,W,Cin]`, `kernel [K,K,Cin,Cout]` with odd K, `bias [Cout]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var, TensorError> {
        let (iv, kv, bv) = (self.value(input), self.value(kernel), self.value(bias));
        let (&[h, w, cin], &[k1, k2, kcin, cout]) = (iv.shape(), kv.shape()) else {
            return Err(TensorError::shape("conv2d", iv.shape(), kv.shape()));
        };
        if k1 != k2 || k1 % 2 == 0 || kcin != cin {
            return Err(TensorError::shape("conv2d", iv.shape(), kv.shape()));
        }
        if bv.numel() != cout {
            return Err(TensorError::shape("conv2d", kv.shape(), bv.shape()));
        }
        let dims = ConvDims {
            height: h,
            width: w,
            cin,
            cout,
            ksize: k1,
        };
        let data = kernels::conv2d(iv.data(), kv.data(), bv.data(), &dims);
        let out = Tensor::new(vec![h, w, cout], data)?;
        Ok(self.record(
            out,
            Op::Conv2d {
                input,
                kernel,
                bias,
                dims,
            },
            &[input, kernel, bias],
        ))
    }

    /// Reverse sweep from a scalar `loss`. Gradients accumulate additively
    /// when a value is used more than once.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(Tensor::full(lv.shape().to_vec(), 1.0));
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(node, g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, node: &Node, g: Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (n, k) = av.dims2().expect("matmul operand");
                let m = bv.shape()[1];
                if self.wants(*a) {
                    let ga = kernels::matmul_bt(g.data(), bv.data(), n, k, m);
                    self.accumulate(grads, *a, Tensor::new(vec![n, k], ga).expect("shape"));
                }
                if self.wants(*b) {
                    let gb = kernels::matmul_at(av.data(), g.data(), n, k, m);
                    self.accumulate(grads, *b, Tensor::new(vec![k, m], gb).expect("shape"));
                }
            }
            Op::AddBias(x, b) => {
                if self.wants(*b) {
                    let bv = self.value(*b);
                    let d = bv.numel();
                    let mut gb = vec![0.0; d];
                    for row in g.data().chunks(d) {
                        for (o, v) in gb.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), gb).expect("shape"));
                }
                self.accumulate(grads, *x, g);
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, g.clone());
                }
                self.accumulate(grads, *b, g);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let d = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *a, Tensor::new(g.shape().to_vec(), d).expect("shape"));
                }
                if self.wants(*b) {
                    let d = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, Tensor::new(g.shape().to_vec(), d).expect("shape"));
                }
            }
            Op::Scale(x, f) => {
                let mut g = g;
                g.scale_assign(*f);
                self.accumulate(grads, *x, g);
            }
            Op::Relu(x) => {
                let mut g = g;
                for (gv, &out) in g.data_mut().iter_mut().zip(node.value.data()) {
                    if out <= 0.0 {
                        *gv = 0.0;
                    }
                }
                self.accumulate(grads, *x, g);
            }
            Op::Concat(parts) => {
                let rows = g.shape()[0];
                let total = g.shape()[1];
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).shape()[1];
                    if self.wants(*p) {
                        let mut d = Vec::with_capacity(rows * w);
                        for i in 0..rows {
                            d.extend_from_slice(&g.data()[i * total + offset..i * total + offset + w]);
                        }
                        self.accumulate(grads, *p, Tensor::new(vec![rows, w], d).expect("shape"));
                    }
                    offset += w;
                }
            }
            Op::SliceRows(x, start) => {
                let xv = self.value(*x);
                let cols = xv.shape()[1];
                let mut full = Tensor::zeros(xv.shape().to_vec());
                full.data_mut()[start * cols..start * cols + g.numel()].copy_from_slice(g.data());
                self.accumulate(grads, *x, full);
            }
            Op::GatherRows(x, idx) => {
                let xv = self.value(*x);
                let cols = xv.shape()[1];
                let mut full = Tensor::zeros(xv.shape().to_vec());
                let fd = full.data_mut();
                for (j, &i) in idx.iter().enumerate() {
                    for (o, v) in fd[i * cols..(i + 1) * cols].iter_mut().zip(g.row(j)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *x, full);
            }
            Op::SegmentSum(x, segments) => {
                let cols = g.shape()[1];
                let mut d = Vec::with_capacity(segments.len() * cols);
                for &s in segments {
                    d.extend_from_slice(g.row(s));
                }
                self.accumulate(grads, *x, Tensor::new(vec![segments.len(), cols], d).expect("shape"));
            }
            Op::SegmentMax(x, source) => {
                let xv = self.value(*x);
                let cols = xv.shape()[1];
                let mut full = Tensor::zeros(xv.shape().to_vec());
                let fd = full.data_mut();
                for (o, (&src, gv)) in source.iter().zip(g.data()).enumerate() {
                    if src != usize::MAX {
                        fd[src * cols + o % cols] += gv;
                    }
                }
                self.accumulate(grads, *x, full);
            }
            Op::SumRows(x) => {
                let xv = self.value(*x);
                let rows = xv.shape()[0];
                let mut d = Vec::with_capacity(xv.numel());
                for _ in 0..rows {
                    d.extend_from_slice(g.data());
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), d).expect("shape"));
            }
            Op::SumAll(x) => {
                let xv = self.value(*x);
                self.accumulate(grads, *x, Tensor::full(xv.shape().to_vec(), g.data()[0]));
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let v = g.data()[0] / xv.numel() as f64;
                self.accumulate(grads, *x, Tensor::full(xv.shape().to_vec(), v));
            }
            Op::SquaredError(p, t) => {
                let (pv, tv) = (self.value(*p), self.value(*t));
                let f = 2.0 * g.data()[0] / pv.numel() as f64;
                let d: Vec<f64> = pv.data().iter().zip(tv.data()).map(|(a, b)| f * (a - b)).collect();
                if self.wants(*t) {
                    let neg = d.iter().map(|v| -v).collect();
                    self.accumulate(grads, *t, Tensor::new(tv.shape().to_vec(), neg).expect("shape"));
                }
                self.accumulate(grads, *p, Tensor::new(pv.shape().to_vec(), d).expect("shape"));
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, g.reshape(shape).expect("reshape back"));
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
                dims,
            } => {
                let (iv, kv, bv) = (self.value(*input), self.value(*kernel), self.value(*bias));
                let (gi, gk, gb) = kernels::conv2d_backward(iv.data(), kv.data(), g.data(), dims);
                if self.wants(*input) {
                    self.accumulate(grads, *input, Tensor::new(iv.shape().to_vec(), gi).expect("shape"));
                }
                if self.wants(*kernel) {
                    self.accumulate(grads, *kernel, Tensor::new(kv.shape().to_vec(), gk).expect("shape"));
                }
                if self.wants(*bias) {
                    self.accumulate(grads, *bias, Tensor::new(bv.shape().to_vec(), gb).expect("shape"));
                }
            }
        }
    }
}

fn check_segments(op: &'static str, x: &Tensor, segments: &[usize], n: usize) -> Result<usize, TensorError> {
    let (rows, cols) = rank2(op, x)?;
    if rows != segments.len() {
        return Err(TensorError::shape(op, x.shape(), &[segments.len()]));
    }
    if let Some(&bad) = segments.iter().find(|&&s| s >= n) {
        return Err(TensorError::invalid(op, format!("segment id {bad} out of range for {n} segments")));
    }
    Ok(cols)
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a `requires_grad` leaf, `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_t(v: &[f64]) -> Tensor {
        Tensor::vector(v)
    }

    #[test]
    fn relu_forward() {
        let mut t = Tape::new();
        let x = t.constant(vec_t(&[-1.0, 0.0, 2.0]));
        let y = t.relu(x);
        assert_eq!(t.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn segment_sum_forward() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap());
        let y = t.segment_sum(x, &[0, 0, 1], 2).unwrap();
        assert_eq!(t.value(y).data(), &[3.0, 3.0]);
    }

    #[test]
    fn sum_backward_is_ones() {
        let mut t = Tape::new();
        let x = t.param(vec_t(&[1.0, -2.0, 3.0]));
        let s = t.sum(x);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn relu_subgradient_at_and_below_zero() {
        let mut t = Tape::new();
        let x = t.param(vec_t(&[-1.0, 2.0, 0.0]));
        let r = t.relu(x);
        let s = t.sum(r);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn diamond_reuse_accumulates() {
        // loss = sum(x*x + 3x) -> d/dx = 2x + 3
        let mut t = Tape::new();
        let x = t.param(vec_t(&[1.0, -2.0]));
        let sq = t.mul(x, x).unwrap();
        let lin = t.scale(x, 3.0);
        let both = t.add(sq, lin).unwrap();
        let s = t.sum(both);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[5.0, -1.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let x = t.param(vec_t(&[1.0, 2.0]));
        assert_eq!(t.backward(x).unwrap_err(), TensorError::NonScalarLoss(vec![2]));
    }

    #[test]
    fn matmul_shape_error_names_primitive_and_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(vec![3, 4]));
        let b = t.constant(Tensor::zeros(vec![3, 2]));
        let err = t.matmul(a, b).unwrap_err();
        assert_eq!(err, TensorError::shape("matmul", &[3, 4], &[3, 2]));
        assert!(err.to_string().contains("matmul"));
    }

    #[test]
    fn segment_max_empty_segment_is_zero_and_ties_route_to_first() {
        let mut t = Tape::new();
        let x = t.param(Tensor::new(vec![3, 1], vec![2.0, 2.0, -1.0]).unwrap());
        let y = t.segment_max(x, &[0, 0, 2], 3).unwrap();
        assert_eq!(t.value(y).data(), &[2.0, 0.0, -1.0]);
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn gather_out_of_range_is_error() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(vec![2, 2]));
        assert!(matches!(
            t.gather_rows(x, &[0, 2]),
            Err(TensorError::Invalid { op: "gather_rows", .. })
        ));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(vec_t(&[1.0]));
        let p = t.param(vec_t(&[2.0]));
        let y = t.mul(c, p).unwrap();
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(p).unwrap().data(), &[1.0]);
    }

    #[test]
    fn concat_and_slice() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap());
        let b = t.constant(Tensor::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap());
        let c = t.concat(&[a, b]).unwrap();
        assert_eq!(t.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let s = t.slice_rows(c, 1, 2).unwrap();
        assert_eq!(t.value(s).data(), &[2.0, 5.0, 6.0]);
    }
}
