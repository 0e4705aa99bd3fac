use rand::Rng;

use super::kernels::{mm_nn, mm_nt, mm_tn};
use super::{gelu, gelu_grad, sigmoid, weighted_bce, Tensor, PROB_CLAMP};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    BatchMatMul {
        a: NodeId,
        b: NodeId,
        groups: usize,
        transpose_b: bool,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulScalar(NodeId, f64),
    DivScalar(NodeId, f64),
    Gelu(NodeId),
    Sigmoid(NodeId),
    SoftmaxRows(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Dropout(NodeId, Vec<f64>),
    Transpose(NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceCols {
        a: NodeId,
        start: usize,
    },
    GatherRows(NodeId, Vec<usize>),
    ScaleRows(NodeId, Vec<f64>),
    MeanRows(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    WeightedBce {
        probs: NodeId,
        labels: Vec<f64>,
        w0: f64,
        w1: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// Ordered record of executed operations.
///
/// Nodes are appended as operations execute, so every op's inputs precede
/// it and reverse insertion order is a valid backward schedule. Gradients
/// accumulate on leaves across repeated [`Graph::backward`] calls until
/// [`Graph::zero_grad`].
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn dims2(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op: Op::Leaf,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Accumulated gradient of a leaf, shaped like its value.
    pub fn grad(&self, id: NodeId) -> Option<Tensor> {
        let node = &self.nodes[id.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                op: op_name,
                context: "forward".into(),
            });
        }
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = dims2(self.value(a));
        let (k2, n) = dims2(self.value(b));
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("{:?} · {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let mut out = vec![0.0; m * n];
        mm_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push("matmul", Tensor::matrix(m, n, out)?, Op::MatMul(a, b), &[a, b])
    }

    /// Group-wise matmul: rows of `a` and `b` are split into `groups`
    /// contiguous blocks and block i of the output is `a_i · b_i` (or
    /// `a_i · b_iᵀ` with `transpose_b`).
    pub fn batch_matmul(&mut self, a: NodeId, b: NodeId, groups: usize, transpose_b: bool) -> Result<NodeId> {
        let (ar, k) = dims2(self.value(a));
        let (br, bc) = dims2(self.value(b));
        if groups == 0 || ar % groups != 0 || br % groups != 0 {
            return Err(Error::shape(
                "batch_matmul",
                format!("rows {ar} and {br} not divisible into {groups} groups"),
            ));
        }
        let m = ar / groups;
        let (kb, n) = if transpose_b { (bc, br / groups) } else { (br / groups, bc) };
        if kb != k {
            return Err(Error::shape(
                "batch_matmul",
                format!(
                    "{:?} · {:?} (groups {groups}, transpose_b {transpose_b})",
                    self.value(a).shape(),
                    self.value(b).shape()
                ),
            ));
        }
        let mut out = vec![0.0; groups * m * n];
        {
            let (ad, bd) = (self.value(a).data(), self.value(b).data());
            for g in 0..groups {
                let ag = &ad[g * m * k..(g + 1) * m * k];
                let bg = &bd[g * k * n..(g + 1) * k * n];
                let og = &mut out[g * m * n..(g + 1) * m * n];
                if transpose_b {
                    mm_nt(ag, bg, og, m, k, n);
                } else {
                    mm_nn(ag, bg, og, m, k, n);
                }
            }
        }
        self.push(
            "batch_matmul",
            Tensor::matrix(groups * m, n, out)?,
            Op::BatchMatMul {
                a,
                b,
                groups,
                transpose_b,
            },
            &[a, b],
        )
    }

    fn zip_with(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape().to_vec(), data).expect("same shape")
    }

    fn map(&self, a: NodeId, f: impl Fn(f64) -> f64) -> Tensor {
        let va = self.value(a);
        Tensor::new(va.shape().to_vec(), va.data().iter().map(|&x| f(x)).collect()).expect("same shape")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let v = self.zip_with(a, b, |x, y| x + y);
        self.push("add", v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_with(a, b, |x, y| x - y);
        self.push("sub", v, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_with(a, b, |x, y| x * y);
        self.push("mul", v, Op::Mul(a, b), &[a, b])
    }

    /// `a[m×n] + bias[1×n]` applied to every row.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = dims2(self.value(a));
        let (br, bc) = dims2(self.value(bias));
        if br != 1 || bc != n {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + row {:?}", self.value(a).shape(), self.value(bias).shape()),
            ));
        }
        let mut out = self.value(a).data().to_vec();
        let b = self.value(bias).data();
        for row in out.chunks_mut(n) {
            for (o, &x) in row.iter_mut().zip(b) {
                *o += x;
            }
        }
        self.push("add_row", Tensor::matrix(m, n, out)?, Op::AddRow(a, bias), &[a, bias])
    }

    pub fn mul_scalar(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        let v = self.map(a, |x| x * s);
        self.push("mul_scalar", v, Op::MulScalar(a, s), &[a])
    }

    pub fn div_scalar(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        let v = self.map(a, |x| x / s);
        self.push("div_scalar", v, Op::DivScalar(a, s), &[a])
    }

    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.map(a, gelu);
        self.push("gelu", v, Op::Gelu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.map(a, sigmoid);
        self.push("sigmoid", v, Op::Sigmoid(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        let (m, n) = dims2(va);
        let mut out = va.data().to_vec();
        for row in out.chunks_mut(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        self.push("softmax_rows", Tensor::matrix(m, n, out)?, Op::SoftmaxRows(a), &[a])
    }

    /// Per-row layer normalization with population variance.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> Result<NodeId> {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("layer_norm eps must be positive, got {eps}")));
        }
        let (m, n) = dims2(self.value(x));
        for (name, p) in [("gain", gain), ("bias", bias)] {
            let (r, c) = dims2(self.value(p));
            if r != 1 || c != n {
                return Err(Error::shape(
                    "layer_norm",
                    format!("{name} {:?} for input {:?}", self.value(p).shape(), self.value(x).shape()),
                ));
            }
        }
        let xv = self.value(x).data();
        let (gv, bv) = (self.value(gain).data(), self.value(bias).data());
        let mut normalized = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[i] = inv;
            for j in 0..n {
                let xh = (row[j] - mean) * inv;
                normalized[i * n + j] = xh;
                out[i * n + j] = xh * gv[j] + bv[j];
            }
        }
        self.push(
            "layer_norm",
            Tensor::matrix(m, n, out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
            &[x, gain, bias],
        )
    }

    /// Inverted dropout. Identity when `training` is false or `rate` is 0.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: NodeId, rate: f64, training: bool, rng: &mut R) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {rate}")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(a).numel())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let va = self.value(a);
        let data = va.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let v = Tensor::new(va.shape().to_vec(), data)?;
        self.push("dropout", v, Op::Dropout(a, mask), &[a])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        let (m, n) = dims2(va);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = va.data()[i * n + j];
            }
        }
        self.push("transpose", Tensor::matrix(n, m, out)?, Op::Transpose(a), &[a])
    }

    /// Concatenate along the last (column) dimension.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_cols", "no inputs"));
        };
        let m = self.value(first).rows();
        if parts.iter().any(|&p| self.value(p).rows() != m) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        self.push("concat_cols", Tensor::matrix(m, total, out)?, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_rows", "no inputs"));
        };
        let n = self.value(first).cols();
        if parts.iter().any(|&p| self.value(p).cols() != n) {
            return Err(Error::shape("concat_rows", "column counts differ"));
        }
        let mut out = Vec::new();
        let mut m = 0;
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
            m += self.value(p).rows();
        }
        self.push("concat_rows", Tensor::matrix(m, n, out)?, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (m, n) = dims2(self.value(a));
        if start + len > n || len == 0 {
            return Err(Error::shape("slice_cols", format!("[{start}, {}) of {n} columns", start + len)));
        }
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&self.value(a).row(i)[start..start + len]);
        }
        self.push("slice_cols", Tensor::matrix(m, len, out)?, Op::SliceCols { a, start }, &[a])
    }

    /// Row lookup; indices may repeat (their gradients sum).
    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        let (m, n) = dims2(self.value(a));
        if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
            return Err(Error::shape("gather_rows", format!("index {bad} out of {m} rows")));
        }
        let mut out = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            out.extend_from_slice(self.value(a).row(i));
        }
        self.push(
            "gather_rows",
            Tensor::matrix(indices.len(), n, out)?,
            Op::GatherRows(a, indices.to_vec()),
            &[a],
        )
    }

    /// Multiplies row i by the constant `scales[i]`.
    pub fn scale_rows(&mut self, a: NodeId, scales: &[f64]) -> Result<NodeId> {
        let (m, n) = dims2(self.value(a));
        if scales.len() != m {
            return Err(Error::shape("scale_rows", format!("{} scales for {m} rows", scales.len())));
        }
        let mut out = self.value(a).data().to_vec();
        for (row, &s) in out.chunks_mut(n).zip(scales) {
            for v in row {
                *v *= s;
            }
        }
        self.push("scale_rows", Tensor::matrix(m, n, out)?, Op::ScaleRows(a, scales.to_vec()), &[a])
    }

    /// Column means, `[m×n] -> [1×n]`.
    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let (m, n) = dims2(self.value(a));
        let mut out = vec![0.0; n];
        for row in self.value(a).data().chunks(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= m as f64;
        }
        self.push("mean_rows", Tensor::matrix(1, n, out)?, Op::MeanRows(a), &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        let s = va.data().iter().sum::<f64>() / va.numel() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Class-weighted BCE over a vector of probabilities. See
    /// [`weighted_bce`](super::weighted_bce).
    pub fn weighted_bce(&mut self, probs: NodeId, labels: &[f64], w0: f64, w1: f64) -> Result<NodeId> {
        let vp = self.value(probs);
        if vp.numel() != labels.len() || labels.is_empty() {
            return Err(Error::shape(
                "weighted_bce",
                format!("{} probabilities vs {} labels", vp.numel(), labels.len()),
            ));
        }
        let loss = weighted_bce(vp.data(), labels, w0, w1);
        self.push(
            "weighted_bce",
            Tensor::scalar(loss),
            Op::WeightedBce {
                probs,
                labels: labels.to_vec(),
                w0,
                w1,
            },
            &[probs],
        )
    }

    /// Reverse pass from a scalar node; adds into the grads of every
    /// trainable leaf it reaches.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(gout) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                let acc = self.nodes[idx].grad.get_or_insert_with(|| vec![0.0; gout.len()]);
                for (a, g) in acc.iter_mut().zip(&gout) {
                    *a += g;
                }
                continue;
            }
            self.backprop_node(idx, &gout, &mut grads);
        }
        Ok(())
    }

    fn backprop_node(&self, idx: usize, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let nodes = &self.nodes;
        let mut acc = |id: NodeId, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[id.0].requires_grad {
                return;
            }
            let len = nodes[id.0].value.numel();
            let g = grads[id.0].get_or_insert_with(|| vec![0.0; len]);
            f(g);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k) = dims2(va);
                let n = vb.cols();
                acc(*a, &mut |g| mm_nt(gout, vb.data(), g, m, n, k));
                acc(*b, &mut |g| mm_tn(va.data(), gout, g, m, k, n));
            }
            Op::BatchMatMul {
                a,
                b,
                groups,
                transpose_b,
            } => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                let groups = *groups;
                let (m, k) = (va.rows() / groups, va.cols());
                let n = node.value.cols();
                let bsz = k * n;
                acc(*a, &mut |g| {
                    for gi in 0..groups {
                        let go = &gout[gi * m * n..(gi + 1) * m * n];
                        let bg = &vb.data()[gi * bsz..(gi + 1) * bsz];
                        let ga = &mut g[gi * m * k..(gi + 1) * m * k];
                        if *transpose_b {
                            // b_g is n×k
                            mm_nn(go, bg, ga, m, n, k);
                        } else {
                            mm_nt(go, bg, ga, m, n, k);
                        }
                    }
                });
                acc(*b, &mut |g| {
                    for gi in 0..groups {
                        let go = &gout[gi * m * n..(gi + 1) * m * n];
                        let ag = &va.data()[gi * m * k..(gi + 1) * m * k];
                        let gb = &mut g[gi * bsz..(gi + 1) * bsz];
                        if *transpose_b {
                            mm_tn(go, ag, gb, m, n, k);
                        } else {
                            mm_tn(ag, go, gb, m, k, n);
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |g| add_into(g, gout));
                acc(*b, &mut |g| add_into(g, gout));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |g| add_into(g, gout));
                acc(*b, &mut |g| {
                    for (x, y) in g.iter_mut().zip(gout) {
                        *x -= y;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                acc(*a, &mut |g| {
                    for i in 0..g.len() {
                        g[i] += gout[i] * vb[i];
                    }
                });
                acc(*b, &mut |g| {
                    for i in 0..g.len() {
                        g[i] += gout[i] * va[i];
                    }
                });
            }
            Op::AddRow(a, bias) => {
                let n = nodes[bias.0].value.numel();
                acc(*a, &mut |g| add_into(g, gout));
                acc(*bias, &mut |g| {
                    for row in gout.chunks(n) {
                        add_into(g, row);
                    }
                });
            }
            Op::MulScalar(a, s) => acc(*a, &mut |g| {
                for (x, y) in g.iter_mut().zip(gout) {
                    *x += y * s;
                }
            }),
            Op::DivScalar(a, s) => acc(*a, &mut |g| {
                for (x, y) in g.iter_mut().zip(gout) {
                    *x += y / s;
                }
            }),
            Op::Gelu(a) => {
                let va = nodes[a.0].value.data();
                acc(*a, &mut |g| {
                    for i in 0..g.len() {
                        g[i] += gout[i] * gelu_grad(va[i]);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let out = node.value.data();
                acc(*a, &mut |g| {
                    for i in 0..g.len() {
                        g[i] += gout[i] * out[i] * (1.0 - out[i]);
                    }
                });
            }
            Op::SoftmaxRows(a) => {
                let out = node.value.data();
                let n = node.value.cols();
                acc(*a, &mut |g| {
                    for ((gr, yr), dr) in g.chunks_mut(n).zip(out.chunks(n)).zip(gout.chunks(n)) {
                        let dot: f64 = yr.iter().zip(dr).map(|(y, d)| y * d).sum();
                        for j in 0..n {
                            gr[j] += yr[j] * (dr[j] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let n = node.value.cols();
                let gv = nodes[gain.0].value.data();
                acc(*x, &mut |g| {
                    for (i, ((gr, dr), xr)) in g
                        .chunks_mut(n)
                        .zip(gout.chunks(n))
                        .zip(normalized.chunks(n))
                        .enumerate()
                    {
                        let mut sum_d = 0.0;
                        let mut sum_dx = 0.0;
                        for j in 0..n {
                            let dxh = dr[j] * gv[j];
                            sum_d += dxh;
                            sum_dx += dxh * xr[j];
                        }
                        let scale = inv_std[i] / n as f64;
                        for j in 0..n {
                            let dxh = dr[j] * gv[j];
                            gr[j] += scale * (n as f64 * dxh - sum_d - xr[j] * sum_dx);
                        }
                    }
                });
                acc(*gain, &mut |g| {
                    for (dr, xr) in gout.chunks(n).zip(normalized.chunks(n)) {
                        for j in 0..n {
                            g[j] += dr[j] * xr[j];
                        }
                    }
                });
                acc(*bias, &mut |g| {
                    for dr in gout.chunks(n) {
                        add_into(g, dr);
                    }
                });
            }
            Op::Dropout(a, mask) => acc(*a, &mut |g| {
                for i in 0..g.len() {
                    g[i] += gout[i] * mask[i];
                }
            }),
            Op::Transpose(a) => {
                let (m, n) = dims2(&nodes[a.0].value);
                acc(*a, &mut |g| {
                    for i in 0..m {
                        for j in 0..n {
                            g[i * n + j] += gout[j * m + i];
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for p in parts {
                    let w = nodes[p.0].value.cols();
                    acc(*p, &mut |g| {
                        for (gr, dr) in g.chunks_mut(w).zip(gout.chunks(total)) {
                            add_into(gr, &dr[offset..offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = nodes[p.0].value.numel();
                    acc(*p, &mut |g| add_into(g, &gout[offset..offset + len]));
                    offset += len;
                }
            }
            Op::SliceCols { a, start } => {
                let n = nodes[a.0].value.cols();
                let w = node.value.cols();
                acc(*a, &mut |g| {
                    for (gr, dr) in g.chunks_mut(n).zip(gout.chunks(w)) {
                        add_into(&mut gr[*start..*start + w], dr);
                    }
                });
            }
            Op::GatherRows(a, indices) => {
                let n = node.value.cols();
                acc(*a, &mut |g| {
                    for (&i, dr) in indices.iter().zip(gout.chunks(n)) {
                        add_into(&mut g[i * n..(i + 1) * n], dr);
                    }
                });
            }
            Op::ScaleRows(a, scales) => {
                let n = node.value.cols();
                acc(*a, &mut |g| {
                    for ((gr, dr), s) in g.chunks_mut(n).zip(gout.chunks(n)).zip(scales) {
                        for (x, d) in gr.iter_mut().zip(dr) {
                            *x += d * s;
                        }
                    }
                });
            }
            Op::MeanRows(a) => {
                let (m, n) = dims2(&nodes[a.0].value);
                acc(*a, &mut |g| {
                    for gr in g.chunks_mut(n) {
                        for j in 0..n {
                            gr[j] += gout[j] / m as f64;
                        }
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |g| {
                for x in g.iter_mut() {
                    *x += gout[0];
                }
            }),
            Op::Mean(a) => {
                let len = nodes[a.0].value.numel() as f64;
                acc(*a, &mut |g| {
                    for x in g.iter_mut() {
                        *x += gout[0] / len;
                    }
                });
            }
            Op::WeightedBce { probs, labels, w0, w1 } => {
                let pv = nodes[probs.0].value.data();
                let n = labels.len() as f64;
                acc(*probs, &mut |g| {
                    for i in 0..g.len() {
                        let p = pv[i];
                        if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
                            continue;
                        }
                        let y = labels[i];
                        let d = -(w1 * y / p - w0 * (1.0 - y) / (1.0 - p)) / n;
                        g[i] += gout[0] * d;
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
