//! Reverse-mode tape over dense tensors.
//!
//! Every operation appends a node holding its computed value, so nodes are
//! stored in topological order and the backward sweep is a single reverse
//! pass. Gradients reaching a node from several consumers are summed.

use std::sync::Arc;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{GeniError, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeRef(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    Add(NodeRef, NodeRef),
    Sub(NodeRef, NodeRef),
    Mul(NodeRef, NodeRef),
    /// scalar × tensor
    Scale(NodeRef, NodeRef),
    /// tensor + scalar
    AddScalar(NodeRef, NodeRef),
    ConstScale(NodeRef, f64),
    MatMul(NodeRef, NodeRef),
    AddRowBias(NodeRef, NodeRef),
    Relu(NodeRef),
    LeakyRelu(NodeRef, f64),
    Exp(NodeRef),
    Log(NodeRef),
    Sum(NodeRef),
    Mean(NodeRef),
    Dot(NodeRef, NodeRef),
    Concat(Vec<NodeRef>),
    Gather(NodeRef, Arc<[usize]>),
    SegmentSum(NodeRef, Arc<[usize]>),
    SegmentSoftmax(NodeRef, Arc<[usize]>),
    Element(NodeRef, usize),
    Slice(NodeRef, usize, usize),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check_offsets(offsets: &[usize], len: usize) {
    assert!(
        !offsets.is_empty() && offsets[0] == 0 && *offsets.last().unwrap() == len,
        "segment offsets must start at 0 and end at the input length"
    );
    assert!(offsets.windows(2).all(|w| w[0] <= w[1]), "offsets must be sorted");
}

fn softmax_segment(x: &[f64], out: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
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

    pub fn value(&self, node: NodeRef) -> &Tensor {
        &self.nodes[node.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeRef {
        self.nodes.push(Node { op, value });
        NodeRef(self.nodes.len() - 1)
    }

    fn map(&mut self, x: NodeRef, op: Op, f: impl Fn(f64) -> f64) -> NodeRef {
        let v = self.value(x);
        let out = Tensor::new(v.rows(), v.cols(), v.data().iter().map(|&a| f(a)).collect());
        self.push(op, out)
    }

    fn zip(&mut self, a: NodeRef, b: NodeRef, op: Op, f: impl Fn(f64, f64) -> f64) -> NodeRef {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "elementwise operands differ in shape");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.rows(), va.cols(), data);
        self.push(op, out)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeRef {
        self.push(Op::Constant, value)
    }

    /// Records the current value of a parameter as a differentiable leaf.
    pub fn param(&mut self, params: &ParamStore, id: ParamId) -> NodeRef {
        self.push(Op::Param(id), params.get(id).clone())
    }

    pub fn add(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// `s * x` for a scalar node `s`.
    pub fn scale(&mut self, s: NodeRef, x: NodeRef) -> NodeRef {
        assert!(self.value(s).is_scalar(), "scale factor must be a scalar");
        let k = self.value(s).item();
        self.map(x, Op::Scale(s, x), |v| k * v)
    }

    /// `x + s` for a scalar node `s`, broadcast over every element.
    pub fn add_scalar(&mut self, x: NodeRef, s: NodeRef) -> NodeRef {
        assert!(self.value(s).is_scalar(), "offset must be a scalar");
        let k = self.value(s).item();
        self.map(x, Op::AddScalar(x, s), |v| v + k)
    }

    pub fn const_scale(&mut self, x: NodeRef, c: f64) -> NodeRef {
        self.map(x, Op::ConstScale(x, c), |v| v * c)
    }

    pub fn matmul(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.cols(), vb.rows(), "matmul inner dimensions differ");
        let (n, k, m) = (va.rows(), va.cols(), vb.cols());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                let mut acc = 0.0;
                for t in 0..k {
                    acc += va.at(i, t) * vb.at(t, j);
                }
                out[i * m + j] = acc;
            }
        }
        let out = Tensor::new(n, m, out);
        self.push(Op::MatMul(a, b), out)
    }

    /// Matrix-vector product; `v` must be a column vector.
    pub fn matvec(&mut self, m: NodeRef, v: NodeRef) -> NodeRef {
        assert!(self.value(v).is_vector(), "matvec operand must be a vector");
        self.matmul(m, v)
    }

    /// Adds the vector `bias` (length = `m.cols()`) to every row of `m`.
    pub fn add_row_bias(&mut self, m: NodeRef, bias: NodeRef) -> NodeRef {
        let (vm, vb) = (self.value(m), self.value(bias));
        assert_eq!(vb.len(), vm.cols(), "bias length must equal column count");
        let cols = vm.cols();
        let data = vm
            .data()
            .iter()
            .enumerate()
            .map(|(k, &x)| x + vb.data()[k % cols])
            .collect();
        let out = Tensor::new(vm.rows(), cols, data);
        self.push(Op::AddRowBias(m, bias), out)
    }

    pub fn relu(&mut self, x: NodeRef) -> NodeRef {
        self.map(x, Op::Relu(x), |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn leaky_relu(&mut self, x: NodeRef, slope: f64) -> NodeRef {
        self.map(x, Op::LeakyRelu(x, slope), |v| if v > 0.0 { v } else { slope * v })
    }

    pub fn exp(&mut self, x: NodeRef) -> NodeRef {
        self.map(x, Op::Exp(x), f64::exp)
    }

    pub fn log(&mut self, x: NodeRef) -> NodeRef {
        self.map(x, Op::Log(x), f64::ln)
    }

    pub fn sum(&mut self, x: NodeRef) -> NodeRef {
        let s = self.value(x).data().iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    pub fn mean(&mut self, x: NodeRef) -> NodeRef {
        let v = self.value(x);
        assert!(!v.is_empty(), "mean of an empty tensor");
        let s: f64 = v.data().iter().sum();
        let m = s / v.len() as f64;
        self.push(Op::Mean(x), Tensor::scalar(m))
    }

    pub fn dot(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.len(), vb.len(), "dot operands differ in length");
        let s = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).sum();
        self.push(Op::Dot(a, b), Tensor::scalar(s))
    }

    /// Concatenates vectors (or scalars) into one vector.
    pub fn concat(&mut self, parts: &[NodeRef]) -> NodeRef {
        let mut data = Vec::new();
        for &p in parts {
            assert!(self.value(p).is_vector(), "concat operands must be vectors");
            data.extend_from_slice(self.value(p).data());
        }
        self.push(Op::Concat(parts.to_vec()), Tensor::vector(data))
    }

    /// `out[k] = x[indices[k]]`.
    pub fn gather(&mut self, x: NodeRef, indices: Arc<[usize]>) -> NodeRef {
        let v = self.value(x);
        assert!(v.is_vector(), "gather source must be a vector");
        let data = indices.iter().map(|&i| v.data()[i]).collect();
        self.push(Op::Gather(x, indices), Tensor::vector(data))
    }

    /// Sums consecutive runs `x[offsets[s]..offsets[s+1]]`.
    pub fn segment_sum(&mut self, x: NodeRef, offsets: Arc<[usize]>) -> NodeRef {
        let v = self.value(x);
        check_offsets(&offsets, v.len());
        let data = offsets
            .windows(2)
            .map(|w| v.data()[w[0]..w[1]].iter().sum())
            .collect();
        self.push(Op::SegmentSum(x, offsets), Tensor::vector(data))
    }

    /// Softmax applied independently to each run `x[offsets[s]..offsets[s+1]]`.
    pub fn segment_softmax(&mut self, x: NodeRef, offsets: Arc<[usize]>) -> NodeRef {
        let v = self.value(x);
        check_offsets(&offsets, v.len());
        let mut data = vec![0.0; v.len()];
        for w in offsets.windows(2) {
            softmax_segment(&v.data()[w[0]..w[1]], &mut data[w[0]..w[1]]);
        }
        self.push(Op::SegmentSoftmax(x, offsets), Tensor::vector(data))
    }

    pub fn softmax(&mut self, x: NodeRef) -> NodeRef {
        let n = self.value(x).len();
        self.segment_softmax(x, Arc::from(vec![0, n]))
    }

    pub fn element(&mut self, x: NodeRef, index: usize) -> NodeRef {
        let v = self.value(x).data()[index];
        self.push(Op::Element(x, index), Tensor::scalar(v))
    }

    pub fn slice(&mut self, x: NodeRef, start: usize, len: usize) -> NodeRef {
        let data = self.value(x).data()[start..start + len].to_vec();
        self.push(Op::Slice(x, start, len), Tensor::vector(data))
    }

    /// Exact gradients of the scalar `loss` with respect to every parameter
    /// recorded through [`Tape::param`].
    pub fn backward(&self, loss: NodeRef, params: &ParamStore) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(GeniError::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::zeros_like(params);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut send = |target: NodeRef, contribution: Tensor| match &mut grads[target.0] {
                Some(acc) => acc.add_assign(&contribution),
                slot @ None => *slot = Some(contribution),
            };
            let like = |n: NodeRef, data: Vec<f64>| {
                let v = self.value(n);
                Tensor::new(v.rows(), v.cols(), data)
            };
            let gd = g.data();
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    if id.0 >= params.len() || params.get(*id).shape() != g.shape() {
                        return Err(GeniError::Shape(format!(
                            "tape parameter {} does not match the supplied store",
                            id.0
                        )));
                    }
                    out.accumulate(*id, &g);
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*a, g.clone());
                    send(*b, like(*b, gd.iter().map(|v| -v).collect()));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    let ga = gd.iter().zip(vb).map(|(g, y)| g * y).collect();
                    let gb = gd.iter().zip(va).map(|(g, x)| g * x).collect();
                    send(*a, like(*a, ga));
                    send(*b, like(*b, gb));
                }
                Op::Scale(s, x) => {
                    let k = self.value(*s).item();
                    let vx = self.value(*x).data();
                    let gs = gd.iter().zip(vx).map(|(g, x)| g * x).sum();
                    send(*s, Tensor::scalar(gs));
                    send(*x, like(*x, gd.iter().map(|g| g * k).collect()));
                }
                Op::AddScalar(x, s) => {
                    send(*s, Tensor::scalar(gd.iter().sum()));
                    send(*x, g);
                }
                Op::ConstScale(x, c) => {
                    send(*x, like(*x, gd.iter().map(|g| g * c).collect()));
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (va.rows(), va.cols(), vb.cols());
                    let mut ga = vec![0.0; n * k];
                    let mut gb = vec![0.0; k * m];
                    for i in 0..n {
                        for j in 0..m {
                            let gij = gd[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for t in 0..k {
                                ga[i * k + t] += gij * vb.at(t, j);
                                gb[t * m + j] += va.at(i, t) * gij;
                            }
                        }
                    }
                    send(*a, like(*a, ga));
                    send(*b, like(*b, gb));
                }
                Op::AddRowBias(m, bias) => {
                    let cols = self.value(*m).cols();
                    let mut gb = vec![0.0; cols];
                    for (k, v) in gd.iter().enumerate() {
                        gb[k % cols] += v;
                    }
                    send(*bias, like(*bias, gb));
                    send(*m, g);
                }
                Op::Relu(x) => {
                    let vx = self.value(*x).data();
                    let gx = gd
                        .iter()
                        .zip(vx)
                        .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                        .collect();
                    send(*x, like(*x, gx));
                }
                Op::LeakyRelu(x, slope) => {
                    let vx = self.value(*x).data();
                    let gx = gd
                        .iter()
                        .zip(vx)
                        .map(|(g, &x)| if x > 0.0 { *g } else { slope * g })
                        .collect();
                    send(*x, like(*x, gx));
                }
                Op::Exp(x) => {
                    let vy = node.value.data();
                    send(*x, like(*x, gd.iter().zip(vy).map(|(g, y)| g * y).collect()));
                }
                Op::Log(x) => {
                    let vx = self.value(*x).data();
                    send(*x, like(*x, gd.iter().zip(vx).map(|(g, x)| g / x).collect()));
                }
                Op::Sum(x) => {
                    let n = self.value(*x).len();
                    send(*x, like(*x, vec![gd[0]; n]));
                }
                Op::Mean(x) => {
                    let n = self.value(*x).len();
                    send(*x, like(*x, vec![gd[0] / n as f64; n]));
                }
                Op::Dot(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    send(*a, like(*a, vb.iter().map(|y| gd[0] * y).collect()));
                    send(*b, like(*b, va.iter().map(|x| gd[0] * x).collect()));
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        send(p, like(p, gd[start..start + n].to_vec()));
                        start += n;
                    }
                }
                Op::Gather(x, indices) => {
                    let mut gx = vec![0.0; self.value(*x).len()];
                    for (k, &i) in indices.iter().enumerate() {
                        gx[i] += gd[k];
                    }
                    send(*x, like(*x, gx));
                }
                Op::SegmentSum(x, offsets) => {
                    let mut gx = vec![0.0; self.value(*x).len()];
                    for (s, w) in offsets.windows(2).enumerate() {
                        gx[w[0]..w[1]].fill(gd[s]);
                    }
                    send(*x, like(*x, gx));
                }
                Op::SegmentSoftmax(x, offsets) => {
                    let y = node.value.data();
                    let mut gx = vec![0.0; y.len()];
                    for w in offsets.windows(2) {
                        let r = w[0]..w[1];
                        let inner: f64 = y[r.clone()].iter().zip(&gd[r.clone()]).map(|(y, g)| y * g).sum();
                        for k in r {
                            gx[k] = y[k] * (gd[k] - inner);
                        }
                    }
                    send(*x, like(*x, gx));
                }
                Op::Element(x, i) => {
                    let mut gx = vec![0.0; self.value(*x).len()];
                    gx[*i] = gd[0];
                    send(*x, like(*x, gx));
                }
                Op::Slice(x, start, len) => {
                    let mut gx = vec![0.0; self.value(*x).len()];
                    gx[*start..start + len].copy_from_slice(gd);
                    send(*x, like(*x, gx));
                }
            }
        }
        Ok(out)
    }
}
