use std::cell::Cell;
use std::fmt;
use std::rc::Rc;

use super::conv;
use super::TensorError;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// A dense, row-major `f64` tensor.
///
/// Tensors are immutable. Every operation on tensors that require gradients
/// records its inputs, so the result can later be differentiated with
/// [`backward`](super::backward). Cloning is cheap (reference counted).
#[derive(Clone)]
pub struct Tensor(pub(crate) Rc<Node>);

pub(crate) struct Node {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Rc<[f64]>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op,
}

#[derive(Clone)]
pub(crate) enum Op {
    Leaf,
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Scale(Tensor, f64),
    AddScalar(Tensor, f64),
    Powf(Tensor, f64),
    Tanh(Tensor),
    MatMul(Tensor, Tensor),
    Transpose(Tensor),
    Reshape(Tensor),
    SumAll(Tensor),
    /// Single value broadcast to the node's shape.
    Expand(Tensor),
    SumLast(Tensor),
    ExpandLast(Tensor),
    SumToChannel(Tensor),
    BroadcastChannel(Tensor),
    Concat(Vec<Tensor>, usize),
    /// (input, axis, start)
    Slice(Tensor, usize, usize),
    /// (input, axis, start)
    Pad(Tensor, usize, usize),
    Conv(Tensor, Tensor, Vec<usize>),
    TransConv(Tensor, Tensor, Vec<usize>),
    KernelGrad(Tensor, Tensor, Vec<usize>),
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<&Tensor> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MatMul(a, b)
            | Op::Conv(a, b, _)
            | Op::TransConv(a, b, _)
            | Op::KernelGrad(a, b, _) => vec![a, b],
            Op::Scale(a, _)
            | Op::AddScalar(a, _)
            | Op::Powf(a, _)
            | Op::Tanh(a)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::SumAll(a)
            | Op::Expand(a)
            | Op::SumLast(a)
            | Op::ExpandLast(a)
            | Op::SumToChannel(a)
            | Op::BroadcastChannel(a)
            | Op::Slice(a, _, _)
            | Op::Pad(a, _, _) => vec![a],
            Op::Concat(parts, _) => parts.iter().collect(),
        }
    }

    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Powf(..) => "powf",
            Op::Tanh(..) => "tanh",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::SumAll(..) => "sum_all",
            Op::Expand(..) => "expand",
            Op::SumLast(..) => "sum_last",
            Op::ExpandLast(..) => "expand_last",
            Op::SumToChannel(..) => "sum_to_channel",
            Op::BroadcastChannel(..) => "broadcast_channel",
            Op::Concat(..) => "concat",
            Op::Slice(..) => "slice",
            Op::Pad(..) => "pad",
            Op::Conv(..) => "conv",
            Op::TransConv(..) => "transposed_conv",
            Op::KernelGrad(..) => "kernel_grad",
        }
    }
}

/// Computes the values of `op` for an output of `shape`, reading input
/// values through `val`. Shared by op construction and tape replay.
pub(crate) fn eval_op(op: &Op, shape: &[usize], val: &dyn Fn(&Tensor) -> Rc<[f64]>) -> Vec<f64> {
    match op {
        Op::Leaf => unreachable!("leaves carry their own values"),
        Op::Add(a, b) => zip(&val(a), &val(b), |x, y| x + y),
        Op::Sub(a, b) => zip(&val(a), &val(b), |x, y| x - y),
        Op::Mul(a, b) => zip(&val(a), &val(b), |x, y| x * y),
        Op::Scale(a, c) => val(a).iter().map(|x| x * c).collect(),
        Op::AddScalar(a, c) => val(a).iter().map(|x| x + c).collect(),
        Op::Powf(a, p) => val(a).iter().map(|x| x.powf(*p)).collect(),
        Op::Tanh(a) => val(a).iter().map(|x| x.tanh()).collect(),
        Op::MatMul(a, b) => {
            let (n, k) = (a.shape()[0], a.shape()[1]);
            let m = b.shape()[1];
            let (av, bv) = (val(a), val(b));
            let mut out = vec![0.0; n * m];
            for i in 0..n {
                let row = &mut out[i * m..(i + 1) * m];
                for p in 0..k {
                    let x = av[i * k + p];
                    let brow = &bv[p * m..(p + 1) * m];
                    for (o, w) in row.iter_mut().zip(brow) {
                        *o += x * w;
                    }
                }
            }
            out
        }
        Op::Transpose(a) => {
            let (n, m) = (a.shape()[0], a.shape()[1]);
            let av = val(a);
            let mut out = vec![0.0; n * m];
            for i in 0..n {
                for j in 0..m {
                    out[j * n + i] = av[i * m + j];
                }
            }
            out
        }
        Op::Reshape(a) => val(a).to_vec(),
        Op::SumAll(a) => vec![val(a).iter().sum()],
        Op::Expand(a) => vec![val(a)[0]; numel(shape)],
        Op::SumLast(a) => {
            let n = *a.shape().last().expect("sum_last on rank >= 1");
            val(a).chunks(n).map(|c| c.iter().sum()).collect()
        }
        Op::ExpandLast(a) => {
            let n = *shape.last().expect("expand_last output rank >= 1");
            val(a).iter().flat_map(|&x| std::iter::repeat_n(x, n)).collect()
        }
        Op::SumToChannel(a) => {
            let c = *a.shape().last().expect("sum_to_channel on rank >= 1");
            let mut out = vec![0.0; c];
            for row in val(a).chunks(c) {
                for (o, x) in out.iter_mut().zip(row) {
                    *o += x;
                }
            }
            out
        }
        Op::BroadcastChannel(a) => {
            let v = val(a);
            let c = v.len();
            (0..numel(shape)).map(|i| v[i % c]).collect()
        }
        Op::Concat(parts, axis) => {
            let outer: usize = shape[..*axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            let vals: Vec<Rc<[f64]>> = parts.iter().map(val).collect();
            let mut out = Vec::with_capacity(numel(shape));
            for o in 0..outer {
                for (p, v) in parts.iter().zip(&vals) {
                    let block = p.shape()[*axis] * inner;
                    out.extend_from_slice(&v[o * block..(o + 1) * block]);
                }
            }
            out
        }
        Op::Slice(a, axis, start) => {
            let outer: usize = shape[..*axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            let in_len = a.shape()[*axis];
            let len = shape[*axis];
            let av = val(a);
            let mut out = Vec::with_capacity(numel(shape));
            for o in 0..outer {
                let base = (o * in_len + start) * inner;
                out.extend_from_slice(&av[base..base + len * inner]);
            }
            out
        }
        Op::Pad(a, axis, start) => {
            let outer: usize = shape[..*axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            let len = a.shape()[*axis];
            let total = shape[*axis];
            let av = val(a);
            let mut out = vec![0.0; numel(shape)];
            for o in 0..outer {
                let dst = (o * total + start) * inner;
                out[dst..dst + len * inner].copy_from_slice(&av[o * len * inner..(o + 1) * len * inner]);
            }
            out
        }
        Op::Conv(x, k, strides) => {
            let geo = conv::Geometry::for_conv(x.shape(), k.shape(), strides, &shape[1..shape.len() - 1]);
            geo.conv_forward(&val(x), &val(k))
        }
        Op::TransConv(y, k, strides) => {
            let geo = conv::Geometry::for_conv(shape, k.shape(), strides, &y.shape()[1..y.shape().len() - 1]);
            geo.transposed_forward(&val(y), &val(k))
        }
        Op::KernelGrad(x, dy, strides) => {
            let d = strides.len();
            let geo = conv::Geometry::for_conv(x.shape(), shape, strides, &dy.shape()[1..=d]);
            geo.kernel_grad(&val(x), &val(dy))
        }
    }
}

fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

impl Tensor {
    fn leaf(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Result<Self, TensorError> {
        if shape.contains(&0) {
            return Err(TensorError::ZeroExtent(shape));
        }
        if numel(&shape) != data.len() {
            return Err(TensorError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data: data.into(),
            requires_grad,
            op: Op::Leaf,
        })))
    }

    /// A constant tensor (no gradient is tracked for it).
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        Self::leaf(shape.to_vec(), data, false)
    }

    /// A trainable leaf: gradients are computed for it.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        Self::leaf(shape.to_vec(), data, true)
    }

    pub fn scalar(value: f64) -> Self {
        Self::leaf(Vec::new(), vec![value], false).expect("scalar shape is valid")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::new(shape, vec![value; numel(shape)]).expect("zero extent in shape")
    }

    pub(crate) fn from_op(op: Op, shape: Vec<usize>) -> Self {
        let data = eval_op(&op, &shape, &|t| t.0.data.clone());
        debug_assert_eq!(data.len(), numel(&shape), "{} produced wrong length", op.name());
        let requires_grad = op.parents().iter().any(|p| p.requires_grad());
        let op = if requires_grad { op } else { Op::Leaf };
        Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data: data.into(),
            requires_grad,
            op,
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.to_vec()
    }

    /// The value of a single-element tensor.
    pub fn item(&self) -> Result<f64, TensorError> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.shape().to_vec()));
        }
        Ok(self.0.data[0])
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub(crate) fn id(&self) -> u64 {
        self.0.id
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Tensor {
        Tensor(Rc::new(Node {
            id: next_id(),
            shape: self.0.shape.clone(),
            data: self.0.data.clone(),
            requires_grad: false,
            op: Op::Leaf,
        }))
    }

    /// Same values as a fresh trainable leaf.
    pub fn detach_param(&self) -> Tensor {
        Tensor(Rc::new(Node {
            id: next_id(),
            shape: self.0.shape.clone(),
            data: self.0.data.clone(),
            requires_grad: true,
            op: Op::Leaf,
        }))
    }

    pub fn all_finite(&self) -> bool {
        self.0.data.iter().all(|x| x.is_finite())
    }

    fn same_shape(&self, other: &Tensor, op: &'static str) -> Result<(), TensorError> {
        if self.shape() != other.shape() {
            return Err(TensorError::ShapeMismatch {
                op,
                detail: format!("{:?} vs {:?}", self.shape(), other.shape()),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.same_shape(other, "add")?;
        Ok(Tensor::from_op(Op::Add(self.clone(), other.clone()), self.shape().to_vec()))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.same_shape(other, "sub")?;
        Ok(Tensor::from_op(Op::Sub(self.clone(), other.clone()), self.shape().to_vec()))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.same_shape(other, "mul")?;
        Ok(Tensor::from_op(Op::Mul(self.clone(), other.clone()), self.shape().to_vec()))
    }

    pub fn scale(&self, c: f64) -> Tensor {
        Tensor::from_op(Op::Scale(self.clone(), c), self.shape().to_vec())
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        Tensor::from_op(Op::AddScalar(self.clone(), c), self.shape().to_vec())
    }

    pub fn powf(&self, p: f64) -> Tensor {
        Tensor::from_op(Op::Powf(self.clone(), p), self.shape().to_vec())
    }

    pub fn square(&self) -> Tensor {
        self.mul(self).expect("same tensor")
    }

    pub fn tanh(&self) -> Tensor {
        Tensor::from_op(Op::Tanh(self.clone()), self.shape().to_vec())
    }

    /// `[n, k] x [k, m] -> [n, m]`
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        if self.ndim() != 2 || other.ndim() != 2 || self.shape()[1] != other.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                detail: format!("{:?} x {:?}", self.shape(), other.shape()),
            });
        }
        let shape = vec![self.shape()[0], other.shape()[1]];
        Ok(Tensor::from_op(Op::MatMul(self.clone(), other.clone()), shape))
    }

    pub fn transpose(&self) -> Result<Tensor, TensorError> {
        if self.ndim() != 2 {
            return Err(TensorError::Rank {
                op: "transpose",
                expected: 2,
                got: self.ndim(),
            });
        }
        let shape = vec![self.shape()[1], self.shape()[0]];
        Ok(Tensor::from_op(Op::Transpose(self.clone()), shape))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor, TensorError> {
        if numel(shape) != self.numel() || shape.contains(&0) {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                detail: format!("{:?} -> {:?}", self.shape(), shape),
            });
        }
        if shape == self.shape() {
            return Ok(self.clone());
        }
        Ok(Tensor::from_op(Op::Reshape(self.clone()), shape.to_vec()))
    }

    pub fn sum_all(&self) -> Tensor {
        Tensor::from_op(Op::SumAll(self.clone()), Vec::new())
    }

    pub fn mean_all(&self) -> Tensor {
        self.sum_all().scale(1.0 / self.numel() as f64)
    }

    /// Broadcasts a single-element tensor to `shape`.
    pub fn expand(&self, shape: &[usize]) -> Result<Tensor, TensorError> {
        if self.numel() != 1 || shape.contains(&0) {
            return Err(TensorError::ShapeMismatch {
                op: "expand",
                detail: format!("{:?} -> {:?}", self.shape(), shape),
            });
        }
        Ok(Tensor::from_op(Op::Expand(self.clone()), shape.to_vec()))
    }

    /// Sums away the last axis.
    pub fn sum_last(&self) -> Result<Tensor, TensorError> {
        let Some((_, rest)) = self.shape().split_last() else {
            return Err(TensorError::Rank {
                op: "sum_last",
                expected: 1,
                got: 0,
            });
        };
        Ok(Tensor::from_op(Op::SumLast(self.clone()), rest.to_vec()))
    }

    /// Appends a new last axis of extent `n`, repeating each value.
    pub fn expand_last(&self, n: usize) -> Result<Tensor, TensorError> {
        if n == 0 {
            return Err(TensorError::ZeroExtent(vec![n]));
        }
        let mut shape = self.shape().to_vec();
        shape.push(n);
        Ok(Tensor::from_op(Op::ExpandLast(self.clone()), shape))
    }

    /// Reduces every axis but the last (channel) one.
    pub fn sum_to_channel(&self) -> Result<Tensor, TensorError> {
        let Some(&c) = self.shape().last() else {
            return Err(TensorError::Rank {
                op: "sum_to_channel",
                expected: 1,
                got: 0,
            });
        };
        Ok(Tensor::from_op(Op::SumToChannel(self.clone()), vec![c]))
    }

    /// Tiles a `[C]` vector over `shape`, whose last extent must be `C`.
    pub fn broadcast_channel(&self, shape: &[usize]) -> Result<Tensor, TensorError> {
        if self.ndim() != 1 || shape.last() != Some(&self.shape()[0]) || shape.contains(&0) {
            return Err(TensorError::ShapeMismatch {
                op: "broadcast_channel",
                detail: format!("{:?} -> {:?}", self.shape(), shape),
            });
        }
        Ok(Tensor::from_op(Op::BroadcastChannel(self.clone()), shape.to_vec()))
    }

    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor, TensorError> {
        let first = parts.first().ok_or(TensorError::Empty("concat"))?;
        if axis >= first.ndim() {
            return Err(TensorError::Axis {
                op: "concat",
                axis,
                detail: format!("rank is {}", first.ndim()),
            });
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = 0;
        for p in parts {
            let ok = p.ndim() == first.ndim()
                && p.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    detail: format!("{:?} vs {:?} along axis {axis}", first.shape(), p.shape()),
                });
            }
            shape[axis] += p.shape()[axis];
        }
        if parts.len() == 1 {
            return Ok(first.clone());
        }
        Ok(Tensor::from_op(Op::Concat(parts.to_vec(), axis), shape))
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor, TensorError> {
        if axis >= self.ndim() || len == 0 || start + len > self.shape()[axis] {
            return Err(TensorError::Axis {
                op: "slice",
                axis,
                detail: format!("[{start}, {}) out of {:?}", start + len, self.shape()),
            });
        }
        if len == self.shape()[axis] {
            return Ok(self.clone());
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Ok(Tensor::from_op(Op::Slice(self.clone(), axis, start), shape))
    }

    /// Embeds `self` at `start` along `axis` in a zero tensor of extent `total`.
    pub fn pad(&self, axis: usize, start: usize, total: usize) -> Result<Tensor, TensorError> {
        if axis >= self.ndim() || start + self.shape()[axis] > total {
            return Err(TensorError::Axis {
                op: "pad",
                axis,
                detail: format!("{:?} at {start} into {total}", self.shape()),
            });
        }
        if total == self.shape()[axis] {
            return Ok(self.clone());
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = total;
        Ok(Tensor::from_op(Op::Pad(self.clone(), axis, start), shape))
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f64> = self.data().iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("values", &preview)
            .finish()
    }
}
