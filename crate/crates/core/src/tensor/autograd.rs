//! Reverse-mode differentiation over the recorded operation graph.
//!
//! Gradients are themselves built from recorded tensor operations. With
//! `create_graph` set, the returned gradients stay attached to the graph and
//! can be differentiated again (the gradient penalty needs this).

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use super::graph::{eval_op, Op, Tensor};
use super::TensorError;

/// Operations reachable from an output, parents before children.
pub struct Tape {
    nodes: Vec<Tensor>,
}

impl Tape {
    /// Records every node the output depends on.
    pub fn record(output: &Tensor) -> Tape {
        Self::collect(output, |_| true)
    }

    fn collect(output: &Tensor, keep: impl Fn(&Tensor) -> bool) -> Tape {
        let mut order = Vec::new();
        let mut seen = HashSet::new();
        // (node, parents already pushed)
        let mut stack = vec![(output.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !seen.insert(node.id()) {
                continue;
            }
            stack.push((node.clone(), true));
            for p in node.0.op.parents() {
                if keep(p) && !seen.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }
        Tape { nodes: order }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Tensor] {
        &self.nodes
    }

    /// Names of the recorded operations in execution order.
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|t| t.0.op.name()).collect()
    }

    /// Re-executes every recorded operation from the leaf values and returns
    /// the recomputed value of each node, in tape order.
    pub fn replay(&self) -> Vec<Rc<[f64]>> {
        let mut values: HashMap<u64, Rc<[f64]>> = HashMap::with_capacity(self.nodes.len());
        let mut out = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v: Rc<[f64]> = match &node.0.op {
                Op::Leaf => node.0.data.clone(),
                op => {
                    let lookup = |t: &Tensor| values.get(&t.id()).cloned().unwrap_or_else(|| t.0.data.clone());
                    eval_op(op, node.shape(), &lookup).into()
                }
            };
            values.insert(node.id(), v.clone());
            out.push(v);
        }
        out
    }

    /// True when replay reproduces every stored forward value bit for bit.
    pub fn replay_matches(&self) -> bool {
        self.replay().iter().zip(&self.nodes).all(|(v, n)| {
            v.len() == n.numel() && v.iter().zip(n.data()).all(|(a, b)| a.to_bits() == b.to_bits())
        })
    }
}

/// Gradients keyed by tensor identity.
pub struct Gradients {
    grads: HashMap<u64, Tensor>,
    visited: usize,
}

impl Gradients {
    pub fn get(&self, t: &Tensor) -> Option<&Tensor> {
        self.grads.get(&t.id())
    }

    /// Gradient of `t`, or zeros when the output does not depend on it.
    pub fn wrt(&self, t: &Tensor) -> Tensor {
        self.get(t).cloned().unwrap_or_else(|| Tensor::zeros(t.shape()))
    }

    /// Number of graph nodes the backward pass processed.
    pub fn visited(&self) -> usize {
        self.visited
    }
}

/// Differentiates a single-element `output` with respect to every tensor it
/// depends on that requires gradients.
pub fn backward(output: &Tensor, create_graph: bool) -> Result<Gradients, TensorError> {
    if output.numel() != 1 {
        return Err(TensorError::NotScalar(output.shape().to_vec()));
    }
    let mut grads: HashMap<u64, Tensor> = HashMap::new();
    if !output.requires_grad() {
        return Ok(Gradients { grads, visited: 0 });
    }
    let tape = Tape::collect(output, |t| t.requires_grad());
    grads.insert(output.id(), Tensor::full(output.shape(), 1.0));
    let cap = |t: &Tensor| if create_graph { t.clone() } else { t.detach() };
    let mut visited = 0;
    for node in tape.nodes.iter().rev() {
        visited += 1;
        let Some(g) = grads.get(&node.id()).cloned() else {
            continue;
        };
        let g = cap(&g);
        let parents = node.0.op.parents();
        if parents.is_empty() {
            continue;
        }
        let contribs = local_grads(&node.0.op, &cap(node), &g, &cap)?;
        for (parent, contrib) in parents.into_iter().zip(contribs) {
            let Some(c) = contrib else { continue };
            if !parent.requires_grad() {
                continue;
            }
            debug_assert_eq!(c.shape(), parent.shape(), "gradient shape for {}", node.0.op.name());
            let acc = match grads.remove(&parent.id()) {
                Some(prev) => prev.add(&c)?,
                None => c,
            };
            grads.insert(parent.id(), acc);
        }
    }
    Ok(Gradients { grads, visited })
}

/// Vector-Jacobian products of one operation, one entry per parent.
fn local_grads(
    op: &Op,
    out: &Tensor,
    g: &Tensor,
    cap: &dyn Fn(&Tensor) -> Tensor,
) -> Result<Vec<Option<Tensor>>, TensorError> {
    let some = |t: Tensor| Ok(vec![Some(t)]);
    match op {
        Op::Leaf => Ok(Vec::new()),
        Op::Add(..) => Ok(vec![Some(g.clone()), Some(g.clone())]),
        Op::Sub(..) => Ok(vec![Some(g.clone()), Some(g.neg())]),
        Op::Mul(a, b) => Ok(vec![Some(g.mul(&cap(b))?), Some(g.mul(&cap(a))?)]),
        Op::Scale(_, c) => some(g.scale(*c)),
        Op::AddScalar(..) => some(g.clone()),
        Op::Powf(a, p) => some(g.mul(&cap(a).powf(p - 1.0).scale(*p))?),
        Op::Tanh(_) => some(g.mul(&out.square().neg().add_scalar(1.0))?),
        Op::MatMul(a, b) => Ok(vec![
            Some(g.matmul(&cap(b).transpose()?)?),
            Some(cap(a).transpose()?.matmul(g)?),
        ]),
        Op::Transpose(_) => some(g.transpose()?),
        Op::Reshape(a) => some(g.reshape(a.shape())?),
        Op::SumAll(a) => some(g.expand(a.shape())?),
        Op::Expand(a) => some(g.sum_all().reshape(a.shape())?),
        Op::SumLast(a) => some(g.expand_last(*a.shape().last().expect("rank >= 1"))?),
        Op::ExpandLast(_) => some(g.sum_last()?),
        Op::SumToChannel(a) => some(g.broadcast_channel(a.shape())?),
        Op::BroadcastChannel(_) => some(g.sum_to_channel()?),
        Op::Concat(parts, axis) => {
            let mut start = 0;
            let mut out = Vec::with_capacity(parts.len());
            for p in parts {
                let len = p.shape()[*axis];
                out.push(Some(g.slice(*axis, start, len)?));
                start += len;
            }
            Ok(out)
        }
        Op::Slice(a, axis, start) => some(g.pad(*axis, *start, a.shape()[*axis])?),
        Op::Pad(a, axis, start) => some(g.slice(*axis, *start, a.shape()[*axis])?),
        Op::Conv(x, k, s) => {
            let d = s.len();
            let in_sp = &x.shape()[1..=d];
            Ok(vec![
                Some(g.transposed_conv_to(&cap(k), s, in_sp)?),
                Some(cap(x).kernel_grad(g, &k.shape()[..d], s)?),
            ])
        }
        Op::TransConv(y, k, s) => {
            let d = s.len();
            Ok(vec![Some(g.conv(&cap(k), s)?), Some(g.kernel_grad(&cap(y), &k.shape()[..d], s)?)])
        }
        Op::KernelGrad(x, dy, s) => {
            let d = s.len();
            let in_sp = &x.shape()[1..=d];
            Ok(vec![
                Some(cap(dy).transposed_conv_to(g, s, in_sp)?),
                Some(cap(x).conv(g, s)?),
            ])
        }
    }
}
