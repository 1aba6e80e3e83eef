//! Tape-based reverse-mode evaluation over the primitives in [`super::ops`].

use super::ops::{self, ConvSpec};
use super::{KernelError, Scalar, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv1d { input: NodeId, weight: NodeId, spec: ConvSpec },
    ConvTranspose1d { input: NodeId, weight: NodeId, stride: usize },
    Relu(NodeId),
    Add(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Mse { prediction: NodeId, target: NodeId },
}

#[derive(Debug)]
struct Node<F> {
    value: Tensor<F>,
    op: Op,
}

/// A single forward evaluation. Nodes are appended in evaluation order, so
/// walking them in reverse is a valid backward schedule.
#[derive(Debug, Default)]
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor<F>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    /// Gradient of the last [`Graph::backward`] root with respect to `id`.
    pub fn grad(&self, id: NodeId) -> Option<&[F]> {
        self.nodes[id.0].value.grad()
    }

    pub fn take_grad(&mut self, id: NodeId) -> Option<Tensor<F>> {
        let node = &mut self.nodes[id.0].value;
        let grad = node.grad()?.to_vec();
        node.clear_grad();
        Tensor::new(node.shape(), grad).ok()
    }

    pub fn conv1d(&mut self, input: NodeId, weight: NodeId, spec: ConvSpec) -> Result<NodeId, KernelError> {
        let out = ops::conv1d(self.value(input), self.value(weight), &spec)?;
        Ok(self.push(out, Op::Conv1d { input, weight, spec }))
    }

    pub fn conv_transpose1d(&mut self, input: NodeId, weight: NodeId, stride: usize) -> Result<NodeId, KernelError> {
        let out = ops::conv_transpose1d(self.value(input), self.value(weight), stride)?;
        Ok(self.push(out, Op::ConvTranspose1d { input, weight, stride }))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let out = ops::relu(self.value(input));
        self.push(out, Op::Relu(input))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, KernelError> {
        let out = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, KernelError> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let tensors: Vec<&Tensor<F>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = ops::concat_channels(&tensors)?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    /// Scalar MSE node. `target` receives the negated prediction gradient.
    pub fn mse_loss(&mut self, prediction: NodeId, target: NodeId) -> Result<NodeId, KernelError> {
        let out = ops::mse_loss(self.value(prediction), self.value(target))?;
        Ok(self.push(out, Op::Mse { prediction, target }))
    }

    /// Back-propagates from a scalar root, leaving gradients on every node
    /// the root depends on. Any previous gradients are discarded.
    pub fn backward(&mut self, root: NodeId) -> Result<(), KernelError> {
        if self.value(root).len() != 1 {
            return Err(KernelError::NonScalarRoot {
                shape: self.value(root).shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::new(self.value(root).shape(), vec![F::one()])?);

        for idx in (0..=root.0).rev() {
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Conv1d { input, weight, spec } => {
                    let (gi, gw) = ops::conv1d_backward(self.value(*input), self.value(*weight), spec, &upstream)?;
                    accumulate(&mut grads, *input, gi)?;
                    accumulate(&mut grads, *weight, gw)?;
                }
                Op::ConvTranspose1d { input, weight, stride } => {
                    let (gi, gw) =
                        ops::conv_transpose1d_backward(self.value(*input), self.value(*weight), *stride, &upstream)?;
                    accumulate(&mut grads, *input, gi)?;
                    accumulate(&mut grads, *weight, gw)?;
                }
                Op::Relu(input) => {
                    let gi = ops::relu_backward(self.value(*input), &upstream)?;
                    accumulate(&mut grads, *input, gi)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, upstream.clone())?;
                    accumulate(&mut grads, *b, upstream.clone())?;
                }
                Op::Concat(parts) => {
                    let counts: Vec<usize> = parts.iter().map(|p| self.value(*p).shape()[0]).collect();
                    let pieces = ops::concat_channels_backward(&counts, &upstream)?;
                    for (p, g) in parts.clone().into_iter().zip(pieces) {
                        accumulate(&mut grads, p, g)?;
                    }
                }
                Op::Mse { prediction, target } => {
                    let g = ops::mse_loss_backward(self.value(*prediction), self.value(*target), upstream.data()[0])?;
                    let neg = Tensor::new(g.shape(), g.data().iter().map(|&v| -v).collect())?;
                    accumulate(&mut grads, *prediction, g)?;
                    accumulate(&mut grads, *target, neg)?;
                }
            }
            // Keep the gradient on the node for inspection.
            let data = upstream.into_data();
            self.nodes[idx].value.set_grad(data)?;
        }
        for node in &mut self.nodes[root.0 + 1..] {
            node.value.clear_grad();
        }
        Ok(())
    }
}

fn accumulate<F: Scalar>(grads: &mut [Option<Tensor<F>>], id: NodeId, g: Tensor<F>) -> Result<(), KernelError> {
    match &mut grads[id.0] {
        Some(existing) => {
            for (e, v) in existing.data_mut().iter_mut().zip(g.data()) {
                *e = *e + *v;
            }
        }
        slot @ None => *slot = Some(g),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_routes_gradient_to_both_operands() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::signal(&[1.0, 2.0]));
        let b = g.leaf(Tensor::signal(&[3.0, 4.0]));
        let t = g.leaf(Tensor::signal(&[0.0, 0.0]));
        let s = g.add(a, b).unwrap();
        let loss = g.mse_loss(s, t).unwrap();
        g.backward(loss).unwrap();
        // d/ds mean(s²) = s
        assert_eq!(g.grad(s).unwrap(), &[4.0, 6.0]);
        assert_eq!(g.grad(a).unwrap(), &[4.0, 6.0]);
        assert_eq!(g.grad(b).unwrap(), &[4.0, 6.0]);
        assert_eq!(g.grad(t).unwrap(), &[-4.0, -6.0]);
    }

    #[test]
    fn reused_node_accumulates() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::signal(&[1.0]));
        let t = g.leaf(Tensor::signal(&[0.0]));
        let s = g.add(a, a).unwrap();
        let loss = g.mse_loss(s, t).unwrap();
        g.backward(loss).unwrap();
        // loss = (2a)², dloss/da = 8a
        assert_eq!(g.grad(a).unwrap(), &[8.0]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut g = Graph::<f32>::new();
        let a = g.leaf(Tensor::signal(&[1.0, 2.0]));
        assert!(matches!(g.backward(a), Err(KernelError::NonScalarRoot { .. })));
    }
}
