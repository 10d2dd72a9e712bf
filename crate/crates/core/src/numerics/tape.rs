use std::cell::{Cell, Ref, RefCell};
use std::fmt;

use super::ops::{self, OpKind};
use super::{NumericsError, Tensor};

struct Node {
    op: Option<OpKind>,
    inputs: Vec<usize>,
    value: Tensor,
    aux: Option<Vec<usize>>,
    requires_grad: bool,
}

/// Records operations in execution order for one reverse pass.
///
/// A tape is single-threaded and may be differentiated once.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    /// A leaf excluded from differentiation.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op: None,
            inputs: Vec::new(),
            value,
            aux: None,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub fn apply(&self, op: OpKind, inputs: &[Var<'_>]) -> Result<Var<'_>, NumericsError> {
        for v in inputs {
            assert!(std::ptr::eq(v.tape, self), "variable from another tape");
        }
        let ids: Vec<usize> = inputs.iter().map(|v| v.id).collect();
        let (value, aux, requires_grad) = {
            let nodes = self.nodes.borrow();
            let vals: Vec<&Tensor> = ids.iter().map(|&i| &nodes[i].value).collect();
            let (value, aux) = ops::forward(&op, &vals)?;
            let rg = ids.iter().any(|&i| nodes[i].requires_grad);
            (value, aux, rg)
        };
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op: Some(op),
            inputs: ids,
            value,
            aux,
            requires_grad,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    /// Reverse pass from a single-element output. Gradients are kept for
    /// differentiable leaves only.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients, NumericsError> {
        assert!(std::ptr::eq(output.tape, self), "variable from another tape");
        if self.consumed.replace(true) {
            return Err(NumericsError::AlreadyDifferentiated);
        }
        let nodes = self.nodes.borrow();
        let out = &nodes[output.id];
        if out.value.numel() != 1 {
            return Err(NumericsError::NonScalar {
                shape: out.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[output.id] = Some(
            Tensor::new(out.value.shape().to_vec(), vec![1.0]).expect("single element"),
        );
        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            let Some(op) = node.op.as_ref() else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            if !node.requires_grad {
                continue;
            }
            if let OpKind::Slice {
                axis, start, step, ..
            } = op
            {
                // accumulate in place: a slice's gradient is sparse in its input
                let i = node.inputs[0];
                if nodes[i].requires_grad {
                    let acc = grads[i].get_or_insert_with(|| Tensor::zeros(nodes[i].value.shape()));
                    ops::slice_backward_into(nodes[i].value.shape(), *axis, *start, *step, &g, acc.data_mut());
                }
                continue;
            }
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|&i| &nodes[i].value).collect();
            let needs: Vec<bool> = node.inputs.iter().map(|&i| nodes[i].requires_grad).collect();
            let input_grads = ops::backward(op, &inputs, &node.value, node.aux.as_deref(), &g, &needs);
            for (&i, gi) in node.inputs.iter().zip(input_grads) {
                let Some(gi) = gi else { continue };
                match grads[i].as_mut() {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(gi.data()) {
                            *a += b;
                        }
                    }
                    None => grads[i] = Some(gi),
                }
            }
        }
        for (id, node) in nodes.iter().enumerate() {
            if node.op.is_some() || !node.requires_grad {
                grads[id] = None;
            } else if grads[id].is_none() {
                grads[id] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients of a scalar with respect to every differentiable leaf of a tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var<'_>) -> Option<Tensor> {
        self.grads.get_mut(var.id).and_then(Option::take)
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn unary(self, op: OpKind) -> Var<'t> {
        self.tape
            .apply(op, &[self])
            .expect("elementwise unary op cannot fail")
    }

    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>, NumericsError> {
        self.tape.apply(OpKind::MatMul, &[self, rhs])
    }

    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>, NumericsError> {
        self.tape.apply(OpKind::Add, &[self, rhs])
    }

    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>, NumericsError> {
        self.tape.apply(OpKind::Sub, &[self, rhs])
    }

    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>, NumericsError> {
        self.tape.apply(OpKind::Mul, &[self, rhs])
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(OpKind::Scale(c))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(OpKind::Sigmoid)
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(OpKind::Tanh)
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(OpKind::Relu)
    }

    pub fn softmax(self) -> Var<'t> {
        self.unary(OpKind::Softmax)
    }

    pub fn logsumexp(self) -> Var<'t> {
        self.unary(OpKind::LogSumExp)
    }

    pub fn sum(self) -> Var<'t> {
        self.unary(OpKind::Sum)
    }

    pub fn transpose(self) -> Result<Var<'t>, NumericsError> {
        self.tape.apply(OpKind::TransposeLast, &[self])
    }

    pub fn max(self, axis: usize) -> Result<Var<'t>, NumericsError> {
        self.tape.apply(OpKind::Max { axis }, &[self])
    }

    /// Rows of this `[rows, width]` table selected by `ids`.
    pub fn gather(self, ids: &[usize]) -> Result<Var<'t>, NumericsError> {
        self.tape.apply(OpKind::Gather { ids: ids.to_vec() }, &[self])
    }

    pub fn slice(self, axis: usize, start: usize, end: usize) -> Result<Var<'t>, NumericsError> {
        self.slice_step(axis, start, end, 1)
    }

    pub fn slice_step(
        self,
        axis: usize,
        start: usize,
        end: usize,
        step: usize,
    ) -> Result<Var<'t>, NumericsError> {
        self.tape.apply(
            OpKind::Slice {
                axis,
                start,
                end,
                step,
            },
            &[self],
        )
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>, NumericsError> {
        self.tape.apply(
            OpKind::Reshape {
                shape: shape.to_vec(),
            },
            &[self],
        )
    }
}

/// Concatenates variables along `axis`.
pub fn concat<'t>(vars: &[Var<'t>], axis: usize) -> Result<Var<'t>, NumericsError> {
    let first = vars.first().ok_or(NumericsError::Arity {
        op: "concat",
        expected: 1,
        got: 0,
    })?;
    first.tape.apply(OpKind::Concat { axis }, vars)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = x.mul(x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn relu_subgradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![-1.0, 2.0]));
        let y = x.relu().sum();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn backward_twice_is_an_error() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(1.0));
        let y = x.tanh();
        tape.backward(y).unwrap();
        assert!(matches!(tape.backward(y), Err(NumericsError::AlreadyDifferentiated)));
    }

    #[test]
    fn backward_on_non_scalar_is_an_error() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
        let y = x.tanh();
        assert!(matches!(tape.backward(y), Err(NumericsError::NonScalar { .. })));
    }

    #[test]
    fn gather_accumulates_repeated_rows() {
        let tape = Tape::new();
        let table = tape.param(Tensor::from_fn(&[3, 2], |i| i as f64));
        let rows = table.gather(&[2, 0, 2]).unwrap();
        let g = tape.backward(rows.sum()).unwrap();
        assert_eq!(g.get(table).unwrap().data(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn max_routes_gradient_to_argmax() {
        let tape = Tape::new();
        let x = tape.param(Tensor::new(vec![2, 3], vec![1.0, 5.0, 2.0, 7.0, 0.0, 7.0]).unwrap());
        let m = x.max(1).unwrap().sum();
        let g = tape.backward(m).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn unused_param_gets_zero_gradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(2.0));
        let unused = tape.param(Tensor::zeros(&[2]));
        let g = tape.backward(x.tanh()).unwrap();
        assert_eq!(g.get(unused).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn constants_have_no_gradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(2.0));
        let c = tape.constant(Tensor::scalar(5.0));
        let y = x.mul(c).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 5.0);
        assert!(g.get(c).is_none());
    }
}
