use super::{elementwise, linalg, norm, shape_ops, Result, Scalar, Tensor, TensorError};
use std::cell::{Ref, RefCell};
use std::rc::Rc;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// User-supplied backward rule: `(grad_out, inputs, output) -> grad per input`.
pub type BackwardFn<T> = Rc<dyn Fn(&Tensor<T>, &[&Tensor<T>], &Tensor<T>) -> Vec<Tensor<T>>>;

pub(crate) enum Op<T> {
    Leaf,
    Add { broadcast: bool },
    Sub { broadcast: bool },
    Mul { broadcast: bool },
    Div { broadcast: bool },
    Scale(T),
    Offset,
    Relu,
    Sigmoid,
    Log,
    Clamp { lo: T, hi: T },
    Mask(Vec<T>),
    MatMul { m: usize, k: usize, n: usize },
    Conv2d(linalg::ConvGeom),
    BatchNorm(norm::BnSaved<T>),
    SumAxis(shape_ops::AxisGeom),
    MeanAxis(shape_ops::AxisGeom),
    MaxAxis(shape_ops::AxisGeom, Vec<usize>),
    SumAll,
    MeanAll,
    AvgPool2d(shape_ops::PoolGeom),
    Concat(shape_ops::ConcatGeom),
    Narrow(shape_ops::AxisGeom, usize, usize),
    Reshape,
    IndexSelect(shape_ops::AxisGeom, Vec<usize>),
    IndexAdd(shape_ops::AxisGeom, Vec<usize>),
    Custom(BackwardFn<T>),
}

struct Node<T> {
    value: Tensor<T>,
    parents: Vec<usize>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records operations for one forward pass and differentiates them.
///
/// Parents always precede children, so the node list is already in
/// topological order and backward is a single reverse sweep.
pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    /// A tracked leaf; its gradient is reported by [`Tape::backward`].
    pub fn leaf(&self, value: Tensor<T>) -> Var {
        self.push_node(value, Vec::new(), Op::Leaf, true)
    }

    /// An untracked input. No gradient flows into it.
    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.push_node(value, Vec::new(), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Records an operation with an arbitrary backward rule.
    pub fn custom(&self, inputs: &[Var], value: Tensor<T>, backward: BackwardFn<T>) -> Var {
        self.push(value, inputs, Op::Custom(backward))
    }

    pub(crate) fn push(&self, value: Tensor<T>, parents: &[Var], op: Op<T>) -> Var {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[p.0].requires_grad)
        };
        self.push_node(
            value,
            parents.iter().map(|p| p.0).collect(),
            op,
            requires_grad,
        )
    }

    fn push_node(
        &self,
        value: Tensor<T>,
        parents: Vec<usize>,
        op: Op<T>,
        requires_grad: bool,
    ) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            parents,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    /// Runs `f` over the values of `vars` without copying them.
    pub(crate) fn with_values<R>(&self, vars: &[Var], f: impl FnOnce(&[&Tensor<T>]) -> R) -> R {
        let nodes = self.nodes.borrow();
        let vals: Vec<&Tensor<T>> = vars.iter().map(|v| &nodes[v.0].value).collect();
        f(&vals)
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let loss_shape = nodes[loss.0].value.shape().to_vec();
        if nodes[loss.0].value.len() != 1 {
            return Err(TensorError::NonScalarLoss(loss_shape));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(&loss_shape));

        for id in (0..=loss.0).rev() {
            let node = &nodes[id];
            if node.parents.is_empty() || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let inputs: Vec<&Tensor<T>> = node.parents.iter().map(|&p| &nodes[p].value).collect();
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| nodes[p].requires_grad)
                .collect();
            let parent_grads = backward_op(&node.op, &g, &inputs, &node.value, &needs)?;
            for ((&p, pg), need) in node.parents.iter().zip(parent_grads).zip(needs) {
                let Some(pg) = pg else { continue };
                if !need {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[p].value.shape());
                match &mut grads[p] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(pg.data()) {
                            *a += *b;
                        }
                    }
                    slot @ None => *slot = Some(pg),
                }
            }
        }

        // only tracked leaves keep their gradient
        for (id, node) in nodes.iter().enumerate() {
            if !(node.parents.is_empty() && node.requires_grad) {
                grads[id] = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn backward_op<T: Scalar>(
    op: &Op<T>,
    g: &Tensor<T>,
    inputs: &[&Tensor<T>],
    out: &Tensor<T>,
    needs: &[bool],
) -> Result<Vec<Option<Tensor<T>>>> {
    use elementwise as ew;
    Ok(match op {
        Op::Leaf => Vec::new(),
        Op::Add { broadcast } => ew::add_backward(g, inputs, *broadcast),
        Op::Sub { broadcast } => ew::sub_backward(g, inputs, *broadcast),
        Op::Mul { broadcast } => ew::mul_backward(g, inputs, *broadcast, needs),
        Op::Div { broadcast } => ew::div_backward(g, inputs, *broadcast, needs),
        Op::Scale(c) => vec![Some(g.map(|v| v * *c))],
        Op::Offset => vec![Some(g.clone())],
        Op::Relu => vec![Some(ew::relu_backward(g, inputs[0]))],
        Op::Sigmoid => vec![Some(ew::sigmoid_backward(g, out))],
        Op::Log => vec![Some(ew::log_backward(g, inputs[0]))],
        Op::Clamp { lo, hi } => vec![Some(ew::clamp_backward(g, inputs[0], *lo, *hi))],
        Op::Mask(mask) => vec![Some(ew::mask_backward(g, mask))],
        Op::MatMul { m, k, n } => linalg::matmul_backward(g, inputs, *m, *k, *n, needs),
        Op::Conv2d(geom) => linalg::conv2d_backward(g, inputs, geom, needs),
        Op::BatchNorm(saved) => norm::batch_norm_backward(g, inputs, saved, needs),
        Op::SumAxis(geom) => vec![Some(shape_ops::sum_axis_backward(
            g,
            inputs[0],
            geom,
            T::one(),
        ))],
        Op::MeanAxis(geom) => {
            let scale = T::one() / T::of(geom.len as f64);
            vec![Some(shape_ops::sum_axis_backward(
                g, inputs[0], geom, scale,
            ))]
        }
        Op::MaxAxis(geom, argmax) => vec![Some(shape_ops::max_axis_backward(
            g, inputs[0], geom, argmax,
        ))],
        Op::SumAll => vec![Some(Tensor::full(inputs[0].shape(), g.item()))],
        Op::MeanAll => {
            let n = T::of(inputs[0].len() as f64);
            vec![Some(Tensor::full(inputs[0].shape(), g.item() / n))]
        }
        Op::AvgPool2d(geom) => vec![Some(shape_ops::avg_pool_backward(g, inputs[0], geom))],
        Op::Concat(geom) => shape_ops::concat_backward(g, inputs, geom),
        Op::Narrow(geom, start, take) => vec![Some(shape_ops::narrow_backward(
            g, inputs[0], geom, *start, *take,
        ))],
        Op::Reshape => vec![Some(Tensor::new(inputs[0].shape(), g.data().to_vec())?)],
        Op::IndexSelect(geom, idx) => vec![Some(shape_ops::index_select_backward(
            g, inputs[0], geom, idx,
        ))],
        Op::IndexAdd(geom, idx) => {
            vec![Some(shape_ops::index_add_backward(g, inputs[0], geom, idx))]
        }
        Op::Custom(f) => {
            let gs = f(g, inputs, out);
            if gs.len() != inputs.len() {
                return Err(TensorError::Invalid {
                    op: "custom",
                    msg: format!(
                        "backward returned {} gradients for {} inputs",
                        gs.len(),
                        inputs.len()
                    ),
                });
            }
            for (gi, x) in gs.iter().zip(inputs) {
                if gi.shape() != x.shape() {
                    return Err(TensorError::ShapeMismatch {
                        op: "custom backward",
                        lhs: gi.shape().to_vec(),
                        rhs: x.shape().to_vec(),
                    });
                }
            }
            gs.into_iter().map(Some).collect()
        }
    })
}

/// Gradients of tracked leaves, indexed by their [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of `shape` if nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(&[3], vec![1.0, -2.0, 5.0]).unwrap());
        let loss = tape.sum_all(x);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gradient_is_twice_input() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(&[3], vec![1.5, -2.0, 0.25]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(sq);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[3.0, -4.0, 0.5]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::zeros(&[2]));
        assert!(matches!(
            tape.backward(x),
            Err(TensorError::NonScalarLoss(_))
        ));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full(&[2], 2.0));
        let c = tape.constant(Tensor::full(&[2], 3.0));
        let loss = tape.sum_all(tape.mul(x, c).unwrap());
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[3.0, 3.0]);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn fan_out_accumulates() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full(&[1], 2.0));
        let a = tape.scale(x, 3.0);
        let b = tape.scale(x, 4.0);
        let loss = tape.sum_all(tape.add(a, b).unwrap());
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[7.0]);
    }
}
