use std::cell::{Cell, Ref, RefCell};
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;

use crate::autograd::ops::Op;
use crate::error::{Error, Result};

thread_local! {
    static NO_GRAD: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` without recording any operations on the graph.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            NO_GRAD.with(|c| c.set(self.0));
        }
    }
    let _restore = Restore(NO_GRAD.with(|c| c.replace(true)));
    f()
}

pub(crate) fn grad_enabled() -> bool {
    !NO_GRAD.with(|c| c.get())
}

pub(crate) struct Node {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: RefCell<Vec<f32>>,
    pub(crate) grad: RefCell<Option<Vec<f32>>>,
    pub(crate) requires_grad: bool,
    pub(crate) name: Option<String>,
    pub(crate) op: Option<Op>,
    backward_done: Cell<bool>,
}

/// Dense f32 tensor taking part in a define-by-run differentiation graph.
///
/// Cloning is cheap and shares the underlying node.
#[derive(Clone)]
pub struct Tensor(pub(crate) Rc<Node>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("name", &self.0.name)
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

fn check_shape(data_len: usize, shape: &[usize]) -> Result<()> {
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::invalid("tensor", format!("zero-sized dim in {shape:?}")));
    }
    let numel: usize = shape.iter().product();
    if numel != data_len {
        return Err(Error::invalid(
            "tensor",
            format!("shape {shape:?} needs {numel} values, got {data_len}"),
        ));
    }
    Ok(())
}

impl Tensor {
    /// Constant tensor, never receives a gradient.
    pub fn new(data: Vec<f32>, shape: &[usize]) -> Result<Self> {
        check_shape(data.len(), shape)?;
        Ok(Self::raw(data, shape.to_vec(), false, None, None))
    }

    /// Named leaf tensor that accumulates gradients.
    pub fn param(name: impl Into<String>, data: Vec<f32>, shape: &[usize]) -> Result<Self> {
        check_shape(data.len(), shape)?;
        Ok(Self::raw(data, shape.to_vec(), true, Some(name.into()), None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::raw(vec![0.0; n], shape.to_vec(), false, None, None)
    }

    pub fn scalar(value: f32) -> Self {
        Self::raw(vec![value], vec![1], false, None, None)
    }

    pub(crate) fn raw(
        data: Vec<f32>,
        shape: Vec<usize>,
        requires_grad: bool,
        name: Option<String>,
        op: Option<Op>,
    ) -> Self {
        Tensor(Rc::new(Node {
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            name,
            op,
            backward_done: Cell::new(false),
        }))
    }

    /// Result of an op: attached to the graph only if some parent wants grads.
    pub(crate) fn from_op(data: Vec<f32>, shape: Vec<usize>, parents: &[&Tensor], op: impl FnOnce() -> Op) -> Self {
        let requires_grad = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        let op = requires_grad.then(op);
        Self::raw(data, shape, requires_grad, None, op)
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.shape.iter().product()
    }

    pub fn rows(&self) -> usize {
        self.0.shape[0]
    }

    pub fn cols(&self) -> usize {
        *self.0.shape.last().unwrap()
    }

    pub fn data(&self) -> Ref<'_, Vec<f32>> {
        self.0.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.0.data.borrow().clone()
    }

    pub fn item(&self) -> f32 {
        self.0.data.borrow()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn name(&self) -> Option<&str> {
        self.0.name.as_deref()
    }

    pub fn grad(&self) -> Option<Vec<f32>> {
        self.0.grad.borrow().clone()
    }

    pub fn set_grad(&self, grad: Option<Vec<f32>>) -> Result<()> {
        if let Some(g) = &grad {
            if g.len() != self.numel() {
                return Err(Error::shape("set_grad", &[g.len()], self.shape()));
            }
        }
        *self.0.grad.borrow_mut() = grad;
        Ok(())
    }

    pub fn clear_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Overwrites the values in place (used by optimizers and loaders).
    pub fn assign(&self, values: &[f32]) -> Result<()> {
        if values.len() != self.numel() {
            return Err(Error::shape("assign", &[values.len()], self.shape()));
        }
        self.0.data.borrow_mut().copy_from_slice(values);
        Ok(())
    }

    pub(crate) fn update_data(&self, f: impl FnOnce(&mut [f32])) {
        f(&mut self.0.data.borrow_mut());
    }

    /// Detached copy of the current values.
    pub fn detach(&self) -> Tensor {
        Self::raw(self.to_vec(), self.0.shape.clone(), false, None, None)
    }

    pub fn ptr_eq(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    fn key(&self) -> *const Node {
        Rc::as_ptr(&self.0)
    }

    pub(crate) fn accumulate_grad(&self, contribution: &[f32]) {
        let mut grad = self.0.grad.borrow_mut();
        match grad.as_mut() {
            Some(g) => g.iter_mut().zip(contribution).for_each(|(a, b)| *a += b),
            None => *grad = Some(contribution.to_vec()),
        }
    }

    /// Reverse-mode pass from a scalar loss.
    ///
    /// Every tensor on a path from the loss that requires grad ends up with a
    /// populated gradient; leaf gradients accumulate across calls.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape().to_vec()));
        }
        if self.0.backward_done.get() {
            return Err(Error::BackwardTwice);
        }
        if !self.requires_grad() {
            return Err(Error::invalid("backward", "loss does not require grad"));
        }
        let order = self.topo_order()?;
        self.accumulate_grad(&[1.0]);
        for node in order.iter().rev() {
            let Some(op) = node.0.op.as_ref() else { continue };
            let grad = node
                .0
                .grad
                .borrow()
                .clone()
                .expect("grad reaches every node in topological order");
            op.backward(node, &grad);
        }
        self.0.backward_done.set(true);
        Ok(())
    }

    /// Post-order DFS over the part of the graph that requires grad.
    fn topo_order(&self) -> Result<Vec<Tensor>> {
        let mut done: HashSet<*const Node> = HashSet::new();
        let mut on_stack: HashSet<*const Node> = HashSet::new();
        let mut order = Vec::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            let key = t.key();
            if expanded {
                on_stack.remove(&key);
                if done.insert(key) {
                    order.push(t);
                }
                continue;
            }
            if done.contains(&key) {
                continue;
            }
            if !on_stack.insert(key) {
                return Err(Error::GraphCycle);
            }
            stack.push((t.clone(), true));
            if let Some(op) = t.0.op.as_ref() {
                for p in op.parents() {
                    if !p.requires_grad() {
                        continue;
                    }
                    let pk = p.key();
                    if on_stack.contains(&pk) {
                        return Err(Error::GraphCycle);
                    }
                    if !done.contains(&pk) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        Ok(order)
    }
}
