use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

use super::Scalar;
use crate::{Error, Result};

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// True while tape recording is active on this thread (the default).
pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|f| f.get())
}

/// Disables tape recording for the duration of the guard. Inference paths use
/// this so intermediates are freed as soon as their last handle drops.
pub struct NoGradGuard {
    previous: bool,
}

impl NoGradGuard {
    #[allow(clippy::new_without_default)]
    pub fn new() -> Self {
        let previous = GRAD_ENABLED.with(|f| f.replace(false));
        NoGradGuard { previous }
    }
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|f| f.set(self.previous));
    }
}

/// Runs `f` with gradient recording disabled, restoring the previous state
/// afterwards (also on panic).
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let _guard = NoGradGuard::new();
    f()
}

/// Backward rule of a tape node: receives the upstream gradient and
/// accumulates into the node's parents.
type BackwardFn<T> = Box<dyn Fn(&[T])>;

/// A recorded operation: the backward rule plus references to the inputs it
/// propagates into. Saved activations live inside the closure. The tape is a
/// DAG (shared parameters appear as parents of many nodes) and is traversed
/// exactly once per node during backward.
pub(super) struct TapeNode<T: Scalar> {
    pub(super) op: &'static str,
    pub(super) parents: Vec<Tensor<T>>,
    pub(super) backward: BackwardFn<T>,
}

pub(super) struct Inner<T: Scalar> {
    pub(super) data: Vec<T>,
    pub(super) shape: Vec<usize>,
    pub(super) grad: Option<Vec<T>>,
    pub(super) requires_grad: bool,
    /// Leaves never carry a node; intermediates lose theirs once backward has
    /// consumed them.
    pub(super) node: Option<TapeNode<T>>,
    pub(super) consumed: bool,
}

/// Dense tensor of rank 1..=3. Cheap to clone (shared handle). Values are
/// immutable after construction; only the gradient accumulator mutates.
pub struct Tensor<T: Scalar> {
    inner: Rc<RefCell<Inner<T>>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        write!(
            f,
            "Tensor{:?}(op={}, requires_grad={})",
            inner.shape,
            inner.node.as_ref().map(|n| n.op).unwrap_or("leaf"),
            inner.requires_grad
        )
    }
}

fn check_shape(shape: &[usize], len: usize) {
    assert!(
        !shape.is_empty() && shape.len() <= 3,
        "tensor rank must be 1..=3, got {:?}",
        shape
    );
    let numel: usize = shape.iter().product();
    assert_eq!(
        numel, len,
        "shape {:?} does not match data length {}",
        shape, len
    );
}

#[cfg(debug_assertions)]
fn debug_check_finite<T: Scalar>(op: &'static str, data: &[T]) {
    for (i, v) in data.iter().enumerate() {
        assert!(
            v.is_finite(),
            "non-finite value {v} produced by `{op}` at flat index {i}"
        );
    }
}

#[cfg(not(debug_assertions))]
fn debug_check_finite<T: Scalar>(_op: &'static str, _data: &[T]) {}

impl<T: Scalar> Tensor<T> {
    // ---- construction --------------------------------------------------

    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Self {
        check_shape(shape, data.len());
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                data,
                shape: shape.to_vec(),
                grad: None,
                requires_grad: false,
                node: None,
                consumed: false,
            })),
        }
    }

    /// Leaf that participates in differentiation (a parameter or checked input).
    pub fn param(data: Vec<T>, shape: &[usize]) -> Self {
        let t = Tensor::from_vec(data, shape);
        t.inner.borrow_mut().requires_grad = true;
        t
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::from_vec(vec![T::zero(); shape.iter().product()], shape)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor::from_vec(vec![value; shape.iter().product()], shape)
    }

    pub fn scalar(value: T) -> Self {
        Tensor::from_vec(vec![value], &[1])
    }

    pub(super) fn from_op(
        data: Vec<T>,
        shape: &[usize],
        op: &'static str,
        parents: Vec<Tensor<T>>,
        backward: impl Fn(&[T]) + 'static,
    ) -> Self {
        debug_check_finite(op, &data);
        check_shape(shape, data.len());
        let track = is_grad_enabled() && parents.iter().any(|p| p.requires_grad());
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                data,
                shape: shape.to_vec(),
                grad: None,
                requires_grad: track,
                node: track.then(|| TapeNode {
                    op,
                    parents,
                    backward: Box::new(backward),
                }),
                consumed: false,
            })),
        }
    }

    // ---- accessors -----------------------------------------------------

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn rank(&self) -> usize {
        self.inner.borrow().shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub fn item(&self) -> T {
        let inner = self.inner.borrow();
        assert!(inner.data.len() == 1, "item() on non-scalar {:?}", inner.shape);
        inner.data[0]
    }

    /// Copy of the values. Tensor data is immutable, so this is the only way
    /// values leave the handle.
    pub fn to_vec(&self) -> Vec<T> {
        self.inner.borrow().data.clone()
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Scales the accumulated gradient in place (global-norm clipping).
    pub fn scale_grad(&self, factor: T) {
        if let Some(g) = self.inner.borrow_mut().grad.as_mut() {
            for v in g.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// Pointer identity; two handles to the same storage compare equal.
    pub fn ptr_id(&self) -> usize {
        Rc::as_ptr(&self.inner) as *const () as usize
    }

    pub(super) fn with_data<R>(&self, f: impl FnOnce(&[T], &[usize]) -> R) -> R {
        let inner = self.inner.borrow();
        f(&inner.data, &inner.shape)
    }

    /// Overwrites the values of a leaf in place. Used by the optimizer; not
    /// allowed on tensors that are part of a live tape.
    pub fn set_data(&self, data: Vec<T>) {
        let mut inner = self.inner.borrow_mut();
        assert!(inner.node.is_none(), "set_data on a non-leaf tensor");
        assert_eq!(inner.data.len(), data.len(), "set_data length mismatch");
        inner.data = data;
    }

    pub(crate) fn accumulate_grad(&self, delta: &[T]) {
        let mut inner = self.inner.borrow_mut();
        debug_assert_eq!(inner.data.len(), delta.len(), "gradient length mismatch");
        match &mut inner.grad {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += *di;
                }
            }
            None => inner.grad = Some(delta.to_vec()),
        }
    }

    // ---- backward ------------------------------------------------------

    /// Reverse-mode pass from a scalar root. Accumulates gradients on every
    /// reachable `requires_grad` leaf; repeated passes over fresh graphs keep
    /// accumulating until `zero_grad`. The tape is freed as it is consumed,
    /// so calling this twice on the same graph is a state error.
    pub fn backward(&self) -> Result<()> {
        if !self.is_scalar() {
            return Err(Error::State(format!(
                "backward requires a scalar root, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(Error::State(
                "backward on a tensor with no gradient path".into(),
            ));
        }
        // Iterative DFS postorder gives a topological order of the DAG.
        let mut order: Vec<Tensor<T>> = Vec::new();
        let mut visited: HashSet<usize> = HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.ptr_id()) {
                continue;
            }
            let parents: Vec<Tensor<T>> = {
                let inner = t.inner.borrow();
                if inner.consumed {
                    return Err(Error::State(format!(
                        "backward through a consumed tape (node `{}` already freed)",
                        inner.node.as_ref().map(|n| n.op).unwrap_or("?")
                    )));
                }
                match &inner.node {
                    Some(node) => node
                        .parents
                        .iter()
                        .filter(|p| p.requires_grad())
                        .cloned()
                        .collect(),
                    None => Vec::new(),
                }
            };
            stack.push((t, true));
            for p in parents {
                stack.push((p, false));
            }
        }

        self.accumulate_grad(&[T::one()]);

        for t in order.iter().rev() {
            let node = t.inner.borrow_mut().node.take();
            let Some(node) = node else { continue };
            let grad = {
                let mut inner = t.inner.borrow_mut();
                inner.consumed = true;
                // A node in the reachable set always received a gradient from
                // its children before its own turn.
                inner.grad.take().unwrap_or_else(|| vec![T::zero(); inner.data.len()])
            };
            (node.backward)(&grad);
            // If the root itself is an intermediate, keep its seed visible.
            if t.ptr_id() == self.ptr_id() {
                t.inner.borrow_mut().grad = Some(grad);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_roundtrip() {
        let t = Tensor::from_vec(vec![1.0f32, 2.0, 3.0], &[3]);
        assert_eq!(t.to_vec(), vec![1.0, 2.0, 3.0]);
        assert_eq!(t.shape(), vec![3]);
        assert!(!t.requires_grad());
    }

    #[test]
    #[should_panic(expected = "rank")]
    fn rank_zero_rejected() {
        let _ = Tensor::<f32>::from_vec(vec![1.0], &[]);
    }

    #[test]
    fn backward_on_consumed_tape_is_state_error() {
        let x = Tensor::param(vec![1.0f64, 2.0], &[2]);
        let y = x.mul(&x).unwrap().sum_all();
        y.backward().unwrap();
        let err = y.backward().unwrap_err();
        assert!(matches!(err, Error::State(_)), "got {err:?}");
    }

    #[test]
    fn grad_accumulates_across_passes_until_zeroed() {
        let x = Tensor::param(vec![3.0f64], &[1]);
        for _ in 0..2 {
            let y = x.mul(&x).unwrap().sum_all();
            y.backward().unwrap();
        }
        assert_eq!(x.grad().unwrap(), vec![12.0]); // 2 passes x d(x^2)/dx = 6
        x.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn no_grad_suppresses_recording() {
        let x = Tensor::param(vec![1.0f32, -1.0], &[2]);
        let y = no_grad(|| x.relu());
        assert!(!y.requires_grad());
        assert!(is_grad_enabled());
    }
}
