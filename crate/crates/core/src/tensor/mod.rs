//! Dense NCHW tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable, reference-counted node. Operations that
//! consume a tensor requiring gradients record a backward closure and their
//! inputs; [`Tensor::backward`] walks that lineage in reverse topological
//! order and accumulates gradients into the leaves.

mod conv;
mod elementwise;
mod pool;
mod resize;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::element::Element;
use crate::error::{Error, Result};

pub use resize::UPSAMPLE_FACTORS;

/// `(batch, channels, height, width)`.
pub type Shape = [usize; 4];

pub(crate) type BackwardFn<T> =
    Box<dyn Fn(&[T], &[Tensor<T>]) -> Vec<Option<Vec<T>>> + Send + Sync>;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

struct GradFn<T: Element> {
    op: &'static str,
    inputs: Vec<Tensor<T>>,
    backward: BackwardFn<T>,
}

struct Node<T: Element> {
    id: u64,
    shape: Shape,
    data: Vec<T>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<T>>>,
    grad_fn: Option<GradFn<T>>,
}

pub struct Tensor<T: Element> {
    node: Arc<Node<T>>,
}

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Self { node: Arc::clone(&self.node) }
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .field("op", &self.node.grad_fn.as_ref().map(|g| g.op))
            .finish()
    }
}

fn check_shape(op: &'static str, shape: Shape, len: usize) -> Result<()> {
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::shape(op, format!("every dimension must be >= 1, got {shape:?}")));
    }
    let want: usize = shape.iter().product();
    if want != len {
        return Err(Error::shape(
            op,
            format!("shape {shape:?} needs {want} values, got {len}"),
        ));
    }
    Ok(())
}

impl<T: Element> Tensor<T> {
    fn leaf(shape: Shape, data: Vec<T>, requires_grad: bool) -> Self {
        Self {
            node: Arc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                grad_fn: None,
            }),
        }
    }

    /// Constant tensor (no gradient tracking).
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        check_shape("Tensor::new", shape, data.len())?;
        Ok(Self::leaf(shape, data, false))
    }

    /// Trainable leaf whose gradient is accumulated by `backward`.
    pub fn parameter(shape: Shape, data: Vec<T>) -> Result<Self> {
        check_shape("Tensor::parameter", shape, data.len())?;
        Ok(Self::leaf(shape, data, true))
    }

    pub fn from_f64(shape: Shape, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn full(shape: Shape, value: T) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![value; n]).expect("full: invalid shape")
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn scalar(value: T) -> Self {
        Self::full([1, 1, 1, 1], value)
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Self::new(shape, (0..n).map(&mut f).collect()).expect("from_fn: invalid shape")
    }

    /// Builds the result of an operation. Lineage is only recorded when at
    /// least one input requires gradients.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Shape,
        data: Vec<T>,
        inputs: &[&Tensor<T>],
        backward: impl Fn(&[T], &[Tensor<T>]) -> Vec<Option<Vec<T>>> + Send + Sync + 'static,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len(), "{op}: bad output length");
        let requires_grad = inputs.iter().any(|t| t.requires_grad());
        let grad_fn = requires_grad.then(|| GradFn {
            op,
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            backward: Box::new(backward),
        });
        Self {
            node: Arc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                grad_fn,
            }),
        }
    }

    pub fn shape(&self) -> Shape {
        self.node.shape
    }

    pub fn batch(&self) -> usize {
        self.node.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.node.shape[1]
    }

    pub fn height(&self) -> usize {
        self.node.shape[2]
    }

    pub fn width(&self) -> usize {
        self.node.shape[3]
    }

    pub fn numel(&self) -> usize {
        self.node.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.node.data
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.node.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    /// Name of the producing operation, `None` for leaves and constants.
    pub fn op_name(&self) -> Option<&'static str> {
        self.node.grad_fn.as_ref().map(|g| g.op)
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on a tensor with {} elements", self.numel());
        self.node.data[0]
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        let [_, ch, h, w] = self.node.shape;
        self.node.data[((n * ch + c) * h + y) * w + x]
    }

    /// Same values, no lineage, no gradient tracking.
    pub fn detach(&self) -> Self {
        Self::leaf(self.shape(), self.node.data.clone(), false)
    }

    /// Same values converted to another element type, as a constant.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor::leaf(
            self.shape(),
            self.node.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            false,
        )
    }

    /// Same values as a fresh trainable leaf.
    pub fn to_parameter(&self) -> Self {
        Self::leaf(self.shape(), self.node.data.clone(), true)
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.node.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn has_grad(&self) -> bool {
        self.node.grad.lock().expect("grad lock poisoned").is_some()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.lock().expect("grad lock poisoned") = None;
    }

    pub(crate) fn set_grad(&self, grad: Option<Vec<T>>) {
        if let Some(g) = &grad {
            assert_eq!(g.len(), self.numel(), "gradient length differs from tensor");
        }
        *self.node.grad.lock().expect("grad lock poisoned") = grad;
    }

    fn accumulate_grad(&self, g: &[T]) {
        let mut slot = self.node.grad.lock().expect("grad lock poisoned");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Backpropagates from a `1×1×1×1` loss. Gradients accumulate into every
    /// reachable trainable leaf until [`Tensor::zero_grad`] clears them.
    pub fn backward(&self) -> Result<()> {
        if self.shape() != [1, 1, 1, 1] {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1x1x1, got {:?}", self.shape()),
            ));
        }
        if !self.requires_grad() {
            return Err(Error::arg("backward", "loss has no gradient lineage"));
        }

        let order = self.topological_order();
        let mut pending: HashMap<u64, Vec<T>> = HashMap::new();
        pending.insert(self.node.id, vec![T::one()]);

        for t in order.iter().rev() {
            let Some(grad_out) = pending.remove(&t.node.id) else {
                continue;
            };
            let Some(grad_fn) = &t.node.grad_fn else {
                t.accumulate_grad(&grad_out);
                continue;
            };
            let input_grads = (grad_fn.backward)(&grad_out, &grad_fn.inputs);
            debug_assert_eq!(input_grads.len(), grad_fn.inputs.len(), "{}", grad_fn.op);
            for (input, g) in grad_fn.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !input.requires_grad() {
                    continue;
                }
                debug_assert_eq!(g.len(), input.numel(), "{}: bad gradient length", grad_fn.op);
                match pending.get_mut(&input.node.id) {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b),
                    None => {
                        pending.insert(input.node.id, g);
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over the gradient-tracking lineage; each node exactly once.
    fn topological_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor<T>, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.node.id);
        while let Some((t, child)) = stack.pop() {
            let inputs = t.node.grad_fn.as_ref().map(|g| g.inputs.as_slice()).unwrap_or(&[]);
            if child < inputs.len() {
                let next = inputs[child].clone();
                stack.push((t, child + 1));
                if next.requires_grad() && visited.insert(next.node.id) {
                    stack.push((next, 0));
                }
            } else {
                order.push(t);
            }
        }
        order
    }

    /// Number of distinct nodes `backward` would visit.
    pub fn lineage_len(&self) -> usize {
        self.topological_order().len()
    }
}
