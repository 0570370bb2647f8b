//! Dense row-major tensors with tape-based reverse-mode differentiation.
//!
//! A [`Tensor`] is an immutable value. Operations on tensors that require
//! gradients append a record (inputs plus a backward closure) to the graph;
//! the records form the tape that [`Tensor::backward`] replays in reverse
//! creation order. Tensors that do not require gradients keep no record, so
//! inference holds only the live activations.
//!
//! Shapes are never broadcast implicitly. The single exception is
//! [`Tensor::broadcast_add`], which replicates a tensor whose shape equals the
//! trailing axes of the other operand.

mod autograd;
pub mod instrument;
mod nn_ops;
mod ops;
mod scalar;

use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

pub use autograd::Gradients;
pub use nn_ops::{attention_probabilities, multi_head_attention_core};
pub use scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    AxisOutOfRange {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: degenerate input: {reason}")]
    Degenerate { op: &'static str, reason: String },
    #[error("{op}: invalid argument: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("gradient tape already consumed by an earlier backward pass")]
    TapeConsumed,
    #[error("allocating {requested} bytes would exceed the memory limit of {limit} bytes ({live} live)")]
    OutOfMemory { requested: u64, live: u64, limit: u64 },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Tracked storage. Registers its size with [`instrument`] for its lifetime.
pub(crate) struct Buffer<S> {
    data: Vec<S>,
}

impl<S: Scalar> Buffer<S> {
    fn bytes(len: usize) -> u64 {
        (len * std::mem::size_of::<S>()) as u64
    }

    pub(crate) fn zeros(len: usize) -> Result<Self> {
        instrument::reserve(Self::bytes(len))?;
        Ok(Buffer {
            data: vec![S::zero(); len],
        })
    }

    pub(crate) fn from_vec(data: Vec<S>) -> Result<Self> {
        instrument::reserve(Self::bytes(data.len()))?;
        Ok(Buffer { data })
    }
}

impl<S> Drop for Buffer<S> {
    fn drop(&mut self) {
        instrument::release((self.data.len() * std::mem::size_of::<S>()) as u64);
    }
}

impl<S> std::ops::Deref for Buffer<S> {
    type Target = [S];
    fn deref(&self) -> &[S] {
        &self.data
    }
}

impl<S> std::ops::DerefMut for Buffer<S> {
    fn deref_mut(&mut self) -> &mut [S] {
        &mut self.data
    }
}

/// Gradient of the loss w.r.t. an op output, mapped to one optional
/// gradient per recorded input.
pub(crate) type BackwardFn<S> = Box<dyn FnOnce(&[S]) -> Result<Vec<Option<Vec<S>>>> + Send>;

pub(crate) struct GradFn<S: Scalar> {
    pub(crate) inputs: Vec<Tensor<S>>,
    pub(crate) backward: BackwardFn<S>,
}

struct Inner<S: Scalar> {
    id: u64,
    shape: Vec<usize>,
    buf: Arc<Buffer<S>>,
    requires_grad: bool,
    grad_fn: Mutex<Option<GradFn<S>>>,
    consumed: AtomicBool,
}

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

fn next_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

pub struct Tensor<S: Scalar = f64> {
    inner: Arc<Inner<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<S: Scalar> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.data();
        let preview: Vec<_> = data.iter().take(8).collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("data", &preview)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<S: Scalar> Tensor<S> {
    fn from_parts(shape: Vec<usize>, buf: Arc<Buffer<S>>, requires_grad: bool) -> Self {
        debug_assert_eq!(numel(&shape), buf.len());
        Tensor {
            inner: Arc::new(Inner {
                id: next_id(),
                shape,
                buf,
                requires_grad,
                grad_fn: Mutex::new(None),
                consumed: AtomicBool::new(false),
            }),
        }
    }

    /// Leaf tensor from row-major data.
    pub fn new(shape: &[usize], data: Vec<S>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "new",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(Self::from_parts(
            shape.to_vec(),
            Arc::new(Buffer::from_vec(data)?),
            false,
        ))
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| S::from_f64_lossy(v)).collect())
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Ok(Self::from_parts(
            shape.to_vec(),
            Arc::new(Buffer::zeros(numel(shape))?),
            false,
        ))
    }

    pub fn full(shape: &[usize], value: S) -> Result<Self> {
        Self::new(shape, vec![value; numel(shape)])
    }

    pub fn scalar(value: S) -> Result<Self> {
        Self::new(&[], vec![value])
    }

    /// A new leaf sharing this tensor's data, marked as requiring gradients.
    pub fn requires_grad_leaf(&self) -> Self {
        Self::from_parts(self.inner.shape.clone(), Arc::clone(&self.inner.buf), true)
    }

    /// A new leaf sharing this tensor's data, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::from_parts(self.inner.shape.clone(), Arc::clone(&self.inner.buf), false)
    }

    /// Element-wise conversion to another precision (leaf, no gradient).
    pub fn cast<T: Scalar>(&self) -> Result<Tensor<T>> {
        Tensor::new(
            self.shape(),
            self.data().iter().map(|v| T::from_f64_lossy(v.to_f64_lossy())).collect(),
        )
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.buf.len()
    }

    pub fn data(&self) -> &[S] {
        &self.inner.buf
    }

    pub fn to_vec(&self) -> Vec<S> {
        self.data().to_vec()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data().iter().map(|v| v.to_f64_lossy()).collect()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<S> {
        if self.numel() != 1 {
            return Err(TensorError::InvalidArgument {
                op: "item",
                reason: format!("tensor of shape {:?} is not a scalar", self.shape()),
            });
        }
        Ok(self.data()[0])
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Creation order; the tape is replayed by decreasing id.
    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub(crate) fn is_consumed(&self) -> bool {
        self.inner.consumed.load(Ordering::Acquire)
    }

    pub(crate) fn mark_consumed(&self) {
        self.inner.consumed.store(true, Ordering::Release);
    }

    pub(crate) fn take_grad_fn(&self) -> Option<GradFn<S>> {
        self.inner.grad_fn.lock().expect("grad_fn lock").take()
    }

    pub(crate) fn grad_fn_inputs(&self) -> Option<Vec<Tensor<S>>> {
        self.inner
            .grad_fn
            .lock()
            .expect("grad_fn lock")
            .as_ref()
            .map(|g| g.inputs.clone())
    }

    pub(crate) fn buffer(&self) -> Arc<Buffer<S>> {
        Arc::clone(&self.inner.buf)
    }

    /// Result of an op. The backward closure and the input references are
    /// kept only when some input requires gradients.
    pub(crate) fn from_op<F>(shape: Vec<usize>, buf: Buffer<S>, inputs: &[&Tensor<S>], backward: F) -> Self
    where
        F: FnOnce(&[S]) -> Result<Vec<Option<Vec<S>>>> + Send + 'static,
    {
        Self::from_op_shared(shape, Arc::new(buf), inputs, backward)
    }

    pub(crate) fn from_op_shared<F>(
        shape: Vec<usize>,
        buf: Arc<Buffer<S>>,
        inputs: &[&Tensor<S>],
        backward: F,
    ) -> Self
    where
        F: FnOnce(&[S]) -> Result<Vec<Option<Vec<S>>>> + Send + 'static,
    {
        let requires_grad = any_requires_grad(inputs);
        let t = Self::from_parts(shape, buf, requires_grad);
        if requires_grad {
            *t.inner.grad_fn.lock().expect("grad_fn lock") = Some(GradFn {
                inputs: inputs.iter().map(|&x| x.clone()).collect(),
                backward: Box::new(backward),
            });
        }
        t
    }

    /// Op with a user-supplied backward rule. `backward` receives the output
    /// gradient and returns one optional gradient per input, each with the
    /// input's element count.
    pub fn custom_op<F>(shape: &[usize], data: Vec<S>, inputs: &[&Tensor<S>], backward: F) -> Result<Self>
    where
        F: FnOnce(&[S]) -> Result<Vec<Option<Vec<S>>>> + Send + 'static,
    {
        if numel(shape) != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "custom_op",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(Self::from_op(shape.to_vec(), Buffer::from_vec(data)?, inputs, backward))
    }
}

pub(crate) fn any_requires_grad<S: Scalar>(inputs: &[&Tensor<S>]) -> bool {
    inputs.iter().any(|t| t.requires_grad())
}
