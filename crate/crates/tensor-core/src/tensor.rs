//! Tensors: n-dimensional arrays with optional gradient participation.

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use crate::scalar::Scalar;

#[derive(thiserror::Error, Debug)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },

    #[error("{op}: invalid argument: {msg}")]
    Invalid { op: &'static str, msg: String },

    #[error("{op}: non-finite value in result")]
    NonFinite { op: &'static str },

    #[error("backward already ran on this graph; build a fresh graph to re-run")]
    TapeConsumed,

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("nan gradient for parameter `{name}`")]
    NanGradient { name: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Inner<F: Scalar> {
    shape: Vec<usize>,
    data: RefCell<Vec<F>>,
    grad: RefCell<Option<Vec<F>>>,
    requires_grad: std::cell::Cell<bool>,
}

/// A shared handle to an n-dimensional array.
///
/// Cloning a `Tensor` clones the handle, not the storage; parameter updates
/// through one handle are visible through all clones. Gradients are
/// accumulated into the tensor by [`crate::Graph::backward`].
pub struct Tensor<F: Scalar> {
    inner: Rc<Inner<F>>,
}

impl<F: Scalar> Clone for Tensor<F> {
    fn clone(&self) -> Self {
        Tensor { inner: Rc::clone(&self.inner) }
    }
}

impl<F: Scalar> Tensor<F> {
    fn build(data: Vec<F>, shape: Vec<usize>, requires_grad: bool) -> Result<Self, TensorError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(TensorError::Invalid {
                op: "tensor",
                msg: format!("shape {:?} holds {} elements, got {}", shape, n, data.len()),
            });
        }
        Ok(Tensor {
            inner: Rc::new(Inner {
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad: std::cell::Cell::new(requires_grad),
            }),
        })
    }

    /// A constant (non-differentiable) tensor.
    pub fn from_vec(data: Vec<F>, shape: &[usize]) -> Result<Self, TensorError> {
        Self::build(data, shape.to_vec(), false)
    }

    /// A trainable leaf: participates in the tape and accumulates gradient.
    pub fn param(data: Vec<F>, shape: &[usize]) -> Result<Self, TensorError> {
        Self::build(data, shape.to_vec(), true)
    }

    pub(crate) fn raw(data: Vec<F>, shape: Vec<usize>, requires_grad: bool) -> Self {
        Self::build(data, shape, requires_grad).expect("internal shape bug")
    }

    pub fn scalar(v: F) -> Self {
        Self::raw(vec![v], vec![1], false)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::raw(vec![F::zero(); n], shape.to_vec(), false)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn len(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows/cols view of a rank-2 tensor; rank-1 is treated as a single row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.inner.shape.len() {
            1 => (1, self.inner.shape[0]),
            2 => (self.inner.shape[0], self.inner.shape[1]),
            _ => panic!("dims2 on rank-{} tensor", self.inner.shape.len()),
        }
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad.get()
    }

    /// Permanently exclude this tensor from tape recording (used to freeze
    /// pretrained modules).
    pub fn freeze(&self) {
        self.inner.requires_grad.set(false);
    }

    pub fn data(&self) -> Ref<'_, Vec<F>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<F> {
        self.inner.data.borrow().clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.inner.data.borrow().iter().map(|v| v.as_f64()).collect()
    }

    /// The single element of a 1-element tensor.
    pub fn item(&self) -> F {
        let d = self.inner.data.borrow();
        assert_eq!(d.len(), 1, "item() on tensor of {} elements", d.len());
        d[0]
    }

    /// Overwrite the storage in place (shapes must match).
    pub fn set_data(&self, new: &[F]) {
        let mut d = self.inner.data.borrow_mut();
        assert_eq!(d.len(), new.len(), "set_data length mismatch");
        d.copy_from_slice(new);
    }

    /// Apply an in-place update to the storage.
    pub fn update_data(&self, f: impl FnOnce(&mut [F])) {
        let mut d = self.inner.data.borrow_mut();
        f(&mut d);
    }

    pub fn grad(&self) -> Option<Vec<F>> {
        self.inner.grad.borrow().clone()
    }

    pub fn take_grad(&self) -> Option<Vec<F>> {
        self.inner.grad.borrow_mut().take()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn accum_grad(&self, contrib: &[F]) {
        debug_assert_eq!(contrib.len(), self.len());
        let mut g = self.inner.grad.borrow_mut();
        match g.as_mut() {
            Some(v) => {
                for (a, b) in v.iter_mut().zip(contrib) {
                    *a = *a + *b;
                }
            }
            None => *g = Some(contrib.to_vec()),
        }
    }

    /// Accumulate into a contiguous window of the gradient buffer.
    pub(crate) fn accum_grad_at(&self, offset: usize, contrib: &[F]) {
        let mut g = self.inner.grad.borrow_mut();
        let v = g.get_or_insert_with(|| vec![F::zero(); self.len()]);
        for (a, b) in v[offset..offset + contrib.len()].iter_mut().zip(contrib) {
            *a = *a + *b;
        }
    }

    /// Run `f` over the current gradient (if any) without cloning it.
    pub(crate) fn with_grad<R>(&self, f: impl FnOnce(Option<&[F]>) -> R) -> R {
        let g = self.inner.grad.borrow();
        f(g.as_deref())
    }

    /// Same data viewed through a handle that never records on the tape.
    pub fn detached(&self) -> Tensor<F> {
        Tensor::raw(self.to_vec(), self.inner.shape.clone(), false)
    }
}

impl<F: Scalar> std::fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor{:?}{}",
            self.inner.shape,
            if self.inner.requires_grad.get() { " (grad)" } else { "" }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_must_match_data_len() {
        assert!(Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0], &[2, 2]).is_err());
        assert!(Tensor::<f64>::from_vec(vec![1.0; 4], &[2, 2]).is_ok());
    }

    #[test]
    fn grad_accumulates() {
        let t = Tensor::<f64>::param(vec![0.0; 3], &[3]).unwrap();
        t.accum_grad(&[1.0, 2.0, 3.0]);
        t.accum_grad(&[1.0, 1.0, 1.0]);
        assert_eq!(t.grad().unwrap(), vec![2.0, 3.0, 4.0]);
        t.zero_grad();
        assert!(t.grad().is_none());
    }

    #[test]
    fn clones_share_storage() {
        let t = Tensor::<f64>::param(vec![1.0, 2.0], &[2]).unwrap();
        let u = t.clone();
        t.set_data(&[5.0, 6.0]);
        assert_eq!(u.to_vec(), vec![5.0, 6.0]);
    }
}
