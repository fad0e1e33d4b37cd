//! The tape. Records forward operations, replays them in reverse.

use std::cell::{Cell, RefCell};

use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};

/// A reverse-mode tape over tensors of one precision.
///
/// A graph is single-use: build the forward computation, call
/// [`Graph::backward`] once, then drop it. Running backward a second time,
/// or recording new operations afterwards, is an error rather than silent
/// gradient accumulation. One graph must stay on one thread; independent
/// graphs may run concurrently.
pub struct Graph<F: Scalar> {
    tape: RefCell<Vec<Box<dyn Fn()>>>,
    consumed: Cell<bool>,
    _precision: std::marker::PhantomData<F>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph {
            tape: RefCell::new(Vec::new()),
            consumed: Cell::new(false),
            _precision: std::marker::PhantomData,
        }
    }

    pub(crate) fn check_live(&self, op: &'static str) -> Result<(), TensorError> {
        if self.consumed.get() {
            let _ = op;
            return Err(TensorError::TapeConsumed);
        }
        Ok(())
    }

    /// Finish an op: verify the result is finite and hand out the tensor.
    pub(crate) fn output(
        &self,
        op: &'static str,
        data: Vec<F>,
        shape: Vec<usize>,
        requires_grad: bool,
    ) -> Result<Tensor<F>, TensorError> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op });
        }
        Ok(Tensor::raw(data, shape, requires_grad))
    }

    /// Record a backward step for an op whose output requires grad.
    pub(crate) fn record(&self, backward: Box<dyn Fn()>) {
        self.tape.borrow_mut().push(backward);
    }

    pub fn num_recorded(&self) -> usize {
        self.tape.borrow().len()
    }

    /// Backpropagate from a scalar loss, accumulating gradients into every
    /// tensor on the tape that requires grad. Consumes the tape.
    pub fn backward(&self, loss: &Tensor<F>) -> Result<(), TensorError> {
        if self.consumed.get() {
            return Err(TensorError::TapeConsumed);
        }
        if loss.len() != 1 {
            return Err(TensorError::NonScalarLoss { shape: loss.shape().to_vec() });
        }
        self.consumed.set(true);
        loss.accum_grad(&[F::one()]);
        let tape = std::mem::take(&mut *self.tape.borrow_mut());
        for step in tape.iter().rev() {
            step();
        }
        Ok(())
    }
}
