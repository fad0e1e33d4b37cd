//! Ordered, named parameter collections.

use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};

/// An ordered list of named parameter tensors.
///
/// The order is canonical: the optimizer, checkpoints and snapshots all walk
/// it in sequence, which keeps training updates and serialization
/// deterministic.
pub struct ParamSet<F: Scalar> {
    entries: Vec<(String, Tensor<F>)>,
}

/// Plain-data copy of a parameter set; safe to move across threads.
pub type ParamSnapshot<F> = Vec<(String, Vec<F>, Vec<usize>)>;

impl<F: Scalar> ParamSet<F> {
    pub fn new(entries: Vec<(String, Tensor<F>)>) -> Self {
        ParamSet { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, Tensor<F>)> {
        self.entries.iter()
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<F>> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Freeze every parameter (no tape participation, no gradients).
    pub fn freeze(&self) {
        for (_, t) in &self.entries {
            t.freeze();
        }
    }

    pub fn zero_grads(&self) {
        for (_, t) in &self.entries {
            t.zero_grad();
        }
    }

    /// Collect gradients in canonical order (zeros where a parameter
    /// received none).
    pub fn take_grads(&self) -> Vec<Vec<F>> {
        self.entries
            .iter()
            .map(|(_, t)| t.take_grad().unwrap_or_else(|| vec![F::zero(); t.len()]))
            .collect()
    }

    pub fn snapshot(&self) -> ParamSnapshot<F> {
        self.entries
            .iter()
            .map(|(n, t)| (n.clone(), t.to_vec(), t.shape().to_vec()))
            .collect()
    }

    /// Overwrite parameter data from a snapshot (names and shapes must match).
    pub fn restore(&self, snap: &ParamSnapshot<F>) -> Result<(), TensorError> {
        if snap.len() != self.entries.len() {
            return Err(TensorError::Checkpoint(format!(
                "snapshot has {} entries, parameter set has {}",
                snap.len(),
                self.entries.len()
            )));
        }
        for ((name, tensor), (sname, sdata, sshape)) in self.entries.iter().zip(snap) {
            if name != sname || tensor.shape() != sshape.as_slice() {
                return Err(TensorError::Checkpoint(format!(
                    "snapshot entry `{sname}` {sshape:?} does not match parameter `{name}` {:?}",
                    tensor.shape()
                )));
            }
            tensor.set_data(sdata);
        }
        Ok(())
    }

    /// Round every value to f32 precision in place. Storage precision of the
    /// checkpoint format is f32; quantizing live state on save makes
    /// "save and continue" coincide bitwise with "save, reload, continue".
    pub fn quantize_to_f32(&self) {
        for (_, t) in &self.entries {
            t.update_data(|d| {
                for v in d.iter_mut() {
                    *v = F::from_f64(v.as_f64() as f32 as f64);
                }
            });
        }
    }
}

impl<F: Scalar> std::fmt::Debug for ParamSet<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ParamSet({} tensors, {} values)", self.len(), self.num_values())
    }
}
