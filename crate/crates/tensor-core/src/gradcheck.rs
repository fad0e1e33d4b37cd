//! Finite-difference gradient verification (64-bit only).

use crate::graph::Graph;
use crate::tensor::{Tensor, TensorError};

/// Check the analytic gradient of a scalar-valued function at `x` against
/// central differences.
///
/// Returns the max over coordinates of
/// `|analytic - numeric| / max(1, |analytic|)`.
///
/// `f` is evaluated on fresh graphs throughout; it must be a pure function
/// of its tensor argument. A non-scalar output is an error.
pub fn grad_check<Func>(f: Func, x: &[f64], shape: &[usize], eps: f64) -> Result<f64, TensorError>
where
    Func: Fn(&Graph<f64>, &Tensor<f64>) -> Result<Tensor<f64>, TensorError>,
{
    // Analytic pass.
    let g = Graph::<f64>::new();
    let xt = Tensor::param(x.to_vec(), shape)?;
    let y = f(&g, &xt)?;
    if y.len() != 1 {
        return Err(TensorError::NonScalarLoss { shape: y.shape().to_vec() });
    }
    g.backward(&y)?;
    let analytic = xt
        .take_grad()
        .ok_or_else(|| TensorError::Invalid { op: "grad_check", msg: "no gradient reached x".into() })?;

    // Central differences, one coordinate at a time.
    let mut max_rel = 0.0f64;
    let mut probe = x.to_vec();
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let fp = eval_scalar(&f, &probe, shape)?;
        probe[i] = orig - eps;
        let fm = eval_scalar(&f, &probe, shape)?;
        probe[i] = orig;
        let numeric = (fp - fm) / (2.0 * eps);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

fn eval_scalar<Func>(f: &Func, x: &[f64], shape: &[usize]) -> Result<f64, TensorError>
where
    Func: Fn(&Graph<f64>, &Tensor<f64>) -> Result<Tensor<f64>, TensorError>,
{
    let g = Graph::<f64>::new();
    let xt = Tensor::from_vec(x.to_vec(), shape)?;
    let y = f(&g, &xt)?;
    if y.len() != 1 {
        return Err(TensorError::NonScalarLoss { shape: y.shape().to_vec() });
    }
    Ok(y.item())
}
