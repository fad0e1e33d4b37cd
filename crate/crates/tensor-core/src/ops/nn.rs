//! Composed neural-net building blocks: linear layers, the GRU cell,
//! and a stable log-sum-exp.

use crate::graph::Graph;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};

/// Glorot-uniform initialized weight matrix.
pub fn glorot<F: Scalar>(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor<F> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<F> = (0..rows * cols).map(|_| F::from_f64(rng.range(-limit, limit))).collect();
    Tensor::param(data, &[rows, cols]).expect("glorot shape")
}

/// Zero-initialized parameter vector.
pub fn zeros_param<F: Scalar>(len: usize) -> Tensor<F> {
    Tensor::param(vec![F::zero(); len], &[len]).expect("zeros shape")
}

/// Weights of a GRU cell mapping (x: N x d_in, h: N x d_h) -> N x d_h.
pub struct GruParams<F: Scalar> {
    pub w_ir: Tensor<F>,
    pub w_iz: Tensor<F>,
    pub w_in: Tensor<F>,
    pub w_hr: Tensor<F>,
    pub w_hz: Tensor<F>,
    pub w_hn: Tensor<F>,
    pub b_ir: Tensor<F>,
    pub b_iz: Tensor<F>,
    pub b_in: Tensor<F>,
    pub b_hr: Tensor<F>,
    pub b_hz: Tensor<F>,
    pub b_hn: Tensor<F>,
}

impl<F: Scalar> GruParams<F> {
    pub fn init(d_in: usize, d_h: usize, rng: &mut RngStream) -> Self {
        GruParams {
            w_ir: glorot(d_in, d_h, rng),
            w_iz: glorot(d_in, d_h, rng),
            w_in: glorot(d_in, d_h, rng),
            w_hr: glorot(d_h, d_h, rng),
            w_hz: glorot(d_h, d_h, rng),
            w_hn: glorot(d_h, d_h, rng),
            b_ir: zeros_param(d_h),
            b_iz: zeros_param(d_h),
            b_in: zeros_param(d_h),
            b_hr: zeros_param(d_h),
            b_hz: zeros_param(d_h),
            b_hn: zeros_param(d_h),
        }
    }

    pub fn named(&self, prefix: &str) -> Vec<(String, Tensor<F>)> {
        [
            ("w_ir", &self.w_ir), ("w_iz", &self.w_iz), ("w_in", &self.w_in),
            ("w_hr", &self.w_hr), ("w_hz", &self.w_hz), ("w_hn", &self.w_hn),
            ("b_ir", &self.b_ir), ("b_iz", &self.b_iz), ("b_in", &self.b_in),
            ("b_hr", &self.b_hr), ("b_hz", &self.b_hz), ("b_hn", &self.b_hn),
        ]
        .into_iter()
        .map(|(k, t)| (format!("{prefix}.{k}"), t.clone()))
        .collect()
    }
}

impl<F: Scalar> Graph<F> {
    /// `x * w + b` with the bias broadcast over rows.
    pub fn linear(
        &self,
        x: &Tensor<F>,
        w: &Tensor<F>,
        b: &Tensor<F>,
    ) -> Result<Tensor<F>, TensorError> {
        let y = self.matmul(x, w)?;
        self.bias_add(&y, b)
    }

    /// Standard GRU cell:
    /// r = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
    /// z = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
    /// n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
    /// h' = (1 - z) * n + z * h
    pub fn gru_cell(
        &self,
        x: &Tensor<F>,
        h: &Tensor<F>,
        p: &GruParams<F>,
    ) -> Result<Tensor<F>, TensorError> {
        let r = {
            let xi = self.linear(x, &p.w_ir, &p.b_ir)?;
            let hi = self.linear(h, &p.w_hr, &p.b_hr)?;
            self.sigmoid(&self.add(&xi, &hi)?)?
        };
        let z = {
            let xi = self.linear(x, &p.w_iz, &p.b_iz)?;
            let hi = self.linear(h, &p.w_hz, &p.b_hz)?;
            self.sigmoid(&self.add(&xi, &hi)?)?
        };
        let n = {
            let xi = self.linear(x, &p.w_in, &p.b_in)?;
            let hi = self.linear(h, &p.w_hn, &p.b_hn)?;
            let gated = self.mul(&r, &hi)?;
            self.tanh(&self.add(&xi, &gated)?)?
        };
        let ones = Tensor::raw(vec![F::one(); z.len()], z.shape().to_vec(), false);
        let keep = self.sub(&ones, &z)?;
        self.add(&self.mul(&keep, &n)?, &self.mul(&z, h)?)
    }

    /// log(sum(exp(x))) over all elements of a vector, stabilized by the
    /// (detached) max. Gradient is exactly softmax(x).
    pub fn logsumexp(&self, x: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        let maxv = {
            let d = x.data();
            d.iter().fold(F::neg_infinity(), |acc, v| acc.max(*v))
        };
        let shifted = self.add_const(x, -maxv)?;
        let summed = self.sum_all(&self.exp(&shifted)?)?;
        self.add_const(&self.log(&summed)?, maxv)
    }
}
