//! Softmax over a named axis, layer normalization, column renormalization.

use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};

/// Axis of a rank-2 tensor.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Axis {
    /// Down a column (normalizes each column over the N rows).
    Rows,
    /// Along a row (normalizes each row over the C columns).
    Cols,
}

impl<F: Scalar> Graph<F> {
    /// Softmax of an N x C tensor over the named axis.
    pub fn softmax(&self, a: &Tensor<F>, axis: Axis) -> Result<Tensor<F>, TensorError> {
        self.check_live("softmax")?;
        let (n, c) = a.dims2();
        let ad = a.data();
        let mut data = vec![F::zero(); n * c];
        match axis {
            Axis::Cols => {
                for (orow, arow) in data.chunks_mut(c).zip(ad.chunks(c)) {
                    softmax_slice(arow, orow, 1);
                }
            }
            Axis::Rows => {
                for j in 0..c {
                    let col: Vec<F> = (0..n).map(|i| ad[i * c + j]).collect();
                    let mut out = vec![F::zero(); n];
                    softmax_slice(&col, &mut out, 1);
                    for (i, v) in out.iter().enumerate() {
                        data[i * c + j] = *v;
                    }
                }
            }
        }
        drop(ad);
        let rg = a.requires_grad();
        let out = self.output("softmax", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let y = o.data();
                    let mut da = vec![F::zero(); n * c];
                    match axis {
                        Axis::Cols => {
                            for i in 0..n {
                                let ys = &y[i * c..(i + 1) * c];
                                let gs = &g[i * c..(i + 1) * c];
                                let dot = ys
                                    .iter()
                                    .zip(gs)
                                    .fold(F::zero(), |acc, (yv, gv)| acc + *yv * *gv);
                                for ((d, yv), gv) in
                                    da[i * c..(i + 1) * c].iter_mut().zip(ys).zip(gs)
                                {
                                    *d = *yv * (*gv - dot);
                                }
                            }
                        }
                        Axis::Rows => {
                            for j in 0..c {
                                let mut dot = F::zero();
                                for i in 0..n {
                                    dot = dot + y[i * c + j] * g[i * c + j];
                                }
                                for i in 0..n {
                                    da[i * c + j] = y[i * c + j] * (g[i * c + j] - dot);
                                }
                            }
                        }
                    }
                    drop(y);
                    a.accum_grad(&da);
                });
            }));
        }
        Ok(out)
    }

    /// Layer normalization over each row of an N x C tensor, with learned
    /// gain and bias of length C. Population variance, epsilon 1e-5.
    pub fn layer_norm(
        &self,
        a: &Tensor<F>,
        gain: &Tensor<F>,
        bias: &Tensor<F>,
    ) -> Result<Tensor<F>, TensorError> {
        self.check_live("layer_norm")?;
        let (n, c) = a.dims2();
        if gain.len() != c || bias.len() != c {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: a.shape().to_vec(),
                rhs: gain.shape().to_vec(),
            });
        }
        let eps = F::from_f64(1e-5);
        let inv_c = F::from_f64(1.0 / c as f64);
        let ad = a.data();
        let gd = gain.data();
        let bd = bias.data();
        let mut data = vec![F::zero(); n * c];
        let mut xhat = vec![F::zero(); n * c];
        let mut inv_std = vec![F::zero(); n];
        for i in 0..n {
            let row = &ad[i * c..(i + 1) * c];
            let mean = row.iter().fold(F::zero(), |acc, v| acc + *v) * inv_c;
            let var = row.iter().fold(F::zero(), |acc, v| {
                let d = *v - mean;
                acc + d * d
            }) * inv_c;
            let istd = F::one() / (var + eps).sqrt();
            inv_std[i] = istd;
            for j in 0..c {
                let xh = (row[j] - mean) * istd;
                xhat[i * c + j] = xh;
                data[i * c + j] = xh * gd[j] + bd[j];
            }
        }
        drop(ad);
        drop(gd);
        drop(bd);
        let rg = a.requires_grad() || gain.requires_grad() || bias.requires_grad();
        let out = self.output("layer_norm", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, gain, bias, o) = (a.clone(), gain.clone(), bias.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    if bias.requires_grad() {
                        let mut db = vec![F::zero(); c];
                        for row in g.chunks(c) {
                            for (d, gv) in db.iter_mut().zip(row) {
                                *d = *d + *gv;
                            }
                        }
                        bias.accum_grad(&db);
                    }
                    if gain.requires_grad() {
                        let mut dg = vec![F::zero(); c];
                        for (grow, xrow) in g.chunks(c).zip(xhat.chunks(c)) {
                            for ((d, gv), xv) in dg.iter_mut().zip(grow).zip(xrow) {
                                *d = *d + *gv * *xv;
                            }
                        }
                        gain.accum_grad(&dg);
                    }
                    if a.requires_grad() {
                        let gaind = gain.data();
                        let mut da = vec![F::zero(); n * c];
                        for i in 0..n {
                            let grow = &g[i * c..(i + 1) * c];
                            let xrow = &xhat[i * c..(i + 1) * c];
                            // dxhat = g * gain; then the standard layernorm input grad.
                            let mut m1 = F::zero(); // mean of dxhat
                            let mut m2 = F::zero(); // mean of dxhat * xhat
                            for j in 0..c {
                                let dxh = grow[j] * gaind[j];
                                m1 = m1 + dxh;
                                m2 = m2 + dxh * xrow[j];
                            }
                            m1 = m1 * inv_c;
                            m2 = m2 * inv_c;
                            for j in 0..c {
                                let dxh = grow[j] * gaind[j];
                                da[i * c + j] = inv_std[i] * (dxh - m1 - xrow[j] * m2);
                            }
                        }
                        drop(gaind);
                        a.accum_grad(&da);
                    }
                });
            }));
        }
        Ok(out)
    }

    /// Scale each column of a nonnegative N x K matrix to sum to one.
    pub fn normalize_cols(&self, a: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("normalize_cols")?;
        let (n, k) = a.dims2();
        let ad = a.data();
        let mut colsum = vec![F::zero(); k];
        for row in ad.chunks(k) {
            for (s, v) in colsum.iter_mut().zip(row) {
                *s = *s + *v;
            }
        }
        let mut data = vec![F::zero(); n * k];
        for (orow, arow) in data.chunks_mut(k).zip(ad.chunks(k)) {
            for ((o, v), s) in orow.iter_mut().zip(arow).zip(&colsum) {
                *o = *v / *s;
            }
        }
        drop(ad);
        let rg = a.requires_grad();
        let out = self.output("normalize_cols", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let y = o.data();
                    let mut dot = vec![F::zero(); k]; // sum_n g[n,k] * y[n,k]
                    for (grow, yrow) in g.chunks(k).zip(y.chunks(k)) {
                        for ((d, gv), yv) in dot.iter_mut().zip(grow).zip(yrow) {
                            *d = *d + *gv * *yv;
                        }
                    }
                    let mut da = vec![F::zero(); n * k];
                    for (drow, grow) in da.chunks_mut(k).zip(g.chunks(k)) {
                        for (j, (d, gv)) in drow.iter_mut().zip(grow).enumerate() {
                            *d = (*gv - dot[j]) / colsum[j];
                        }
                    }
                    drop(y);
                    a.accum_grad(&da);
                });
            }));
        }
        Ok(out)
    }
}

fn softmax_slice<F: Scalar>(input: &[F], out: &mut [F], _stride: usize) {
    let mut maxv = input[0];
    for v in input {
        if *v > maxv {
            maxv = *v;
        }
    }
    let mut sum = F::zero();
    for (o, v) in out.iter_mut().zip(input) {
        let e = (*v - maxv).exp();
        *o = e;
        sum = sum + e;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}
