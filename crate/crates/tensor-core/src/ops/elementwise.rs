//! Elementwise arithmetic, activations, reductions, and the two permitted
//! broadcast forms (bias-add over rows, per-row scaling).

use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};

fn same_shape<F: Scalar>(op: &'static str, a: &Tensor<F>, b: &Tensor<F>) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

impl<F: Scalar> Graph<F> {
    pub fn add(&self, a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("add")?;
        same_shape("add", a, b)?;
        let data: Vec<F> = a.data().iter().zip(b.data().iter()).map(|(x, y)| *x + *y).collect();
        let rg = a.requires_grad() || b.requires_grad();
        let out = self.output("add", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, b, o) = (a.clone(), b.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    if a.requires_grad() {
                        a.accum_grad(g);
                    }
                    if b.requires_grad() {
                        b.accum_grad(g);
                    }
                });
            }));
        }
        Ok(out)
    }

    pub fn sub(&self, a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("sub")?;
        same_shape("sub", a, b)?;
        let data: Vec<F> = a.data().iter().zip(b.data().iter()).map(|(x, y)| *x - *y).collect();
        let rg = a.requires_grad() || b.requires_grad();
        let out = self.output("sub", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, b, o) = (a.clone(), b.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    if a.requires_grad() {
                        a.accum_grad(g);
                    }
                    if b.requires_grad() {
                        let neg: Vec<F> = g.iter().map(|v| -*v).collect();
                        b.accum_grad(&neg);
                    }
                });
            }));
        }
        Ok(out)
    }

    pub fn mul(&self, a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("mul")?;
        same_shape("mul", a, b)?;
        let data: Vec<F> = a.data().iter().zip(b.data().iter()).map(|(x, y)| *x * *y).collect();
        let rg = a.requires_grad() || b.requires_grad();
        let out = self.output("mul", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, b, o) = (a.clone(), b.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    if a.requires_grad() {
                        let da: Vec<F> =
                            g.iter().zip(b.data().iter()).map(|(gi, bi)| *gi * *bi).collect();
                        a.accum_grad(&da);
                    }
                    if b.requires_grad() {
                        let db: Vec<F> =
                            g.iter().zip(a.data().iter()).map(|(gi, ai)| *gi * *ai).collect();
                        b.accum_grad(&db);
                    }
                });
            }));
        }
        Ok(out)
    }

    pub fn div(&self, a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("div")?;
        same_shape("div", a, b)?;
        let data: Vec<F> = a.data().iter().zip(b.data().iter()).map(|(x, y)| *x / *y).collect();
        let rg = a.requires_grad() || b.requires_grad();
        let out = self.output("div", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, b, o) = (a.clone(), b.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    if a.requires_grad() {
                        let da: Vec<F> =
                            g.iter().zip(b.data().iter()).map(|(gi, bi)| *gi / *bi).collect();
                        a.accum_grad(&da);
                    }
                    if b.requires_grad() {
                        let bd = b.data();
                        let ad = a.data();
                        let db: Vec<F> = g
                            .iter()
                            .zip(ad.iter().zip(bd.iter()))
                            .map(|(gi, (ai, bi))| -*gi * *ai / (*bi * *bi))
                            .collect();
                        drop(ad);
                        drop(bd);
                        b.accum_grad(&db);
                    }
                });
            }));
        }
        Ok(out)
    }

    /// Multiply by a compile-time constant.
    pub fn scale(&self, a: &Tensor<F>, c: F) -> Result<Tensor<F>, TensorError> {
        self.check_live("scale")?;
        let data: Vec<F> = a.data().iter().map(|x| *x * c).collect();
        let rg = a.requires_grad();
        let out = self.output("scale", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let da: Vec<F> = g.iter().map(|gi| *gi * c).collect();
                    a.accum_grad(&da);
                });
            }));
        }
        Ok(out)
    }

    /// Add a compile-time constant.
    pub fn add_const(&self, a: &Tensor<F>, c: F) -> Result<Tensor<F>, TensorError> {
        self.check_live("add_const")?;
        let data: Vec<F> = a.data().iter().map(|x| *x + c).collect();
        let rg = a.requires_grad();
        let out = self.output("add_const", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    if let Some(g) = og {
                        a.accum_grad(g);
                    }
                });
            }));
        }
        Ok(out)
    }

    pub fn relu(&self, a: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("relu")?;
        let z = F::zero();
        let data: Vec<F> = a.data().iter().map(|x| if *x > z { *x } else { z }).collect();
        let rg = a.requires_grad();
        let out = self.output("relu", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let da: Vec<F> = g
                        .iter()
                        .zip(a.data().iter())
                        .map(|(gi, xi)| if *xi > F::zero() { *gi } else { F::zero() })
                        .collect();
                    a.accum_grad(&da);
                });
            }));
        }
        Ok(out)
    }

    pub fn sigmoid(&self, a: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("sigmoid")?;
        let one = F::one();
        let data: Vec<F> = a
            .data()
            .iter()
            .map(|x| {
                if *x >= F::zero() {
                    one / (one + (-*x).exp())
                } else {
                    let e = x.exp();
                    e / (one + e)
                }
            })
            .collect();
        let rg = a.requires_grad();
        let out = self.output("sigmoid", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let da: Vec<F> = g
                        .iter()
                        .zip(o.data().iter())
                        .map(|(gi, yi)| *gi * *yi * (F::one() - *yi))
                        .collect();
                    a.accum_grad(&da);
                });
            }));
        }
        Ok(out)
    }

    pub fn tanh(&self, a: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("tanh")?;
        let data: Vec<F> = a.data().iter().map(|x| x.tanh()).collect();
        let rg = a.requires_grad();
        let out = self.output("tanh", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let da: Vec<F> = g
                        .iter()
                        .zip(o.data().iter())
                        .map(|(gi, yi)| *gi * (F::one() - *yi * *yi))
                        .collect();
                    a.accum_grad(&da);
                });
            }));
        }
        Ok(out)
    }

    pub fn exp(&self, a: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("exp")?;
        let data: Vec<F> = a.data().iter().map(|x| x.exp()).collect();
        let rg = a.requires_grad();
        let out = self.output("exp", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let da: Vec<F> =
                        g.iter().zip(o.data().iter()).map(|(gi, yi)| *gi * *yi).collect();
                    a.accum_grad(&da);
                });
            }));
        }
        Ok(out)
    }

    pub fn log(&self, a: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("log")?;
        let data: Vec<F> = a.data().iter().map(|x| x.ln()).collect();
        let rg = a.requires_grad();
        let out = self.output("log", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let da: Vec<F> =
                        g.iter().zip(a.data().iter()).map(|(gi, xi)| *gi / *xi).collect();
                    a.accum_grad(&da);
                });
            }));
        }
        Ok(out)
    }

    /// Numerically stable `ln(1 + e^x)`.
    pub fn softplus(&self, a: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("softplus")?;
        let z = F::zero();
        let data: Vec<F> = a
            .data()
            .iter()
            .map(|x| x.max(z) + (-x.abs()).exp().ln_1p())
            .collect();
        let rg = a.requires_grad();
        let out = self.output("softplus", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let one = F::one();
                    let da: Vec<F> = g
                        .iter()
                        .zip(a.data().iter())
                        .map(|(gi, xi)| {
                            let s = if *xi >= F::zero() {
                                one / (one + (-*xi).exp())
                            } else {
                                let e = xi.exp();
                                e / (one + e)
                            };
                            *gi * s
                        })
                        .collect();
                    a.accum_grad(&da);
                });
            }));
        }
        Ok(out)
    }

    /// Add a length-C bias vector to every row of an N x C tensor.
    pub fn bias_add(&self, a: &Tensor<F>, bias: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("bias_add")?;
        let (n, c) = a.dims2();
        if bias.len() != c {
            return Err(TensorError::ShapeMismatch {
                op: "bias_add",
                lhs: a.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        let mut data = a.to_vec();
        {
            let b = bias.data();
            for row in data.chunks_mut(c) {
                for (v, bv) in row.iter_mut().zip(b.iter()) {
                    *v = *v + *bv;
                }
            }
        }
        let rg = a.requires_grad() || bias.requires_grad();
        let out = self.output("bias_add", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, bias, o) = (a.clone(), bias.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    if a.requires_grad() {
                        a.accum_grad(g);
                    }
                    if bias.requires_grad() {
                        let mut db = vec![F::zero(); c];
                        for row in g.chunks(c) {
                            for (d, gv) in db.iter_mut().zip(row) {
                                *d = *d + *gv;
                            }
                        }
                        bias.accum_grad(&db);
                    }
                });
            }));
            let _ = n;
        }
        Ok(out)
    }

    /// Multiply every row of an N x C tensor elementwise by a length-C vector.
    pub fn mul_row(&self, a: &Tensor<F>, row: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("mul_row")?;
        let (_, c) = a.dims2();
        if row.len() != c {
            return Err(TensorError::ShapeMismatch {
                op: "mul_row",
                lhs: a.shape().to_vec(),
                rhs: row.shape().to_vec(),
            });
        }
        let mut data = a.to_vec();
        {
            let r = row.data();
            for chunk in data.chunks_mut(c) {
                for (v, rv) in chunk.iter_mut().zip(r.iter()) {
                    *v = *v * *rv;
                }
            }
        }
        let rg = a.requires_grad() || row.requires_grad();
        let out = self.output("mul_row", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, row, o) = (a.clone(), row.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    if a.requires_grad() {
                        let r = row.data();
                        let mut da = vec![F::zero(); g.len()];
                        for (dc, gc) in da.chunks_mut(c).zip(g.chunks(c)) {
                            for ((d, gv), rv) in dc.iter_mut().zip(gc).zip(r.iter()) {
                                *d = *gv * *rv;
                            }
                        }
                        drop(r);
                        a.accum_grad(&da);
                    }
                    if row.requires_grad() {
                        let ad = a.data();
                        let mut dr = vec![F::zero(); c];
                        for (gc, ac) in g.chunks(c).zip(ad.chunks(c)) {
                            for ((d, gv), av) in dr.iter_mut().zip(gc).zip(ac) {
                                *d = *d + *gv * *av;
                            }
                        }
                        drop(ad);
                        row.accum_grad(&dr);
                    }
                });
            }));
        }
        Ok(out)
    }

    /// Multiply row n of an N x C tensor by element n of a length-N vector.
    pub fn scale_rows(&self, a: &Tensor<F>, s: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("scale_rows")?;
        let (n, c) = a.dims2();
        if s.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "scale_rows",
                lhs: a.shape().to_vec(),
                rhs: s.shape().to_vec(),
            });
        }
        let mut data = a.to_vec();
        {
            let sv = s.data();
            for (chunk, f) in data.chunks_mut(c).zip(sv.iter()) {
                for v in chunk.iter_mut() {
                    *v = *v * *f;
                }
            }
        }
        let rg = a.requires_grad() || s.requires_grad();
        let out = self.output("scale_rows", data, a.shape().to_vec(), rg)?;
        if rg {
            let (a, s, o) = (a.clone(), s.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    if a.requires_grad() {
                        let sv = s.data();
                        let mut da = vec![F::zero(); g.len()];
                        for ((dc, gc), f) in da.chunks_mut(c).zip(g.chunks(c)).zip(sv.iter()) {
                            for (d, gv) in dc.iter_mut().zip(gc) {
                                *d = *gv * *f;
                            }
                        }
                        drop(sv);
                        a.accum_grad(&da);
                    }
                    if s.requires_grad() {
                        let ad = a.data();
                        let mut ds = vec![F::zero(); n];
                        for ((d, gc), ac) in ds.iter_mut().zip(g.chunks(c)).zip(ad.chunks(c)) {
                            for (gv, av) in gc.iter().zip(ac) {
                                *d = *d + *gv * *av;
                            }
                        }
                        drop(ad);
                        s.accum_grad(&ds);
                    }
                });
            }));
        }
        Ok(out)
    }

    /// Sum of all elements, as a 1-element tensor.
    pub fn sum_all(&self, a: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("sum_all")?;
        let s = a.data().iter().fold(F::zero(), |acc, v| acc + *v);
        let rg = a.requires_grad();
        let out = self.output("sum_all", vec![s], vec![1], rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let da = vec![g[0]; a.len()];
                    a.accum_grad(&da);
                });
            }));
        }
        Ok(out)
    }

    /// Mean of all elements, as a 1-element tensor.
    pub fn mean_all(&self, a: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("mean_all")?;
        let n = a.len();
        if n == 0 {
            return Err(TensorError::Invalid { op: "mean_all", msg: "empty tensor".into() });
        }
        let inv = F::from_f64(1.0 / n as f64);
        let s = a.data().iter().fold(F::zero(), |acc, v| acc + *v) * inv;
        let rg = a.requires_grad();
        let out = self.output("mean_all", vec![s], vec![1], rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let da = vec![g[0] * inv; a.len()];
                    a.accum_grad(&da);
                });
            }));
        }
        Ok(out)
    }

    /// Per-row sums of an N x C tensor, shape N x 1.
    pub fn sum_rows(&self, a: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("sum_rows")?;
        let (n, c) = a.dims2();
        let data: Vec<F> =
            a.data().chunks(c).map(|row| row.iter().fold(F::zero(), |acc, v| acc + *v)).collect();
        let rg = a.requires_grad();
        let out = self.output("sum_rows", data, vec![n, 1], rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let mut da = vec![F::zero(); n * c];
                    for (chunk, gv) in da.chunks_mut(c).zip(g.iter()) {
                        for d in chunk.iter_mut() {
                            *d = *gv;
                        }
                    }
                    a.accum_grad(&da);
                });
            }));
        }
        Ok(out)
    }

    /// Mean over the row axis of an N x C tensor, shape 1 x C.
    pub fn col_mean(&self, a: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("col_mean")?;
        let (n, c) = a.dims2();
        let inv = F::from_f64(1.0 / n as f64);
        let mut data = vec![F::zero(); c];
        for row in a.data().chunks(c) {
            for (d, v) in data.iter_mut().zip(row) {
                *d = *d + *v;
            }
        }
        for d in data.iter_mut() {
            *d = *d * inv;
        }
        let rg = a.requires_grad();
        let out = self.output("col_mean", data, vec![1, c], rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let mut da = vec![F::zero(); n * c];
                    for chunk in da.chunks_mut(c) {
                        for (d, gv) in chunk.iter_mut().zip(g.iter()) {
                            *d = *gv * inv;
                        }
                    }
                    a.accum_grad(&da);
                });
            }));
        }
        Ok(out)
    }
}
