//! Matrix product, transpose, reshape, slicing, concatenation, embedding.

use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};

impl<F: Scalar> Graph<F> {
    /// `a (N x M) * b (M x P) -> N x P`.
    pub fn matmul(&self, a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("matmul")?;
        let (n, m) = a.dims2();
        let (mb, p) = b.dims2();
        if m != mb {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let mut data = vec![F::zero(); n * p];
        F::gemm(n, m, p, F::one(), &a.data(), &b.data(), F::zero(), &mut data);
        let rg = a.requires_grad() || b.requires_grad();
        let out = self.output("matmul", data, vec![n, p], rg)?;
        if rg {
            let (a, b, o) = (a.clone(), b.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    if a.requires_grad() {
                        // dA = G * B^T, done with stride-swapped B.
                        let mut da = vec![F::zero(); n * m];
                        F::gemm_strided(
                            n, p, m, F::one(), g, p as isize, 1,
                            &b.data(), 1, p as isize, F::zero(), &mut da,
                        );
                        a.accum_grad(&da);
                    }
                    if b.requires_grad() {
                        // dB = A^T * G, done with stride-swapped A.
                        let mut db = vec![F::zero(); m * p];
                        F::gemm_strided(
                            m, n, p, F::one(), &a.data(), 1, m as isize,
                            g, p as isize, 1, F::zero(), &mut db,
                        );
                        b.accum_grad(&db);
                    }
                });
            }));
        }
        Ok(out)
    }

    pub fn transpose(&self, a: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
        self.check_live("transpose")?;
        let (n, c) = a.dims2();
        let ad = a.data();
        let mut data = vec![F::zero(); n * c];
        for i in 0..n {
            for j in 0..c {
                data[j * n + i] = ad[i * c + j];
            }
        }
        drop(ad);
        let rg = a.requires_grad();
        let out = self.output("transpose", data, vec![c, n], rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let mut da = vec![F::zero(); n * c];
                    for j in 0..c {
                        for i in 0..n {
                            da[i * c + j] = g[j * n + i];
                        }
                    }
                    a.accum_grad(&da);
                });
            }));
        }
        Ok(out)
    }

    /// Same data, new shape (element counts must agree).
    pub fn reshape(&self, a: &Tensor<F>, shape: &[usize]) -> Result<Tensor<F>, TensorError> {
        self.check_live("reshape")?;
        let n: usize = shape.iter().product();
        if n != a.len() {
            return Err(TensorError::Invalid {
                op: "reshape",
                msg: format!("cannot view {:?} as {:?}", a.shape(), shape),
            });
        }
        let rg = a.requires_grad();
        let out = self.output("reshape", a.to_vec(), shape.to_vec(), rg)?;
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

    /// Rows [start, start+len) of an N x C tensor.
    pub fn slice_rows(
        &self,
        a: &Tensor<F>,
        start: usize,
        len: usize,
    ) -> Result<Tensor<F>, TensorError> {
        self.check_live("slice_rows")?;
        let (n, c) = a.dims2();
        if start + len > n {
            return Err(TensorError::Invalid {
                op: "slice_rows",
                msg: format!("rows {}..{} out of {}", start, start + len, n),
            });
        }
        let data = a.data()[start * c..(start + len) * c].to_vec();
        let rg = a.requires_grad();
        let out = self.output("slice_rows", data, vec![len, c], rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    if let Some(g) = og {
                        a.accum_grad_at(start * c, g);
                    }
                });
            }));
        }
        Ok(out)
    }

    /// Columns [start, start+len) of an N x C tensor.
    pub fn slice_cols(
        &self,
        a: &Tensor<F>,
        start: usize,
        len: usize,
    ) -> Result<Tensor<F>, TensorError> {
        self.check_live("slice_cols")?;
        let (n, c) = a.dims2();
        if start + len > c {
            return Err(TensorError::Invalid {
                op: "slice_cols",
                msg: format!("cols {}..{} out of {}", start, start + len, c),
            });
        }
        let ad = a.data();
        let mut data = Vec::with_capacity(n * len);
        for row in ad.chunks(c) {
            data.extend_from_slice(&row[start..start + len]);
        }
        drop(ad);
        let rg = a.requires_grad();
        let out = self.output("slice_cols", data, vec![n, len], rg)?;
        if rg {
            let (a, o) = (a.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let mut da = vec![F::zero(); n * c];
                    for (drow, grow) in da.chunks_mut(c).zip(g.chunks(len)) {
                        drow[start..start + len].copy_from_slice(grow);
                    }
                    a.accum_grad(&da);
                });
            }));
        }
        Ok(out)
    }

    /// Stack tensors with equal column counts on top of each other.
    pub fn concat_rows(&self, parts: &[&Tensor<F>]) -> Result<Tensor<F>, TensorError> {
        self.check_live("concat_rows")?;
        if parts.is_empty() {
            return Err(TensorError::Invalid { op: "concat_rows", msg: "no operands".into() });
        }
        let (_, c) = parts[0].dims2();
        let mut total_rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let (pn, pc) = p.dims2();
            if pc != c {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: parts[0].shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            total_rows += pn;
            data.extend_from_slice(&p.data());
        }
        let rg = parts.iter().any(|p| p.requires_grad());
        let out = self.output("concat_rows", data, vec![total_rows, c], rg)?;
        if rg {
            let owned: Vec<Tensor<F>> = parts.iter().map(|p| (*p).clone()).collect();
            let o = out.clone();
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let mut offset = 0;
                    for p in &owned {
                        let len = p.len();
                        if p.requires_grad() {
                            p.accum_grad(&g[offset..offset + len]);
                        }
                        offset += len;
                    }
                });
            }));
        }
        Ok(out)
    }

    /// Concatenate tensors with equal row counts side by side.
    pub fn concat_cols(&self, parts: &[&Tensor<F>]) -> Result<Tensor<F>, TensorError> {
        self.check_live("concat_cols")?;
        if parts.is_empty() {
            return Err(TensorError::Invalid { op: "concat_cols", msg: "no operands".into() });
        }
        let (n, _) = parts[0].dims2();
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                let (pn, pc) = p.dims2();
                if pn != n {
                    0 // flagged below
                } else {
                    pc
                }
            })
            .collect();
        for (p, w) in parts.iter().zip(&widths) {
            if *w == 0 {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: parts[0].shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        let total_c: usize = widths.iter().sum();
        let mut data = vec![F::zero(); n * total_c];
        let mut col = 0;
        for (p, w) in parts.iter().zip(&widths) {
            let pd = p.data();
            for (i, row) in pd.chunks(*w).enumerate() {
                data[i * total_c + col..i * total_c + col + w].copy_from_slice(row);
            }
            col += w;
        }
        let rg = parts.iter().any(|p| p.requires_grad());
        let out = self.output("concat_cols", data, vec![n, total_c], rg)?;
        if rg {
            let owned: Vec<Tensor<F>> = parts.iter().map(|p| (*p).clone()).collect();
            let o = out.clone();
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let mut col = 0;
                    for p in &owned {
                        let (_, w) = p.dims2();
                        if p.requires_grad() {
                            let mut dp = vec![F::zero(); n * w];
                            for i in 0..n {
                                dp[i * w..(i + 1) * w]
                                    .copy_from_slice(&g[i * total_c + col..i * total_c + col + w]);
                            }
                            p.accum_grad(&dp);
                        }
                        col += w;
                    }
                });
            }));
        }
        Ok(out)
    }

    /// Gather rows of `table (V x D)` at `indices`, shape L x D.
    pub fn embedding(
        &self,
        table: &Tensor<F>,
        indices: &[usize],
    ) -> Result<Tensor<F>, TensorError> {
        self.check_live("embedding")?;
        let (v, d) = table.dims2();
        if let Some(bad) = indices.iter().find(|i| **i >= v) {
            return Err(TensorError::Invalid {
                op: "embedding",
                msg: format!("index {} out of vocabulary {}", bad, v),
            });
        }
        let td = table.data();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(&td[i * d..(i + 1) * d]);
        }
        drop(td);
        let rg = table.requires_grad();
        let out = self.output("embedding", data, vec![indices.len(), d], rg)?;
        if rg {
            let (table, o) = (table.clone(), out.clone());
            let idx = indices.to_vec();
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let mut dt = vec![F::zero(); v * d];
                    for (pos, &i) in idx.iter().enumerate() {
                        for (dv, gv) in dt[i * d..(i + 1) * d].iter_mut().zip(&g[pos * d..(pos + 1) * d]) {
                            *dv = *dv + *gv;
                        }
                    }
                    table.accum_grad(&dt);
                });
            }));
        }
        Ok(out)
    }
}
