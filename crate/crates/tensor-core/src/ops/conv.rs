//! 2-D convolution (im2col lowering to GEMM) and nearest-neighbor upsampling.
//!
//! Feature maps are stored as (count*H*W) x C row-major tensors holding
//! `count` stacked images; spatial dims are passed alongside. Lowering to
//! GEMM keeps one gradient path to verify. The lowering is chunked over
//! images so the patch buffer stays cache-sized, and 1x1/stride-1
//! convolutions skip the lowering entirely.

use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};

/// Output spatial extent of a convolution along one axis.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Images per chunk so the cols buffer stays around 8 MB.
fn chunk_images(out_rows: usize, patch: usize) -> usize {
    let bytes_per_image = out_rows * patch * 8;
    (8 << 20) / bytes_per_image.max(1)
}

#[allow(clippy::too_many_arguments)]
fn im2col<F: Scalar>(
    x: &[F],
    h: usize,
    w: usize,
    c_in: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    cols: &mut [F],
) {
    let oh = conv_out_dim(h, kh, stride, pad);
    let ow = conv_out_dim(w, kw, stride, pad);
    let patch = kh * kw * c_in;
    for oy in 0..oh {
        for ox in 0..ow {
            let base = (oy * ow + ox) * patch;
            let mut off = base;
            for ky in 0..kh {
                let iy = (oy * stride + ky) as isize - pad as isize;
                for kx in 0..kw {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                        let src = ((iy as usize) * w + ix as usize) * c_in;
                        cols[off..off + c_in].copy_from_slice(&x[src..src + c_in]);
                    } else {
                        for v in &mut cols[off..off + c_in] {
                            *v = F::zero();
                        }
                    }
                    off += c_in;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im<F: Scalar>(
    dcols: &[F],
    h: usize,
    w: usize,
    c_in: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    dx: &mut [F],
) {
    let oh = conv_out_dim(h, kh, stride, pad);
    let ow = conv_out_dim(w, kw, stride, pad);
    let patch = kh * kw * c_in;
    for oy in 0..oh {
        for ox in 0..ow {
            let base = (oy * ow + ox) * patch;
            let mut off = base;
            for ky in 0..kh {
                let iy = (oy * stride + ky) as isize - pad as isize;
                for kx in 0..kw {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                        let dst = ((iy as usize) * w + ix as usize) * c_in;
                        for (d, s) in dx[dst..dst + c_in].iter_mut().zip(&dcols[off..off + c_in]) {
                            *d = *d + *s;
                        }
                    }
                    off += c_in;
                }
            }
        }
    }
}

struct ConvDims {
    count: usize,
    h: usize,
    w: usize,
    c_in: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvDims {
    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Forward pass: out = conv(x) (+ bias later), chunked over images.
fn conv_forward<F: Scalar>(x: &[F], kernel: &[F], dims: &ConvDims) -> Vec<F> {
    let out_rows = dims.oh * dims.ow;
    let patch = dims.kh * dims.kw * dims.c_in;
    let mut out = vec![F::zero(); dims.count * out_rows * dims.c_out];
    if dims.pointwise() {
        F::gemm(dims.count * out_rows, patch, dims.c_out, F::one(), x, kernel, F::zero(), &mut out);
        return out;
    }
    let per = chunk_images(out_rows, patch).max(1);
    let mut cols = vec![F::zero(); per * out_rows * patch];
    let in_rows = dims.h * dims.w;
    let mut i = 0;
    while i < dims.count {
        let n = per.min(dims.count - i);
        for j in 0..n {
            im2col(
                &x[(i + j) * in_rows * dims.c_in..(i + j + 1) * in_rows * dims.c_in],
                dims.h, dims.w, dims.c_in, dims.kh, dims.kw, dims.stride, dims.pad,
                &mut cols[j * out_rows * patch..(j + 1) * out_rows * patch],
            );
        }
        F::gemm(
            n * out_rows, patch, dims.c_out, F::one(),
            &cols, kernel, F::zero(),
            &mut out[i * out_rows * dims.c_out..(i + n) * out_rows * dims.c_out],
        );
        i += n;
    }
    out
}

/// Backward pass: accumulate dK (patch x c_out) and/or dX, chunked.
fn conv_backward<F: Scalar>(
    x: &[F],
    kernel: &[F],
    g: &[F],
    dims: &ConvDims,
    dk: Option<&mut [F]>,
    dx: Option<&mut [F]>,
) {
    let out_rows = dims.oh * dims.ow;
    let patch = dims.kh * dims.kw * dims.c_in;
    let in_rows = dims.h * dims.w;
    if dims.pointwise() {
        if let Some(dk) = dk {
            F::gemm_strided(
                patch, dims.count * out_rows, dims.c_out, F::one(),
                x, 1, patch as isize,
                g, dims.c_out as isize, 1,
                F::one(), dk,
            );
        }
        if let Some(dx) = dx {
            F::gemm_strided(
                dims.count * out_rows, dims.c_out, patch, F::one(),
                g, dims.c_out as isize, 1,
                kernel, 1, dims.c_out as isize,
                F::one(), dx,
            );
        }
        return;
    }
    let per = chunk_images(out_rows, patch).max(1);
    let mut cols = vec![F::zero(); per * out_rows * patch];
    let mut dcols = if dx.is_some() { vec![F::zero(); per * out_rows * patch] } else { Vec::new() };
    let (mut dk, mut dx) = (dk, dx);
    let mut i = 0;
    while i < dims.count {
        let n = per.min(dims.count - i);
        if dk.is_some() {
            for j in 0..n {
                im2col(
                    &x[(i + j) * in_rows * dims.c_in..(i + j + 1) * in_rows * dims.c_in],
                    dims.h, dims.w, dims.c_in, dims.kh, dims.kw, dims.stride, dims.pad,
                    &mut cols[j * out_rows * patch..(j + 1) * out_rows * patch],
                );
            }
        }
        let g_chunk = &g[i * out_rows * dims.c_out..(i + n) * out_rows * dims.c_out];
        if let Some(dk) = dk.as_deref_mut() {
            F::gemm_strided(
                patch, n * out_rows, dims.c_out, F::one(),
                &cols, 1, patch as isize,
                g_chunk, dims.c_out as isize, 1,
                F::one(), dk,
            );
        }
        if let Some(dx) = dx.as_deref_mut() {
            F::gemm_strided(
                n * out_rows, dims.c_out, patch, F::one(),
                g_chunk, dims.c_out as isize, 1,
                kernel, 1, dims.c_out as isize,
                F::zero(), &mut dcols[..n * out_rows * patch],
            );
            for j in 0..n {
                col2im(
                    &dcols[j * out_rows * patch..(j + 1) * out_rows * patch],
                    dims.h, dims.w, dims.c_in, dims.kh, dims.kw, dims.stride, dims.pad,
                    &mut dx[(i + j) * in_rows * dims.c_in..(i + j + 1) * in_rows * dims.c_in],
                );
            }
        }
        i += n;
    }
}

impl<F: Scalar> Graph<F> {
    /// Convolve `count` stacked (h*w) x c_in maps with one shared
    /// (kh*kw*c_in) x c_out kernel. Patch layout in kernel rows is
    /// (ky, kx, c). Returns the stacked ((oh*ow) x c_out) maps.
    #[allow(clippy::too_many_arguments)]
    pub fn conv2d(
        &self,
        x: &Tensor<F>,
        count: usize,
        h: usize,
        w: usize,
        kernel: &Tensor<F>,
        kh: usize,
        kw: usize,
        bias: &Tensor<F>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<F>, TensorError> {
        self.check_live("conv2d")?;
        let (rows, c_in) = x.dims2();
        if rows != count * h * w {
            return Err(TensorError::Invalid {
                op: "conv2d",
                msg: format!("input has {} rows, expected {}x{}x{}={}", rows, count, h, w, count * h * w),
            });
        }
        let (krows, c_out) = kernel.dims2();
        if krows != kh * kw * c_in {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: vec![kh * kw * c_in, c_out],
                rhs: kernel.shape().to_vec(),
            });
        }
        if bias.len() != c_out {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: vec![c_out],
                rhs: bias.shape().to_vec(),
            });
        }
        if h + 2 * pad < kh || w + 2 * pad < kw || stride == 0 {
            return Err(TensorError::Invalid {
                op: "conv2d",
                msg: format!("kernel {}x{} stride {} too large for {}x{} pad {}", kh, kw, stride, h, w, pad),
            });
        }
        let dims = ConvDims {
            count,
            h,
            w,
            c_in,
            c_out,
            kh,
            kw,
            stride,
            pad,
            oh: conv_out_dim(h, kh, stride, pad),
            ow: conv_out_dim(w, kw, stride, pad),
        };
        let mut data = conv_forward(&x.data(), &kernel.data(), &dims);
        {
            let bd = bias.data();
            for row in data.chunks_mut(c_out) {
                for (v, b) in row.iter_mut().zip(bd.iter()) {
                    *v = *v + *b;
                }
            }
        }
        let rg = x.requires_grad() || kernel.requires_grad() || bias.requires_grad();
        let out = self.output("conv2d", data, vec![count * dims.oh * dims.ow, c_out], rg)?;
        if rg {
            let (x, kernel, bias, o) = (x.clone(), kernel.clone(), bias.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    if bias.requires_grad() {
                        let mut db = vec![F::zero(); c_out];
                        for row in g.chunks(c_out) {
                            for (d, gv) in db.iter_mut().zip(row) {
                                *d = *d + *gv;
                            }
                        }
                        bias.accum_grad(&db);
                    }
                    let need_k = kernel.requires_grad();
                    let need_x = x.requires_grad();
                    if need_k || need_x {
                        let mut dk =
                            if need_k { vec![F::zero(); kh * kw * c_in * c_out] } else { Vec::new() };
                        let mut dx =
                            if need_x { vec![F::zero(); count * h * w * c_in] } else { Vec::new() };
                        conv_backward(
                            &x.data(),
                            &kernel.data(),
                            g,
                            &dims,
                            need_k.then_some(dk.as_mut_slice()),
                            need_x.then_some(dx.as_mut_slice()),
                        );
                        if need_k {
                            kernel.accum_grad(&dk);
                        }
                        if need_x {
                            x.accum_grad(&dx);
                        }
                    }
                });
            }));
        }
        Ok(out)
    }

    /// Nearest-neighbor 2x upsampling of `count` stacked (h*w) x c maps.
    pub fn upsample2x(
        &self,
        x: &Tensor<F>,
        count: usize,
        h: usize,
        w: usize,
    ) -> Result<Tensor<F>, TensorError> {
        self.check_live("upsample2x")?;
        let (rows, c) = x.dims2();
        if rows != count * h * w {
            return Err(TensorError::Invalid {
                op: "upsample2x",
                msg: format!("input has {} rows, expected {}x{}x{}={}", rows, count, h, w, count * h * w),
            });
        }
        let (oh, ow) = (2 * h, 2 * w);
        let xd = x.data();
        let mut data = vec![F::zero(); count * oh * ow * c];
        for i in 0..count {
            let ibase = i * h * w * c;
            let obase = i * oh * ow * c;
            for y in 0..h {
                for xcol in 0..w {
                    let src = ibase + (y * w + xcol) * c;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let dst = obase + ((2 * y + dy) * ow + (2 * xcol + dx)) * c;
                            data[dst..dst + c].copy_from_slice(&xd[src..src + c]);
                        }
                    }
                }
            }
        }
        drop(xd);
        let rg = x.requires_grad();
        let out = self.output("upsample2x", data, vec![count * oh * ow, c], rg)?;
        if rg {
            let (x, o) = (x.clone(), out.clone());
            self.record(Box::new(move || {
                o.with_grad(|og| {
                    let Some(g) = og else { return };
                    let mut dx = vec![F::zero(); count * h * w * c];
                    for i in 0..count {
                        let ibase = i * h * w * c;
                        let obase = i * oh * ow * c;
                        for y in 0..h {
                            for xcol in 0..w {
                                let dst = ibase + (y * w + xcol) * c;
                                for dy in 0..2 {
                                    for dxp in 0..2 {
                                        let src =
                                            obase + ((2 * y + dy) * ow + (2 * xcol + dxp)) * c;
                                        for (d, gv) in
                                            dx[dst..dst + c].iter_mut().zip(&g[src..src + c])
                                        {
                                            *d = *d + *gv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    x.accum_grad(&dx);
                });
            }));
        }
        Ok(out)
    }
}
