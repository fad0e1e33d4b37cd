//! Pre-norm transformer encoder block, shared by the slot predictor and the
//! policy's observation trunk.

use tensor_core::ops::Axis;
use tensor_core::{Graph, RngStream, Scalar, Tensor, TensorError};

fn glorot<F: Scalar>(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor<F> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<F> = (0..rows * cols).map(|_| F::from_f64(rng.range(-limit, limit))).collect();
    Tensor::param(data, &[rows, cols]).unwrap()
}

fn zeros_param<F: Scalar>(n: usize) -> Tensor<F> {
    Tensor::param(vec![F::zero(); n], &[n]).unwrap()
}

fn ones_param<F: Scalar>(n: usize) -> Tensor<F> {
    Tensor::param(vec![F::one(); n], &[n]).unwrap()
}

/// x + MHAttn(LN(x)), then x + MLP(LN(x)). Token groups attend only within
/// themselves, so one tensor can carry a whole batch of independent
/// sequences.
pub struct TransformerBlock<F: Scalar> {
    ln1_g: Tensor<F>,
    ln1_b: Tensor<F>,
    wq: Tensor<F>,
    bq: Tensor<F>,
    wk: Tensor<F>,
    bk: Tensor<F>,
    wv: Tensor<F>,
    bv: Tensor<F>,
    wo: Tensor<F>,
    bo: Tensor<F>,
    ln2_g: Tensor<F>,
    ln2_b: Tensor<F>,
    mlp_w1: Tensor<F>,
    mlp_b1: Tensor<F>,
    mlp_w2: Tensor<F>,
    mlp_b2: Tensor<F>,
}

impl<F: Scalar> TransformerBlock<F> {
    pub fn init(dim: usize, rng: &mut RngStream) -> Self {
        TransformerBlock {
            ln1_g: ones_param(dim),
            ln1_b: zeros_param(dim),
            wq: glorot(dim, dim, rng),
            bq: zeros_param(dim),
            wk: glorot(dim, dim, rng),
            bk: zeros_param(dim),
            wv: glorot(dim, dim, rng),
            bv: zeros_param(dim),
            wo: glorot(dim, dim, rng),
            bo: zeros_param(dim),
            ln2_g: ones_param(dim),
            ln2_b: zeros_param(dim),
            mlp_w1: glorot(dim, 2 * dim, rng),
            mlp_b1: zeros_param(2 * dim),
            mlp_w2: glorot(2 * dim, dim, rng),
            mlp_b2: zeros_param(dim),
        }
    }

    pub fn named(&self, prefix: &str) -> Vec<(String, Tensor<F>)> {
        [
            ("ln1.g", &self.ln1_g), ("ln1.b", &self.ln1_b),
            ("wq", &self.wq), ("bq", &self.bq),
            ("wk", &self.wk), ("bk", &self.bk),
            ("wv", &self.wv), ("bv", &self.bv),
            ("wo", &self.wo), ("bo", &self.bo),
            ("ln2.g", &self.ln2_g), ("ln2.b", &self.ln2_b),
            ("mlp.w1", &self.mlp_w1), ("mlp.b1", &self.mlp_b1),
            ("mlp.w2", &self.mlp_w2), ("mlp.b2", &self.mlp_b2),
        ]
        .into_iter()
        .map(|(k, t)| (format!("{prefix}.{k}"), t.clone()))
        .collect()
    }

    /// Zero the output projections so the block maps x to x exactly.
    pub fn make_identity(&self) {
        for t in [&self.wo, &self.bo, &self.mlp_w2, &self.mlp_b2] {
            t.set_data(&vec![F::zero(); t.len()]);
        }
    }

    /// `x` holds `count` independent groups of `tokens` rows each.
    pub fn forward(
        &self,
        g: &Graph<F>,
        x: &Tensor<F>,
        count: usize,
        tokens: usize,
        heads: usize,
    ) -> Result<Tensor<F>, TensorError> {
        let dim = x.dims2().1;
        assert_eq!(dim % heads, 0, "head count must divide model dim");
        let dh = dim / heads;
        let scale = F::from_f64(1.0 / (dh as f64).sqrt());

        let h = g.layer_norm(x, &self.ln1_g, &self.ln1_b)?;
        let q = g.linear(&h, &self.wq, &self.bq)?;
        let k = g.linear(&h, &self.wk, &self.bk)?;
        let v = g.linear(&h, &self.wv, &self.bv)?;
        let mut group_outs = Vec::with_capacity(count);
        for i in 0..count {
            let qi = g.slice_rows(&q, i * tokens, tokens)?;
            let ki = g.slice_rows(&k, i * tokens, tokens)?;
            let vi = g.slice_rows(&v, i * tokens, tokens)?;
            let mut head_outs = Vec::with_capacity(heads);
            for hd in 0..heads {
                let qh = g.slice_cols(&qi, hd * dh, dh)?;
                let kh = g.slice_cols(&ki, hd * dh, dh)?;
                let vh = g.slice_cols(&vi, hd * dh, dh)?;
                let logits = g.scale(&g.matmul(&qh, &g.transpose(&kh)?)?, scale)?;
                let attn = g.softmax(&logits, Axis::Cols)?;
                head_outs.push(g.matmul(&attn, &vh)?);
            }
            let refs: Vec<&Tensor<F>> = head_outs.iter().collect();
            group_outs.push(g.concat_cols(&refs)?);
        }
        let refs: Vec<&Tensor<F>> = group_outs.iter().collect();
        let attn_out = g.linear(&g.concat_rows(&refs)?, &self.wo, &self.bo)?;
        let x = g.add(x, &attn_out)?;

        let h2 = g.layer_norm(&x, &self.ln2_g, &self.ln2_b)?;
        let m = g.linear(
            &g.relu(&g.linear(&h2, &self.mlp_w1, &self.mlp_b1)?)?,
            &self.mlp_w2,
            &self.mlp_b2,
        )?;
        g.add(&x, &m)
    }
}
