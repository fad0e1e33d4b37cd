//! Object-centric video encoder: CNN feature extractor, iterative slot
//! attention with renormalization over the query (slot) axis, a transformer
//! predictor carrying slots across frames, and a spatial-broadcast decoder
//! with per-pixel alpha compositing over slots.
//!
//! Internally every spatial tensor is batched: rows are ordered
//! (image, y, x) so one conv call covers a whole batch of frames (or a
//! whole batch of slot grids). The single-video operations are the batch-1
//! special case of the same code path.

use tensor_core::ops::{conv_out_dim, Axis, GruParams};
use tensor_core::{Graph, ParamSet, RngStream, Scalar, Tensor, TensorError};

use crate::config::{Config, ConfigError};
use crate::transformer::TransformerBlock;

#[derive(Clone, Debug)]
pub struct SaviConfig {
    pub image_size: usize,
    pub num_slots: usize,
    pub slot_dim: usize,
    pub iters_first: usize,
    pub iters_later: usize,
    pub clip_len: usize,
    pub cnn_channels: Vec<usize>,
    pub predictor_depth: usize,
    pub predictor_heads: usize,
    pub broadcast_grid: usize,
}

impl SaviConfig {
    pub fn from_config(cfg: &Config) -> Result<Self, ConfigError> {
        let out = SaviConfig {
            image_size: cfg.get_usize("sim.image_size")?,
            num_slots: cfg.get_usize("encoder.num_slots")?,
            slot_dim: cfg.get_usize("encoder.slot_dim")?,
            iters_first: cfg.get_usize("encoder.iters_first")?,
            iters_later: cfg.get_usize("encoder.iters_later")?,
            clip_len: cfg.get_usize("encoder.clip_len")?,
            cnn_channels: cfg.get_usize_list("encoder.cnn_channels")?,
            predictor_depth: cfg.get_usize("encoder.predictor_depth")?,
            predictor_heads: cfg.get_usize("encoder.predictor_heads")?,
            broadcast_grid: cfg.get_usize("encoder.broadcast_grid")?,
        };
        out.validate().map_err(|msg| ConfigError::BadValue { key: "encoder".into(), msg })?;
        Ok(out)
    }

    /// Tiny configuration for gradient checks and unit tests.
    pub fn tiny() -> Self {
        SaviConfig {
            image_size: 8,
            num_slots: 2,
            slot_dim: 8,
            iters_first: 2,
            iters_later: 1,
            clip_len: 2,
            cnn_channels: vec![6, 6, 6, 6, 6],
            predictor_depth: 1,
            predictor_heads: 2,
            broadcast_grid: 4,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.cnn_channels.len() != 5 {
            return Err(format!("expected 5 conv layers, got {}", self.cnn_channels.len()));
        }
        if self.num_slots == 0 || self.slot_dim == 0 || self.clip_len == 0 {
            return Err("slots, slot_dim and clip_len must be positive".into());
        }
        if self.iters_first == 0 || self.iters_later == 0 {
            return Err("slot-attention iterations must be positive".into());
        }
        if self.slot_dim % self.predictor_heads != 0 {
            return Err("slot_dim must divide evenly into predictor heads".into());
        }
        let up = self.image_size / self.broadcast_grid;
        if !up.is_power_of_two() || up * self.broadcast_grid != self.image_size {
            return Err(format!(
                "image size {} must be broadcast grid {} times a power of two",
                self.image_size, self.broadcast_grid
            ));
        }
        if self.image_size % Self::CNN_STRIDE_TOTAL != 0 {
            return Err("image size must be divisible by the CNN stride".into());
        }
        Ok(())
    }

    const CNN_STRIDES: [usize; 5] = [2, 2, 1, 1, 1];
    pub const CNN_STRIDE_TOTAL: usize = 4;

    /// Feature grid side length after the CNN.
    pub fn grid(&self) -> usize {
        self.image_size / Self::CNN_STRIDE_TOTAL
    }

    /// Feature locations per frame.
    pub fn num_locations(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn feature_dim(&self) -> usize {
        *self.cnn_channels.last().unwrap()
    }

    fn upsample_stages(&self) -> usize {
        (self.image_size / self.broadcast_grid).trailing_zeros() as usize
    }

    /// Decoder channel plan: a 3x3 conv at the broadcast grid, then one 3x3
    /// conv after every upsampling stage except the last, which is plain
    /// nearest-neighbor followed by a 1x1 RGBA projection (keeps the
    /// full-resolution stage cheap).
    fn decoder_channels(&self) -> Vec<usize> {
        let plan = [24usize, 12, 8, 8, 8, 8];
        let n = self.upsample_stages();
        let mut ch = vec![plan[0]];
        for s in 0..n.saturating_sub(1) {
            ch.push(plan[(s + 1).min(plan.len() - 1)]);
        }
        ch
    }
}

/// Flattened CNN features for a batch of frames: (count*N) x dim with the
/// positional encoding already added.
pub struct FeatureGrid<F: Scalar> {
    pub values: Tensor<F>,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub dim: usize,
}

/// The K x D slot matrix for a batch: (count*K) x D.
pub struct SlotSet<F: Scalar> {
    pub slots: Tensor<F>,
    pub count: usize,
    pub num_slots: usize,
    pub slot_dim: usize,
}

/// Per-slot images, per-pixel slot weights, and the composited frames for a
/// batch of decoded slot sets.
pub struct DecodeResult<F: Scalar> {
    /// (count*K*H*W) x 3 per-slot RGB.
    pub rgb: Tensor<F>,
    /// Per frame: (H*W) x K weights summing to one across slots.
    pub masks: Vec<Tensor<F>>,
    /// Per frame: (H*W) x 3 composite.
    pub composites: Vec<Tensor<F>>,
    pub count: usize,
}

/// The encoder's trainable modules.
pub struct SaviEncoder<F: Scalar> {
    pub cfg: SaviConfig,
    conv_w: Vec<Tensor<F>>,
    conv_b: Vec<Tensor<F>>,
    enc_pos_w: Tensor<F>,
    enc_pos_b: Tensor<F>,
    ln_in_g: Tensor<F>,
    ln_in_b: Tensor<F>,
    wk: Tensor<F>,
    bk: Tensor<F>,
    wv: Tensor<F>,
    bv: Tensor<F>,
    wq: Tensor<F>,
    bq: Tensor<F>,
    ln_slots_g: Tensor<F>,
    ln_slots_b: Tensor<F>,
    gru: GruParams<F>,
    ln_mlp_g: Tensor<F>,
    ln_mlp_b: Tensor<F>,
    mlp_w1: Tensor<F>,
    mlp_b1: Tensor<F>,
    mlp_w2: Tensor<F>,
    mlp_b2: Tensor<F>,
    init_mu: Tensor<F>,
    init_logstd: Tensor<F>,
    predictor: Vec<TransformerBlock<F>>,
    dec_pos_w: Tensor<F>,
    dec_pos_b: Tensor<F>,
    dec_in_w: Tensor<F>,
    dec_in_b: Tensor<F>,
    dec_up_w: Vec<Tensor<F>>,
    dec_up_b: Vec<Tensor<F>>,
    dec_out_w: Tensor<F>,
    dec_out_b: Tensor<F>,
}

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

/// Four-channel border-distance map for an h x w grid, rows (y, x).
pub fn position_map<F: Scalar>(h: usize, w: usize) -> Tensor<F> {
    let mut data = Vec::with_capacity(h * w * 4);
    for y in 0..h {
        for x in 0..w {
            let fx = if w > 1 { x as f64 / (w - 1) as f64 } else { 0.5 };
            let fy = if h > 1 { y as f64 / (h - 1) as f64 } else { 0.5 };
            data.extend_from_slice(&[
                F::from_f64(fx),
                F::from_f64(1.0 - fx),
                F::from_f64(fy),
                F::from_f64(1.0 - fy),
            ]);
        }
    }
    Tensor::from_vec(data, &[h * w, 4]).unwrap()
}

impl<F: Scalar> SaviEncoder<F> {
    pub fn new(cfg: SaviConfig, rng: &mut RngStream) -> Self {
        cfg.validate().expect("invalid encoder config");
        let d = cfg.slot_dim;
        let feat = cfg.feature_dim();
        let mut conv_w = Vec::new();
        let mut conv_b = Vec::new();
        let mut c_in = 3;
        for &c_out in &cfg.cnn_channels {
            conv_w.push(glorot(9 * c_in, c_out, rng));
            conv_b.push(zeros_param(c_out));
            c_in = c_out;
        }
        let dec_ch = cfg.decoder_channels();
        let mut dec_up_w = Vec::new();
        let mut dec_up_b = Vec::new();
        for s in 0..cfg.upsample_stages().saturating_sub(1) {
            dec_up_w.push(glorot(9 * dec_ch[s], dec_ch[s + 1], rng));
            dec_up_b.push(zeros_param(dec_ch[s + 1]));
        }
        SaviEncoder {
            conv_w,
            conv_b,
            enc_pos_w: glorot(4, feat, rng),
            enc_pos_b: zeros_param(feat),
            ln_in_g: ones_param(feat),
            ln_in_b: zeros_param(feat),
            wk: glorot(feat, d, rng),
            bk: zeros_param(d),
            wv: glorot(feat, d, rng),
            bv: zeros_param(d),
            wq: glorot(d, d, rng),
            bq: zeros_param(d),
            ln_slots_g: ones_param(d),
            ln_slots_b: zeros_param(d),
            gru: GruParams::init(d, d, rng),
            ln_mlp_g: ones_param(d),
            ln_mlp_b: zeros_param(d),
            mlp_w1: glorot(d, 2 * d, rng),
            mlp_b1: zeros_param(2 * d),
            mlp_w2: glorot(2 * d, d, rng),
            mlp_b2: zeros_param(d),
            init_mu: zeros_param(d),
            init_logstd: zeros_param(d),
            predictor: (0..cfg.predictor_depth).map(|_| TransformerBlock::init(d, rng)).collect(),
            dec_pos_w: glorot(4, d, rng),
            dec_pos_b: zeros_param(d),
            // The broadcast grid is frame-constant plus a smooth positional
            // field, so a pointwise input projection suffices.
            dec_in_w: glorot(d, dec_ch[0], rng),
            dec_in_b: zeros_param(dec_ch[0]),
            dec_up_w,
            dec_up_b,
            dec_out_w: glorot(*dec_ch.last().unwrap(), 4, rng),
            dec_out_b: zeros_param(4),
            cfg,
        }
    }

    pub fn predictor_blocks(&self) -> &[TransformerBlock<F>] {
        &self.predictor
    }

    /// Canonical parameter order.
    pub fn params(&self) -> ParamSet<F> {
        let mut entries: Vec<(String, Tensor<F>)> = Vec::new();
        for (i, (w, b)) in self.conv_w.iter().zip(&self.conv_b).enumerate() {
            entries.push((format!("enc.conv{i}.w"), w.clone()));
            entries.push((format!("enc.conv{i}.b"), b.clone()));
        }
        entries.push(("enc.pos.w".into(), self.enc_pos_w.clone()));
        entries.push(("enc.pos.b".into(), self.enc_pos_b.clone()));
        for (name, t) in [
            ("sa.ln_in.g", &self.ln_in_g),
            ("sa.ln_in.b", &self.ln_in_b),
            ("sa.wk", &self.wk),
            ("sa.bk", &self.bk),
            ("sa.wv", &self.wv),
            ("sa.bv", &self.bv),
            ("sa.wq", &self.wq),
            ("sa.bq", &self.bq),
            ("sa.ln_slots.g", &self.ln_slots_g),
            ("sa.ln_slots.b", &self.ln_slots_b),
        ] {
            entries.push((name.into(), t.clone()));
        }
        entries.extend(self.gru.named("sa.gru"));
        for (name, t) in [
            ("sa.ln_mlp.g", &self.ln_mlp_g),
            ("sa.ln_mlp.b", &self.ln_mlp_b),
            ("sa.mlp.w1", &self.mlp_w1),
            ("sa.mlp.b1", &self.mlp_b1),
            ("sa.mlp.w2", &self.mlp_w2),
            ("sa.mlp.b2", &self.mlp_b2),
            ("sa.init_mu", &self.init_mu),
            ("sa.init_logstd", &self.init_logstd),
        ] {
            entries.push((name.into(), t.clone()));
        }
        for (i, blk) in self.predictor.iter().enumerate() {
            entries.extend(blk.named(&format!("pred.{i}")));
        }
        entries.push(("dec.pos.w".into(), self.dec_pos_w.clone()));
        entries.push(("dec.pos.b".into(), self.dec_pos_b.clone()));
        entries.push(("dec.in.w".into(), self.dec_in_w.clone()));
        entries.push(("dec.in.b".into(), self.dec_in_b.clone()));
        for (i, (w, b)) in self.dec_up_w.iter().zip(&self.dec_up_b).enumerate() {
            entries.push((format!("dec.up{i}.w"), w.clone()));
            entries.push((format!("dec.up{i}.b"), b.clone()));
        }
        entries.push(("dec.out.w".into(), self.dec_out_w.clone()));
        entries.push(("dec.out.b".into(), self.dec_out_b.clone()));
        ParamSet::new(entries)
    }

    /// Convert raw frames (count stacked images, u8 RGB) to the input
    /// tensor, rows (image, y, x).
    pub fn frames_to_tensor(&self, frames: &[u8], count: usize) -> Tensor<F> {
        let px = self.cfg.image_size * self.cfg.image_size;
        assert_eq!(frames.len(), count * px * 3, "frame byte count");
        let inv = F::from_f64(1.0 / 255.0);
        let data: Vec<F> = frames.iter().map(|b| F::from_f64(*b as f64) * inv).collect();
        Tensor::from_vec(data, &[count * px, 3]).unwrap()
    }

    /// CNN feature extraction plus positional encoding, batched over
    /// `count` frames.
    pub fn encode_frames(
        &self,
        g: &Graph<F>,
        images: &Tensor<F>,
        count: usize,
    ) -> Result<FeatureGrid<F>, TensorError> {
        let s = self.cfg.image_size;
        let (rows, ch) = images.dims2();
        if rows != count * s * s || ch != 3 {
            return Err(TensorError::Invalid {
                op: "encode_frames",
                msg: format!(
                    "expected {count} x {s}x{s} x 3 images, got shape {:?}",
                    images.shape()
                ),
            });
        }
        {
            let d = images.data();
            if d.iter().any(|v| *v < F::zero() || *v > F::one()) {
                return Err(TensorError::Invalid {
                    op: "encode_frames",
                    msg: "image values must lie in [0, 1]".into(),
                });
            }
        }
        let mut x = images.clone();
        let mut h = s;
        let mut w = s;
        for (i, stride) in SaviConfig::CNN_STRIDES.iter().enumerate() {
            x = g.conv2d(&x, count, h, w, &self.conv_w[i], 3, 3, &self.conv_b[i], *stride, 1)?;
            x = g.relu(&x)?;
            h = conv_out_dim(h, 3, *stride, 1);
            w = conv_out_dim(w, 3, *stride, 1);
        }
        // Positional encoding: learned projection of the border-distance
        // map, tiled across the batch.
        let pos = position_map::<F>(h, w);
        let pos_proj = g.linear(&pos, &self.enc_pos_w, &self.enc_pos_b)?;
        let idx: Vec<usize> = (0..count).flat_map(|_| 0..h * w).collect();
        let tiled = g.embedding(&pos_proj, &idx)?;
        let values = g.add(&x, &tiled)?;
        Ok(FeatureGrid { values, count, height: h, width: w, dim: self.cfg.feature_dim() })
    }

    /// Draw initial slots from the learned diagonal Gaussian, one fresh draw
    /// per video.
    pub fn initial_slots(
        &self,
        g: &Graph<F>,
        count: usize,
        rng: &mut RngStream,
    ) -> Result<SlotSet<F>, TensorError> {
        let k = self.cfg.num_slots;
        let d = self.cfg.slot_dim;
        let noise: Vec<F> = (0..count * k * d).map(|_| F::from_f64(rng.normal())).collect();
        let noise = Tensor::from_vec(noise, &[count * k, d]).unwrap();
        let std = g.exp(&g.reshape(&self.init_logstd, &[1, d])?)?;
        let scaled = g.mul_row(&noise, &g.reshape(&std, &[d])?)?;
        let slots = g.bias_add(&scaled, &self.init_mu)?;
        Ok(SlotSet { slots, count, num_slots: k, slot_dim: d })
    }

    /// Iterative slot attention over a batch of frames.
    ///
    /// Per iteration: layer-normalize slots, project queries; attention
    /// logits k q^T / sqrt(D) softmax over the slot axis (each location
    /// distributes over slots); weights renormalized per slot over
    /// locations; weighted mean of values updates slots through a GRU and a
    /// residual MLP. Returns the final slots and last-iteration attention,
    /// one (N x K) tensor per frame in the batch.
    pub fn slot_attention(
        &self,
        g: &Graph<F>,
        features: &FeatureGrid<F>,
        slots_init: &SlotSet<F>,
        iters: usize,
    ) -> Result<(SlotSet<F>, Vec<Tensor<F>>), TensorError> {
        if slots_init.num_slots == 0 {
            return Err(TensorError::Invalid { op: "slot_attention", msg: "K = 0".into() });
        }
        assert_eq!(features.count, slots_init.count, "batch size mismatch");
        let count = features.count;
        let n = features.height * features.width;
        let k = slots_init.num_slots;
        let d = self.cfg.slot_dim;
        let scale = F::from_f64(1.0 / (d as f64).sqrt());
        let eps = F::from_f64(1e-8);

        let f_norm = g.layer_norm(&features.values, &self.ln_in_g, &self.ln_in_b)?;
        let keys = g.linear(&f_norm, &self.wk, &self.bk)?;
        let vals = g.linear(&f_norm, &self.wv, &self.bv)?;

        let mut slots = slots_init.slots.clone();
        let mut last_attn = Vec::new();
        for it in 0..iters {
            let s_norm = g.layer_norm(&slots, &self.ln_slots_g, &self.ln_slots_b)?;
            let queries = g.linear(&s_norm, &self.wq, &self.bq)?;
            let mut updates = Vec::with_capacity(count);
            let mut attns = Vec::with_capacity(count);
            for b in 0..count {
                let kb = g.slice_rows(&keys, b * n, n)?;
                let vb = g.slice_rows(&vals, b * n, n)?;
                let qb = g.slice_rows(&queries, b * k, k)?;
                let logits = g.scale(&g.matmul(&kb, &g.transpose(&qb)?)?, scale)?;
                // Softmax over slots: the queries compete for each location.
                let attn = g.softmax(&logits, Axis::Cols)?;
                // Renormalize per slot over locations -> weighted mean.
                let weights = g.normalize_cols(&g.add_const(&attn, eps)?)?;
                updates.push(g.matmul(&g.transpose(&weights)?, &vb)?);
                attns.push(attn);
            }
            let refs: Vec<&Tensor<F>> = updates.iter().collect();
            let update = g.concat_rows(&refs)?;
            slots = g.gru_cell(&update, &slots, &self.gru)?;
            let m_in = g.layer_norm(&slots, &self.ln_mlp_g, &self.ln_mlp_b)?;
            let m = g.linear(&g.relu(&g.linear(&m_in, &self.mlp_w1, &self.mlp_b1)?)?, &self.mlp_w2, &self.mlp_b2)?;
            slots = g.add(&slots, &m)?;
            if it + 1 == iters {
                last_attn = attns;
            }
        }
        Ok((
            SlotSet { slots, count, num_slots: k, slot_dim: d },
            last_attn,
        ))
    }

    /// Advance slots to the next frame through the predictor transformer.
    pub fn predict(
        &self,
        g: &Graph<F>,
        slots: &SlotSet<F>,
    ) -> Result<SlotSet<F>, TensorError> {
        let mut x = slots.slots.clone();
        for blk in &self.predictor {
            x = blk.forward(g, &x, slots.count, slots.num_slots, self.cfg.predictor_heads)?;
        }
        Ok(SlotSet {
            slots: x,
            count: slots.count,
            num_slots: slots.num_slots,
            slot_dim: slots.slot_dim,
        })
    }

    /// Decode a batch of slot sets: broadcast each slot over the grid, add
    /// positional encoding, run the shared CNN, softmax alphas across slots
    /// per pixel, and composite.
    pub fn decode(
        &self,
        g: &Graph<F>,
        slots: &SlotSet<F>,
    ) -> Result<DecodeResult<F>, TensorError> {
        let gsz = self.cfg.broadcast_grid;
        let k = slots.num_slots;
        let count = slots.count;
        let cells = gsz * gsz;
        let images = count * k;

        // Broadcast: repeat each slot row over its grid.
        let idx: Vec<usize> = (0..count * k).flat_map(|r| std::iter::repeat(r).take(cells)).collect();
        let grid = g.embedding(&slots.slots, &idx)?;
        let pos = position_map::<F>(gsz, gsz);
        let pos_proj = g.linear(&pos, &self.dec_pos_w, &self.dec_pos_b)?;
        let tile_idx: Vec<usize> = (0..images).flat_map(|_| 0..cells).collect();
        let pos_tiled = g.embedding(&pos_proj, &tile_idx)?;
        let mut x = g.add(&grid, &pos_tiled)?;

        let mut side = gsz;
        x = g.relu(&g.conv2d(&x, images, side, side, &self.dec_in_w, 1, 1, &self.dec_in_b, 1, 0)?)?;
        for (w, b) in self.dec_up_w.iter().zip(&self.dec_up_b) {
            x = g.upsample2x(&x, images, side, side)?;
            side *= 2;
            x = g.relu(&g.conv2d(&x, images, side, side, w, 3, 3, b, 1, 1)?)?;
        }
        if side < self.cfg.image_size {
            x = g.upsample2x(&x, images, side, side)?;
            side *= 2;
        }
        let raw = g.conv2d(&x, images, side, side, &self.dec_out_w, 1, 1, &self.dec_out_b, 1, 0)?;
        debug_assert_eq!(side, self.cfg.image_size);
        let px = side * side;

        let rgb = g.slice_cols(&raw, 0, 3)?;
        let alpha = g.slice_cols(&raw, 3, 1)?;

        let mut masks = Vec::with_capacity(count);
        let mut composites = Vec::with_capacity(count);
        for bidx in 0..count {
            // Alphas of this sample's K slots, as (px) x K.
            let mut alpha_cols = Vec::with_capacity(k);
            for s in 0..k {
                alpha_cols.push(g.slice_rows(&alpha, (bidx * k + s) * px, px)?);
            }
            let refs: Vec<&Tensor<F>> = alpha_cols.iter().collect();
            let stacked = g.concat_cols(&refs)?;
            let mask = g.softmax(&stacked, Axis::Cols)?;
            let mut comp: Option<Tensor<F>> = None;
            for s in 0..k {
                let rgb_s = g.slice_rows(&rgb, (bidx * k + s) * px, px)?;
                let m_s = g.slice_cols(&mask, s, 1)?;
                let weighted = g.scale_rows(&rgb_s, &m_s)?;
                comp = Some(match comp {
                    None => weighted,
                    Some(c) => g.add(&c, &weighted)?,
                });
            }
            masks.push(mask);
            composites.push(comp.unwrap());
        }
        Ok(DecodeResult { rgb, masks, composites, count })
    }

    /// Mean squared error between composited and target frames.
    pub fn recon_loss(
        &self,
        g: &Graph<F>,
        decoded: &[&Tensor<F>],
        targets: &Tensor<F>,
    ) -> Result<Tensor<F>, TensorError> {
        let refs: Vec<&Tensor<F>> = decoded.to_vec();
        let pred = g.concat_rows(&refs)?;
        if pred.shape() != targets.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "recon_loss",
                lhs: pred.shape().to_vec(),
                rhs: targets.shape().to_vec(),
            });
        }
        let diff = g.sub(&pred, targets)?;
        g.mean_all(&g.mul(&diff, &diff)?)
    }

    /// Unroll over a clip batch: frame 0 runs `iters_first` attention
    /// iterations on freshly drawn slots, later frames run the predictor
    /// and `iters_later` corrector iterations starting from the previous
    /// frame's slots.
    ///
    /// `frames` rows must be ordered (t, b, y, x): frame-major blocks each
    /// holding the whole batch.
    pub fn unroll(
        &self,
        g: &Graph<F>,
        frames: &Tensor<F>,
        batch: usize,
        t_frames: usize,
        rng: &mut RngStream,
    ) -> Result<UnrollOutput<F>, TensorError> {
        let features = self.encode_frames(g, frames, batch * t_frames)?;
        let n = features.height * features.width;
        let mut per_frame_slots: Vec<SlotSet<F>> = Vec::with_capacity(t_frames);
        let mut attn_last = Vec::new();
        for t in 0..t_frames {
            let ft = FeatureGrid {
                values: g.slice_rows(&features.values, t * batch * n, batch * n)?,
                count: batch,
                height: features.height,
                width: features.width,
                dim: features.dim,
            };
            let (slots, attn) = if t == 0 {
                let init = self.initial_slots(g, batch, rng)?;
                self.slot_attention(g, &ft, &init, self.cfg.iters_first)?
            } else {
                let prev = per_frame_slots.last().unwrap();
                let predicted = self.predict(g, prev)?;
                self.slot_attention(g, &ft, &predicted, self.cfg.iters_later)?
            };
            attn_last = attn;
            per_frame_slots.push(slots);
        }
        // Decode every frame's slots in one batched pass.
        let slot_refs: Vec<&Tensor<F>> =
            per_frame_slots.iter().map(|s| &s.slots).collect();
        let all_slots = SlotSet {
            slots: g.concat_rows(&slot_refs)?,
            count: batch * t_frames,
            num_slots: self.cfg.num_slots,
            slot_dim: self.cfg.slot_dim,
        };
        let decode = self.decode(g, &all_slots)?;
        Ok(UnrollOutput { slots: per_frame_slots, decode, final_attn: attn_last })
    }
}

/// Slots per frame, the batched decode of every frame, and the final
/// frame's attention maps.
pub struct UnrollOutput<F: Scalar> {
    pub slots: Vec<SlotSet<F>>,
    pub decode: DecodeResult<F>,
    pub final_attn: Vec<Tensor<F>>,
}
