//! Transformer observation trunk over slot histories and the
//! Gaussian-mixture action head.
//!
//! The trunk projects every slot of the last H frames into the model width,
//! adds a temporal embedding (no per-slot index: slots are an unordered
//! set), appends a learnable action token, and runs transformer encoder
//! blocks; the action token's output row conditions the mixture head. The
//! head is trained (and scores actions) in normalized units where
//! translations are divided by the simulator step clamp.

use tensor_core::{Graph, ParamSet, RngStream, Scalar, Tensor, TensorError};

use crate::action::Action;
use crate::config::{Config, ConfigError};
use crate::transformer::TransformerBlock;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PolicyMode {
    /// K slots per frame from the frozen object-centric encoder.
    Slots,
    /// One global token per frame: the spatial mean of the CNN features.
    Holistic,
}

impl PolicyMode {
    pub fn parse(s: &str) -> Option<PolicyMode> {
        match s {
            "slots" => Some(PolicyMode::Slots),
            "holistic" => Some(PolicyMode::Holistic),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyMode::Slots => "slots",
            PolicyMode::Holistic => "holistic",
        }
    }
}

#[derive(Clone, Debug)]
pub struct PolicyConfig {
    pub history_len: usize,
    pub trunk_dim: usize,
    pub trunk_depth: usize,
    pub trunk_heads: usize,
    pub mixtures: usize,
    pub mode: PolicyMode,
    /// Width of one input token (slot dim, or CNN feature dim in holistic
    /// mode).
    pub input_dim: usize,
    /// K in slot mode, 1 in holistic mode.
    pub tokens_per_frame: usize,
    /// Translation clamp used for action normalization and emission.
    pub max_step: f64,
}

impl PolicyConfig {
    pub fn from_config(
        cfg: &Config,
        input_dim: usize,
        tokens_per_frame: usize,
    ) -> Result<Self, ConfigError> {
        let mode_str = cfg.get("policy.mode");
        let mode = PolicyMode::parse(mode_str).ok_or_else(|| ConfigError::BadValue {
            key: "policy.mode".into(),
            msg: format!("expected slots|holistic, got {mode_str}"),
        })?;
        let out = PolicyConfig {
            history_len: cfg.get_usize("policy.history_len")?,
            trunk_dim: cfg.get_usize("policy.trunk_dim")?,
            trunk_depth: cfg.get_usize("policy.trunk_depth")?,
            trunk_heads: cfg.get_usize("policy.trunk_heads")?,
            mixtures: cfg.get_usize("policy.mixtures")?,
            mode,
            input_dim,
            tokens_per_frame,
            max_step: cfg.get_f64("sim.max_step")?,
        };
        out.validate().map_err(|msg| ConfigError::BadValue { key: "policy".into(), msg })?;
        Ok(out)
    }

    pub fn tiny(input_dim: usize, tokens_per_frame: usize) -> Self {
        PolicyConfig {
            history_len: 2,
            trunk_dim: 16,
            trunk_depth: 1,
            trunk_heads: 2,
            mixtures: 3,
            mode: PolicyMode::Slots,
            input_dim,
            tokens_per_frame,
            max_step: 0.05,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.history_len == 0 || self.mixtures == 0 {
            return Err("history_len and mixtures must be positive".into());
        }
        if self.trunk_dim % self.trunk_heads != 0 {
            return Err("trunk_dim must divide evenly into heads".into());
        }
        Ok(())
    }

    pub fn tokens_total(&self) -> usize {
        self.history_len * self.tokens_per_frame + 1
    }

    /// Metadata block echoed into policy checkpoints.
    pub fn metadata(&self) -> String {
        format!(
            "mode = {}\nhistory_len = {}\ntrunk_dim = {}\ntrunk_depth = {}\ntrunk_heads = {}\nmixtures = {}\ninput_dim = {}\ntokens_per_frame = {}\nmax_step = {}\n",
            self.mode.name(),
            self.history_len,
            self.trunk_dim,
            self.trunk_depth,
            self.trunk_heads,
            self.mixtures,
            self.input_dim,
            self.tokens_per_frame,
            self.max_step,
        )
    }
}

/// Mixture parameters for a batch row: M logits, M x 7 means, M x 7 raw
/// stds (softplus plus a small floor at use sites).
pub struct GmmParams<F: Scalar> {
    pub logits: Tensor<F>,
    pub means: Tensor<F>,
    pub log_stds_raw: Tensor<F>,
    pub mixtures: usize,
}

pub const STD_FLOOR: f64 = 1e-4;
pub const ACTION_DIM: usize = 7;

fn glorot<F: Scalar>(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor<F> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<F> = (0..rows * cols).map(|_| F::from_f64(rng.range(-limit, limit))).collect();
    Tensor::param(data, &[rows, cols]).unwrap()
}

fn zeros_param<F: Scalar>(n: usize) -> Tensor<F> {
    Tensor::param(vec![F::zero(); n], &[n]).unwrap()
}

pub struct Policy<F: Scalar> {
    pub cfg: PolicyConfig,
    proj_w: Tensor<F>,
    proj_b: Tensor<F>,
    /// Learned temporal embeddings, one row per history position.
    temporal: Tensor<F>,
    act_token: Tensor<F>,
    blocks: Vec<TransformerBlock<F>>,
    ln_f_g: Tensor<F>,
    ln_f_b: Tensor<F>,
    head_w: Tensor<F>,
    head_b: Tensor<F>,
}

impl<F: Scalar> Policy<F> {
    pub fn new(cfg: PolicyConfig, rng: &mut RngStream) -> Self {
        cfg.validate().expect("invalid policy config");
        let dim = cfg.trunk_dim;
        let m = cfg.mixtures;
        let head_out = m * (1 + 2 * ACTION_DIM);
        let head_b = {
            // Logits and means start at zero; raw stds start at
            // softplus^{-1}(1) so initial stds are about one.
            let raw = (1f64.exp() - 1.0).ln();
            let mut b = vec![F::zero(); head_out];
            for v in b[m + m * ACTION_DIM..].iter_mut() {
                *v = F::from_f64(raw);
            }
            Tensor::param(b, &[head_out]).unwrap()
        };
        // A small head weight keeps the initial mixture near the unit
        // Gaussian while still breaking component symmetry.
        let head_w = glorot(dim, head_out, rng);
        head_w.update_data(|d| {
            for v in d.iter_mut() {
                *v = *v * F::from_f64(0.1);
            }
        });
        Policy {
            proj_w: glorot(cfg.input_dim, dim, rng),
            proj_b: zeros_param(dim),
            temporal: glorot(cfg.history_len, dim, rng),
            act_token: glorot(1, dim, rng),
            blocks: (0..cfg.trunk_depth).map(|_| TransformerBlock::init(dim, rng)).collect(),
            ln_f_g: Tensor::param(vec![F::one(); dim], &[dim]).unwrap(),
            ln_f_b: zeros_param(dim),
            head_w,
            head_b,
            cfg,
        }
    }

    pub fn params(&self) -> ParamSet<F> {
        let mut entries: Vec<(String, Tensor<F>)> = vec![
            ("trunk.proj.w".into(), self.proj_w.clone()),
            ("trunk.proj.b".into(), self.proj_b.clone()),
            ("trunk.temporal".into(), self.temporal.clone()),
            ("trunk.act_token".into(), self.act_token.clone()),
        ];
        for (i, blk) in self.blocks.iter().enumerate() {
            entries.extend(blk.named(&format!("trunk.block{i}")));
        }
        entries.push(("trunk.ln_f.g".into(), self.ln_f_g.clone()));
        entries.push(("trunk.ln_f.b".into(), self.ln_f_b.clone()));
        entries.push(("head.w".into(), self.head_w.clone()));
        entries.push(("head.b".into(), self.head_b.clone()));
        ParamSet::new(entries)
    }

    /// Fuse a batch of slot histories into action-token embeddings.
    ///
    /// `tokens` rows are ordered (sample, frame, slot) and hold
    /// batch * H * tokens_per_frame rows of width input_dim. Returns the
    /// (batch x trunk_dim) action-token outputs.
    pub fn trunk_forward_batch(
        &self,
        g: &Graph<F>,
        tokens: &Tensor<F>,
        batch: usize,
    ) -> Result<Tensor<F>, TensorError> {
        let h = self.cfg.history_len;
        let per = self.cfg.tokens_per_frame;
        let (rows, dim_in) = tokens.dims2();
        if rows != batch * h * per || dim_in != self.cfg.input_dim {
            return Err(TensorError::Invalid {
                op: "trunk_forward",
                msg: format!(
                    "expected {batch}x{h}x{per} tokens of width {}, got {:?}",
                    self.cfg.input_dim,
                    tokens.shape()
                ),
            });
        }
        let x = g.linear(tokens, &self.proj_w, &self.proj_b)?;
        // Temporal embedding only: within a frame, slots stay unordered.
        let t_idx: Vec<usize> =
            (0..batch).flat_map(|_| (0..h).flat_map(move |t| std::iter::repeat(t).take(per))).collect();
        let temb = g.embedding(&self.temporal, &t_idx)?;
        let x = g.add(&x, &temb)?;

        // Append the [ACT] token to every sample by gathering from
        // [slot rows | act row].
        let table = g.concat_rows(&[&x, &self.act_token])?;
        let act_row = batch * h * per;
        let seq = h * per + 1;
        let mut gather = Vec::with_capacity(batch * seq);
        for b in 0..batch {
            gather.extend(b * h * per..(b + 1) * h * per);
            gather.push(act_row);
        }
        let mut x = g.embedding(&table, &gather)?;
        for blk in &self.blocks {
            x = blk.forward(g, &x, batch, seq, self.cfg.trunk_heads)?;
        }
        let x = g.layer_norm(&x, &self.ln_f_g, &self.ln_f_b)?;
        // The [ACT] output row of each sample.
        let act_idx: Vec<usize> = (0..batch).map(|b| b * seq + seq - 1).collect();
        g.embedding(&x, &act_idx)
    }

    /// Single-sample trunk pass: `history` holds H slot sets of
    /// tokens_per_frame x input_dim each.
    pub fn trunk_forward(
        &self,
        g: &Graph<F>,
        history: &[&Tensor<F>],
    ) -> Result<Tensor<F>, TensorError> {
        if history.len() != self.cfg.history_len {
            return Err(TensorError::Invalid {
                op: "trunk_forward",
                msg: format!(
                    "history must hold exactly {} frames, got {} (left-pad short histories)",
                    self.cfg.history_len,
                    history.len()
                ),
            });
        }
        let tokens = g.concat_rows(history)?;
        self.trunk_forward_batch(g, &tokens, 1)
    }

    /// Mixture parameters for every sample of a batch of act embeddings.
    pub fn head(
        &self,
        g: &Graph<F>,
        act_emb: &Tensor<F>,
        batch: usize,
    ) -> Result<Vec<GmmParams<F>>, TensorError> {
        let m = self.cfg.mixtures;
        let raw = g.linear(act_emb, &self.head_w, &self.head_b)?;
        let mut out = Vec::with_capacity(batch);
        for b in 0..batch {
            let row = g.slice_rows(&raw, b, 1)?;
            let logits = g.slice_cols(&row, 0, m)?;
            let means = g.reshape(&g.slice_cols(&row, m, m * ACTION_DIM)?, &[m, ACTION_DIM])?;
            let stds = g.reshape(
                &g.slice_cols(&row, m + m * ACTION_DIM, m * ACTION_DIM)?,
                &[m, ACTION_DIM],
            )?;
            out.push(GmmParams { logits, means, log_stds_raw: stds, mixtures: m });
        }
        Ok(out)
    }

    /// Negative log-likelihood of a (normalized) action under the mixture,
    /// computed through log-sum-exp.
    pub fn gmm_nll(
        &self,
        g: &Graph<F>,
        params: &GmmParams<F>,
        action_normalized: &[f64; 7],
    ) -> Result<Tensor<F>, TensorError> {
        gmm_nll(g, params, action_normalized)
    }

    /// Numeric mixture parameters for action sampling.
    pub fn gmm_values(&self, params: &GmmParams<F>) -> GmmValues {
        GmmValues::from_params(params)
    }

    /// Emit an action. Deterministic mode returns the mean of the
    /// highest-weight component (ties to the lowest index); stochastic mode
    /// samples a component then its diagonal Gaussian. Emission clamps
    /// apply either way.
    pub fn sample_action(
        &self,
        params: &GmmParams<F>,
        rng: &mut RngStream,
        stochastic: bool,
    ) -> Action {
        let vals = GmmValues::from_params(params);
        vals.sample(rng, stochastic, self.cfg.max_step)
    }
}

/// Plain-f64 mixture parameters.
pub struct GmmValues {
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 7]>,
    pub stds: Vec<[f64; 7]>,
}

impl GmmValues {
    pub fn from_params<F: Scalar>(p: &GmmParams<F>) -> Self {
        let logits = p.logits.to_f64_vec();
        let maxv = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - maxv).exp()).collect();
        let z: f64 = exps.iter().sum();
        let weights = exps.iter().map(|e| e / z).collect();
        let means_flat = p.means.to_f64_vec();
        let raw_flat = p.log_stds_raw.to_f64_vec();
        let softplus = |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p();
        let mut means = Vec::with_capacity(p.mixtures);
        let mut stds = Vec::with_capacity(p.mixtures);
        for mi in 0..p.mixtures {
            let mut mean = [0f64; 7];
            let mut std = [0f64; 7];
            for d in 0..ACTION_DIM {
                mean[d] = means_flat[mi * ACTION_DIM + d];
                std[d] = softplus(raw_flat[mi * ACTION_DIM + d]) + STD_FLOOR;
            }
            means.push(mean);
            stds.push(std);
        }
        GmmValues { weights, means, stds }
    }

    pub fn sample(&self, rng: &mut RngStream, stochastic: bool, max_step: f64) -> Action {
        let comp = if stochastic {
            let u = rng.uniform();
            let mut acc = 0.0;
            let mut pick = self.weights.len() - 1;
            for (i, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // Highest weight, ties broken by the lowest index.
            let mut best = 0;
            for (i, w) in self.weights.iter().enumerate().skip(1) {
                if *w > self.weights[best] {
                    best = i;
                }
            }
            best
        };
        let mut v = self.means[comp];
        if stochastic {
            for d in 0..ACTION_DIM {
                v[d] += self.stds[comp][d] * rng.normal();
            }
        }
        Action::from_normalized(&v, max_step)
    }
}

/// Standalone mixture NLL:
/// -log sum_m softmax(logits)_m N(a; mean_m, diag std_m^2), evaluated as
/// LSE_m(logit_m + log N_m) - LSE_m(logit_m) for stability.
pub fn gmm_nll<F: Scalar>(
    g: &Graph<F>,
    params: &GmmParams<F>,
    action: &[f64; 7],
) -> Result<Tensor<F>, TensorError> {
    {
        let finite = params.logits.data().iter().all(|v| v.is_finite())
            && params.means.data().iter().all(|v| v.is_finite())
            && params.log_stds_raw.data().iter().all(|v| v.is_finite());
        if !finite {
            return Err(TensorError::Invalid {
                op: "gmm_nll",
                msg: "non-finite mixture parameters".into(),
            });
        }
    }
    let m = params.mixtures;
    let half_log_tau = 0.5 * (2.0 * std::f64::consts::PI).ln();

    let stds = g.add_const(&g.softplus(&params.log_stds_raw)?, F::from_f64(STD_FLOOR))?;
    let neg_a: Vec<F> = action.iter().map(|v| F::from_f64(-*v)).collect();
    let neg_a = Tensor::from_vec(neg_a, &[ACTION_DIM])?;
    let diff = g.bias_add(&params.means, &neg_a)?;
    let z = g.div(&diff, &stds)?;
    let z2 = g.mul(&z, &z)?;
    // Per-component log density: -0.5 sum z^2 - sum log std - 3.5 log(2 pi)
    let quad = g.scale(&g.sum_rows(&z2)?, F::from_f64(-0.5))?;
    let logdet = g.scale(&g.sum_rows(&g.log(&stds)?)?, F::from_f64(-1.0))?;
    let comp = g.add_const(
        &g.add(&quad, &logdet)?,
        F::from_f64(-(ACTION_DIM as f64) * half_log_tau),
    )?;
    let comp_row = g.reshape(&comp, &[1, m])?;
    let mix = g.add(&params.logits, &comp_row)?;
    let lse_mix = g.logsumexp(&mix)?;
    let lse_w = g.logsumexp(&params.logits)?;
    g.sub(&lse_w, &lse_mix)
}

/// Left-pad a history to exactly `h` frames by repeating the earliest one.
/// Returns the padded list and whether padding was applied.
pub fn pad_history<T: Clone>(frames: &[T], h: usize) -> (Vec<T>, bool) {
    assert!(!frames.is_empty(), "history needs at least one frame");
    let take = frames.len().min(h);
    let slice = &frames[frames.len() - take..];
    let pad = h - take;
    let mut out = Vec::with_capacity(h);
    for _ in 0..pad {
        out.push(slice[0].clone());
    }
    out.extend_from_slice(slice);
    (out, pad > 0)
}
