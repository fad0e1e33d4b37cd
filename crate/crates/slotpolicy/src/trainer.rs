//! Two-phase training: reconstruction pretraining of the video encoder,
//! then frozen-encoder behavior cloning of the policy.
//!
//! Every random draw comes from a counter-based stream derived from the run
//! seed and the step index, so runs are reproducible and checkpoint resume
//! continues the exact sample sequence. Checkpoint saves quantize the live
//! training state to the f32 storage precision, which makes "save and
//! continue" bitwise identical to "save, reload, continue" in either engine
//! precision.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use tensor_core::checkpoint::{self, CheckpointEntry};
use tensor_core::{AdamConfig, AdamState, Graph, ParamSet, RngStream, Scalar, Tensor};

use crate::config::{Config, ConfigError};
use crate::dataset::{sample_clips, sample_transition_indices, DatasetError, DatasetIndex, SplitKind};
use crate::encoder::{SaviConfig, SaviEncoder};
use crate::policy::{Policy, PolicyConfig, PolicyMode};

#[derive(Error, Debug)]
pub enum TrainerError {
    #[error(transparent)]
    Tensor(#[from] tensor_core::TensorError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("non-finite loss at step {step} (batch stream {stream}): aborting")]
    NonFiniteLoss { step: u64, stream: u64 },
    #[error("frozen encoder parameter `{0}` received a gradient")]
    FrozenGradient(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

// Stream domains under the run seed.
const STREAM_INIT: u64 = 1;
const STREAM_DATA: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_EVAL: u64 = 4;

/// Slot-initialization stream for one episode: a pure function of the
/// episode seed, shared by the slot cache, rollouts, and decomposition
/// dumps so a given episode always sees the same initial slots.
pub fn episode_slot_stream(episode_seed: u64) -> RngStream {
    RngStream::seed(episode_seed ^ 0x5107_1217).split(7)
}

#[derive(Clone, Debug)]
pub struct LoopConfig {
    pub steps: u64,
    pub batch: usize,
    pub lr: f64,
    pub warmup: u64,
    pub checkpoint_every: u64,
    pub metrics_every: u64,
    pub eval_every: u64,
    pub seed: u64,
}

impl LoopConfig {
    pub fn pretrain_from(cfg: &Config) -> Result<Self, ConfigError> {
        Ok(LoopConfig {
            steps: cfg.get_u64("pretrain.steps")?,
            batch: cfg.get_usize("pretrain.batch")?,
            lr: cfg.get_f64("pretrain.lr")?,
            warmup: cfg.get_u64("pretrain.warmup")?,
            checkpoint_every: cfg.get_u64("pretrain.checkpoint_every")?,
            metrics_every: cfg.get_u64("pretrain.metrics_every")?,
            eval_every: cfg.get_u64("pretrain.eval_every")?,
            seed: cfg.get_u64("run.seed")?,
        })
    }

    pub fn bc_from(cfg: &Config) -> Result<Self, ConfigError> {
        Ok(LoopConfig {
            steps: cfg.get_u64("bc.steps")?,
            batch: cfg.get_usize("bc.batch")?,
            lr: cfg.get_f64("bc.lr")?,
            warmup: cfg.get_u64("bc.warmup")?,
            checkpoint_every: cfg.get_u64("bc.checkpoint_every")?,
            metrics_every: cfg.get_u64("bc.metrics_every")?,
            eval_every: 0,
            seed: cfg.get_u64("run.seed")?,
        })
    }

    fn lr_at(&self, step: u64) -> f64 {
        if self.warmup == 0 {
            return self.lr;
        }
        self.lr * ((step + 1) as f64 / self.warmup as f64).min(1.0)
    }
}

struct MetricsLog {
    file: std::io::BufWriter<std::fs::File>,
    started: Instant,
}

impl MetricsLog {
    fn create(path: &Path, header: &str) -> Result<Self, TrainerError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "{header}")?;
        Ok(MetricsLog { file, started: Instant::now() })
    }

    fn row(&mut self, step: u64, values: &[f64]) -> Result<(), TrainerError> {
        write!(self.file, "{step}")?;
        for v in values {
            write!(self.file, ",{v}")?;
        }
        writeln!(self.file, ",{:.3}", self.started.elapsed().as_secs_f64())?;
        self.file.flush()?;
        Ok(())
    }
}

fn grad_norm<F: Scalar>(grads: &[Vec<F>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| {
            let x = v.as_f64();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Save params (+ optimizer moments + step) for resume, quantizing the live
/// state to storage precision first.
fn save_train_state<F: Scalar>(
    path: &Path,
    params: &ParamSet<F>,
    adam: &mut AdamState<F>,
    step: u64,
) -> Result<(), TrainerError> {
    params.quantize_to_f32();
    adam.quantize_to_f32();
    let mut entries = checkpoint::entries_from_params(params);
    let (m, v) = adam.moments();
    for ((name, tensor), (mi, vi)) in params.iter().zip(m.iter().zip(v.iter())) {
        let dims = tensor.shape().to_vec();
        entries.push(CheckpointEntry {
            name: format!("adam.m.{name}"),
            dims: dims.clone(),
            data: mi.iter().map(|x| x.as_f64() as f32).collect(),
        });
        entries.push(CheckpointEntry {
            name: format!("adam.v.{name}"),
            dims,
            data: vi.iter().map(|x| x.as_f64() as f32).collect(),
        });
    }
    entries.push(CheckpointEntry {
        name: "trainer.step".into(),
        dims: vec![1],
        data: vec![step as f32],
    });
    checkpoint::write_entries(path, &entries)?;
    Ok(())
}

/// Restore params and optimizer moments; returns the recorded step count.
fn load_train_state<F: Scalar>(
    path: &Path,
    params: &ParamSet<F>,
    adam: &mut AdamState<F>,
) -> Result<u64, TrainerError> {
    let entries = checkpoint::read_entries(path)?;
    let find = |name: &str| -> Result<&CheckpointEntry, TrainerError> {
        entries.iter().find(|e| e.name == name).ok_or_else(|| {
            TrainerError::Tensor(tensor_core::TensorError::Checkpoint(format!(
                "missing `{name}` in {path:?}"
            )))
        })
    };
    for (name, tensor) in params.iter() {
        let e = find(name)?;
        let data: Vec<F> = e.data.iter().map(|v| F::from_f64(*v as f64)).collect();
        tensor.set_data(&data);
    }
    let mut ms = Vec::new();
    let mut vs = Vec::new();
    for (name, _) in params.iter() {
        ms.push(find(&format!("adam.m.{name}"))?.data.iter().map(|v| F::from_f64(*v as f64)).collect());
        vs.push(find(&format!("adam.v.{name}"))?.data.iter().map(|v| F::from_f64(*v as f64)).collect());
    }
    let step = find("trainer.step")?.data[0] as u64;
    adam.restore_moments(ms, vs, step)?;
    Ok(step)
}

/// Interleave clip frames (batch of per-clip frame sequences) into the
/// frame-major (t, b) row order the encoder expects.
pub fn clip_batch_bytes(clips: &[crate::dataset::ClipSample], t_frames: usize) -> Vec<u8> {
    let fb = clips[0].frame_bytes;
    let mut out = Vec::with_capacity(clips.len() * t_frames * fb);
    for t in 0..t_frames {
        for c in clips {
            out.extend_from_slice(&c.frames[t * fb..(t + 1) * fb]);
        }
    }
    out
}

/// One reconstruction step over a clip batch. Returns the loss.
pub fn pretrain_step<F: Scalar>(
    encoder: &SaviEncoder<F>,
    params: &ParamSet<F>,
    adam: &mut AdamState<F>,
    frames_u8: &[u8],
    batch: usize,
    t_frames: usize,
    noise_rng: &mut RngStream,
    lr: f64,
) -> Result<(f64, f64), TrainerError> {
    adam.cfg.lr = lr;
    let g = Graph::<F>::new();
    let frames = encoder.frames_to_tensor(frames_u8, batch * t_frames);
    let out = encoder.unroll(&g, &frames, batch, t_frames, noise_rng)?;
    let refs: Vec<&Tensor<F>> = out.decode.composites.iter().collect();
    let loss = encoder.recon_loss(&g, &refs, &frames)?;
    let loss_val = loss.item().as_f64();
    if !loss_val.is_finite() {
        return Err(TrainerError::NonFiniteLoss { step: 0, stream: 0 });
    }
    params.zero_grads();
    g.backward(&loss)?;
    let grads = params.take_grads();
    let gnorm = grad_norm(&grads);
    adam.step(params, &grads)?;
    Ok((loss_val, gnorm))
}

/// Held-out reconstruction MSE on a fixed clip set (forward only).
pub fn heldout_mse<F: Scalar>(
    encoder: &SaviEncoder<F>,
    clips_u8: &[Vec<u8>],
    batch: usize,
    t_frames: usize,
) -> Result<f64, TrainerError> {
    let mut total = 0.0;
    for (chunk_idx, chunk) in clips_u8.chunks(batch).enumerate() {
        let fb = chunk[0].len() / t_frames;
        let mut bytes = Vec::new();
        for t in 0..t_frames {
            for c in chunk {
                bytes.extend_from_slice(&c[t * fb..(t + 1) * fb]);
            }
        }
        let g = Graph::<F>::new();
        let frames = encoder.frames_to_tensor(&bytes, chunk.len() * t_frames);
        let mut rng = RngStream::seed(0xE7A1 + chunk_idx as u64);
        let out = encoder.unroll(&g, &frames, chunk.len(), t_frames, &mut rng)?;
        let refs: Vec<&Tensor<F>> = out.decode.composites.iter().collect();
        let loss = encoder.recon_loss(&g, &refs, &frames)?;
        total += loss.item().as_f64() * chunk.len() as f64;
    }
    Ok(total / clips_u8.len() as f64)
}

pub struct PretrainOutcome {
    pub final_loss: f64,
    pub final_heldout_mse: f64,
    pub encoder_path: PathBuf,
    pub losses: Vec<f64>,
}

/// Reconstruction pretraining over one or more shards.
pub fn pretrain<F: Scalar>(
    enc_cfg: &SaviConfig,
    data: &[&DatasetIndex],
    loop_cfg: &LoopConfig,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<PretrainOutcome, TrainerError> {
    std::fs::create_dir_all(out_dir)?;
    let root = RngStream::seed(loop_cfg.seed);
    let mut init_rng = root.split(STREAM_INIT);
    let encoder = SaviEncoder::<F>::new(enc_cfg.clone(), &mut init_rng);
    let params = encoder.params();
    let mut adam = AdamState::new(&params, AdamConfig { lr: loop_cfg.lr, ..AdamConfig::default() });

    let start_step = match resume {
        Some(path) => load_train_state(path, &params, &mut adam)?,
        None => 0,
    };

    // Fixed held-out clips for MSE tracking (validation split when it has
    // any episodes, train otherwise).
    let t_frames = enc_cfg.clip_len;
    let eval_clips: Vec<Vec<u8>> = {
        let mut rng = root.split(STREAM_EVAL);
        let mut clips = Vec::new();
        for idx in data.iter() {
            let kind = if idx.val.is_empty() { SplitKind::Train } else { SplitKind::Val };
            let take = 16usize.div_ceil(data.len());
            let mut sampled = sample_clips(idx, kind, t_frames, take, &mut rng)?;
            clips.extend(sampled.drain(..).map(|c| c.frames));
        }
        clips
    };

    let mut metrics =
        MetricsLog::create(&out_dir.join("pretrain_metrics.csv"), "step,loss,grad_norm,wall_time_s")?;
    let mut eval_log =
        MetricsLog::create(&out_dir.join("pretrain_eval.csv"), "step,heldout_mse,wall_time_s")?;

    let episode_counts: Vec<usize> = data.iter().map(|d| d.train.len().max(1)).collect();
    let total_eps: usize = episode_counts.iter().sum();

    let mut losses = Vec::new();
    let mut final_heldout = f64::NAN;
    for step in start_step..loop_cfg.steps {
        let mut data_rng = root.split(STREAM_DATA).split(step);
        let mut noise_rng = root.split(STREAM_NOISE).split(step);
        // Pick the source shard proportionally to episode counts, then clips.
        let mut clips = Vec::with_capacity(loop_cfg.batch);
        for _ in 0..loop_cfg.batch {
            let mut pick = data_rng.below(total_eps);
            let mut which = 0;
            for (i, c) in episode_counts.iter().enumerate() {
                if pick < *c {
                    which = i;
                    break;
                }
                pick -= c;
            }
            clips.extend(sample_clips(data[which], SplitKind::Train, t_frames, 1, &mut data_rng)?);
        }
        let bytes = clip_batch_bytes(&clips, t_frames);
        let lr = loop_cfg.lr_at(step);
        let (loss, gnorm) = pretrain_step(
            &encoder, &params, &mut adam, &bytes, loop_cfg.batch, t_frames, &mut noise_rng, lr,
        )
        .map_err(|e| match e {
            TrainerError::NonFiniteLoss { .. } => TrainerError::NonFiniteLoss { step, stream: step },
            other => other,
        })?;
        losses.push(loss);

        let done = step + 1 == loop_cfg.steps;
        if (step + 1) % loop_cfg.metrics_every == 0 || done || step == 0 {
            metrics.row(step + 1, &[loss, gnorm])?;
        }
        if (step + 1) % loop_cfg.eval_every == 0 || step + 1 == 100 || done {
            let mse = heldout_mse(&encoder, &eval_clips, loop_cfg.batch.max(1), t_frames)?;
            eval_log.row(step + 1, &[mse])?;
            if done {
                final_heldout = mse;
            }
        }
        if (step + 1) % loop_cfg.checkpoint_every == 0 || done {
            save_train_state(
                &out_dir.join(format!("trainer_state_{:06}.spck", step + 1)),
                &params,
                &mut adam,
                step + 1,
            )?;
            let entries = checkpoint::entries_from_params(&params);
            checkpoint::write_entries(&out_dir.join(format!("encoder_{:06}.spck", step + 1)), &entries)?;
        }
    }
    let entries = checkpoint::entries_from_params(&params);
    let encoder_path = out_dir.join("encoder_final.spck");
    checkpoint::write_entries(&encoder_path, &entries)?;
    Ok(PretrainOutcome {
        final_loss: *losses.last().unwrap_or(&f64::NAN),
        final_heldout_mse: final_heldout,
        encoder_path,
        losses,
    })
}

/// Load encoder weights from a checkpoint and freeze them.
pub fn load_frozen_encoder<F: Scalar>(
    enc_cfg: &SaviConfig,
    path: &Path,
) -> Result<SaviEncoder<F>, TrainerError> {
    let mut rng = RngStream::seed(0);
    let encoder = SaviEncoder::<F>::new(enc_cfg.clone(), &mut rng);
    let params = encoder.params();
    let entries = checkpoint::read_entries(path)?;
    checkpoint::load_into_params(&params, &entries)?;
    params.freeze();
    Ok(encoder)
}

/// Per-frame policy tokens for every episode of a dataset: slot sets from
/// the frozen encoder's full-episode unrolls, or spatial-mean CNN features
/// in holistic mode. Indexed [episode][frame].
pub struct TokenCache<F: Scalar> {
    pub tokens: Vec<Vec<Vec<F>>>,
    pub tokens_per_frame: usize,
    pub token_dim: usize,
}

pub fn build_token_cache<F: Scalar>(
    encoder: &SaviEncoder<F>,
    data: &DatasetIndex,
    mode: PolicyMode,
) -> Result<TokenCache<F>, TrainerError> {
    let mut all = Vec::with_capacity(data.reader.episodes.len());
    for ep in 0..data.reader.episodes.len() {
        let header = data.reader.episodes[ep].header;
        let len = header.length as usize;
        let bytes = data.reader.read_frames(ep, 0, len)?;
        let mut rng = episode_slot_stream(header.seed);
        all.push(episode_tokens(encoder, &bytes, len, mode, &mut rng)?);
    }
    let (per, dim) = match mode {
        PolicyMode::Slots => (encoder.cfg.num_slots, encoder.cfg.slot_dim),
        PolicyMode::Holistic => (1, encoder.cfg.feature_dim()),
    };
    Ok(TokenCache { tokens: all, tokens_per_frame: per, token_dim: dim })
}

/// Tokens for each frame of one episode (frozen encoder, no tape).
pub fn episode_tokens<F: Scalar>(
    encoder: &SaviEncoder<F>,
    frames_u8: &[u8],
    len: usize,
    mode: PolicyMode,
    slot_rng: &mut RngStream,
) -> Result<Vec<Vec<F>>, TrainerError> {
    let g = Graph::<F>::new();
    let frames = encoder.frames_to_tensor(frames_u8, len);
    match mode {
        PolicyMode::Slots => {
            let out = encoder.unroll(&g, &frames, 1, len, slot_rng)?;
            Ok(out.slots.iter().map(|s| s.slots.to_vec()).collect())
        }
        PolicyMode::Holistic => {
            let feats = encoder.encode_frames(&g, &frames, len)?;
            let n = feats.height * feats.width;
            let mut out = Vec::with_capacity(len);
            for t in 0..len {
                let ft = g.slice_rows(&feats.values, t * n, n)?;
                out.push(g.col_mean(&ft)?.to_vec());
            }
            Ok(out)
        }
    }
}

/// Assemble the (batch*H*tokens_per_frame) x dim token tensor for a list of
/// (episode, t) picks, left-padding short histories.
pub fn gather_history_tokens<F: Scalar>(
    cache: &TokenCache<F>,
    picks: &[(usize, usize)],
    history: usize,
) -> Tensor<F> {
    let per = cache.tokens_per_frame;
    let dim = cache.token_dim;
    let mut data = Vec::with_capacity(picks.len() * history * per * dim);
    for (ep, t) in picks {
        for i in 0..history {
            let offset = (history - 1 - i) as isize;
            let frame = (*t as isize - offset).max(0) as usize;
            data.extend_from_slice(&cache.tokens[*ep][frame]);
        }
    }
    Tensor::from_vec(data, &[picks.len() * history * per, dim]).unwrap()
}

/// One behavior-cloning step on prepared tokens and (normalized) targets.
pub fn bc_step<F: Scalar>(
    policy: &Policy<F>,
    params: &ParamSet<F>,
    adam: &mut AdamState<F>,
    tokens: &Tensor<F>,
    targets: &[[f64; 7]],
    lr: f64,
) -> Result<f64, TrainerError> {
    adam.cfg.lr = lr;
    let batch = targets.len();
    let g = Graph::<F>::new();
    let act = policy.trunk_forward_batch(&g, tokens, batch)?;
    let mix = policy.head(&g, &act, batch)?;
    let mut nlls = Vec::with_capacity(batch);
    for (p, a) in mix.iter().zip(targets) {
        nlls.push(policy.gmm_nll(&g, p, a)?);
    }
    let refs: Vec<&Tensor<F>> = nlls.iter().collect();
    let loss = g.mean_all(&g.concat_rows(&refs)?)?;
    let loss_val = loss.item().as_f64();
    if !loss_val.is_finite() {
        return Err(TrainerError::NonFiniteLoss { step: 0, stream: 0 });
    }
    params.zero_grads();
    g.backward(&loss)?;
    let grads = params.take_grads();
    adam.step(params, &grads)?;
    Ok(loss_val)
}

pub struct BcOutcome {
    pub final_loss: f64,
    pub policy_path: PathBuf,
    pub losses: Vec<f64>,
}

/// Behavior cloning against a frozen encoder.
pub fn behavior_clone<F: Scalar>(
    encoder: &SaviEncoder<F>,
    policy_cfg: &PolicyConfig,
    data: &DatasetIndex,
    loop_cfg: &LoopConfig,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<BcOutcome, TrainerError> {
    std::fs::create_dir_all(out_dir)?;
    let enc_params = encoder.params();
    enc_params.freeze();

    let cache = build_token_cache(encoder, data, policy_cfg.mode)?;

    let root = RngStream::seed(loop_cfg.seed);
    let mut init_rng = root.split(STREAM_INIT);
    let policy = Policy::<F>::new(policy_cfg.clone(), &mut init_rng);
    let params = policy.params();
    let mut adam = AdamState::new(&params, AdamConfig { lr: loop_cfg.lr, ..AdamConfig::default() });
    let start_step = match resume {
        Some(path) => load_train_state(path, &params, &mut adam)?,
        None => 0,
    };

    let mut metrics =
        MetricsLog::create(&out_dir.join("bc_metrics.csv"), "step,loss,grad_norm,wall_time_s")?;

    let max_step = policy_cfg.max_step;
    let mut losses = Vec::new();
    for step in start_step..loop_cfg.steps {
        let mut data_rng = root.split(STREAM_DATA).split(step);
        let picks =
            sample_transition_indices(data, SplitKind::Train, loop_cfg.batch, &mut data_rng);
        let tokens = gather_history_tokens(&cache, &picks, policy_cfg.history_len);
        let targets: Vec<[f64; 7]> = picks
            .iter()
            .map(|(ep, t)| {
                let a = data.reader.read_action(*ep, *t)?;
                Ok(crate::action::Action::from_f32(&a).to_normalized(max_step))
            })
            .collect::<Result<Vec<[f64; 7]>, DatasetError>>()?;
        let lr = loop_cfg.lr_at(step);
        let loss = bc_step(&policy, &params, &mut adam, &tokens, &targets, lr).map_err(|e| match e {
            TrainerError::NonFiniteLoss { .. } => TrainerError::NonFiniteLoss { step, stream: step },
            other => other,
        })?;
        losses.push(loss);

        // Frozen-encoder watchdog: no encoder parameter may ever
        // accumulate a gradient.
        if step == start_step || (step + 1) % 100 == 0 {
            for (name, t) in enc_params.iter() {
                if t.grad().is_some() {
                    return Err(TrainerError::FrozenGradient(name.clone()));
                }
            }
        }

        let done = step + 1 == loop_cfg.steps;
        if (step + 1) % loop_cfg.metrics_every == 0 || done || step == 0 {
            metrics.row(step + 1, &[loss, f64::NAN])?;
        }
        if (step + 1) % loop_cfg.checkpoint_every == 0 || done {
            save_train_state(
                &out_dir.join(format!("trainer_state_{:06}.spck", step + 1)),
                &params,
                &mut adam,
                step + 1,
            )?;
            let entries = checkpoint::entries_from_params(&params);
            checkpoint::write_with_metadata(
                &out_dir.join(format!("policy_{:06}.spck", step + 1)),
                &policy_cfg.metadata(),
                &entries,
            )?;
        }
    }
    let entries = checkpoint::entries_from_params(&params);
    let policy_path = out_dir.join("policy_final.spck");
    checkpoint::write_with_metadata(&policy_path, &policy_cfg.metadata(), &entries)?;
    Ok(BcOutcome { final_loss: *losses.last().unwrap_or(&f64::NAN), policy_path, losses })
}

/// Load a policy checkpoint (metadata header + weights).
pub fn load_policy<F: Scalar>(path: &Path) -> Result<(Policy<F>, String), TrainerError> {
    let (meta, entries) = checkpoint::read_with_metadata(path)?;
    let get = |key: &str| -> Result<String, TrainerError> {
        meta.lines()
            .find_map(|l| {
                let (k, v) = l.split_once('=')?;
                (k.trim() == key).then(|| v.trim().to_string())
            })
            .ok_or_else(|| {
                TrainerError::Tensor(tensor_core::TensorError::Checkpoint(format!(
                    "metadata key `{key}` missing"
                )))
            })
    };
    let parse_usize = |key: &str| -> Result<usize, TrainerError> {
        get(key)?.parse::<usize>().map_err(|e| {
            TrainerError::Tensor(tensor_core::TensorError::Checkpoint(format!("metadata `{key}`: {e}")))
        })
    };
    let cfg = PolicyConfig {
        history_len: parse_usize("history_len")?,
        trunk_dim: parse_usize("trunk_dim")?,
        trunk_depth: parse_usize("trunk_depth")?,
        trunk_heads: parse_usize("trunk_heads")?,
        mixtures: parse_usize("mixtures")?,
        mode: PolicyMode::parse(&get("mode")?).ok_or_else(|| {
            TrainerError::Tensor(tensor_core::TensorError::Checkpoint("bad mode".into()))
        })?,
        input_dim: parse_usize("input_dim")?,
        tokens_per_frame: parse_usize("tokens_per_frame")?,
        max_step: get("max_step")?.parse::<f64>().map_err(|e| {
            TrainerError::Tensor(tensor_core::TensorError::Checkpoint(format!("max_step: {e}")))
        })?,
    };
    let mut rng = RngStream::seed(0);
    let policy = Policy::<F>::new(cfg, &mut rng);
    let params = policy.params();
    checkpoint::load_into_params(&params, &entries)?;
    Ok((policy, meta))
}
