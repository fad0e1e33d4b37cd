//! Closed-loop rollouts, the success-rate protocol (n rollouts x repeats,
//! fresh seed per rollout), qualitative decomposition dumps, and the
//! two-encoder comparison harness.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use tensor_core::{Graph, RngStream, Scalar, Tensor};

use crate::encoder::{SaviEncoder, SlotSet};
use crate::policy::{pad_history, Policy, PolicyMode};
use crate::ppm;
use crate::sim::{self, Level, LevelConfig, SimParams, Task};
use crate::trainer::{episode_slot_stream, TrainerError};

#[derive(Error, Debug)]
pub enum EvalError {
    #[error(transparent)]
    Trainer(#[from] TrainerError),
    #[error(transparent)]
    Tensor(#[from] tensor_core::TensorError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("report: {0}")]
    Report(String),
}

/// Outcome of one closed-loop episode.
#[derive(Clone, Debug)]
pub struct RolloutOutcome {
    pub seed: u64,
    pub success: bool,
    pub length: u32,
    /// Populated when the rollout aborted on an error (counted as failure).
    pub error: Option<String>,
}

/// Incremental slot state for a running episode.
struct EpisodeEncoderState<F: Scalar> {
    slot_rng: RngStream,
    prev_slots: Option<Vec<F>>,
    history: Vec<Vec<F>>,
}

/// Encode the newest frame and append its policy tokens to the history.
/// Returns the current slot matrix (for decomposition dumps).
fn advance_tokens<F: Scalar>(
    encoder: &SaviEncoder<F>,
    mode: PolicyMode,
    state: &mut EpisodeEncoderState<F>,
    frame: &[u8],
) -> Result<Vec<F>, EvalError> {
    let g = Graph::<F>::new();
    let img = encoder.frames_to_tensor(frame, 1);
    let feats = encoder.encode_frames(&g, &img, 1)?;
    let k = encoder.cfg.num_slots;
    let d = encoder.cfg.slot_dim;
    let slots = {
        let init = match &state.prev_slots {
            None => encoder.initial_slots(&g, 1, &mut state.slot_rng)?,
            Some(prev) => {
                let prev_set = SlotSet {
                    slots: Tensor::from_vec(prev.clone(), &[k, d])?,
                    count: 1,
                    num_slots: k,
                    slot_dim: d,
                };
                encoder.predict(&g, &prev_set)?
            }
        };
        let iters = if state.prev_slots.is_none() {
            encoder.cfg.iters_first
        } else {
            encoder.cfg.iters_later
        };
        let (out, _) = encoder.slot_attention(&g, &feats, &init, iters)?;
        out.slots.to_vec()
    };
    state.prev_slots = Some(slots.clone());
    let tokens = match mode {
        PolicyMode::Slots => slots.clone(),
        PolicyMode::Holistic => g.col_mean(&feats.values)?.to_vec(),
    };
    state.history.push(tokens);
    Ok(slots)
}

fn history_tensor<F: Scalar>(
    history: &[Vec<F>],
    h: usize,
    tokens_per_frame: usize,
    dim: usize,
) -> Tensor<F> {
    let (padded, _) = pad_history(history, h);
    let mut data = Vec::with_capacity(h * tokens_per_frame * dim);
    for frame in &padded {
        data.extend_from_slice(frame);
    }
    Tensor::from_vec(data, &[h * tokens_per_frame, dim]).unwrap()
}

/// Run one policy episode. Internal errors become failed outcomes at the
/// `evaluate` level; this returns them as hard errors.
#[allow(clippy::too_many_arguments)]
pub fn rollout<F: Scalar>(
    encoder: &SaviEncoder<F>,
    policy: &Policy<F>,
    task: Task,
    level: &LevelConfig,
    params: &SimParams,
    seed: u64,
    stochastic: bool,
    mut frame_sink: Option<&mut Vec<Vec<u8>>>,
) -> Result<RolloutOutcome, EvalError> {
    let (mut state, first) = sim::reset(task, level, params, seed)?;
    let mut enc_state = EpisodeEncoderState {
        slot_rng: episode_slot_stream(seed),
        prev_slots: None,
        history: Vec::new(),
    };
    let mut action_rng = RngStream::seed(seed ^ 0xAC7_1019).split(9);
    let mut frame = first;
    loop {
        if let Some(sink) = frame_sink.as_deref_mut() {
            sink.push(frame.clone());
        }
        advance_tokens(encoder, policy.cfg.mode, &mut enc_state, &frame)?;
        let g = Graph::<F>::new();
        let tokens = history_tensor(
            &enc_state.history,
            policy.cfg.history_len,
            policy.cfg.tokens_per_frame,
            policy.cfg.input_dim,
        );
        let act = policy.trunk_forward_batch(&g, &tokens, 1)?;
        let mix = policy.head(&g, &act, 1)?;
        let action = policy.sample_action(&mix[0], &mut action_rng, stochastic);
        let out = sim::step(&mut state, params, &action)?;
        if out.done {
            return Ok(RolloutOutcome {
                seed,
                success: out.success,
                length: state.step_count,
                error: None,
            });
        }
        frame = out.image;
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub seed: u64,
    pub success: bool,
    pub length: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Success-rate report for one (task, level, policy) cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub task: String,
    pub level: String,
    pub encoder: String,
    pub n_rollouts: usize,
    pub repeats: usize,
    pub seed_base: u64,
    pub policy_checkpoint: String,
    pub stochastic: bool,
    pub per_repeat_successes: Vec<u32>,
    pub mean: f64,
    pub std: f64,
    pub episodes: Vec<EpisodeRow>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// "0.88 ± 0.07" style summary.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{:.2} \u{b1} {:.2}", mean, std)
}

impl EvalReport {
    pub fn summary(&self) -> String {
        format_mean_std(self.mean, self.std)
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf, EvalError> {
        std::fs::create_dir_all(dir)?;
        let json_path = dir.join(format!("{stem}.json"));
        std::fs::write(
            &json_path,
            serde_json::to_string_pretty(self).map_err(|e| EvalError::Report(e.to_string()))?,
        )?;
        let mut csv = std::io::BufWriter::new(
            std::fs::File::create(dir.join(format!("{stem}_episodes.csv")))?,
        );
        writeln!(csv, "seed,success,length")?;
        for e in &self.episodes {
            writeln!(csv, "{},{},{}", e.seed, e.success as u8, e.length)?;
        }
        csv.flush()?;
        let mut txt = String::new();
        let _ = writeln!(
            txt,
            "task {}  level {}  encoder {}  n {} x {} repeats (seed base {})",
            self.task, self.level, self.encoder, self.n_rollouts, self.repeats, self.seed_base
        );
        let _ = writeln!(txt, "success rate: {}", self.summary());
        std::fs::write(dir.join(format!("{stem}.txt")), txt)?;
        Ok(json_path)
    }

    pub fn load(path: &Path) -> Result<EvalReport, EvalError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| EvalError::Report(e.to_string()))
    }
}

fn aggregate(rows: &[EpisodeRow], n: usize, repeats: usize) -> (Vec<u32>, f64, f64) {
    let mut per_repeat = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let ok = rows[r * n..(r + 1) * n].iter().filter(|e| e.success).count() as u32;
        per_repeat.push(ok);
    }
    let means: Vec<f64> = per_repeat.iter().map(|s| *s as f64 / n as f64).collect();
    let mean = means.iter().sum::<f64>() / repeats as f64;
    // Population std across the repeat means.
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / repeats as f64;
    (per_repeat, mean, var.sqrt())
}

/// The evaluation protocol: `n` rollouts per repeat, seeds
/// seed_base + repeat*n + i, repeated `repeats` times. Rollout errors count
/// as failures and the run continues. Episodes are distributed over a
/// worker pool; results are gathered by episode index so the report is
/// deterministic for any worker count.
#[allow(clippy::too_many_arguments)]
pub fn evaluate<F: Scalar>(
    encoder: &SaviEncoder<F>,
    policy: &Policy<F>,
    task: Task,
    level: Level,
    preset: sim::Preset,
    params: &SimParams,
    n: usize,
    repeats: usize,
    seed_base: u64,
    stochastic: bool,
    workers: usize,
    checkpoint_id: &str,
) -> Result<EvalReport, EvalError> {
    let enc_snapshot = encoder.params().snapshot();
    let pol_snapshot = policy.params().snapshot();
    let enc_cfg = encoder.cfg.clone();
    let pol_cfg = policy.cfg.clone();
    let total = n * repeats;
    let workers = if workers == 0 {
        std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1)
    } else {
        workers
    }
    .min(total.max(1));

    let level_cfg = LevelConfig::new(level, preset);
    let mut rows: Vec<Option<EpisodeRow>> = vec![None; total];
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers {
            let enc_snapshot = &enc_snapshot;
            let pol_snapshot = &pol_snapshot;
            let enc_cfg = enc_cfg.clone();
            let pol_cfg = pol_cfg.clone();
            let level_cfg = level_cfg.clone();
            let params = params.clone();
            handles.push(scope.spawn(move || -> Vec<(usize, EpisodeRow)> {
                // Each worker owns a private copy of the frozen models.
                let mut rng = RngStream::seed(0);
                let enc = SaviEncoder::<F>::new(enc_cfg, &mut rng);
                enc.params().restore(enc_snapshot).expect("encoder snapshot");
                enc.params().freeze();
                let pol = Policy::<F>::new(pol_cfg, &mut rng);
                pol.params().restore(pol_snapshot).expect("policy snapshot");
                pol.params().freeze();
                let mut out = Vec::new();
                let mut idx = w;
                while idx < total {
                    let repeat = idx / n;
                    let i = idx % n;
                    let seed = seed_base + (repeat * n + i) as u64;
                    let row = match rollout(
                        &enc, &pol, task, &level_cfg, &params, seed, stochastic, None,
                    ) {
                        Ok(o) => EpisodeRow {
                            seed,
                            success: o.success,
                            length: o.length,
                            error: None,
                        },
                        Err(e) => EpisodeRow {
                            seed,
                            success: false,
                            length: 0,
                            error: Some(e.to_string()),
                        },
                    };
                    out.push((idx, row));
                    idx += workers;
                }
                out
            }));
        }
        for h in handles {
            for (idx, row) in h.join().expect("eval worker") {
                rows[idx] = Some(row);
            }
        }
    });
    let rows: Vec<EpisodeRow> = rows.into_iter().map(|r| r.expect("episode row")).collect();
    let (per_repeat, mean, std) = aggregate(&rows, n, repeats);
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        task: task.name().into(),
        level: level.name().into(),
        encoder: encoder_label(policy),
        n_rollouts: n,
        repeats,
        seed_base,
        policy_checkpoint: checkpoint_id.into(),
        stochastic,
        per_repeat_successes: per_repeat,
        mean,
        std,
        episodes: rows,
    })
}

fn encoder_label<F: Scalar>(policy: &Policy<F>) -> String {
    match policy.cfg.mode {
        PolicyMode::Slots => "savi".into(),
        PolicyMode::Holistic => "holistic".into(),
    }
}

/// The same protocol with the scripted expert driving the simulator
/// (exercises the harness end to end without learned weights).
pub fn evaluate_expert(
    task: Task,
    level: Level,
    preset: sim::Preset,
    params: &SimParams,
    n: usize,
    repeats: usize,
    seed_base: u64,
) -> Result<EvalReport, EvalError> {
    let mut rows = Vec::with_capacity(n * repeats);
    for idx in 0..n * repeats {
        let seed = seed_base + idx as u64;
        let level_cfg = LevelConfig::new(level, preset);
        let row = match crate::expert::run_expert_episode(task, &level_cfg, params, seed) {
            Ok(ep) => EpisodeRow { seed, success: ep.success, length: ep.length, error: None },
            Err(e) => EpisodeRow { seed, success: false, length: 0, error: Some(e.to_string()) },
        };
        rows.push(row);
    }
    let (per_repeat, mean, std) = aggregate(&rows, n, repeats);
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        task: task.name().into(),
        level: level.name().into(),
        encoder: "expert".into(),
        n_rollouts: n,
        repeats,
        seed_base,
        policy_checkpoint: "expert".into(),
        stochastic: false,
        per_repeat_successes: per_repeat,
        mean,
        std,
        episodes: rows,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JointCell {
    pub mean: f64,
    pub std: f64,
    pub summary: String,
}

/// Side-by-side report over generalization levels for both encoders.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JointReport {
    pub schema_version: u32,
    pub task: String,
    pub n_rollouts: usize,
    pub repeats: usize,
    pub seed_base: u64,
    /// encoder name -> level name -> cell.
    pub cells: BTreeMap<String, BTreeMap<String, JointCell>>,
    /// Directional observations (reported, not asserted).
    pub notes: Vec<String>,
    pub table: String,
}

impl JointReport {
    pub fn from_reports(reports: &[EvalReport]) -> Result<JointReport, EvalError> {
        let first = reports.first().ok_or_else(|| EvalError::Report("no reports".into()))?;
        let mut cells: BTreeMap<String, BTreeMap<String, JointCell>> = BTreeMap::new();
        for r in reports {
            cells.entry(r.encoder.clone()).or_default().insert(
                r.level.clone(),
                JointCell { mean: r.mean, std: r.std, summary: r.summary() },
            );
        }
        // Aligned text table, levels as rows and encoders as columns.
        let encoders: Vec<String> = cells.keys().cloned().collect();
        let mut table = format!("{:<6}", "level");
        for e in &encoders {
            let _ = write!(table, " | {:>14}", e);
        }
        table.push('\n');
        for level in ["none", "L1", "L2", "L3"] {
            if !cells.values().any(|m| m.contains_key(level)) {
                continue;
            }
            let _ = write!(table, "{:<6}", level);
            for e in &encoders {
                match cells[e].get(level) {
                    Some(c) => {
                        let _ = write!(table, " | {:>14}", c.summary);
                    }
                    None => {
                        let _ = write!(table, " | {:>14}", "-");
                    }
                }
            }
            table.push('\n');
        }
        // Directional notes comparing in-distribution to each shifted level.
        let mut notes = Vec::new();
        for enc in &encoders {
            if let Some(base) = cells[enc].get("none") {
                for level in ["L1", "L2", "L3"] {
                    if let Some(cell) = cells[enc].get(level) {
                        notes.push(format!(
                            "{}: {} -> {} under {} (drop {:+.2})",
                            enc,
                            base.summary,
                            cell.summary,
                            level,
                            cell.mean - base.mean,
                        ));
                    }
                }
            }
        }
        if encoders.len() == 2 {
            for level in ["L1", "L2", "L3"] {
                let (a, b) = (&encoders[0], &encoders[1]);
                if let (Some(ca), Some(cb), Some(ba), Some(bb)) = (
                    cells[a].get(level),
                    cells[b].get(level),
                    cells[a].get("none"),
                    cells[b].get("none"),
                ) {
                    let drop_a = ba.mean - ca.mean;
                    let drop_b = bb.mean - cb.mean;
                    let more_robust = if drop_a < drop_b { a } else { b };
                    notes.push(format!(
                        "{level}: smaller drop for {more_robust} ({a} {drop_a:+.2}, {b} {drop_b:+.2})"
                    ));
                }
            }
        }
        Ok(JointReport {
            schema_version: REPORT_SCHEMA_VERSION,
            task: first.task.clone(),
            n_rollouts: first.n_rollouts,
            repeats: first.repeats,
            seed_base: first.seed_base,
            cells,
            notes,
            table,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(
            path,
            serde_json::to_string_pretty(self).map_err(|e| EvalError::Report(e.to_string()))?,
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<JointReport, EvalError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| EvalError::Report(e.to_string()))
    }
}

pub struct DecompositionOutcome {
    pub frames: Vec<u32>,
    pub files_per_frame: usize,
    pub mask_sum_max_err: f64,
    pub recomposition_exact: bool,
}

/// Run one rollout and dump, for every selected frame: the input image, the
/// composited reconstruction, and K mask-weighted per-slot images
/// (frame{t}_input.ppm, frame{t}_composite.ppm, frame{t}_slot{k}.ppm).
#[allow(clippy::too_many_arguments)]
pub fn decompose_rollout<F: Scalar>(
    encoder: &SaviEncoder<F>,
    policy: &Policy<F>,
    task: Task,
    level: &LevelConfig,
    params: &SimParams,
    seed: u64,
    out_dir: &Path,
    frame_stride: usize,
) -> Result<DecompositionOutcome, EvalError> {
    std::fs::create_dir_all(out_dir)?;
    let mut frames = Vec::new();
    rollout(encoder, policy, task, level, params, seed, false, Some(&mut frames))?;
    let size = params.image_size;
    let k = encoder.cfg.num_slots;
    let mut enc_state = EpisodeEncoderState {
        slot_rng: episode_slot_stream(seed),
        prev_slots: None,
        history: Vec::new(),
    };
    let mut written = Vec::new();
    let mut mask_err = 0f64;
    let mut recomposition_exact = true;
    for (t, frame) in frames.iter().enumerate() {
        // The unroll state must advance every frame regardless of dumping.
        let slots = advance_tokens(encoder, PolicyMode::Slots, &mut enc_state, frame)?;
        if t % frame_stride != 0 {
            continue;
        }
        let g = Graph::<F>::new();
        let slot_set = SlotSet {
            slots: Tensor::from_vec(slots, &[k, encoder.cfg.slot_dim])?,
            count: 1,
            num_slots: k,
            slot_dim: encoder.cfg.slot_dim,
        };
        let dec = encoder.decode(&g, &slot_set)?;
        let quantize = |vals: &[f64]| -> Vec<u8> {
            vals.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
        };
        ppm::write_ppm(&out_dir.join(format!("frame{t}_input.ppm")), size, size, frame)?;
        let comp = quantize(&dec.composites[0].to_f64_vec());
        ppm::write_ppm(&out_dir.join(format!("frame{t}_composite.ppm")), size, size, &comp)?;

        // Invariant bookkeeping: mask sums, and a recomposition done in the
        // engine precision with the same slot-order accumulation so it can
        // be compared bit for bit.
        let masks = dec.masks[0].to_vec();
        let rgb = dec.rgb.to_vec();
        let px = size * size;
        for p in 0..px {
            let s: f64 = (0..k).map(|si| masks[p * k + si].as_f64()).sum();
            mask_err = mask_err.max((s - 1.0).abs());
        }
        let mut recomposed = vec![F::zero(); px * 3];
        for s in 0..k {
            let mut slot_img = vec![0u8; px * 3];
            for p in 0..px {
                for c in 0..3 {
                    let v = masks[p * k + s] * rgb[(s * px + p) * 3 + c];
                    recomposed[p * 3 + c] = recomposed[p * 3 + c] + v;
                    slot_img[p * 3 + c] = (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8;
                }
            }
            ppm::write_ppm(&out_dir.join(format!("frame{t}_slot{s}.ppm")), size, size, &slot_img)?;
        }
        let requantized = quantize(&recomposed.iter().map(|v| v.as_f64()).collect::<Vec<_>>());
        if requantized != comp {
            recomposition_exact = false;
        }
        written.push(t as u32);
    }
    Ok(DecompositionOutcome {
        frames: written,
        files_per_frame: k + 2,
        mask_sum_max_err: mask_err,
        recomposition_exact,
    })
}
