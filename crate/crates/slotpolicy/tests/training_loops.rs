//! Trainer contracts: loss sanity, overfit oracles, bitwise determinism,
//! checkpoint resume continuity, and frozen-encoder enforcement.

use std::path::Path;

use slotpolicy::config::Config;
use slotpolicy::dataset::{self, DatasetIndex, SplitKind};
use slotpolicy::encoder::{SaviConfig, SaviEncoder};
use slotpolicy::policy::{Policy, PolicyConfig, PolicyMode};
use slotpolicy::sim::{Level, LevelConfig, Preset, SimParams, Task};
use slotpolicy::trainer::{
    self, bc_step, behavior_clone, build_token_cache, clip_batch_bytes, gather_history_tokens,
    load_frozen_encoder, load_policy, pretrain, pretrain_step, LoopConfig,
};
use tensor_core::{AdamConfig, AdamState, RngStream};

fn tiny_sim() -> SimParams {
    SimParams { image_size: 16, ..SimParams::default() }
}

fn tiny_enc_cfg() -> SaviConfig {
    SaviConfig {
        image_size: 16,
        num_slots: 3,
        slot_dim: 16,
        iters_first: 2,
        iters_later: 1,
        clip_len: 2,
        cnn_channels: vec![8, 8, 8, 8, 8],
        predictor_depth: 1,
        predictor_heads: 2,
        broadcast_grid: 4,
    }
}

fn tiny_dataset(dir: &Path, episodes: usize) -> DatasetIndex {
    let params = tiny_sim();
    let level = LevelConfig::new(Level::InDist, Preset::Reduced);
    dataset::generate(Task::Push, &level, &params, episodes, 500, dir, "episodes.rshp").unwrap();
    DatasetIndex::open(&dir.join("episodes.rshp")).unwrap()
}

fn tiny_loop(steps: u64, batch: usize, seed: u64) -> LoopConfig {
    LoopConfig {
        steps,
        batch,
        lr: 2e-3,
        warmup: 10,
        checkpoint_every: 10,
        metrics_every: 5,
        eval_every: 10,
        seed,
    }
}

#[test]
fn pretrain_loss_is_finite_positive_and_decreases_on_fixed_batch() {
    let dir = tempfile::tempdir().unwrap();
    let index = tiny_dataset(dir.path(), 8);
    let cfg = tiny_enc_cfg();
    let mut rng = RngStream::seed(3);
    let enc = SaviEncoder::<f64>::new(cfg, &mut rng);
    let params = enc.params();
    let mut adam = AdamState::new(&params, AdamConfig { lr: 2e-3, ..Default::default() });

    let mut data_rng = RngStream::seed(9);
    let clips = dataset::sample_clips(&index, SplitKind::Train, 2, 4, &mut data_rng).unwrap();
    let bytes = clip_batch_bytes(&clips, 2);

    // Overfit-one-batch oracle: 500 repeats of the same batch must cut the
    // loss below 20% of its initial value.
    let mut first = f64::NAN;
    let mut last = f64::NAN;
    for step in 0..500u64 {
        let mut noise = RngStream::seed(77); // same clips, same init slots
        let (loss, _) =
            pretrain_step(&enc, &params, &mut adam, &bytes, 4, 2, &mut noise, 2e-3).unwrap();
        assert!(loss.is_finite() && loss > 0.0);
        if step == 0 {
            first = loss;
        }
        last = loss;
    }
    assert!(
        last < 0.2 * first,
        "overfit-one-batch failed: {first} -> {last}"
    );
}

#[test]
fn constant_color_clips_collapse_quickly() {
    // All-constant frames: the decoder bias alone suffices, loss must
    // approach zero rapidly.
    let cfg = tiny_enc_cfg();
    let mut rng = RngStream::seed(5);
    let enc = SaviEncoder::<f64>::new(cfg, &mut rng);
    let params = enc.params();
    let mut adam = AdamState::new(&params, AdamConfig { lr: 5e-3, ..Default::default() });
    let bytes: Vec<u8> = vec![128; 4 * 2 * 16 * 16 * 3];
    let mut first = f64::NAN;
    let mut last = f64::NAN;
    for step in 0..120u64 {
        let mut noise = RngStream::seed(step);
        let (loss, _) =
            pretrain_step(&enc, &params, &mut adam, &bytes, 4, 2, &mut noise, 5e-3).unwrap();
        if step == 0 {
            first = loss;
        }
        last = loss;
    }
    assert!(last < first * 0.05 && last < 5e-3, "constant clips: {first} -> {last}");
}

#[test]
fn identical_seed_and_data_give_identical_loss_curves() {
    let dir = tempfile::tempdir().unwrap();
    let index = tiny_dataset(dir.path(), 8);
    let cfg = tiny_enc_cfg();
    let run = |out: &Path| -> Vec<f64> {
        pretrain::<f64>(&cfg, &[&index], &tiny_loop(12, 2, 42), out, None).unwrap().losses
    };
    let a = run(&dir.path().join("a"));
    let b = run(&dir.path().join("b"));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.to_bits(), y.to_bits(), "loss curves diverged");
    }
}

#[test]
fn checkpoint_resume_is_bitwise_continuous() {
    let dir = tempfile::tempdir().unwrap();
    let index = tiny_dataset(dir.path(), 8);
    let cfg = tiny_enc_cfg();
    // Uninterrupted run saving a checkpoint at step 10 (checkpoint_every).
    let full = pretrain::<f64>(&cfg, &[&index], &tiny_loop(20, 2, 7), &dir.path().join("full"), None)
        .unwrap()
        .losses;
    // Fresh process resumes from step 10.
    let resumed = pretrain::<f64>(
        &cfg,
        &[&index],
        &tiny_loop(20, 2, 7),
        &dir.path().join("resumed"),
        Some(&dir.path().join("full").join("trainer_state_000010.spck")),
    )
    .unwrap()
    .losses;
    assert_eq!(resumed.len(), 10);
    for (x, y) in full[10..].iter().zip(&resumed) {
        assert_eq!(x.to_bits(), y.to_bits(), "resume diverged: {x} vs {y}");
    }
}

fn bc_fixture(
    dir: &Path,
) -> (DatasetIndex, SaviEncoder<f64>, PolicyConfig) {
    let index = tiny_dataset(dir, 8);
    let cfg = tiny_enc_cfg();
    let mut rng = RngStream::seed(11);
    let enc = SaviEncoder::<f64>::new(cfg, &mut rng);
    let pol_cfg = PolicyConfig {
        history_len: 2,
        trunk_dim: 16,
        trunk_depth: 1,
        trunk_heads: 2,
        mixtures: 2,
        mode: PolicyMode::Slots,
        input_dim: 16,
        tokens_per_frame: 3,
        max_step: 0.05,
    };
    (index, enc, pol_cfg)
}

#[test]
fn bc_initial_loss_sits_near_the_unit_gaussian_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let (index, enc, pol_cfg) = bc_fixture(dir.path());
    enc.params().freeze();
    let cache = build_token_cache(&enc, &index, PolicyMode::Slots).unwrap();
    let mut rng = RngStream::seed(2);
    let policy = Policy::<f64>::new(pol_cfg.clone(), &mut rng);
    let params = policy.params();
    let mut adam = AdamState::new(&params, AdamConfig::default());
    let mut data_rng = RngStream::seed(3);
    let picks = dataset::sample_transition_indices(&index, SplitKind::Train, 64, &mut data_rng);
    let tokens = gather_history_tokens(&cache, &picks, 2);
    let targets: Vec<[f64; 7]> = picks
        .iter()
        .map(|(ep, t)| {
            slotpolicy::Action::from_f32(&index.reader.read_action(*ep, *t).unwrap())
                .to_normalized(0.05)
        })
        .collect();
    // lr 0: read the initial loss without moving.
    let loss = bc_step(&policy, &params, &mut adam, &tokens, &targets, 0.0).unwrap();
    let anchor = 3.5 * (2.0 * std::f64::consts::PI).ln();
    assert!(
        loss > anchor * 0.5 && loss < anchor * 1.5,
        "init loss {loss} vs anchor {anchor}"
    );
}

#[test]
fn bc_overfits_a_fixed_transition_batch() {
    let dir = tempfile::tempdir().unwrap();
    let (index, enc, pol_cfg) = bc_fixture(dir.path());
    enc.params().freeze();
    let cache = build_token_cache(&enc, &index, PolicyMode::Slots).unwrap();
    let mut rng = RngStream::seed(4);
    let policy = Policy::<f64>::new(pol_cfg, &mut rng);
    let params = policy.params();
    let mut adam = AdamState::new(&params, AdamConfig { lr: 2e-3, ..Default::default() });
    let mut data_rng = RngStream::seed(5);
    let picks = dataset::sample_transition_indices(&index, SplitKind::Train, 32, &mut data_rng);
    let tokens = gather_history_tokens(&cache, &picks, 2);
    let targets: Vec<[f64; 7]> = picks
        .iter()
        .map(|(ep, t)| {
            slotpolicy::Action::from_f32(&index.reader.read_action(*ep, *t).unwrap())
                .to_normalized(0.05)
        })
        .collect();
    let mut loss = f64::NAN;
    for step in 0..2000 {
        let lr = 2e-3 * ((step + 1) as f64 / 100.0).min(1.0);
        loss = bc_step(&policy, &params, &mut adam, &tokens, &targets, lr).unwrap();
        if loss < -2.0 {
            break;
        }
    }
    assert!(loss < -2.0, "NLL after 2000 overfit steps: {loss}");
}

#[test]
fn behavior_cloning_leaves_the_encoder_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let (index, enc, pol_cfg) = bc_fixture(dir.path());

    // Write the encoder checkpoint, hash it, train BC, re-hash.
    let enc_path = dir.path().join("encoder.spck");
    let entries = tensor_core::checkpoint::entries_from_params(&enc.params());
    tensor_core::checkpoint::write_entries(&enc_path, &entries).unwrap();
    let before = std::fs::read(&enc_path).unwrap();

    let frozen = load_frozen_encoder::<f64>(&tiny_enc_cfg(), &enc_path).unwrap();
    let out = behavior_clone(
        &frozen,
        &pol_cfg,
        &index,
        &tiny_loop(100, 8, 13),
        &dir.path().join("bc"),
        None,
    )
    .unwrap();
    assert!(out.final_loss.is_finite());

    let after = std::fs::read(&enc_path).unwrap();
    assert_eq!(before, after, "encoder checkpoint bytes changed during BC");
    for (name, t) in frozen.params().iter() {
        assert!(t.grad().is_none(), "encoder param {name} accumulated a gradient");
        assert!(!t.requires_grad(), "encoder param {name} not frozen");
    }

    // The policy checkpoint reloads with identical weights and config.
    let (policy, meta) = load_policy::<f64>(&out.policy_path).unwrap();
    assert!(meta.contains("mode = slots"));
    assert_eq!(policy.cfg.history_len, pol_cfg.history_len);
    assert_eq!(policy.cfg.mixtures, pol_cfg.mixtures);
}

#[test]
fn bc_loss_curves_are_deterministic_and_resume_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let (index, enc, pol_cfg) = bc_fixture(dir.path());
    let enc_path = dir.path().join("encoder.spck");
    let entries = tensor_core::checkpoint::entries_from_params(&enc.params());
    tensor_core::checkpoint::write_entries(&enc_path, &entries).unwrap();
    let frozen = load_frozen_encoder::<f64>(&tiny_enc_cfg(), &enc_path).unwrap();

    let run = |out: &str, resume: Option<&Path>, steps: u64| -> Vec<f64> {
        behavior_clone(
            &frozen,
            &pol_cfg,
            &index,
            &tiny_loop(steps, 8, 99),
            &dir.path().join(out),
            resume,
        )
        .unwrap()
        .losses
    };
    let a = run("a", None, 20);
    let b = run("b", None, 20);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    let resumed = run("c", Some(&dir.path().join("a").join("trainer_state_000010.spck")), 20);
    assert_eq!(resumed.len(), 10);
    for (x, y) in a[10..].iter().zip(&resumed) {
        assert_eq!(x.to_bits(), y.to_bits(), "bc resume diverged");
    }
}

#[test]
fn holistic_mode_trains_too() {
    let dir = tempfile::tempdir().unwrap();
    let (index, enc, mut pol_cfg) = bc_fixture(dir.path());
    pol_cfg.mode = PolicyMode::Holistic;
    pol_cfg.tokens_per_frame = 1;
    pol_cfg.input_dim = 8; // CNN feature width of the tiny encoder
    enc.params().freeze();
    let out = behavior_clone(
        &enc,
        &pol_cfg,
        &index,
        &tiny_loop(30, 8, 21),
        &dir.path().join("hol"),
        None,
    )
    .unwrap();
    assert!(out.final_loss.is_finite());
    let (policy, meta) = load_policy::<f64>(&out.policy_path).unwrap();
    assert!(meta.contains("mode = holistic"));
    assert_eq!(policy.cfg.tokens_per_frame, 1);
}

#[test]
fn pretrain_writes_metrics_and_eval_logs() {
    let dir = tempfile::tempdir().unwrap();
    let index = tiny_dataset(dir.path(), 8);
    let out = dir.path().join("run");
    pretrain::<f64>(&tiny_enc_cfg(), &[&index], &tiny_loop(12, 2, 1), &out, None).unwrap();
    let metrics = std::fs::read_to_string(out.join("pretrain_metrics.csv")).unwrap();
    assert!(metrics.starts_with("step,loss,grad_norm,wall_time_s"));
    assert!(metrics.lines().count() > 2);
    let eval = std::fs::read_to_string(out.join("pretrain_eval.csv")).unwrap();
    assert!(eval.starts_with("step,heldout_mse"));
    assert!(out.join("encoder_final.spck").exists());
    // Resume helper for the episode slot stream is seed-pure.
    let a: Vec<u64> = {
        let mut s = trainer::episode_slot_stream(5);
        (0..4).map(|_| s.next_u64()).collect()
    };
    let b: Vec<u64> = {
        let mut s = trainer::episode_slot_stream(5);
        (0..4).map(|_| s.next_u64()).collect()
    };
    assert_eq!(a, b);
}

#[test]
fn config_defaults_match_loop_configs() {
    let cfg = Config::default();
    let pre = LoopConfig::pretrain_from(&cfg).unwrap();
    assert_eq!(pre.steps, 30000);
    assert_eq!(pre.batch, 16);
    assert_eq!(pre.lr, 4e-4);
    assert_eq!(pre.warmup, 1000);
    let bc = LoopConfig::bc_from(&cfg).unwrap();
    assert_eq!(bc.steps, 20000);
    assert_eq!(bc.batch, 64);
}
