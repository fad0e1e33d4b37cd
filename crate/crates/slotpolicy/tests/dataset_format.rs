//! Shard format contracts: roundtrip fidelity, CRC detection, rejection of
//! empty episodes, split purity, and sampler behavior.

use proptest::prelude::*;
use slotpolicy::dataset::{
    self, DatasetIndex, EpisodeHeader, EpisodeRecord, ShardReader, ShardWriter, SplitKind,
};
use slotpolicy::sim::{Level, Task};
use tensor_core::RngStream;

fn random_record(rng: &mut RngStream, max_len: usize, h: usize, w: usize) -> EpisodeRecord {
    let length = 1 + rng.below(max_len);
    let header = EpisodeHeader {
        task: *rng.choose(&[Task::Push, Task::Pick, Task::Place]),
        level: *rng.choose(&[Level::InDist, Level::L1, Level::L2, Level::L3]),
        seed: rng.next_u64(),
        length: length as u32,
        height: h as u32,
        width: w as u32,
        channels: 3,
        action_dim: 7,
        success: rng.chance(0.9),
    };
    let frames = (0..length * h * w * 3).map(|_| rng.below(256) as u8).collect();
    let actions = (0..length * 7).map(|_| (rng.uniform() * 2.0 - 1.0) as f32).collect();
    EpisodeRecord { header, frames, actions }
}

/// Bit-exact roundtrip for 1000 random episodes.
#[test]
fn thousand_episode_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.rshp");
    let mut rng = RngStream::seed(4242);
    let records: Vec<EpisodeRecord> =
        (0..1000).map(|_| random_record(&mut rng, 6, 8, 6)).collect();
    let mut w = ShardWriter::create(&path).unwrap();
    for r in &records {
        w.append(r).unwrap();
    }
    w.finish().unwrap();

    let reader = ShardReader::open(&path).unwrap();
    assert_eq!(reader.episodes.len(), 1000);
    for (i, expect) in records.iter().enumerate() {
        let got = reader.read(i).unwrap();
        assert_eq!(&got, expect, "episode {i}");
    }
}

/// Corrupting any single payload byte trips the CRC.
#[test]
fn single_byte_corruption_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.rshp");
    let mut rng = RngStream::seed(7);
    let rec = random_record(&mut rng, 5, 8, 6);
    let mut w = ShardWriter::create(&path).unwrap();
    w.append(&rec).unwrap();
    w.finish().unwrap();

    let clean = std::fs::read(&path).unwrap();
    for _ in 0..25 {
        let mut bytes = clean.clone();
        // Skip the 8-byte file header; flip one byte in the episode.
        let at = 8 + rng.below(bytes.len() - 12);
        bytes[at] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        let reader = match ShardReader::open(&path) {
            Ok(r) => r,
            // A flipped header byte may make the index malformed; that also
            // counts as detection.
            Err(_) => continue,
        };
        match reader.read(0) {
            Err(dataset::DatasetError::CrcMismatch { .. }) => {}
            Err(_) => {}
            Ok(got) => assert_ne!(got, rec, "corruption at {at} slipped through"),
        }
    }
    std::fs::write(&path, &clean).unwrap();
    ShardReader::open(&path).unwrap().verify_all().unwrap();
}

#[test]
fn empty_episode_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.rshp");
    let mut rng = RngStream::seed(9);
    let mut rec = random_record(&mut rng, 3, 4, 4);
    rec.header.length = 0;
    rec.frames.clear();
    rec.actions.clear();
    let mut w = ShardWriter::create(&path).unwrap();
    assert!(matches!(w.append(&rec), Err(dataset::DatasetError::EmptyEpisode)));
}

#[test]
fn split_is_a_pure_function_of_seed() {
    // The same seed always lands in the same split, and the ratio is ~10%.
    let mut val = 0;
    for seed in 0..10_000u64 {
        if dataset::is_validation_seed(seed) {
            val += 1;
        }
        assert_eq!(dataset::is_validation_seed(seed), dataset::is_validation_seed(seed));
    }
    assert!((800..1200).contains(&val), "validation fraction off: {val}/10000");
}

fn small_shard(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("s.rshp");
    let mut rng = RngStream::seed(31);
    let mut w = ShardWriter::create(&path).unwrap();
    for _ in 0..40 {
        w.append(&random_record(&mut rng, 9, 6, 6)).unwrap();
    }
    w.finish().unwrap();
    path
}

#[test]
fn transition_targets_match_source_actions() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_shard(dir.path());
    let index = DatasetIndex::open(&path).unwrap();
    let mut rng = RngStream::seed(5);
    let batch = dataset::sample_transitions(&index, SplitKind::Train, 2, 64, &mut rng).unwrap();
    for t in &batch {
        let rec = index.reader.read(t.episode).unwrap();
        assert_eq!(t.action, rec.action(t.t), "target action must be actions[t]");
        // Final history frame is frame t.
        let fb = t.frame_bytes;
        assert_eq!(&t.frames[fb..], rec.frame(t.t), "last history frame");
    }
}

#[test]
fn history_at_t0_left_pads_with_frame_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_shard(dir.path());
    let index = DatasetIndex::open(&path).unwrap();
    // Find a sampled transition at t = 0 with H = 2.
    let mut rng = RngStream::seed(1);
    for _ in 0..50 {
        let batch =
            dataset::sample_transitions(&index, SplitKind::Train, 2, 16, &mut rng).unwrap();
        if let Some(t) = batch.iter().find(|t| t.t == 0) {
            assert!(t.padded);
            let fb = t.frame_bytes;
            assert_eq!(&t.frames[..fb], &t.frames[fb..], "history must be [frame0, frame0]");
            return;
        }
    }
    panic!("never sampled t = 0");
}

#[test]
fn seeded_sampler_reproduces_batches() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_shard(dir.path());
    let index = DatasetIndex::open(&path).unwrap();
    let draw = || {
        let mut rng = RngStream::seed(77);
        let clips = dataset::sample_clips(&index, SplitKind::Train, 4, 8, &mut rng).unwrap();
        let trans = dataset::sample_transitions(&index, SplitKind::Train, 2, 8, &mut rng).unwrap();
        (
            clips.iter().map(|c| (c.episode_seed, c.t0, c.frames.clone())).collect::<Vec<_>>(),
            trans.iter().map(|t| (t.episode, t.t, t.action)).collect::<Vec<_>>(),
        )
    };
    assert_eq!(draw(), draw());
}

#[test]
fn clip_windows_respect_episode_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_shard(dir.path());
    let index = DatasetIndex::open(&path).unwrap();
    let mut rng = RngStream::seed(3);
    // t_frames larger than some episodes: padding rule, never an error.
    let clips = dataset::sample_clips(&index, SplitKind::Train, 12, 64, &mut rng).unwrap();
    for c in &clips {
        assert_eq!(c.frames.len(), 12 * c.frame_bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Roundtrip holds for arbitrary shapes and lengths.
    #[test]
    fn roundtrip_property(seed in 0u64..5000) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.rshp");
        let mut rng = RngStream::seed(seed);
        let rec = random_record(&mut rng, 12, 3 + rng.below(6), 3 + rng.below(6));
        let mut w = ShardWriter::create(&path).unwrap();
        w.append(&rec).unwrap();
        w.finish().unwrap();
        let back = ShardReader::open(&path).unwrap().read(0).unwrap();
        prop_assert_eq!(back, rec);
    }
}
