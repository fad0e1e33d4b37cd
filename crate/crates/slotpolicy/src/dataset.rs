//! RoboShape-mini episode serialization, manifests, and batch sampling.
//!
//! Shard layout (little-endian): magic "RSHP", version u32, then per
//! episode: header block, raw u8 frames, f32 actions, CRC32 of the episode
//! bytes. Episodes are append-only; readers never depend on episode order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;
use crate::expert::run_expert_episode;
use crate::sim::{Level, LevelConfig, SimError, SimParams, Task};
use tensor_core::RngStream;

pub const SHARD_MAGIC: &[u8; 4] = b"RSHP";
pub const FORMAT_VERSION: u32 = 1;
/// Fixed byte size of the per-episode header block.
const HEADER_BYTES: usize = 1 + 1 + 8 + 4 + 4 + 4 + 4 + 4 + 1;

#[derive(Error, Debug)]
pub enum DatasetError {
    #[error("shard {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("shard {0}: bad magic")]
    BadMagic(PathBuf),
    #[error("shard {0}: unsupported format version {1}")]
    BadVersion(PathBuf, u32),
    #[error("shard {path}: crc mismatch in episode {episode}")]
    CrcMismatch { path: PathBuf, episode: usize },
    #[error("empty episode (length 0) rejected")]
    EmptyEpisode,
    #[error("shard {path}: malformed episode {episode}: {msg}")]
    Malformed { path: PathBuf, episode: usize, msg: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// Per-episode header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeHeader {
    pub task: Task,
    pub level: Level,
    pub seed: u64,
    pub length: u32,
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub action_dim: u32,
    pub success: bool,
}

impl EpisodeHeader {
    pub fn frame_bytes(&self) -> usize {
        (self.height * self.width * self.channels) as usize
    }

    fn encode(&self) -> [u8; HEADER_BYTES] {
        let mut b = [0u8; HEADER_BYTES];
        b[0] = self.task.id();
        b[1] = self.level.id();
        b[2..10].copy_from_slice(&self.seed.to_le_bytes());
        b[10..14].copy_from_slice(&self.length.to_le_bytes());
        b[14..18].copy_from_slice(&self.height.to_le_bytes());
        b[18..22].copy_from_slice(&self.width.to_le_bytes());
        b[22..26].copy_from_slice(&self.channels.to_le_bytes());
        b[26..30].copy_from_slice(&self.action_dim.to_le_bytes());
        b[30] = self.success as u8;
        b
    }

    fn decode(b: &[u8; HEADER_BYTES], path: &Path, episode: usize) -> Result<Self, DatasetError> {
        let bad = |msg: String| DatasetError::Malformed {
            path: path.to_path_buf(),
            episode,
            msg,
        };
        Ok(EpisodeHeader {
            task: Task::from_id(b[0]).ok_or_else(|| bad(format!("task id {}", b[0])))?,
            level: Level::from_id(b[1]).ok_or_else(|| bad(format!("level id {}", b[1])))?,
            seed: u64::from_le_bytes(b[2..10].try_into().unwrap()),
            length: u32::from_le_bytes(b[10..14].try_into().unwrap()),
            height: u32::from_le_bytes(b[14..18].try_into().unwrap()),
            width: u32::from_le_bytes(b[18..22].try_into().unwrap()),
            channels: u32::from_le_bytes(b[22..26].try_into().unwrap()),
            action_dim: u32::from_le_bytes(b[26..30].try_into().unwrap()),
            success: b[30] != 0,
        })
    }
}

/// A fully materialized episode: one action per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub header: EpisodeHeader,
    /// length x (H*W*C) bytes, row-major frames.
    pub frames: Vec<u8>,
    /// length x action_dim values.
    pub actions: Vec<f32>,
}

impl EpisodeRecord {
    pub fn frame(&self, t: usize) -> &[u8] {
        let fb = self.header.frame_bytes();
        &self.frames[t * fb..(t + 1) * fb]
    }

    pub fn action(&self, t: usize) -> [f32; 7] {
        let d = self.header.action_dim as usize;
        let mut a = [0f32; 7];
        a.copy_from_slice(&self.actions[t * d..(t + 1) * d]);
        a
    }
}

/// Appending writer for one shard file.
pub struct ShardWriter {
    path: PathBuf,
    file: BufWriter<File>,
    episodes: usize,
}

impl ShardWriter {
    pub fn create(path: &Path) -> Result<Self, DatasetError> {
        let mut file = BufWriter::new(File::create(path).map_err(io_err(path))?);
        file.write_all(SHARD_MAGIC).map_err(io_err(path))?;
        file.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io_err(path))?;
        Ok(ShardWriter { path: path.to_path_buf(), file, episodes: 0 })
    }

    pub fn append(&mut self, record: &EpisodeRecord) -> Result<(), DatasetError> {
        let h = &record.header;
        if h.length == 0 {
            return Err(DatasetError::EmptyEpisode);
        }
        let fb = h.frame_bytes();
        assert_eq!(record.frames.len(), fb * h.length as usize, "frame payload size");
        assert_eq!(
            record.actions.len(),
            (h.action_dim * h.length) as usize,
            "action payload size"
        );
        let head = h.encode();
        let mut hasher = crc32fast::Hasher::new();
        hasher.update(&head);
        hasher.update(&record.frames);
        let mut action_bytes = Vec::with_capacity(record.actions.len() * 4);
        for a in &record.actions {
            action_bytes.extend_from_slice(&a.to_le_bytes());
        }
        hasher.update(&action_bytes);
        let crc = hasher.finalize();

        let p = self.path.clone();
        self.file.write_all(&head).map_err(io_err(&p))?;
        self.file.write_all(&record.frames).map_err(io_err(&p))?;
        self.file.write_all(&action_bytes).map_err(io_err(&p))?;
        self.file.write_all(&crc.to_le_bytes()).map_err(io_err(&p))?;
        self.episodes += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize, DatasetError> {
        self.file.flush().map_err(io_err(&self.path))?;
        Ok(self.episodes)
    }
}

/// Byte location of one episode inside a shard.
#[derive(Clone, Debug)]
pub struct EpisodeLocator {
    pub header: EpisodeHeader,
    offset: u64,
    payload_len: usize,
}

/// An opened shard: header index plus an on-demand reader.
pub struct ShardReader {
    path: PathBuf,
    file: File,
    pub episodes: Vec<EpisodeLocator>,
}

impl ShardReader {
    pub fn open(path: &Path) -> Result<Self, DatasetError> {
        let mut file = File::open(path).map_err(io_err(path))?;
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic).map_err(io_err(path))?;
        if &magic != SHARD_MAGIC {
            return Err(DatasetError::BadMagic(path.to_path_buf()));
        }
        let mut vb = [0u8; 4];
        file.read_exact(&mut vb).map_err(io_err(path))?;
        let version = u32::from_le_bytes(vb);
        if version != FORMAT_VERSION {
            return Err(DatasetError::BadVersion(path.to_path_buf(), version));
        }
        let total = file.metadata().map_err(io_err(path))?.len();
        let mut episodes = Vec::new();
        let mut offset = 8u64;
        while offset < total {
            let mut head = [0u8; HEADER_BYTES];
            file.read_exact_at(&mut head, offset).map_err(io_err(path))?;
            let header = EpisodeHeader::decode(&head, path, episodes.len())?;
            let payload_len = HEADER_BYTES
                + header.frame_bytes() * header.length as usize
                + (header.action_dim * header.length) as usize * 4;
            episodes.push(EpisodeLocator { header, offset, payload_len });
            offset += payload_len as u64 + 4; // + crc
        }
        Ok(ShardReader { path: path.to_path_buf(), file, episodes })
    }

    /// Read and CRC-verify one episode.
    pub fn read(&self, index: usize) -> Result<EpisodeRecord, DatasetError> {
        let loc = &self.episodes[index];
        let mut buf = vec![0u8; loc.payload_len + 4];
        self.file.read_exact_at(&mut buf, loc.offset).map_err(io_err(&self.path))?;
        let (payload, crc_bytes) = buf.split_at(loc.payload_len);
        let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
        let mut hasher = crc32fast::Hasher::new();
        hasher.update(payload);
        if hasher.finalize() != stored {
            return Err(DatasetError::CrcMismatch {
                path: self.path.clone(),
                episode: index,
            });
        }
        let h = loc.header;
        let fb = h.frame_bytes() * h.length as usize;
        let frames = payload[HEADER_BYTES..HEADER_BYTES + fb].to_vec();
        let actions = payload[HEADER_BYTES + fb..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(EpisodeRecord { header: h, frames, actions })
    }

    /// Read only the frames [t0, t0+n) of an episode, without CRC work
    /// (used by batch samplers on already-verified shards).
    pub fn read_frames(
        &self,
        index: usize,
        t0: usize,
        n: usize,
    ) -> Result<Vec<u8>, DatasetError> {
        let loc = &self.episodes[index];
        let fb = loc.header.frame_bytes();
        let mut buf = vec![0u8; fb * n];
        let at = loc.offset + HEADER_BYTES as u64 + (t0 * fb) as u64;
        self.file.read_exact_at(&mut buf, at).map_err(io_err(&self.path))?;
        Ok(buf)
    }

    pub fn read_action(&self, index: usize, t: usize) -> Result<[f32; 7], DatasetError> {
        let loc = &self.episodes[index];
        let fb = loc.header.frame_bytes() * loc.header.length as usize;
        let d = loc.header.action_dim as usize;
        let mut buf = vec![0u8; d * 4];
        let at = loc.offset + (HEADER_BYTES + fb + t * d * 4) as u64;
        self.file.read_exact_at(&mut buf, at).map_err(io_err(&self.path))?;
        let mut a = [0f32; 7];
        for (i, b) in buf.chunks_exact(4).enumerate() {
            a[i] = f32::from_le_bytes(b.try_into().unwrap());
        }
        Ok(a)
    }

    /// CRC-verify every episode.
    pub fn verify_all(&self) -> Result<(), DatasetError> {
        for i in 0..self.episodes.len() {
            self.read(i)?;
        }
        Ok(())
    }
}

/// Split assignment is a pure function of the episode seed: reshuffling
/// files can never move an episode across splits. Roughly 10% validation.
pub fn is_validation_seed(seed: u64) -> bool {
    let mut x = seed.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    (x ^ (x >> 31)) % 10 == 0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub episodes: usize,
    pub task: String,
    pub level: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub files: Vec<ManifestFile>,
    pub per_task_totals: BTreeMap<String, usize>,
    pub train_episodes: usize,
    pub val_episodes: usize,
    pub split_rule: String,
    pub seed_base: u64,
    pub attempted: usize,
    pub discarded: usize,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| DatasetError::Manifest(e.to_string()))?;
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| DatasetError::Manifest(e.to_string()))
    }
}

pub struct GenStats {
    pub written: usize,
    pub attempted: usize,
    pub discarded: usize,
}

/// Collect `episodes` successful expert demonstrations into a shard,
/// scanning seeds upward from `seed_base` and discarding failures.
pub fn generate(
    task: Task,
    level: &LevelConfig,
    params: &SimParams,
    episodes: usize,
    seed_base: u64,
    out_dir: &Path,
    shard_name: &str,
) -> Result<(DatasetManifest, GenStats), DatasetError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let shard_path = out_dir.join(shard_name);
    let mut writer = ShardWriter::create(&shard_path)?;
    let mut written = 0usize;
    let mut attempted = 0usize;
    let mut train = 0usize;
    let mut val = 0usize;
    let mut seed = seed_base;
    while written < episodes {
        attempted += 1;
        let ep_seed = seed;
        seed += 1;
        let rollout = match run_expert_episode(task, level, params, ep_seed) {
            Ok(r) => r,
            Err(SimError::PlacementFailed(_)) | Err(SimError::Unresolvable) => continue,
            Err(e) => return Err(e.into()),
        };
        if !rollout.success || rollout.actions.is_empty() {
            continue;
        }
        let header = EpisodeHeader {
            task,
            level: level.level,
            seed: ep_seed,
            length: rollout.actions.len() as u32,
            height: params.image_size as u32,
            width: params.image_size as u32,
            channels: 3,
            action_dim: Action::DIM as u32,
            success: true,
        };
        let mut frames = Vec::with_capacity(header.frame_bytes() * rollout.frames.len());
        for f in &rollout.frames {
            frames.extend_from_slice(f);
        }
        let mut actions = Vec::with_capacity(rollout.actions.len() * Action::DIM);
        for a in &rollout.actions {
            actions.extend_from_slice(&a.to_f32());
        }
        writer.append(&EpisodeRecord { header, frames, actions })?;
        if is_validation_seed(ep_seed) {
            val += 1;
        } else {
            train += 1;
        }
        written += 1;
    }
    let count = writer.finish()?;
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        files: vec![ManifestFile {
            path: shard_name.to_string(),
            episodes: count,
            task: task.name().to_string(),
            level: level.level.name().to_string(),
        }],
        per_task_totals: BTreeMap::from([(task.name().to_string(), count)]),
        train_episodes: train,
        val_episodes: val,
        split_rule: "splitmix64(seed) % 10 == 0 -> validation".to_string(),
        seed_base,
        attempted,
        discarded: attempted - written,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    let stats = GenStats { written, attempted, discarded: attempted - written };
    Ok((manifest, stats))
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SplitKind {
    Train,
    Val,
}

/// A shard opened for sampling, with train/val episode id lists.
pub struct DatasetIndex {
    pub reader: ShardReader,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl DatasetIndex {
    pub fn open(shard_path: &Path) -> Result<Self, DatasetError> {
        let reader = ShardReader::open(shard_path)?;
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (i, ep) in reader.episodes.iter().enumerate() {
            if is_validation_seed(ep.header.seed) {
                val.push(i);
            } else {
                train.push(i);
            }
        }
        Ok(DatasetIndex { reader, train, val })
    }

    pub fn split(&self, kind: SplitKind) -> &[usize] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
        }
    }
}

/// A window of `t_frames` consecutive frames (left-padded at episode start).
pub struct ClipSample {
    pub frames: Vec<u8>,
    pub frame_bytes: usize,
    pub episode_seed: u64,
    pub t0: usize,
}

/// One behavior-cloning transition: H history frames and the target action
/// at the final frame.
pub struct TransitionSample {
    pub frames: Vec<u8>,
    pub frame_bytes: usize,
    pub action: [f32; 7],
    pub episode: usize,
    pub t: usize,
    /// History had to be left-padded by repeating the first frame.
    pub padded: bool,
}

/// Random clips: uniform episode, uniform window start.
pub fn sample_clips(
    index: &DatasetIndex,
    kind: SplitKind,
    t_frames: usize,
    batch: usize,
    rng: &mut RngStream,
) -> Result<Vec<ClipSample>, DatasetError> {
    let ids = index.split(kind);
    assert!(!ids.is_empty(), "no episodes in split");
    let mut out = Vec::with_capacity(batch);
    for _ in 0..batch {
        let ep = ids[rng.below(ids.len())];
        let len = index.reader.episodes[ep].header.length as usize;
        let fb = index.reader.episodes[ep].header.frame_bytes();
        let (t0, pad) = if len >= t_frames {
            (rng.below(len - t_frames + 1), 0)
        } else {
            (0, t_frames - len)
        };
        let body = index.reader.read_frames(ep, t0, t_frames - pad)?;
        let mut frames = Vec::with_capacity(fb * t_frames);
        for _ in 0..pad {
            frames.extend_from_slice(&body[..fb]);
        }
        frames.extend_from_slice(&body);
        out.push(ClipSample {
            frames,
            frame_bytes: fb,
            episode_seed: index.reader.episodes[ep].header.seed,
            t0,
        });
    }
    Ok(out)
}

/// The (episode, t) pairs a transition batch draws; padding follows the
/// left-pad-by-repeating-frame-0 rule.
pub fn sample_transition_indices(
    index: &DatasetIndex,
    kind: SplitKind,
    batch: usize,
    rng: &mut RngStream,
) -> Vec<(usize, usize)> {
    let ids = index.split(kind);
    assert!(!ids.is_empty(), "no episodes in split");
    (0..batch)
        .map(|_| {
            let ep = ids[rng.below(ids.len())];
            let len = index.reader.episodes[ep].header.length as usize;
            (ep, rng.below(len))
        })
        .collect()
}

/// Random transitions with H-frame histories.
pub fn sample_transitions(
    index: &DatasetIndex,
    kind: SplitKind,
    history: usize,
    batch: usize,
    rng: &mut RngStream,
) -> Result<Vec<TransitionSample>, DatasetError> {
    let picks = sample_transition_indices(index, kind, batch, rng);
    let mut out = Vec::with_capacity(batch);
    for (ep, t) in picks {
        let fb = index.reader.episodes[ep].header.frame_bytes();
        let start = t as isize - history as isize + 1;
        let real_start = start.max(0) as usize;
        let body = index.reader.read_frames(ep, real_start, t - real_start + 1)?;
        let mut frames = Vec::with_capacity(fb * history);
        let pad = (-start).max(0) as usize;
        for _ in 0..pad {
            frames.extend_from_slice(&body[..fb]);
        }
        frames.extend_from_slice(&body);
        let action = index.reader.read_action(ep, t)?;
        out.push(TransitionSample {
            frames,
            frame_bytes: fb,
            action,
            episode: ep,
            t,
            padded: pad > 0,
        });
    }
    Ok(out)
}
