//! Key = value configuration with sections, schema validation, and
//! default < file < override precedence. Every run writes the resolved
//! configuration back out so it can be rerun from its manifest alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::sim::{Preset, SimParams};

#[derive(Error, Debug)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config line {line}: expected `key = value`, got `{text}`")]
    BadLine { line: usize, text: String },
    #[error("bad value for `{key}`: {msg}")]
    BadValue { key: String, msg: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// (key, default, help) triples; the single source of truth for known keys.
pub const SCHEMA: &[(&str, &str, &str)] = &[
    ("run.task", "push", "task: push | pick | place"),
    ("run.level", "none", "generalization level: none | L1 | L2 | L3"),
    ("run.preset", "full", "randomization preset: full | reduced"),
    ("run.seed", "1", "base seed for the run"),
    ("sim.image_size", "64", "rendered image height/width"),
    ("sim.horizon", "120", "steps per episode"),
    ("sim.max_step", "0.05", "per-axis translation clamp"),
    ("sim.eps_target", "0.05", "push success tolerance"),
    ("sim.eps_lift", "0.04", "lift-pose tolerance"),
    ("sim.grasp_radius", "0.06", "grasp attachment radius"),
    ("sim.contact_height", "0.08", "max gripper height for pushing"),
    ("sim.grasp_height", "0.08", "max gripper height for grasping"),
    ("sim.cube_half", "0.12", "red cube half extent"),
    ("sim.ee_radius", "0.085", "gripper ring radius / expert standoff"),
    ("sim.spawn_extent", "0.6", "placement range for object centers"),
    ("sim.view_extent", "1.25", "workspace extent covered by the camera"),
    ("task.pick.lift_height", "0.35", "lift goal height above the table"),
    ("task.pick.hold_steps", "5", "consecutive in-tolerance steps to succeed"),
    ("task.place.bin_half", "0.16", "bin footprint half extent"),
    ("level.l3.size_min", "0.05", "extended distractor half-size minimum"),
    ("level.l3.size_max", "0.18", "extended distractor half-size maximum"),
    ("data.episodes", "2000", "successful episodes to collect per task"),
    ("data.shard", "episodes.rshp", "shard file name inside the output dir"),
    ("data.pooled", "false", "pretrain on all tasks pooled instead of per-task"),
    ("encoder.num_slots", "6", "number of slots K"),
    ("encoder.slot_dim", "64", "slot width D"),
    ("encoder.iters_first", "3", "slot-attention iterations on frame 0"),
    ("encoder.iters_later", "2", "slot-attention iterations on later frames"),
    ("encoder.clip_len", "4", "frames per pretraining clip"),
    ("encoder.cnn_channels", "32,32,32,32,32", "channel widths of the five conv layers"),
    ("encoder.predictor_heads", "4", "slot predictor attention heads"),
    ("encoder.predictor_depth", "1", "slot predictor transformer blocks"),
    ("encoder.broadcast_grid", "8", "decoder broadcast grid size"),
    ("policy.history_len", "2", "frames of slot history H"),
    ("policy.trunk_dim", "128", "observation trunk width"),
    ("policy.trunk_depth", "2", "observation trunk transformer blocks"),
    ("policy.trunk_heads", "4", "observation trunk attention heads"),
    ("policy.mixtures", "5", "Gaussian mixture components M"),
    ("policy.mode", "slots", "policy input: slots | holistic"),
    ("pretrain.steps", "30000", "reconstruction pretraining steps"),
    ("pretrain.batch", "16", "clips per pretraining step"),
    ("pretrain.lr", "4e-4", "peak learning rate"),
    ("pretrain.warmup", "1000", "linear warmup steps"),
    ("pretrain.checkpoint_every", "2000", "steps between checkpoints"),
    ("pretrain.eval_every", "1000", "steps between held-out MSE evaluations"),
    ("pretrain.metrics_every", "50", "steps between metrics rows"),
    ("bc.steps", "20000", "behavior cloning steps"),
    ("bc.batch", "64", "transitions per BC step"),
    ("bc.lr", "4e-4", "peak learning rate"),
    ("bc.warmup", "1000", "linear warmup steps"),
    ("bc.checkpoint_every", "2000", "steps between checkpoints"),
    ("bc.metrics_every", "50", "steps between metrics rows"),
    ("eval.n", "100", "rollouts per repeat"),
    ("eval.repeats", "3", "independent repeats"),
    ("eval.seed_base", "10000", "first rollout seed"),
    ("eval.workers", "0", "worker threads (0 = available cores)"),
    ("eval.stochastic", "false", "sample actions instead of deterministic mode"),
];

/// A validated, fully-resolved configuration.
#[derive(Clone, Debug)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        let values =
            SCHEMA.iter().map(|(k, d, _)| (k.to_string(), d.to_string())).collect();
        Config { values }
    }
}

fn known(key: &str) -> bool {
    SCHEMA.iter().any(|(k, _, _)| *k == key)
}

impl Config {
    /// Parse `key = value` text with `[section]` headers and `#` comments
    /// over the defaults. Unknown keys are errors.
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Config, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::BadLine { line: idx + 1, text: raw.to_string() });
            };
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{}.{}", section, k.trim())
            };
            self.set(&key, v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !known(key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(|s| s.as_str()).unwrap_or_else(|| panic!("unknown key {key}"))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.get(key)
            .parse()
            .map_err(|e| ConfigError::BadValue { key: key.into(), msg: format!("{e}") })
    }

    pub fn get_u64(&self, key: &str) -> Result<u64, ConfigError> {
        self.get(key)
            .parse()
            .map_err(|e| ConfigError::BadValue { key: key.into(), msg: format!("{e}") })
    }

    pub fn get_u32(&self, key: &str) -> Result<u32, ConfigError> {
        self.get(key)
            .parse()
            .map_err(|e| ConfigError::BadValue { key: key.into(), msg: format!("{e}") })
    }

    pub fn get_f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.get(key)
            .parse()
            .map_err(|e| ConfigError::BadValue { key: key.into(), msg: format!("{e}") })
    }

    pub fn get_bool(&self, key: &str) -> Result<bool, ConfigError> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(ConfigError::BadValue { key: key.into(), msg: format!("not a bool: {other}") }),
        }
    }

    pub fn get_usize_list(&self, key: &str) -> Result<Vec<usize>, ConfigError> {
        self.get(key)
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|e| ConfigError::BadValue { key: key.into(), msg: format!("{e}") })
            })
            .collect()
    }

    /// Render as config-file text, grouped into sections in schema order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = String::new();
        for (key, _, _) in SCHEMA {
            let value = self.get(key);
            let (sec, name) = key.rsplit_once('.').unwrap_or(("", key));
            if sec != section {
                if !out.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{sec}]");
                section = sec.to_string();
            }
            let _ = writeln!(out, "{name} = {value}");
        }
        out
    }

    /// One line per key with its default and help text.
    pub fn describe_keys() -> String {
        let mut out = String::new();
        for (key, default, help) in SCHEMA {
            let _ = writeln!(out, "{key} (default {default}): {help}");
        }
        out
    }

    pub fn sim_params(&self) -> Result<SimParams, ConfigError> {
        Ok(SimParams {
            image_size: self.get_usize("sim.image_size")?,
            horizon: self.get_u32("sim.horizon")?,
            max_step: self.get_f64("sim.max_step")?,
            eps_target: self.get_f64("sim.eps_target")?,
            eps_lift: self.get_f64("sim.eps_lift")?,
            grasp_radius: self.get_f64("sim.grasp_radius")?,
            contact_height: self.get_f64("sim.contact_height")?,
            grasp_height: self.get_f64("sim.grasp_height")?,
            hold_steps: self.get_u32("task.pick.hold_steps")?,
            cube_half: self.get_f64("sim.cube_half")?,
            lift_height: self.get_f64("task.pick.lift_height")?,
            bin_half: self.get_f64("task.place.bin_half")?,
            ee_radius: self.get_f64("sim.ee_radius")?,
            spawn_extent: self.get_f64("sim.spawn_extent")?,
            view_extent: self.get_f64("sim.view_extent")?,
        })
    }

    pub fn preset(&self) -> Result<Preset, ConfigError> {
        Preset::parse(self.get("run.preset")).ok_or_else(|| ConfigError::BadValue {
            key: "run.preset".into(),
            msg: format!("expected full|reduced, got {}", self.get("run.preset")),
        })
    }
}
